#include "amtk/diarize.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fft_util.hpp"

namespace amtk {

Embedding make_embedding(Eigen::VectorXf v, TimeSpan span) {
  const float n = v.norm();
  if (!(n > 0.0f))
    throw InvalidArgument("make_embedding: zero or non-finite vector");
  return {v / n, span};
}

double cosine_similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  const double na = a.norm(), nb = b.norm();
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return double(a.dot(b)) / (na * nb);
}

void DiarizationConfig::validate() const {
  if (stride_s <= 0)
    throw InvalidArgument("diarization config: stride must be positive");
  if (merge_threshold < -1.0 || merge_threshold > 1.0)
    throw InvalidArgument("diarization config: threshold outside [-1, 1]");
}

BaselineEmbeddingExtractor::BaselineEmbeddingExtractor(int sample_rate,
                                                       int dim, unsigned seed)
    : sample_rate_(sample_rate), dim_(dim) {
  if (sample_rate <= 0 || dim <= 0)
    throw InvalidArgument("embedding extractor: bad rate or dimension");
  constexpr int kBands = 24;
  constexpr int kFeatures = kBands + 2;  // + centroid, rolloff
  std::mt19937 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  projection_.resize(dim, kFeatures);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < kFeatures; ++j) projection_(i, j) = g(rng);
}

std::optional<Embedding> BaselineEmbeddingExtractor::extract(
    std::span<const float> window, TimeSpan span) {
  constexpr int kBands = 24;
  if (window.size() < 64) return std::nullopt;

  const size_t n = detail::next_pow2(window.size());
  std::vector<std::complex<double>> buf(n);
  for (size_t i = 0; i < window.size(); ++i) buf[i] = window[i];
  const auto spec = detail::fft_forward(buf);

  const size_t bins = n / 2 + 1;
  std::vector<double> power(bins);
  double total = 0.0;
  for (size_t k = 0; k < bins; ++k) {
    power[k] = std::norm(spec[k]);
    total += power[k];
  }
  if (total <= 0.0) return std::nullopt;

  Eigen::VectorXf feat(kBands + 2);
  // Level-normalized log band energies keep the features gain-invariant.
  const size_t band_width = std::max<size_t>(1, bins / kBands);
  for (int b = 0; b < kBands; ++b) {
    const size_t lo = size_t(b) * band_width;
    const size_t hi = b == kBands - 1 ? bins : lo + band_width;
    double e = 0.0;
    for (size_t k = std::min(lo, bins); k < std::min(hi, bins); ++k)
      e += power[k];
    feat[b] = float(std::log10(e / total + 1e-10));
  }
  // Remove the bands' shared offset (mostly the noise floor of empty bands)
  // so cosine similarity responds to spectral shape, not to what both
  // windows lack.
  feat.head(kBands).array() -= feat.head(kBands).mean();

  double centroid = 0.0;
  for (size_t k = 0; k < bins; ++k) centroid += double(k) * power[k];
  feat[kBands] = 2.0f * float(centroid / (total * double(bins)) - 0.5);
  double acc = 0.0;
  size_t rolloff = bins - 1;
  for (size_t k = 0; k < bins; ++k) {
    acc += power[k];
    if (acc >= 0.85 * total) {
      rolloff = k;
      break;
    }
  }
  feat[kBands + 1] = 2.0f * float(double(rolloff) / double(bins) - 0.5);

  Eigen::VectorXf e = projection_ * feat;
  if (!(e.norm() > 0.0f)) return std::nullopt;
  return make_embedding(std::move(e), span);
}

DvectorSequence extract_dvectors(std::span<const float> audio, int sample_rate,
                                 EmbeddingExtractor& extractor,
                                 double stride_s, double t0) {
  if (audio.empty()) throw InvalidArgument("extract_dvectors: empty audio");
  if (sample_rate <= 0 || stride_s <= 0)
    throw InvalidArgument("extract_dvectors: bad rate or stride");
  const size_t stride = size_t(std::lround(stride_s * sample_rate));
  if (stride == 0) throw InvalidArgument("extract_dvectors: stride too small");

  DvectorSequence out;
  for (size_t pos = 0; pos < audio.size(); pos += stride) {
    const size_t len = std::min(stride, audio.size() - pos);
    TimeSpan span{t0 + double(pos) / sample_rate,
                  t0 + double(pos + len) / sample_rate};
    out.push_back(extractor.extract(audio.subspan(pos, len), span));
  }
  return out;
}

namespace {

struct Cluster {
  size_t begin, end;       // word range
  Eigen::VectorXf sum;     // running sum of member embeddings
  TimeSpan span;
};

}  // namespace

std::vector<SubsegmentRange> segment_words(
    const std::vector<WordSegment>& words, double threshold) {
  std::vector<SubsegmentRange> out;
  if (words.empty()) return out;
  for (size_t i = 1; i < words.size(); ++i)
    if (words[i].start < words[i - 1].start)
      throw InvalidArgument("segment_words: words not time-ordered");

  std::vector<Cluster> clusters;
  clusters.reserve(words.size());
  for (size_t i = 0; i < words.size(); ++i)
    clusters.push_back({i, i + 1, words[i].embedding.v,
                        {words[i].start, words[i].end}});

  // Cosine of sums equals cosine of means; sums avoid re-averaging.
  while (clusters.size() > 1) {
    size_t best = 0;
    double best_cos = -2.0;
    for (size_t i = 0; i + 1 < clusters.size(); ++i) {
      double c = cosine_similarity(clusters[i].sum, clusters[i + 1].sum);
      if (c > best_cos) {
        best_cos = c;
        best = i;
      }
    }
    if (best_cos < threshold) break;
    clusters[best].sum += clusters[best + 1].sum;
    clusters[best].end = clusters[best + 1].end;
    clusters[best].span.end = clusters[best + 1].span.end;
    clusters.erase(clusters.begin() + long(best) + 1);
  }

  out.reserve(clusters.size());
  for (auto& c : clusters) {
    SubsegmentRange r;
    r.begin = c.begin;
    r.end = c.end;
    r.embedding = make_embedding(c.sum, c.span);
    out.push_back(std::move(r));
  }
  return out;
}

SpeakerMatch identify_speaker(const Embedding& query,
                              const std::vector<SpeakerProfile>& profiles) {
  if (profiles.empty())
    throw InvalidArgument("identify_speaker: no enrolled profiles");
  SpeakerMatch best{profiles[0].speaker_id,
                    cosine_similarity(query.v, profiles[0].embedding.v)};
  for (size_t i = 1; i < profiles.size(); ++i) {
    double c = cosine_similarity(query.v, profiles[i].embedding.v);
    if (c > best.score ||
        (c == best.score && profiles[i].speaker_id < best.speaker)) {
      best = {profiles[i].speaker_id, c};
    }
  }
  return best;
}

std::vector<SpeakerWord> attribute(std::span<const float> segment_audio,
                                   int sample_rate, double segment_start,
                                   const std::vector<TimedWord>& words,
                                   EmbeddingExtractor& extractor,
                                   const std::vector<SpeakerProfile>& profiles,
                                   const DiarizationConfig& config) {
  config.validate();
  if (words.empty()) return {};
  const double segment_end =
      segment_start + double(segment_audio.size()) / sample_rate;
  constexpr double kSlack = 1e-6;
  for (const auto& w : words)
    if (w.start < segment_start - kSlack || w.end > segment_end + kSlack)
      throw InvalidArgument("attribute: word outside the segment span");

  DvectorSequence dvecs = extract_dvectors(segment_audio, sample_rate,
                                           extractor, config.stride_s,
                                           segment_start);
  std::vector<const Embedding*> valid;
  for (const auto& d : dvecs)
    if (d) valid.push_back(&*d);
  if (valid.empty())
    throw StageFailure("diarize", "no usable embeddings in segment");

  std::vector<WordSegment> segs;
  segs.reserve(words.size());
  for (const auto& w : words) {
    Eigen::VectorXf sum = Eigen::VectorXf::Zero(extractor.dim());
    int count = 0;
    for (const Embedding* d : valid) {
      if (d->span.overlap(w.span()) > 0.0) {
        sum += d->v;
        ++count;
      }
    }
    if (count == 0) {
      // No overlapping window (sub-stride word at a boundary): nearest one.
      const Embedding* nearest = valid[0];
      for (const Embedding* d : valid)
        if (std::abs(d->span.mid() - w.mid()) <
            std::abs(nearest->span.mid() - w.mid()))
          nearest = d;
      sum = nearest->v;
    }
    segs.push_back({w.word, w.start, w.end,
                    make_embedding(std::move(sum), w.span())});
  }

  auto ranges = segment_words(segs, config.merge_threshold);

  std::vector<SpeakerWord> out;
  out.reserve(words.size());
  for (const auto& r : ranges) {
    SpeakerMatch match = identify_speaker(r.embedding, profiles);
    const bool reject = config.reject_threshold >= 0.0 &&
                        match.score < config.reject_threshold;
    for (size_t i = r.begin; i < r.end; ++i) {
      SpeakerWord sw;
      sw.word = words[i].word;
      sw.start = words[i].start;
      sw.end = words[i].end;
      sw.confidence = words[i].confidence;
      sw.speaker = reject ? "unknown" : match.speaker;
      sw.speaker_score = float(match.score);
      out.push_back(std::move(sw));
    }
  }
  return out;
}

SpeakerProfile enroll_speaker(const std::string& speaker_id,
                              std::span<const float> audio, int sample_rate,
                              EmbeddingExtractor& extractor, double stride_s) {
  if (speaker_id.empty())
    throw InvalidArgument("enroll_speaker: empty speaker id");
  DvectorSequence dvecs =
      extract_dvectors(audio, sample_rate, extractor, stride_s, 0.0);
  Eigen::VectorXf sum = Eigen::VectorXf::Zero(extractor.dim());
  int count = 0;
  for (const auto& d : dvecs) {
    if (d) {
      sum += d->v;
      ++count;
    }
  }
  if (count == 0)
    throw InvalidArgument("enroll_speaker: no usable enrollment audio");

  SpeakerProfile p;
  p.speaker_id = speaker_id;
  const double duration = double(audio.size()) / sample_rate;
  p.embedding = make_embedding(
      std::move(sum), {0.0, duration});
  p.short_enrollment = duration < 10.0;
  return p;
}

}  // namespace amtk
