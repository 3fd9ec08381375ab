#include "amtk/mock_asr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace amtk {

namespace {

const char* kFillers[] = {"uh",   "um",  "ah",   "er",    "well",
                          "so",   "like", "you",  "know",  "right"};
constexpr size_t kFillerCount = sizeof(kFillers) / sizeof(kFillers[0]);

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// A plausible misrecognition of the token, guaranteed different from it.
std::string mutate_token(const std::string& token, std::mt19937_64& rng) {
  std::string out = token;
  switch (rng() % 4u) {
    case 0:
      if (out.size() > 1) out.pop_back();
      else out += 'a';
      break;
    case 1:
      out += out.back();
      break;
    case 2: {
      const std::string vowels = "aeiou";
      const auto pos = out.find_first_of(vowels);
      if (pos != std::string::npos) {
        const auto v = vowels.find(out[pos]);
        out[pos] = vowels[(v + 1) % vowels.size()];
        break;
      }
      [[fallthrough]];
    }
    default:
      out = kFillers[rng() % kFillerCount];
      break;
  }
  if (out == token) out += 'x';
  return out;
}

struct Probs {
  double sub, del, ins;
};

NBestEntry corrupt_segment(const std::vector<TimedWord>& truth, const Probs& p,
                           double jitter_s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> keep_conf(0.75, 0.95);
  std::uniform_real_distribution<double> err_conf(0.35, 0.65);
  std::uniform_real_distribution<double> ins_conf(0.30, 0.60);
  std::uniform_real_distribution<double> shift(-jitter_s, jitter_s);

  NBestEntry entry;
  double prev_start = -std::numeric_limits<double>::infinity();
  auto emit = [&](TimedWord w) {
    // Jitter must not reorder the stream for downstream aligners.
    if (w.start < prev_start) {
      const double d = w.end - w.start;
      w.start = prev_start + 1e-4;
      w.end = w.start + d;
    }
    prev_start = w.start;
    entry.words.push_back(std::move(w));
  };

  for (const auto& truth_word : truth) {
    const double r = u(rng);
    if (r < p.del) {
      entry.score += std::log(p.del);
    } else {
      TimedWord w = truth_word;
      if (jitter_s > 0.0) {
        const double d = shift(rng);
        w.start += d;
        w.end += d;
      }
      if (r < p.del + p.sub) {
        w.word = mutate_token(truth_word.word, rng);
        w.confidence = float(err_conf(rng));
        entry.score += std::log(p.sub);
      } else {
        w.confidence = float(keep_conf(rng));
        entry.score += std::log(1.0 - p.del - p.sub);
      }
      emit(std::move(w));
    }
    if (p.ins > 0.0 && u(rng) < p.ins) {
      TimedWord extra;
      extra.word = kFillers[rng() % kFillerCount];
      extra.start = truth_word.end + 0.01;
      extra.end = extra.start + 0.12;
      extra.confidence = float(ins_conf(rng));
      emit(std::move(extra));
      entry.score += std::log(p.ins);
    } else if (p.ins > 0.0) {
      entry.score += std::log(1.0 - p.ins);
    }
  }
  return entry;
}

}  // namespace

void MockAsrModel::validate() const {
  for (double p : {p_sub, p_del, p_ins})
    if (!(p >= 0.0 && p <= 1.0))
      throw InvalidArgument("mock asr: probabilities must lie in [0, 1]");
  if (p_sub + p_del + p_ins >= 1.0)
    throw InvalidArgument("mock asr: error probabilities must sum below 1");
  if (nbest_depth < 1) throw InvalidArgument("mock asr: nbest_depth must be >= 1");
  if (!(segment_silence_ms >= 0.0))
    throw InvalidArgument("mock asr: segment_silence_ms must be >= 0");
  if (!(time_jitter_ms >= 0.0))
    throw InvalidArgument("mock asr: time_jitter_ms must be >= 0");
}

std::vector<std::vector<TimedWord>> segment_stream(
    const std::vector<TimedWord>& words, double silence_ms) {
  if (!(silence_ms >= 0.0))
    throw InvalidArgument("segment: silence_ms must be >= 0");
  std::vector<std::vector<TimedWord>> segments;
  for (const auto& w : words) {
    if (w.word.empty()) throw InvalidArgument("segment: empty token");
    if (!(w.end > w.start))
      throw InvalidArgument("segment: words need positive duration");
    if (!segments.empty() && w.start < segments.back().back().start)
      throw InvalidArgument("segment: words must be time-ordered");
    // A nanosecond of slack keeps a gap of exactly the threshold intact in
    // the face of floating-point time arithmetic.
    const bool split =
        segments.empty() ||
        (w.start - segments.back().back().end) * 1000.0 > silence_ms + 1e-6;
    if (split) segments.emplace_back();
    segments.back().push_back(w);
  }
  return segments;
}

std::vector<NBestList> mock_asr(const std::vector<TimedWord>& truth,
                                const MockAsrModel& model, int channel,
                                double severity) {
  model.validate();
  if (channel < 0) throw InvalidArgument("mock asr: channel must be >= 0");
  if (!(severity >= 0.0) || !std::isfinite(severity))
    throw InvalidArgument("mock asr: severity must be finite and >= 0");
  const Probs p{model.p_sub * severity, model.p_del * severity,
                model.p_ins * severity};
  if (p.sub + p.del + p.ins >= 1.0)
    throw InvalidArgument("mock asr: severity pushes error probabilities to 1");

  std::mt19937_64 rng(mix_seed(model.seed, uint64_t(channel)));
  const double jitter_s = model.time_jitter_ms * 1e-3;

  std::vector<NBestList> out;
  for (const auto& segment : segment_stream(truth, model.segment_silence_ms)) {
    NBestList list;
    list.span = {segment.front().start, segment.back().end};
    for (int k = 0; k < model.nbest_depth; ++k)
      list.entries.push_back(corrupt_segment(segment, p, jitter_s, rng));
    std::stable_sort(list.entries.begin(), list.entries.end(),
                     [](const NBestEntry& a, const NBestEntry& b) {
                       return a.score > b.score;
                     });
    // Identical corruption draws collapse into one entry.
    list.entries.erase(
        std::unique(list.entries.begin(), list.entries.end(),
                    [](const NBestEntry& a, const NBestEntry& b) {
                      if (a.words.size() != b.words.size()) return false;
                      for (size_t i = 0; i < a.words.size(); ++i)
                        if (a.words[i].word != b.words[i].word) return false;
                      return true;
                    }),
        list.entries.end());
    list.validate();
    out.push_back(std::move(list));
  }
  return out;
}

}  // namespace amtk
