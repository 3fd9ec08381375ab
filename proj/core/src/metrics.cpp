#include "amtk/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace amtk {

namespace {

constexpr double kTimeTol = 1e-9;

struct AlignedPair {
  int ref = -1;  // index into the reference tokens, -1 for an insertion
  int hyp = -1;  // index into the hypothesis tokens, -1 for a deletion
};

// Unit-cost edit alignment; backtrace prefers pairing over gaps so counts
// are deterministic.
std::vector<AlignedPair> align_tokens(const std::vector<std::string>& ref,
                                      const std::vector<std::string>& hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 1; i <= n; ++i) d[i][0] = int(i);
  for (size_t j = 1; j <= m; ++j) d[0][j] = int(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int del = d[i - 1][j] + 1;
      const int ins = d[i][j - 1] + 1;
      d[i][j] = std::min({sub, del, ins});
    }
  }
  std::vector<AlignedPair> pairs;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      pairs.push_back({int(i) - 1, int(j) - 1});
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      pairs.push_back({int(i) - 1, -1});
      --i;
    } else {
      pairs.push_back({-1, int(j) - 1});
      --j;
    }
  }
  std::reverse(pairs.begin(), pairs.end());
  return pairs;
}

std::vector<std::string> normalized_or_dropped(
    const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    auto norm = normalize_token(t);
    if (!norm.empty()) out.push_back(std::move(norm));
  }
  return out;
}

struct Interval {
  double start, end;
};

// Merge intervals whose gap is at most max_gap (0 merges only overlaps).
std::vector<Interval> merge_intervals(std::vector<Interval> iv,
                                      double max_gap) {
  std::sort(iv.begin(), iv.end(),
            [](const Interval& a, const Interval& b) {
              return a.start < b.start;
            });
  std::vector<Interval> out;
  for (const auto& cur : iv) {
    if (!out.empty() && cur.start <= out.back().end + max_gap + kTimeTol)
      out.back().end = std::max(out.back().end, cur.end);
    else
      out.push_back(cur);
  }
  return out;
}

bool inside_any(double start, double end, const std::vector<TimeSpan>& spans) {
  for (const auto& s : spans)
    if (start >= s.start - kTimeTol && end <= s.end + kTimeTol) return true;
  return false;
}

}  // namespace

void ReferenceTranscript::validate() const {
  std::map<std::string, double> last_start;
  for (const auto& w : words) {
    if (!std::isfinite(w.start) || !std::isfinite(w.end) || w.end < w.start)
      throw InvalidArgument("reference transcript: bad word times");
    auto it = last_start.find(w.speaker);
    if (it != last_start.end() && w.start < it->second - kTimeTol)
      throw InvalidArgument(
          "reference transcript: speaker's words out of order");
    last_start[w.speaker] = std::max(
        it == last_start.end() ? w.start : it->second, w.start);
  }
}

std::vector<SpeakerSegment> ReferenceTranscript::speaker_segments(
    double max_gap_s) const {
  validate();
  if (max_gap_s < 0.0)
    throw InvalidArgument("speaker_segments: negative gap");
  std::map<std::string, std::vector<Interval>> per_speaker;
  for (const auto& w : words)
    per_speaker[w.speaker].push_back({w.start, w.end});
  std::vector<SpeakerSegment> out;
  for (auto& [speaker, iv] : per_speaker)
    for (const auto& m : merge_intervals(std::move(iv), max_gap_s))
      out.push_back({speaker, m.start, m.end});
  std::sort(out.begin(), out.end(),
            [](const SpeakerSegment& a, const SpeakerSegment& b) {
              if (a.start != b.start) return a.start < b.start;
              return a.speaker < b.speaker;
            });
  return out;
}

std::string normalize_token(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(raw[i]);
    if (std::isalnum(c)) {
      out.push_back(char(std::tolower(c)));
    } else if (c == '\'' && !out.empty() && i + 1 < raw.size() &&
               std::isalnum(static_cast<unsigned char>(raw[i + 1]))) {
      out.push_back('\'');
    }
  }
  return out;
}

ScoreReport wer(const std::vector<std::string>& reference,
                const std::vector<std::string>& hypothesis) {
  const auto ref = normalized_or_dropped(reference);
  const auto hyp = normalized_or_dropped(hypothesis);
  if (ref.empty())
    throw InvalidArgument("wer: empty reference makes the rate undefined");

  ScoreReport report;
  for (const auto& p : align_tokens(ref, hyp)) {
    if (p.ref >= 0 && p.hyp >= 0) {
      if (ref[size_t(p.ref)] == hyp[size_t(p.hyp)])
        report.counts.correct++;
      else
        report.counts.sub++;
    } else if (p.ref >= 0) {
      report.counts.del++;
    } else {
      report.counts.ins++;
    }
  }
  const double n = double(ref.size());
  report.wer_pct =
      100.0 * double(report.counts.sub + report.counts.ins + report.counts.del) /
      n;
  report.sawer_pct = report.wer_pct;  // no speaker information in this view
  return report;
}

ScoreReport sawer(const ReferenceTranscript& reference,
                  const std::vector<SpeakerWord>& hypothesis) {
  reference.validate();

  // Flatten the reference into global time order, dropping tokens that
  // normalize to nothing (their timing no longer matters for scoring).
  std::vector<ReferenceWord> flat;
  for (const auto& w : reference.words) {
    auto norm = normalize_token(w.token);
    if (norm.empty()) continue;
    ReferenceWord r = w;
    r.token = std::move(norm);
    flat.push_back(std::move(r));
  }
  std::stable_sort(flat.begin(), flat.end(),
                   [](const ReferenceWord& a, const ReferenceWord& b) {
                     return a.start < b.start;
                   });
  if (flat.empty())
    throw InvalidArgument("sawer: empty reference makes the rate undefined");

  std::vector<std::string> ref_tokens, hyp_tokens;
  std::vector<const SpeakerWord*> hyp_words;
  for (const auto& w : flat) ref_tokens.push_back(w.token);
  for (const auto& w : hypothesis) {
    auto norm = normalize_token(w.word);
    if (norm.empty()) continue;
    hyp_tokens.push_back(std::move(norm));
    hyp_words.push_back(&w);
  }

  ScoreReport report;
  long speaker_mismatch = 0;
  for (const auto& p : align_tokens(ref_tokens, hyp_tokens)) {
    if (p.ref >= 0 && p.hyp >= 0) {
      if (ref_tokens[size_t(p.ref)] == hyp_tokens[size_t(p.hyp)]) {
        report.counts.correct++;
        if (flat[size_t(p.ref)].speaker != hyp_words[size_t(p.hyp)]->speaker)
          speaker_mismatch++;
      } else {
        report.counts.sub++;
      }
    } else if (p.ref >= 0) {
      report.counts.del++;
    } else {
      report.counts.ins++;
    }
  }
  const double n = double(ref_tokens.size());
  const long word_errors =
      report.counts.sub + report.counts.ins + report.counts.del;
  report.wer_pct = 100.0 * double(word_errors) / n;
  report.sawer_pct = 100.0 * double(word_errors + speaker_mismatch) / n;
  return report;
}

std::vector<TimeSpan> overlap_filter(const ReferenceTranscript& reference,
                                     int max_speakers) {
  reference.validate();
  if (max_speakers < 1)
    throw InvalidArgument("overlap_filter: max_speakers must be positive");
  if (reference.words.empty()) return {};

  // A speaker counts once no matter how its words overlap each other.
  std::map<std::string, std::vector<Interval>> per_speaker;
  for (const auto& w : reference.words)
    per_speaker[w.speaker].push_back({w.start, w.end});

  struct Event {
    double t;
    int delta;  // ends (-1) sort before starts (+1) at equal times
  };
  std::vector<Event> events;
  for (auto& [speaker, iv] : per_speaker)
    for (const auto& m : merge_intervals(std::move(iv), 0.0)) {
      events.push_back({m.start, +1});
      events.push_back({m.end, -1});
    }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.delta < b.delta;
  });

  std::vector<TimeSpan> spans;
  int active = 0;
  double cursor = events.front().t;
  for (const auto& ev : events) {
    if (ev.t > cursor && active <= max_speakers) {
      if (!spans.empty() && spans.back().end >= cursor - kTimeTol)
        spans.back().end = ev.t;
      else
        spans.push_back({cursor, ev.t});
    }
    cursor = ev.t;
    active += ev.delta;
  }
  return spans;
}

ReferenceTranscript restrict_reference(const ReferenceTranscript& reference,
                                       const std::vector<TimeSpan>& spans) {
  ReferenceTranscript out;
  for (const auto& w : reference.words)
    if (inside_any(w.start, w.end, spans)) out.words.push_back(w);
  return out;
}

std::vector<SpeakerWord> restrict_words(const std::vector<SpeakerWord>& words,
                                        const std::vector<TimeSpan>& spans) {
  std::vector<SpeakerWord> out;
  for (const auto& w : words)
    if (inside_any(w.start, w.end, spans)) out.push_back(w);
  return out;
}

ScoreReport der(const std::vector<SpeakerSegment>& reference,
                const std::vector<SpeakerWord>& hypothesis, double margin_s,
                double grid_s) {
  if (margin_s < 0.0) throw InvalidArgument("der: negative margin");
  if (grid_s <= 0.0) throw InvalidArgument("der: grid step must be positive");
  for (const auto& seg : reference)
    if (!std::isfinite(seg.start) || !std::isfinite(seg.end) ||
        seg.end < seg.start)
      throw InvalidArgument("der: bad reference segment");

  // Overlapping same-speaker reference segments would double-count speech;
  // merge them so a speaker is active at most once at any instant.
  std::map<std::string, std::vector<Interval>> ref_by_speaker;
  for (const auto& seg : reference)
    ref_by_speaker[seg.speaker].push_back({seg.start, seg.end});
  std::vector<SpeakerSegment> ref;
  for (auto& [speaker, iv] : ref_by_speaker)
    for (const auto& m : merge_intervals(std::move(iv), 0.0))
      ref.push_back({speaker, m.start, m.end});

  // Hypothesis segments: every word padded by the margin, then merged per
  // speaker. Words closer than twice the margin fuse into one contiguous
  // segment; longer silences split it, so a speaker's claimed time tracks
  // actual word runs rather than sequence adjacency.
  std::map<std::string, std::vector<Interval>> hyp_by_speaker;
  for (const auto& w : hypothesis)
    hyp_by_speaker[w.speaker].push_back(
        {w.start - margin_s, w.end + margin_s});
  std::vector<SpeakerSegment> hyp;
  for (auto& [speaker, iv] : hyp_by_speaker)
    for (const auto& m : merge_intervals(std::move(iv), 0.0))
      hyp.push_back({speaker, m.start, m.end});

  double t0 = std::numeric_limits<double>::infinity(), t1 = -t0;
  for (const auto& s : ref) {
    t0 = std::min(t0, s.start);
    t1 = std::max(t1, s.end);
  }
  for (const auto& s : hyp) {
    t0 = std::min(t0, s.start);
    t1 = std::max(t1, s.end);
  }

  double speech = 0.0, miss = 0.0, fa = 0.0, confusion = 0.0;
  if (std::isfinite(t0) && t1 > t0) {
    const size_t cells = size_t(std::ceil((t1 - t0) / grid_s - kTimeTol));
    std::vector<const SpeakerSegment*> r_here, h_here;
    for (size_t c = 0; c < cells; ++c) {
      const double tc = t0 + (double(c) + 0.5) * grid_s;
      r_here.clear();
      h_here.clear();
      for (const auto& s : ref)
        if (s.start <= tc && tc < s.end) r_here.push_back(&s);
      for (const auto& s : hyp)
        if (s.start <= tc && tc < s.end) h_here.push_back(&s);
      const int nr = int(r_here.size()), nh = int(h_here.size());
      int matched = 0;
      for (const auto* r : r_here)
        for (const auto* h : h_here)
          if (r->speaker == h->speaker) {
            ++matched;
            break;
          }
      speech += nr * grid_s;
      miss += std::max(0, nr - nh) * grid_s;
      fa += std::max(0, nh - nr) * grid_s;
      confusion += (std::min(nr, nh) - matched) * grid_s;
    }
  }
  if (speech <= 0.0)
    throw InvalidArgument("der: reference contains no speech");

  ScoreReport report;
  report.der.miss_pct = 100.0 * miss / speech;
  report.der.false_alarm_pct = 100.0 * fa / speech;
  report.der.speaker_error_pct = 100.0 * confusion / speech;
  report.der.der_pct = report.der.miss_pct + report.der.false_alarm_pct +
                       report.der.speaker_error_pct;
  return report;
}

std::vector<std::string> word_tokens(const std::vector<SpeakerWord>& words) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(w.word);
  return out;
}

}  // namespace amtk
