#include "amtk/combine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>

namespace amtk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPosteriorTol = 1e-6;
// How far back a duplicate of the current word could plausibly start.
constexpr double kDedupHorizonS = 60.0;

void check_sorted(const std::vector<SpeakerWord>& words, const char* who) {
  for (size_t i = 1; i < words.size(); ++i)
    if (words[i].start < words[i - 1].start - 1e-9)
      throw InvalidArgument(std::string(who) + ": words not time-sorted");
}

bool spans_duplicate(const SpeakerWord& a, const SpeakerWord& b) {
  const double ov = a.span().overlap(b.span());
  const double shorter = std::min(a.end - a.start, b.end - b.start);
  if (shorter <= 0.0)
    return std::abs(a.start - b.start) < 1e-9 && std::abs(a.end - b.end) < 1e-9;
  return ov + 1e-12 >= 0.5 * shorter;
}

}  // namespace

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

void NBestList::validate() const {
  if (entries.empty()) throw InvalidArgument("n-best list: no entries");
  for (size_t i = 1; i < entries.size(); ++i)
    if (entries[i].score > entries[i - 1].score + 1e-12)
      throw InvalidArgument("n-best list: scores increase");
}

double CnBin::epsilon_mass() const {
  double m = 0.0;
  for (const auto& a : alts)
    if (a.kind == AltKind::Epsilon) m += a.posterior;
  return m;
}

double CnBin::posterior_of(AltKind kind, const std::string& token) const {
  double m = 0.0;
  for (const auto& a : alts)
    if (a.kind == kind && a.token == token) m += a.posterior;
  return m;
}

double CnBin::total() const {
  double m = 0.0;
  for (const auto& a : alts) m += a.posterior;
  return m;
}

void ConfusionNetwork::validate() const {
  if (channels < 1) throw InvalidArgument("confusion network: channels < 1");
  double prev_mid = -kInf;
  for (const auto& bin : bins) {
    if (bin.alts.empty())
      throw InvalidArgument("confusion network: empty bin");
    for (const auto& a : bin.alts) {
      if (!(a.posterior >= -1e-12) || !(a.posterior <= 1.0 + kPosteriorTol))
        throw InvalidArgument("confusion network: posterior out of range");
      if (a.kind == AltKind::SpeakerTag && !bin.speaker_bin)
        throw InvalidArgument("confusion network: tag in a word bin");
      if (a.kind == AltKind::Word && bin.speaker_bin)
        throw InvalidArgument("confusion network: word in a tag bin");
    }
    if (std::abs(bin.total() - 1.0) > kPosteriorTol)
      throw InvalidArgument("confusion network: bin mass is not 1");
    const double mid = bin.span.mid();
    if (mid < prev_mid - 1e-9)
      throw InvalidArgument("confusion network: bins out of time order");
    prev_mid = mid;
  }
}

void RoverConfig::validate() const {
  if (time_penalty_per_s < 0.0 || max_pair_gap_s <= 0.0)
    throw InvalidArgument("rover config: bad penalty or gap");
  if (epsilon_confidence < 0.0f || epsilon_confidence > 1.0f)
    throw InvalidArgument("rover config: epsilon confidence outside [0,1]");
}

void IncrementalRoverConfig::validate() const {
  rover.validate();
  if (window_s <= 0.0 || advance_s <= 0.0 || advance_s >= window_s)
    throw InvalidArgument("rover config: need 0 < advance < window");
  if (stall_timeout_s <= 0.0)
    throw InvalidArgument("rover config: stall timeout must be positive");
}

void CncConfig::validate() const {
  if (temperature <= 0.0) throw InvalidArgument("cnc config: temperature <= 0");
  if (lambda < 0.0) throw InvalidArgument("cnc config: negative time penalty");
}

// ---------------------------------------------------------------------------
// ROVER
// ---------------------------------------------------------------------------

namespace {

struct SlotEntry {
  int channel;
  SpeakerWord word;
};

struct Slot {
  std::vector<SlotEntry> entries;

  double mid() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.word.mid();
    return s / double(entries.size());
  }
  bool has_token(const std::string& token) const {
    for (const auto& e : entries)
      if (e.word.word == token) return true;
    return false;
  }
};

enum class Op : uint8_t { Match = 1, SkipSlot = 2, NewSlot = 3 };

// Weaves one stream into the running word transition network.
void align_stream(std::vector<Slot>& net, const std::vector<SpeakerWord>& words,
                  int channel, const RoverConfig& cfg) {
  if (words.empty()) return;
  if (net.empty()) {
    for (const auto& w : words) net.push_back({{{channel, w}}});
    return;
  }
  const size_t n = net.size(), m = words.size();
  std::vector<std::vector<double>> cost(n + 1,
                                        std::vector<double>(m + 1, 0.0));
  std::vector<std::vector<Op>> op(n + 1, std::vector<Op>(m + 1, Op::Match));
  for (size_t i = 1; i <= n; ++i) {
    cost[i][0] = double(i);
    op[i][0] = Op::SkipSlot;
  }
  for (size_t j = 1; j <= m; ++j) {
    cost[0][j] = double(j);
    op[0][j] = Op::NewSlot;
  }
  for (size_t i = 1; i <= n; ++i) {
    const Slot& slot = net[i - 1];
    const double slot_mid = slot.mid();
    for (size_t j = 1; j <= m; ++j) {
      const SpeakerWord& w = words[j - 1];
      const double gap = std::abs(slot_mid - w.mid());
      double sub = kInf;
      if (gap <= cfg.max_pair_gap_s)
        sub = (slot.has_token(w.word) ? 0.0 : 1.0) +
              std::min(cfg.time_penalty_per_s * gap, 1.0);
      const double via_match = cost[i - 1][j - 1] + sub;
      const double via_skip = cost[i - 1][j] + 1.0;
      const double via_new = cost[i][j - 1] + 1.0;
      if (via_match <= via_skip && via_match <= via_new) {
        cost[i][j] = via_match;
        op[i][j] = Op::Match;
      } else if (via_skip <= via_new) {
        cost[i][j] = via_skip;
        op[i][j] = Op::SkipSlot;
      } else {
        cost[i][j] = via_new;
        op[i][j] = Op::NewSlot;
      }
    }
  }

  std::vector<Slot> merged;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    switch (op[i][j]) {
      case Op::Match:
        net[i - 1].entries.push_back({channel, words[j - 1]});
        merged.push_back(std::move(net[i - 1]));
        --i;
        --j;
        break;
      case Op::SkipSlot:
        merged.push_back(std::move(net[i - 1]));
        --i;
        break;
      case Op::NewSlot:
        merged.push_back({{{channel, words[j - 1]}}});
        --j;
        break;
    }
  }
  std::reverse(merged.begin(), merged.end());
  net = std::move(merged);
}

struct Tally {
  int votes = 0;
  double conf_sum = 0.0;
  int min_channel = std::numeric_limits<int>::max();
  double start_sum = 0.0, end_sum = 0.0;
};

// Vote comparison: votes, then summed confidence, then lower channel index.
bool outranks(int votes_a, double conf_a, int chan_a, int votes_b,
              double conf_b, int chan_b) {
  if (votes_a != votes_b) return votes_a > votes_b;
  if (conf_a != conf_b) return conf_a > conf_b;
  return chan_a < chan_b;
}

}  // namespace

std::vector<SpeakerWord> rover_combine_window(
    const std::vector<std::vector<SpeakerWord>>& streams, TimeSpan window,
    const RoverConfig& config) {
  config.validate();
  std::vector<SpeakerWord> out;
  if (streams.empty() || window.duration() <= 0.0) return out;

  std::vector<Slot> net;
  for (size_t s = 0; s < streams.size(); ++s) {
    check_sorted(streams[s], "rover_combine_window");
    std::vector<SpeakerWord> inside;
    for (const auto& w : streams[s])
      if (w.mid() >= window.start && w.mid() < window.end)
        inside.push_back(w);
    align_stream(net, inside, int(s), config);
    // Unmatched insertions land wherever the alignment walk put them; keep
    // the network in time order so later streams see a monotone sequence.
    std::stable_sort(net.begin(), net.end(), [](const Slot& a, const Slot& b) {
      return a.mid() < b.mid();
    });
  }

  const int total = int(streams.size());
  for (const Slot& slot : net) {
    std::map<std::string, Tally> tokens;
    for (const auto& e : slot.entries) {
      Tally& t = tokens[e.word.word];
      t.votes += 1;
      t.conf_sum += double(e.word.confidence);
      t.min_channel = std::min(t.min_channel, e.channel);
      t.start_sum += e.word.start;
      t.end_sum += e.word.end;
    }
    const Tally* best = nullptr;
    const std::string* best_token = nullptr;
    for (const auto& [token, tally] : tokens) {
      if (!best || outranks(tally.votes, tally.conf_sum, tally.min_channel,
                            best->votes, best->conf_sum, best->min_channel)) {
        best = &tally;
        best_token = &token;
      }
    }
    // The absent-word vote: channels that aligned nothing here. It carries a
    // stand-in confidence and, being no channel's word, loses index ties.
    const int eps_votes = total - int(slot.entries.size());
    const double eps_conf = eps_votes * double(config.epsilon_confidence);
    if (outranks(eps_votes, eps_conf, std::numeric_limits<int>::max(),
                 best->votes, best->conf_sum, best->min_channel))
      continue;

    SpeakerWord w;
    w.word = *best_token;
    w.start = best->start_sum / best->votes;
    w.end = best->end_sum / best->votes;
    w.confidence = float(best->conf_sum / best->votes);

    std::map<std::string, Tally> speakers;
    std::map<std::string, double> speaker_score_sum;
    for (const auto& e : slot.entries) {
      Tally& t = speakers[e.word.speaker];
      t.votes += 1;
      t.conf_sum += double(e.word.confidence);
      speaker_score_sum[e.word.speaker] += double(e.word.speaker_score);
    }
    const Tally* best_spk = nullptr;
    const std::string* best_spk_id = nullptr;
    for (const auto& [id, tally] : speakers) {
      if (!best_spk ||
          outranks(tally.votes, tally.conf_sum, 0, best_spk->votes,
                   best_spk->conf_sum, 0)) {
        best_spk = &tally;
        best_spk_id = &id;
      }
    }
    w.speaker = *best_spk_id;
    w.speaker_score = float(speaker_score_sum[*best_spk_id] / best_spk->votes);
    w.channel = -1;
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<SpeakerWord> dedup_filter(const std::vector<SpeakerWord>& words) {
  check_sorted(words, "dedup_filter");
  std::vector<SpeakerWord> out;
  for (const auto& w : words) {
    bool dup = false;
    for (size_t k = out.size(); k-- > 0;) {
      if (w.start - out[k].start > kDedupHorizonS) break;
      if (out[k].word == w.word && spans_duplicate(out[k], w)) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Incremental ROVER
// ---------------------------------------------------------------------------

IncrementalRover::IncrementalRover(int num_streams,
                                   IncrementalRoverConfig config)
    : cfg_(std::move(config)) {
  cfg_.validate();
  if (num_streams < 1)
    throw InvalidArgument("incremental rover: need at least one stream");
  buf_.resize(size_t(num_streams));
  seen_.assign(size_t(num_streams), 0.0);
}

void IncrementalRover::push(int stream, const std::vector<SpeakerWord>& words,
                            double observed_until) {
  if (stream < 0 || size_t(stream) >= buf_.size())
    throw InvalidArgument("incremental rover: stream index out of range");
  check_sorted(words, "incremental rover push");
  auto& buf = buf_[size_t(stream)];
  for (const auto& w : words)
    if (w.mid() >= head_) buf.push_back(w);  // words behind the head are gone
  std::stable_sort(buf.begin(), buf.end(),
                   [](const SpeakerWord& a, const SpeakerWord& b) {
                     return a.start < b.start;
                   });
  seen_[size_t(stream)] = std::max(seen_[size_t(stream)], observed_until);
  run_ready_windows(false);
}

void IncrementalRover::absorb(std::vector<SpeakerWord> fresh) {
  std::stable_sort(fresh.begin(), fresh.end(),
                   [](const SpeakerWord& a, const SpeakerWord& b) {
                     return a.start < b.start;
                   });
  for (auto& w : fresh) {
    bool dup = false;
    for (size_t k = recent_.size(); k-- > 0 && !dup;)
      dup = recent_[k].word == w.word && spans_duplicate(recent_[k], w);
    for (size_t k = pending_.size(); k-- > 0 && !dup;)
      dup = pending_[k].word == w.word && spans_duplicate(pending_[k], w);
    if (!dup) pending_.push_back(std::move(w));
  }
  std::stable_sort(pending_.begin(), pending_.end(),
                   [](const SpeakerWord& a, const SpeakerWord& b) {
                     return a.start < b.start;
                   });
}

void IncrementalRover::run_ready_windows(bool force) {
  while (true) {
    const double wend = head_ + cfg_.window_s;
    const double min_seen = *std::min_element(seen_.begin(), seen_.end());
    const double max_seen = *std::max_element(seen_.begin(), seen_.end());
    const bool all_ready = min_seen >= wend - 1e-9;
    const bool timed_out = max_seen >= wend + cfg_.stall_timeout_s - 1e-9;
    if (!all_ready && !timed_out && !force) break;
    // With nothing buffered and nothing awaiting its cut, running further
    // windows would only pad the log; wait for material instead.
    bool any_left = !pending_.empty();
    for (const auto& buf : buf_)
      for (const auto& w : buf) any_left |= w.mid() >= head_;
    if (!any_left) break;

    WindowRecord rec{head_, {}};
    std::vector<std::vector<SpeakerWord>> live;
    for (size_t s = 0; s < buf_.size(); ++s) {
      if (!force && !all_ready && seen_[s] < wend - 1e-9) {
        rec.skipped_streams.push_back(int(s));
        continue;
      }
      live.push_back(buf_[s]);
    }
    log_.push_back(rec);
    absorb(rover_combine_window(live, {head_, wend}, cfg_.rover));

    head_ += cfg_.advance_s;
    const double cut = wend - cfg_.advance_s;
    std::vector<SpeakerWord> keep;
    for (auto& w : pending_) {
      if (w.end <= cut + 1e-9) {
        recent_.push_back(w);
        final_.push_back(std::move(w));
      } else {
        keep.push_back(std::move(w));
      }
    }
    pending_ = std::move(keep);
    while (!recent_.empty() &&
           recent_.front().end < head_ - 2.0 * cfg_.window_s)
      recent_.erase(recent_.begin());
    for (auto& buf : buf_) {
      std::vector<SpeakerWord> left;
      for (auto& w : buf)
        if (w.mid() >= head_) left.push_back(std::move(w));
      buf = std::move(left);
    }
  }
}

std::vector<SpeakerWord> IncrementalRover::take_final() {
  std::vector<SpeakerWord> out = std::move(final_);
  final_.clear();
  return out;
}

std::vector<SpeakerWord> IncrementalRover::flush() {
  run_ready_windows(true);
  for (auto& w : pending_) {
    recent_.push_back(w);
    final_.push_back(std::move(w));
  }
  pending_.clear();
  return take_final();
}

// ---------------------------------------------------------------------------
// Confusion-network construction
// ---------------------------------------------------------------------------

namespace {

struct AltBuild {
  double mass = 0.0;
  double start_sum = 0.0, end_sum = 0.0;  // mass-weighted
};

struct BinBuild {
  std::map<std::string, AltBuild> words;

  void add(const TimedWord& w, double mass) {
    AltBuild& a = words[w.word];
    a.mass += mass;
    a.start_sum += mass * w.start;
    a.end_sum += mass * w.end;
  }
  double word_mass() const {
    double m = 0.0;
    for (const auto& [_, a] : words) m += a.mass;
    return m;
  }
  TimeSpan span() const {
    double s = 0.0, e = 0.0, m = 0.0;
    for (const auto& [_, a] : words) {
      s += a.start_sum;
      e += a.end_sum;
      m += a.mass;
    }
    return {s / m, e / m};
  }
  CnBin finish() const {
    CnBin bin;
    bin.span = span();
    for (const auto& [token, a] : words)
      bin.alts.push_back({AltKind::Word, token, a.mass});
    const double eps = 1.0 - word_mass();
    if (eps > 1e-12) bin.alts.push_back({AltKind::Epsilon, "", eps});
    return bin;
  }
};

// Plain token-level edit alignment of `hyp` against the pivot; returns, per
// pivot position, the matched hyp index (or -1), plus the insertions as
// (gap position, hyp index) pairs.
void align_to_pivot(const std::vector<TimedWord>& pivot,
                    const std::vector<TimedWord>& hyp,
                    std::vector<int>& matched,
                    std::vector<std::pair<size_t, size_t>>& inserted) {
  const size_t n = pivot.size(), m = hyp.size();
  std::vector<std::vector<double>> cost(n + 1,
                                        std::vector<double>(m + 1, 0.0));
  std::vector<std::vector<Op>> op(n + 1, std::vector<Op>(m + 1, Op::Match));
  for (size_t i = 1; i <= n; ++i) {
    cost[i][0] = double(i);
    op[i][0] = Op::SkipSlot;
  }
  for (size_t j = 1; j <= m; ++j) {
    cost[0][j] = double(j);
    op[0][j] = Op::NewSlot;
  }
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const double sub =
          cost[i - 1][j - 1] + (pivot[i - 1].word == hyp[j - 1].word ? 0 : 1);
      const double del = cost[i - 1][j] + 1.0;
      const double ins = cost[i][j - 1] + 1.0;
      if (sub <= del && sub <= ins) {
        cost[i][j] = sub;
        op[i][j] = Op::Match;
      } else if (del <= ins) {
        cost[i][j] = del;
        op[i][j] = Op::SkipSlot;
      } else {
        cost[i][j] = ins;
        op[i][j] = Op::NewSlot;
      }
    }
  }
  matched.assign(n, -1);
  inserted.clear();
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    switch (op[i][j]) {
      case Op::Match:
        matched[i - 1] = int(j - 1);
        --i;
        --j;
        break;
      case Op::SkipSlot:
        --i;
        break;
      case Op::NewSlot:
        inserted.push_back({i, j - 1});  // between pivot i-1 and i
        --j;
        break;
    }
  }
}

}  // namespace

ConfusionNetwork build_word_cn(const NBestList& nbest,
                               const CncConfig& config) {
  nbest.validate();
  config.validate();

  const size_t h = nbest.entries.size();
  std::vector<double> weight(h);
  double max_score = -kInf;
  for (const auto& e : nbest.entries) max_score = std::max(max_score, e.score);
  double z = 0.0;
  for (size_t i = 0; i < h; ++i) {
    weight[i] = std::exp((nbest.entries[i].score - max_score) /
                         config.temperature);
    z += weight[i];
  }
  for (double& w : weight) w /= z;

  const auto& pivot = nbest.entries[0].words;
  std::vector<BinBuild> anchor(pivot.size());
  for (size_t j = 0; j < pivot.size(); ++j) anchor[j].add(pivot[j], weight[0]);
  // Inserted bins keyed by (gap, first token) so repeated insertions of the
  // same word between the same pivot words pool their evidence.
  std::map<std::pair<size_t, std::string>, BinBuild> extra;

  for (size_t i = 1; i < h; ++i) {
    std::vector<int> matched;
    std::vector<std::pair<size_t, size_t>> inserted;
    align_to_pivot(pivot, nbest.entries[i].words, matched, inserted);
    for (size_t j = 0; j < pivot.size(); ++j)
      if (matched[j] >= 0)
        anchor[j].add(nbest.entries[i].words[size_t(matched[j])], weight[i]);
    for (const auto& [gap, k] : inserted) {
      const TimedWord& w = nbest.entries[i].words[k];
      extra[{gap, w.word}].add(w, weight[i]);
    }
  }

  ConfusionNetwork cn;
  for (size_t j = 0; j <= pivot.size(); ++j) {
    std::vector<CnBin> gap_bins;
    for (const auto& [key, build] : extra)
      if (key.first == j) gap_bins.push_back(build.finish());
    std::stable_sort(gap_bins.begin(), gap_bins.end(),
                     [](const CnBin& a, const CnBin& b) {
                       return a.span.mid() < b.span.mid();
                     });
    for (auto& bin : gap_bins) cn.bins.push_back(std::move(bin));
    if (j < pivot.size()) cn.bins.push_back(anchor[j].finish());
  }
  std::stable_sort(cn.bins.begin(), cn.bins.end(),
                   [](const CnBin& a, const CnBin& b) {
                     return a.span.mid() < b.span.mid();
                   });
  cn.channels = 1;
  cn.validate();
  return cn;
}

ConfusionNetwork build_speaker_cn(const std::vector<SpeakerWord>& words) {
  check_sorted(words, "build_speaker_cn");
  ConfusionNetwork cn;
  size_t run_start = 0;
  while (run_start < words.size()) {
    size_t run_end = run_start + 1;
    double score_sum = double(words[run_start].speaker_score);
    while (run_end < words.size() &&
           words[run_end].speaker == words[run_start].speaker) {
      score_sum += double(words[run_end].speaker_score);
      ++run_end;
    }
    const double tag_p = std::clamp(
        score_sum / double(run_end - run_start), 0.5, 1.0);
    CnBin tag;
    tag.speaker_bin = true;
    tag.span = {words[run_start].start, words[run_start].start};
    tag.alts.push_back({AltKind::SpeakerTag, words[run_start].speaker, tag_p});
    if (tag_p < 1.0) tag.alts.push_back({AltKind::Epsilon, "", 1.0 - tag_p});
    cn.bins.push_back(std::move(tag));

    for (size_t i = run_start; i < run_end; ++i) {
      const double p = std::clamp(double(words[i].confidence), 0.5, 1.0);
      CnBin bin;
      bin.span = words[i].span();
      bin.alts.push_back({AltKind::Word, words[i].word, p});
      if (p < 1.0) bin.alts.push_back({AltKind::Epsilon, "", 1.0 - p});
      cn.bins.push_back(std::move(bin));
    }
    run_start = run_end;
  }
  cn.channels = 1;
  cn.validate();
  return cn;
}

// ---------------------------------------------------------------------------
// Confusion-network alignment and decoding
// ---------------------------------------------------------------------------

namespace {

double bin_inner_product(const CnBin& a, const CnBin& b) {
  double ip = 0.0;
  for (const auto& alt : a.alts) {
    if (alt.kind == AltKind::Epsilon) continue;
    ip += alt.posterior * b.posterior_of(alt.kind, alt.token);
  }
  ip += a.epsilon_mass() * b.epsilon_mass();
  return ip;
}

CnBin merge_bins(const CnBin* a, const CnBin* b, double wa, double wb) {
  CnBin out;
  out.speaker_bin = a ? a->speaker_bin : b->speaker_bin;
  if (a && b) {
    out.span = {wa * a->span.start + wb * b->span.start,
                wa * a->span.end + wb * b->span.end};
  } else {
    out.span = a ? a->span : b->span;
  }
  std::map<std::pair<int, std::string>, double> mass;
  double eps = 0.0;
  auto fold = [&](const CnBin& bin, double w) {
    for (const auto& alt : bin.alts) {
      if (alt.kind == AltKind::Epsilon)
        eps += w * alt.posterior;
      else
        mass[{int(alt.kind), alt.token}] += w * alt.posterior;
    }
  };
  if (a)
    fold(*a, wa);
  else
    eps += wa;  // this side has no bin here: pure epsilon evidence
  if (b)
    fold(*b, wb);
  else
    eps += wb;
  for (const auto& [key, m] : mass)
    out.alts.push_back({AltKind(key.first), key.second, m});
  if (eps > 1e-12) out.alts.push_back({AltKind::Epsilon, "", eps});
  const double total = out.total();
  for (auto& alt : out.alts) alt.posterior /= total;
  return out;
}

}  // namespace

ConfusionNetwork align_cns(const ConfusionNetwork& a,
                           const ConfusionNetwork& b, double lambda) {
  a.validate();
  b.validate();
  if (lambda < 0.0) throw InvalidArgument("align_cns: negative time penalty");
  const double wa = double(a.channels) / double(a.channels + b.channels);
  const double wb = 1.0 - wa;

  const size_t n = a.bins.size(), m = b.bins.size();
  std::vector<std::vector<double>> cost(n + 1,
                                        std::vector<double>(m + 1, 0.0));
  std::vector<std::vector<Op>> op(n + 1, std::vector<Op>(m + 1, Op::Match));
  auto skip_cost = [](const CnBin& bin) {
    return 1.0 - std::min(1.0, bin.epsilon_mass());
  };
  for (size_t i = 1; i <= n; ++i) {
    cost[i][0] = cost[i - 1][0] + skip_cost(a.bins[i - 1]);
    op[i][0] = Op::SkipSlot;
  }
  for (size_t j = 1; j <= m; ++j) {
    cost[0][j] = cost[0][j - 1] + skip_cost(b.bins[j - 1]);
    op[0][j] = Op::NewSlot;
  }
  for (size_t i = 1; i <= n; ++i) {
    const CnBin& abin = a.bins[i - 1];
    for (size_t j = 1; j <= m; ++j) {
      const CnBin& bbin = b.bins[j - 1];
      double sub = kInf;
      if (abin.speaker_bin == bbin.speaker_bin) {
        const double gap = std::abs(abin.span.mid() - bbin.span.mid());
        sub = (1.0 - bin_inner_product(abin, bbin)) +
              std::min(lambda * gap, 1.0);
      }
      const double via_match = cost[i - 1][j - 1] + sub;
      const double via_skip = cost[i - 1][j] + skip_cost(abin);
      const double via_new = cost[i][j - 1] + skip_cost(bbin);
      if (via_match <= via_skip && via_match <= via_new) {
        cost[i][j] = via_match;
        op[i][j] = Op::Match;
      } else if (via_skip <= via_new) {
        cost[i][j] = via_skip;
        op[i][j] = Op::SkipSlot;
      } else {
        cost[i][j] = via_new;
        op[i][j] = Op::NewSlot;
      }
    }
  }

  ConfusionNetwork out;
  std::vector<CnBin> reversed;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    switch (op[i][j]) {
      case Op::Match:
        reversed.push_back(merge_bins(&a.bins[i - 1], &b.bins[j - 1], wa, wb));
        --i;
        --j;
        break;
      case Op::SkipSlot:
        reversed.push_back(merge_bins(&a.bins[i - 1], nullptr, wa, wb));
        --i;
        break;
      case Op::NewSlot:
        reversed.push_back(merge_bins(nullptr, &b.bins[j - 1], wa, wb));
        --j;
        break;
    }
  }
  std::reverse(reversed.begin(), reversed.end());
  out.bins = std::move(reversed);
  std::stable_sort(out.bins.begin(), out.bins.end(),
                   [](const CnBin& x, const CnBin& y) {
                     return x.span.mid() < y.span.mid();
                   });
  out.channels = a.channels + b.channels;
  out.validate();
  return out;
}

std::vector<SpeakerWord> cnc_decode(const ConfusionNetwork& combined) {
  combined.validate();
  std::vector<SpeakerWord> out;
  std::string speaker;
  double speaker_score = 1.0;
  bool have_tag = false;
  for (const auto& bin : combined.bins) {
    const CnAlternative* best = nullptr;
    for (const auto& alt : bin.alts) {
      if (!best) {
        best = &alt;
        continue;
      }
      if (alt.posterior > best->posterior) {
        best = &alt;
      } else if (alt.posterior == best->posterior) {
        const bool alt_eps = alt.kind == AltKind::Epsilon;
        const bool best_eps = best->kind == AltKind::Epsilon;
        if (best_eps && !alt_eps)
          best = &alt;
        else if (alt_eps == best_eps && alt.token < best->token)
          best = &alt;
      }
    }
    if (!best || best->kind == AltKind::Epsilon) continue;
    if (best->kind == AltKind::SpeakerTag) {
      speaker = best->token;
      speaker_score = best->posterior;
      have_tag = true;
      continue;
    }
    SpeakerWord w;
    w.word = best->token;
    w.start = bin.span.start;
    w.end = bin.span.end;
    w.confidence = float(best->posterior);
    w.speaker = have_tag ? speaker : "unknown";
    w.speaker_score = have_tag ? float(speaker_score) : 1.0f;
    w.channel = -1;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace amtk
