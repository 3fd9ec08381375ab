// combine.hpp -- hypothesis combination across channels: windowed and
// incremental ROVER voting, and confusion-network combination with speaker
// tags and a time-misalignment penalty.
#pragma once

#include <string>
#include <vector>

#include "amtk/types.hpp"

namespace amtk {

// ---------------------------------------------------------------------------
// N-best hypotheses
// ---------------------------------------------------------------------------

struct NBestEntry {
  std::vector<TimedWord> words;
  double score = 0.0;  // log-domain; larger is better
};

// Recognizer output for one segment, best hypothesis first.
struct NBestList {
  TimeSpan span;
  std::vector<NBestEntry> entries;

  // At least one entry; scores non-increasing.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Confusion networks
// ---------------------------------------------------------------------------

enum class AltKind { Word, SpeakerTag, Epsilon };

struct CnAlternative {
  AltKind kind = AltKind::Word;
  std::string token;  // word text, or the speaker id for SpeakerTag
  double posterior = 0.0;
};

struct CnBin {
  std::vector<CnAlternative> alts;
  TimeSpan span;
  bool speaker_bin = false;  // holds a speaker tag (plus epsilon), not words

  double epsilon_mass() const;
  double posterior_of(AltKind kind, const std::string& token) const;
  double total() const;
};

struct ConfusionNetwork {
  std::vector<CnBin> bins;
  int channels = 1;  // how many source channels this network already merges

  // Per-bin posteriors sum to 1 (+-1e-6); bins ordered by midpoint.
  void validate() const;
};

// ---------------------------------------------------------------------------
// ROVER
// ---------------------------------------------------------------------------

struct RoverConfig {
  double time_penalty_per_s = 0.5;  // added per second of midpoint distance
  double max_pair_gap_s = 2.0;      // beyond this, words never share a slot
  float epsilon_confidence = 0.5f;  // stand-in confidence of an absent word

  void validate() const;
};

// Aligns the per-channel word streams that fall inside `window` into a word
// transition network and emits, per slot, the token with the most votes.
// Ties go to the higher summed confidence, then the lower channel index; an
// absent-word (epsilon) vote carries `epsilon_confidence` and always loses
// channel-index ties to a real word. The winning slot's speaker is a
// plurality vote over the aligned words' speakers; output times are the mean
// of the winning words' times.
std::vector<SpeakerWord> rover_combine_window(
    const std::vector<std::vector<SpeakerWord>>& streams, TimeSpan window,
    const RoverConfig& config = {});

// Removes any word whose token repeats an already-kept word while overlapping
// it by at least half of the shorter span. Input must be time-sorted.
std::vector<SpeakerWord> dedup_filter(const std::vector<SpeakerWord>& words);

struct IncrementalRoverConfig {
  double window_s = 10.0;
  double advance_s = 5.0;        // must be < window_s
  double stall_timeout_s = 30.0; // lagging streams are skipped after this
  RoverConfig rover;

  void validate() const;
};

struct WindowRecord {
  double window_start = 0.0;
  std::vector<int> skipped_streams;  // lagged past the stall timeout
};

// Streaming combiner: repeatedly runs rover_combine_window over a sliding
// window, deduplicates across the window seams, and finalizes a word once
// the leading edge of the processed audio has moved advance_s past its end.
class IncrementalRover {
 public:
  explicit IncrementalRover(int num_streams,
                            IncrementalRoverConfig config = {});

  // Appends time-sorted words for one stream and notes that this stream's
  // timeline is known up to `observed_until` seconds (an empty push is a
  // heartbeat). Windows run as soon as every stream has caught up, or once
  // the fastest stream is stall_timeout_s ahead of a straggler.
  void push(int stream, const std::vector<SpeakerWord>& words,
            double observed_until);

  // Words finalized since the last call (time-sorted).
  std::vector<SpeakerWord> take_final();

  // Ends the session: combines whatever remains and finalizes everything.
  std::vector<SpeakerWord> flush();

  const std::vector<WindowRecord>& window_log() const { return log_; }
  double next_window_start() const { return head_; }
  int num_streams() const { return int(buf_.size()); }

 private:
  void run_ready_windows(bool force);
  void absorb(std::vector<SpeakerWord> fresh);

  IncrementalRoverConfig cfg_;
  std::vector<std::vector<SpeakerWord>> buf_;
  std::vector<double> seen_;
  double head_ = 0.0;
  std::vector<SpeakerWord> pending_;  // combined but not yet final
  std::vector<SpeakerWord> final_;
  std::vector<SpeakerWord> recent_;   // finalized tail kept for seam dedup
  std::vector<WindowRecord> log_;
};

// ---------------------------------------------------------------------------
// Confusion-network combination
// ---------------------------------------------------------------------------

struct CncConfig {
  double temperature = 1.0;  // softmax temperature over n-best scores
  double lambda = 0.5;       // time penalty per second of midpoint distance

  void validate() const;
};

// Aligns every hypothesis to the best one by minimal edit distance and turns
// the result into a confusion network whose posteriors are the softmax of
// the hypothesis scores. Gaps are filled with epsilon mass.
ConfusionNetwork build_word_cn(const NBestList& nbest,
                               const CncConfig& config = {});

// Interleaves a speaker-tag bin at the start of each maximal same-speaker
// run with word bins for the attributed 1-best. Tag posterior = mean
// identification score of the run, floored at 0.5; word posterior = the
// word's confidence, floored at 0.5 (so a lone channel never loses its own
// words to epsilon).
ConfusionNetwork build_speaker_cn(const std::vector<SpeakerWord>& words);

// Merges two confusion networks by dynamic programming. Matching two bins
// costs (1 - posterior inner product) + min(lambda * |midpoint gap|, 1);
// leaving a bin unmatched costs (1 - its epsilon mass). Speaker-tag bins
// only ever match speaker-tag bins. Posteriors merge with per-channel
// weights; unmatched bins gain epsilon mass from the other side.
ConfusionNetwork align_cns(const ConfusionNetwork& a,
                           const ConfusionNetwork& b, double lambda = 0.5);

// Reads out the combined network: per bin, the argmax alternative (epsilon
// winners emit nothing; ties prefer a word over epsilon, then the
// lexicographically smaller token). Speaker tags set the speaker attached to
// the words that follow; words before any tag get "unknown".
std::vector<SpeakerWord> cnc_decode(const ConfusionNetwork& combined);

}  // namespace amtk
