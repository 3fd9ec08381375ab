#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "amtk/types.hpp"

namespace amtk {

// A reference word with its ground-truth timing and speaker.
struct ReferenceWord {
  std::string token;
  double start = 0.0;
  double end = 0.0;
  std::string speaker;
};

struct SpeakerSegment {
  std::string speaker;
  double start = 0.0;
  double end = 0.0;
};

// Ground-truth transcript for a session. Words may interleave speakers
// arbitrarily (overlap), but each speaker's own words must be time-ordered.
struct ReferenceTranscript {
  std::vector<ReferenceWord> words;

  void validate() const;

  // Per-speaker activity segments: word spans merged when the pause between
  // consecutive words is at most max_gap_s. Sorted by start time.
  std::vector<SpeakerSegment> speaker_segments(double max_gap_s = 0.3) const;
};

struct ErrorCounts {
  long sub = 0;
  long ins = 0;
  long del = 0;
  long correct = 0;
};

struct DerBreakdown {
  double miss_pct = 0.0;
  double false_alarm_pct = 0.0;
  double speaker_error_pct = 0.0;
  double der_pct = 0.0;  // always the exact sum of the three components
};

// One report type shared by all scorers; each fills the fields it computes.
// `counts` always reflects the speaker-agnostic word alignment; the speaker-
// attributed rate additionally counts correctly recognized words credited to
// the wrong speaker as substitutions.
struct ScoreReport {
  double wer_pct = 0.0;
  double sawer_pct = 0.0;
  DerBreakdown der;
  ErrorCounts counts;
};

// Case-folds ASCII letters, strips punctuation and symbols, and keeps
// apostrophes only between alphanumeric neighbors ("don't" survives,
// quotes do not). May return an empty string; such tokens score as nothing.
std::string normalize_token(std::string_view raw);

// Speaker-agnostic word error rate between two token sequences. Both sides
// are normalized first; tokens that normalize to nothing are dropped.
// Throws InvalidArgument when the reference is empty after normalization.
ScoreReport wer(const std::vector<std::string>& reference,
                const std::vector<std::string>& hypothesis);

// Speaker-attributed word error rate: hypothesis words are aligned against
// the time-ordered flattened reference; a token match with the wrong speaker
// label is scored as a substitution in the speaker-attributed rate while the
// plain word rate ignores it. Fills wer_pct, sawer_pct, and counts.
ScoreReport sawer(const ReferenceTranscript& reference,
                  const std::vector<SpeakerWord>& hypothesis);

// Maximal time spans in which at most max_speakers are simultaneously
// active in the reference (silence included). Words lying fully inside the
// returned spans are the ones the overlap-limited scores should see.
std::vector<TimeSpan> overlap_filter(const ReferenceTranscript& reference,
                                     int max_speakers = 1);

// Keep only reference words that lie fully inside one of the spans.
ReferenceTranscript restrict_reference(const ReferenceTranscript& reference,
                                       const std::vector<TimeSpan>& spans);

// Keep only hypothesis words that lie fully inside one of the spans.
std::vector<SpeakerWord> restrict_words(const std::vector<SpeakerWord>& words,
                                        const std::vector<TimeSpan>& spans);

// Diarization error rate. Hypothesis speaker segments are contiguous
// same-speaker word runs padded by margin_s on both ends and merged per
// speaker (words further apart than twice the margin start a new run); they
// are scored against the reference segments on a uniform time grid.
// Speaker labels are matched by identity — hypothesis speakers come from
// enrollment, so no label mapping search is needed. Fills the der fields.
// Throws InvalidArgument when the reference contains no speech.
ScoreReport der(const std::vector<SpeakerSegment>& reference,
                const std::vector<SpeakerWord>& hypothesis,
                double margin_s = 0.5, double grid_s = 0.01);

// Tokens of a hypothesis word sequence, in order (convenience for wer()).
std::vector<std::string> word_tokens(const std::vector<SpeakerWord>& words);

}  // namespace amtk
