// formats.hpp -- on-disk interchange: CTM word lists (with a speaker
// column), RTTM speaker segments, line-delimited JSON hypothesis records,
// a versioned binary speaker-profile file, and score-report rendering.
// Stream overloads back every format so tests and subprocess pipes avoid
// the filesystem; *_file wrappers open paths and fail loudly.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amtk/combine.hpp"
#include "amtk/diarize.hpp"
#include "amtk/metrics.hpp"
#include "amtk/types.hpp"

namespace amtk {

// ---------------------------------------------------------------------------
// CTM: "<recording> <channel> <start> <duration> <token> <conf> <speaker>"
// one word per line, millisecond time precision, "-" for an unattributed
// speaker. ";;"-prefixed comment lines and blank lines are ignored.
// ---------------------------------------------------------------------------
void write_ctm(std::ostream& out, const std::vector<SpeakerWord>& words,
               const std::string& recording = "meeting");
std::vector<SpeakerWord> read_ctm(std::istream& in);
void write_ctm_file(const std::string& path, const std::vector<SpeakerWord>& words,
                    const std::string& recording = "meeting");
std::vector<SpeakerWord> read_ctm_file(const std::string& path);

// ---------------------------------------------------------------------------
// RTTM: standard "SPEAKER <rec> 1 <tbeg> <tdur> <NA> <NA> <name> <NA> <NA>"
// rows; rows of any other type are skipped on read.
// ---------------------------------------------------------------------------
void write_rttm(std::ostream& out, const std::vector<SpeakerSegment>& segments,
                const std::string& recording = "meeting");
std::vector<SpeakerSegment> read_rttm(std::istream& in);
void write_rttm_file(const std::string& path,
                     const std::vector<SpeakerSegment>& segments,
                     const std::string& recording = "meeting");
std::vector<SpeakerSegment> read_rttm_file(const std::string& path);

// ---------------------------------------------------------------------------
// Hypothesis interchange: one JSON object per line, one record per
// recognized segment of one channel. Word speaker labels are optional
// (omitted when empty); times keep full double precision.
// ---------------------------------------------------------------------------
struct InterchangeEntry {
  std::vector<SpeakerWord> words;
  double score = 0.0;
};

struct HypothesisRecord {
  int channel = 0;
  std::string segment_id;
  TimeSpan span;
  std::vector<InterchangeEntry> entries;  // best first

  // channel >= 0, non-empty id, at least one entry, scores non-increasing.
  void validate() const;
  // The record as an n-best list (speaker labels dropped).
  NBestList to_nbest() const;
  // The top entry's words with this record's channel stamped on them.
  std::vector<SpeakerWord> best_words() const;
};

void write_hypotheses(std::ostream& out, const std::vector<HypothesisRecord>& records);
std::vector<HypothesisRecord> read_hypotheses(std::istream& in);
void write_hypotheses_file(const std::string& path,
                           const std::vector<HypothesisRecord>& records);
std::vector<HypothesisRecord> read_hypotheses_file(const std::string& path);

// ---------------------------------------------------------------------------
// Speaker profiles: little-endian binary, magic "AMTKSPK1", then uint32
// dim and count, then per profile a uint32-length-prefixed id, a uint8
// short-enrollment flag, and dim float32 embedding values.
// ---------------------------------------------------------------------------
void write_profiles(std::ostream& out, const std::vector<SpeakerProfile>& profiles);
std::vector<SpeakerProfile> read_profiles(std::istream& in);
void write_profiles_file(const std::string& path,
                         const std::vector<SpeakerProfile>& profiles);
std::vector<SpeakerProfile> read_profiles_file(const std::string& path);

// ---------------------------------------------------------------------------
// Score reports: a machine-readable JSON object and a human-readable
// plain-text block with the same numbers.
// ---------------------------------------------------------------------------
nlohmann::json score_report_json(const ScoreReport& report);
std::string score_report_text(const ScoreReport& report);

}  // namespace amtk
