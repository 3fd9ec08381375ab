// types.hpp -- small value types and error classes shared across the library.
#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace amtk {

// Contract violations: bad dimensions, invalid configs, misuse.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A pipeline stage that cannot proceed. Carries the stage name (and segment
// id where applicable) so the CLI can report it and exit with code 3.
class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, const std::string& detail)
      : std::runtime_error(stage + ": " + detail), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct TimeSpan {
  double start = 0.0;
  double end = 0.0;

  double mid() const { return 0.5 * (start + end); }
  double duration() const { return end - start; }
  bool contains(double t) const { return t >= start && t < end; }
  double overlap(const TimeSpan& o) const {
    return std::max(0.0, std::min(end, o.end) - std::max(start, o.start));
  }
};

// A recognized word, before speaker attribution.
struct TimedWord {
  std::string word;
  double start = 0.0;
  double end = 0.0;
  float confidence = 1.0f;

  TimeSpan span() const { return {start, end}; }
  double mid() const { return 0.5 * (start + end); }
};

// A recognized word with speaker attribution and source channel.
struct SpeakerWord {
  std::string word;
  double start = 0.0;
  double end = 0.0;
  float confidence = 1.0f;
  std::string speaker;        // empty = unattributed
  float speaker_score = 1.0f; // similarity behind the speaker label
  int channel = -1;           // -1 = combined output

  TimeSpan span() const { return {start, end}; }
  double mid() const { return 0.5 * (start + end); }
};

using Samples = std::vector<float>;

}  // namespace amtk
