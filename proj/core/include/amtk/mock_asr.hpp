// mock_asr.hpp -- stand-in recognizer: corrupts a ground-truth word stream
// with configurable substitution/deletion/insertion probabilities and emits
// per-segment n-best lists. Lets the full pipeline run and be scored
// without a trained acoustic or language model.
#pragma once

#include <cstdint>
#include <vector>

#include "amtk/combine.hpp"
#include "amtk/types.hpp"

namespace amtk {

struct MockAsrModel {
  double p_sub = 0.0;
  double p_del = 0.0;
  double p_ins = 0.0;  // chance of an extra word after each real one
  uint64_t seed = 1;
  int nbest_depth = 1;
  double segment_silence_ms = 300.0;  // split at silences longer than this
  double time_jitter_ms = 10.0;       // word midpoints shift by up to this

  // Probabilities in [0, 1] with p_sub + p_del + p_ins < 1; depth >= 1.
  void validate() const;
};

// Splits a time-ordered word stream wherever the silence between
// consecutive words exceeds silence_ms (a gap of exactly silence_ms stays
// in one segment).
std::vector<std::vector<TimedWord>> segment_stream(
    const std::vector<TimedWord>& words, double silence_ms);

// Runs the mock recognizer over one channel's ground-truth word stream.
// Each segment yields an n-best list whose entries are independent
// corruption draws, scored by the log-probability of the draw and sorted
// best first. `severity` scales all three error probabilities, emulating a
// channel of better or worse quality; the scaled probabilities must still
// sum below 1. Same (model.seed, channel) always yields identical output.
std::vector<NBestList> mock_asr(const std::vector<TimedWord>& truth,
                                const MockAsrModel& model, int channel = 0,
                                double severity = 1.0);

}  // namespace amtk
