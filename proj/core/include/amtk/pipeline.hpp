// pipeline.hpp -- end-to-end session driver: alignment, mask-driven MVDR
// enhancement, the mock recognizer, speaker attribution, cross-channel
// combination, and scoring, over a simulated meeting. Also the structured
// experiment configuration the CLI loads from JSON.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amtk/align.hpp"
#include "amtk/beamform.hpp"
#include "amtk/combine.hpp"
#include "amtk/diarize.hpp"
#include "amtk/mask.hpp"
#include "amtk/metrics.hpp"
#include "amtk/mock_asr.hpp"
#include "amtk/sim.hpp"
#include "amtk/stft.hpp"
#include "amtk/types.hpp"

namespace amtk {

struct PipelineConfig {
  enum class Beamforming { None, AllChannel, LeaveOneOut };
  enum class Combination { None, Rover, Cnc };

  bool align = true;
  AlignmentConfig alignment;  // sample_rate is overwritten from the input

  Beamforming beamforming = Beamforming::LeaveOneOut;
  StftConfig stft;
  BaselineMaskConfig mask;
  double diagonal_loading = 1e-3;
  double forgetting = 0.95;

  MockAsrModel asr;
  std::vector<double> channel_severity;  // empty = 1.0 for every channel

  // Per-word identification: run merging is disabled because a run that
  // bridges an overlapped stretch inherits one speaker for words on both
  // sides of it, while per-word embeddings stay clean outside the overlap.
  DiarizationConfig diarization{0.32, 1.0, -1.0};
  double enrollment_s = 12.0;

  Combination combine = Combination::Rover;
  IncrementalRoverConfig rover;
  CncConfig cnc;

  int overlap_limit = 1;     // scoring keeps spans with at most this many speakers
  double der_margin_s = 0.5;
  std::string artifacts_dir;  // non-empty: persist per-stage outputs there

  void validate() const;
};

struct ChannelTranscript {
  int channel = 0;
  std::vector<NBestList> nbest;
  std::vector<SpeakerWord> words;  // attributed best hypothesis
  double wer_pct = 0.0;            // against the overlap-filtered reference
};

struct PipelineResult {
  std::vector<ChannelTranscript> channels;
  std::vector<SpeakerWord> combined;  // empty when combination is off
  ScoreReport report;                 // combined output, or the best channel
  double mean_channel_wer_pct = 0.0;
  std::vector<TimeSpan> scored_spans;  // overlap-filtered scoring regions
};

// Runs every stage over the simulated meeting. The speaker voices render
// the enrollment clips for attribution; `seed` controls enrollment
// rendering only (the meeting itself is already rendered). Stage errors
// surface as StageFailure with the failing stage's name.
PipelineResult run_pipeline(const SimulatedMeeting& meeting,
                            const std::vector<SpeakerVoice>& voices,
                            const PipelineConfig& config, uint64_t seed = 1);

// Whole-session enhancement: per-channel analysis, per-second baseline
// masks from channel 0, one bank pass per batch, synthesis back to audio.
// Output lengths match the input lengths.
std::vector<Samples> enhance_session(const std::vector<Samples>& aligned,
                                     int sample_rate, const StftConfig& stft,
                                     const BaselineMaskConfig& mask,
                                     const BeamformerConfig& bank);

// Speaker-tagged network combination of each channel's attributed words,
// folded segment by segment (channel-major input; every channel must hold
// the same number of segments). Words inside overlapped stretches are
// re-ordered by midpoint and nudged monotone before network construction.
std::vector<SpeakerWord> cnc_combine_segments(
    const std::vector<std::vector<std::vector<SpeakerWord>>>& per_channel,
    const CncConfig& config = {});

// Overlap-filtered WER/SAWER plus a symmetric diarization score: the
// reference segments are built by the same pad-and-merge rule the scorer
// applies to the hypothesis, so a lossless chain scores exactly zero.
// When non-null, `spans_out` receives the scored regions.
ScoreReport score_transcript(const ReferenceTranscript& reference,
                             const std::vector<SpeakerWord>& hypothesis,
                             int overlap_limit = 1, double margin_s = 0.5,
                             std::vector<TimeSpan>* spans_out = nullptr);

// A full experiment: what to simulate and how to process it.
struct ExperimentConfig {
  uint64_t seed = 1;
  int sample_rate = 16000;
  ScriptConfig script;
  std::vector<DeviceModel> devices = {DeviceModel{}};
  PipelineConfig pipeline;

  void validate() const;
};

// Strict JSON loader: missing fields keep their defaults, unknown keys
// throw InvalidArgument naming the key, enums parse from lowercase names
// ("loo", "all", "none"; "rover", "cnc").
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig experiment_from_file(const std::string& path);
nlohmann::json experiment_to_json(const ExperimentConfig& config);

}  // namespace amtk
