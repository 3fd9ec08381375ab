// mask.hpp -- per-time-frequency speech/noise masks over 1 s spectrogram
// batches. The estimator is a pluggable seam: a deterministic noise-floor
// baseline ships here, external estimators can be attached as a subprocess.
#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "amtk/stft.hpp"
#include "amtk/types.hpp"

namespace amtk {

struct SpectralMask {
  enum class Kind { Speech, Noise };

  Eigen::ArrayXXf values;  // bins x frames, each entry in [0, 1]
  Kind kind = Kind::Speech;
  long frame0 = 0;

  int bins() const { return int(values.rows()); }
  int frames() const { return int(values.cols()); }
};

struct MaskPair {
  SpectralMask speech;
  SpectralMask noise;  // complement: noise = 1 - speech
};

// One estimator instance per channel; instances carry tracker state across
// consecutive batches of the same stream.
class MaskEstimator {
 public:
  virtual ~MaskEstimator() = default;
  virtual MaskPair estimate(const Spectrogram& batch) = 0;
};

struct BaselineMaskConfig {
  double tracker_window_s = 1.5;  // running-minimum window
  double sigmoid_slope_db = 6.0;  // mask transition width
  double floor_bias = 16.0;       // over-estimation factor on the floor
  double smoothing = 0.8;         // power EMA coefficient
  int sample_rate = 16000;

  void validate() const;
};

// Per-bin running-minimum noise floor; speech mask is a sigmoid of the
// instantaneous-power to biased-floor log ratio.
class BaselineMaskEstimator : public MaskEstimator {
 public:
  explicit BaselineMaskEstimator(BaselineMaskConfig config = {});

  MaskPair estimate(const Spectrogram& batch) override;
  void reset();

 private:
  BaselineMaskConfig cfg_;
  Eigen::ArrayXd smoothed_;           // EMA of per-bin power
  std::vector<Eigen::ArrayXd> ring_;  // last window_frames smoothed powers
  int ring_pos_ = 0;
  int ring_fill_ = 0;
  bool started_ = false;
};

// Bridges to an external estimator process. Per batch the parent writes
//   "batch <bins> <frames>\n" + bins*frames float32 powers (bin-major)
// and expects
//   "masks <bins> <frames>\n" + speech then noise float32 payloads.
// Protocol violations and child death surface as StageFailure("mask", ...).
class SubprocessMaskEstimator : public MaskEstimator {
 public:
  explicit SubprocessMaskEstimator(std::vector<std::string> command);
  ~SubprocessMaskEstimator() override;

  SubprocessMaskEstimator(const SubprocessMaskEstimator&) = delete;
  SubprocessMaskEstimator& operator=(const SubprocessMaskEstimator&) = delete;

  MaskPair estimate(const Spectrogram& batch) override;

 private:
  void shutdown();

  long pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

}  // namespace amtk
