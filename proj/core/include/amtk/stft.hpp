// stft.hpp -- STFT analysis/synthesis substrate for mask estimation and
// beamforming.
#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "amtk/types.hpp"

namespace amtk {

struct StftConfig {
  int fft_size = 512;  // 32 ms at 16 kHz
  int hop = 256;
  enum class Window { SqrtHann } window = Window::SqrtHann;

  int bins() const { return fft_size / 2 + 1; }
  // hop must divide fft_size and the window must overlap-add to a constant.
  void validate() const;
  bool operator==(const StftConfig&) const = default;
};

enum class PaddingPolicy { None };

// One channel's STFT. Column t holds the spectrum of samples
// [t*hop, t*hop + fft_size); frame0 is the stream-global index of column 0.
struct Spectrogram {
  Eigen::MatrixXcf coef;  // bins x frames
  StftConfig config;
  int channel = 0;
  long frame0 = 0;
  PaddingPolicy padding = PaddingPolicy::None;

  int bins() const { return int(coef.rows()); }
  int frames() const { return int(coef.cols()); }
};

using MultiSpectrogram = std::vector<Spectrogram>;  // one entry per channel

std::vector<float> make_window(const StftConfig& config);

// Input shorter than fft_size yields an empty (0-frame) spectrogram.
Spectrogram stft(std::span<const float> samples, const StftConfig& config,
                 int channel = 0);

// Overlap-add reconstruction. Throws InvalidArgument if the frames were
// produced with a different config.
Samples istft(const Spectrogram& spec, const StftConfig& config);

}  // namespace amtk
