#include "amtk/stft.hpp"

#include <cmath>
#include <numbers>

#include "fft_util.hpp"

namespace amtk {

void StftConfig::validate() const {
  if (fft_size <= 0 || hop <= 0)
    throw InvalidArgument("stft: fft_size and hop must be positive");
  if (fft_size % hop != 0)
    throw InvalidArgument("stft: hop must divide fft_size");
  if (fft_size % 2 != 0) throw InvalidArgument("stft: fft_size must be even");
}

std::vector<float> make_window(const StftConfig& config) {
  config.validate();
  const int n = config.fft_size;
  std::vector<float> w(n);
  // Periodic sqrt-Hann: the squared window overlap-adds to a constant for
  // any hop dividing fft_size/2 as well as hop == fft_size/2.
  for (int i = 0; i < n; ++i) {
    double hann = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / n));
    w[i] = float(std::sqrt(hann));
  }
  return w;
}

Spectrogram stft(std::span<const float> samples, const StftConfig& config,
                 int channel) {
  config.validate();
  if (samples.empty()) throw InvalidArgument("stft: empty input");

  const int n = config.fft_size;
  const int bins = config.bins();
  Spectrogram out;
  out.config = config;
  out.channel = channel;

  if (long(samples.size()) < n) {
    out.coef.resize(bins, 0);
    return out;
  }
  const long frames = (long(samples.size()) - n) / config.hop + 1;
  out.coef.resize(bins, frames);

  const std::vector<float> window = make_window(config);
  std::vector<std::complex<double>> buf(n);
  for (long t = 0; t < frames; ++t) {
    const float* src = samples.data() + t * config.hop;
    for (int i = 0; i < n; ++i) buf[i] = double(src[i]) * window[i];
    auto spec = detail::fft_forward(buf);
    for (int f = 0; f < bins; ++f)
      out.coef(f, t) = std::complex<float>(float(spec[f].real()),
                                           float(spec[f].imag()));
  }
  return out;
}

Samples istft(const Spectrogram& spec, const StftConfig& config) {
  config.validate();
  if (!(spec.config == config))
    throw InvalidArgument("istft: config mismatch with spectrogram");
  const int n = config.fft_size;
  const int bins = config.bins();
  if (spec.bins() != bins) throw InvalidArgument("istft: bad bin count");

  const long frames = spec.frames();
  if (frames == 0) return {};
  const long len = (frames - 1) * config.hop + n;
  std::vector<double> acc(len, 0.0), wsum(len, 0.0);
  const std::vector<float> window = make_window(config);

  std::vector<std::complex<double>> full(n);
  for (long t = 0; t < frames; ++t) {
    for (int f = 0; f < bins; ++f) {
      full[f] = std::complex<double>(spec.coef(f, t).real(),
                                     spec.coef(f, t).imag());
    }
    for (int f = bins; f < n; ++f) full[f] = std::conj(full[n - f]);
    auto time = detail::fft_inverse(full);
    double* dst = acc.data() + t * config.hop;
    double* wdst = wsum.data() + t * config.hop;
    for (int i = 0; i < n; ++i) {
      dst[i] += time[i].real() * window[i];
      wdst[i] += double(window[i]) * window[i];
    }
  }

  Samples out(len);
  for (long i = 0; i < len; ++i)
    out[i] = wsum[i] > 1e-8 ? float(acc[i] / wsum[i]) : 0.0f;
  return out;
}

}  // namespace amtk
