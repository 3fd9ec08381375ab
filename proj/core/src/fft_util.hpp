// fft_util.hpp -- internal FFT helpers shared by stft and lag estimation.
#pragma once

#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace amtk::detail {

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// The Eigen FFT object caches plans per transform size.
inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> fft;
  return fft;
}

inline std::vector<std::complex<double>> fft_forward(
    const std::vector<std::complex<double>>& in) {
  std::vector<std::complex<double>> out;
  fft_engine().fwd(out, in);
  return out;
}

inline std::vector<std::complex<double>> fft_inverse(
    const std::vector<std::complex<double>>& in) {
  std::vector<std::complex<double>> out;
  fft_engine().inv(out, in);
  return out;
}

}  // namespace amtk::detail
