#include "amtk/stft.hpp"

#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

using namespace amtk;

namespace {

// Full two-sided spectrum energy from the stored one-sided bins.
double frame_energy(const Spectrogram& s, int t) {
  const int n = s.config.fft_size;
  double e = std::norm(std::complex<double>(s.coef(0, t)));
  e += std::norm(std::complex<double>(s.coef(n / 2, t)));
  for (int k = 1; k < n / 2; ++k)
    e += 2.0 * std::norm(std::complex<double>(s.coef(k, t)));
  return e;
}

}  // namespace

TEST_CASE("frame count follows the hop grid") {
  StftConfig cfg;
  cfg.fft_size = 512;
  cfg.hop = 256;
  CHECK(stft(std::vector<float>(511, 1.0f), cfg).frames() == 0);
  CHECK(stft(std::vector<float>(512, 1.0f), cfg).frames() == 1);
  CHECK(stft(std::vector<float>(512 + 256, 1.0f), cfg).frames() == 2);
  CHECK(stft(std::vector<float>(512 + 255, 1.0f), cfg).frames() == 1);
  CHECK(stft(std::vector<float>(16000, 1.0f), cfg).frames() ==
        (16000 - 512) / 256 + 1);
  CHECK_THROWS_AS(stft(std::vector<float>{}, cfg), InvalidArgument);
}

TEST_CASE("config validation rejects bad grids") {
  StftConfig cfg;
  cfg.fft_size = 512;
  cfg.hop = 384;  // does not divide
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.fft_size = 511;
  cfg.hop = 511;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.fft_size = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("analysis window is periodic square-root raised-cosine") {
  StftConfig cfg;
  cfg.fft_size = 512;
  cfg.hop = 256;
  auto w = make_window(cfg);
  REQUIRE(w.size() == 512);
  for (int i = 0; i < 512; ++i) {
    double expect =
        std::sqrt(0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / 512.0)));
    CHECK(w[i] == doctest::Approx(expect).epsilon(1e-6));
  }
  // Squared window overlap-adds to a constant on the hop grid.
  for (int n = 0; n < 256; ++n) {
    double acc = double(w[n]) * w[n] + double(w[n + 256]) * w[n + 256];
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("dc input produces the window spectrum in every frame") {
  StftConfig cfg;
  cfg.fft_size = 64;
  cfg.hop = 32;
  auto w = make_window(cfg);
  std::vector<double> wd(w.begin(), w.end());
  auto expect = oracle::naive_dft(wd);

  Spectrogram s = stft(std::vector<float>(256, 1.0f), cfg);
  REQUIRE(s.frames() == (256 - 64) / 32 + 1);
  for (int t = 0; t < s.frames(); ++t) {
    for (int k = 0; k <= 32; ++k) {
      CHECK(double(s.coef(k, t).real()) ==
            doctest::Approx(expect[k].real()).epsilon(1e-4).scale(1.0));
      CHECK(double(s.coef(k, t).imag()) ==
            doctest::Approx(expect[k].imag()).epsilon(1e-4).scale(1.0));
    }
  }
}

TEST_CASE("centered impulse matches the direct transform") {
  StftConfig cfg;
  cfg.fft_size = 64;
  cfg.hop = 32;
  auto w = make_window(cfg);
  std::vector<float> x(64, 0.0f);
  x[32] = 1.0f;

  std::vector<double> windowed(64);
  for (int i = 0; i < 64; ++i) windowed[i] = double(x[i]) * w[i];
  auto expect = oracle::naive_dft(windowed);

  Spectrogram s = stft(x, cfg);
  REQUIRE(s.frames() == 1);
  for (int k = 0; k <= 32; ++k) {
    CHECK(std::abs(std::complex<double>(s.coef(k, 0)) - expect[k]) < 1e-5);
    // Impulse at the frame center: |X_k| = w[center], phase alternates sign.
    CHECK(std::abs(std::complex<double>(s.coef(k, 0))) ==
          doctest::Approx(double(w[32])).epsilon(1e-5));
    double sign = (k % 2 == 0) ? 1.0 : -1.0;
    CHECK(double(s.coef(k, 0).real()) ==
          doctest::Approx(sign * double(w[32])).epsilon(1e-4));
  }
}

TEST_CASE("round-trip reconstruction away from the edges") {
  StftConfig cfg;
  auto x = oracle::white_noise(16000, 42);
  Spectrogram s = stft(x, cfg);
  Samples y = istft(s, cfg);
  REQUIRE(y.size() >= x.size() - size_t(cfg.fft_size));

  double err = 0.0, ref = 0.0;
  for (size_t i = cfg.fft_size; i + cfg.fft_size < y.size() &&
                                i + cfg.fft_size < x.size();
       ++i) {
    err += double(y[i] - x[i]) * double(y[i] - x[i]);
    ref += double(x[i]) * double(x[i]);
  }
  REQUIRE(ref > 0.0);
  CHECK(std::sqrt(err / ref) < 1e-6);
}

TEST_CASE("frame energy matches windowed signal energy") {
  StftConfig cfg;
  cfg.fft_size = 128;
  cfg.hop = 64;
  auto x = oracle::white_noise(1024, 7);
  auto w = make_window(cfg);
  Spectrogram s = stft(x, cfg);
  for (int t = 0; t < s.frames(); ++t) {
    double direct = 0.0;
    for (int i = 0; i < 128; ++i) {
      double v = double(x[size_t(t) * 64 + i]) * w[i];
      direct += v * v;
    }
    // Unnormalized transform: spectral energy = N * time energy.
    CHECK(frame_energy(s, t) ==
          doctest::Approx(128.0 * direct).epsilon(1e-6));
  }
}

TEST_CASE("istft rejects mismatched configs") {
  StftConfig a;
  Spectrogram s = stft(oracle::white_noise(2048, 3), a);
  StftConfig b;
  b.fft_size = 256;
  b.hop = 128;
  CHECK_THROWS_AS(istft(s, b), InvalidArgument);
}
