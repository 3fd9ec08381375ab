#include "amtk/align.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

using namespace amtk;

TEST_CASE("lag estimate agrees with the exhaustive scan") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<size_t> len(200, 900);
    auto a = oracle::white_noise(len(rng), 100 + trial);
    auto b = oracle::white_noise(len(rng), 200 + trial);
    long max_lag = long(std::min(a.size(), b.size()) - 1) / 2;
    max_lag = std::min<long>(max_lag, 60);

    auto fast = estimate_lag(a, b, max_lag, 0.0);
    auto slow = oracle::scan_correlation_peak(a, b, max_lag);
    CHECK(fast.lag_samples == slow.lag);
    CHECK(fast.peak_correlation == doctest::Approx(slow.value).epsilon(1e-9));
  }
}

TEST_CASE("known shifts are recovered with the documented sign") {
  auto base = oracle::white_noise(4000, 5);
  for (long shift : {0L, 1L, 17L, 250L, -3L, -199L}) {
    auto delayed = oracle::delay(base, shift);
    // delayed[t + shift] == base[t], so the lag equals the shift.
    auto est = estimate_lag(base, delayed, 300);
    CHECK(est.lag_samples == shift);
    CHECK(est.significant);
    CHECK(est.peak_correlation > 0.8);
  }
}

TEST_CASE("lag estimation is antisymmetric for clear peaks") {
  auto base = oracle::white_noise(3000, 9);
  auto delayed = oracle::delay(base, 41);
  auto fwd = estimate_lag(base, delayed, 100);
  auto bwd = estimate_lag(delayed, base, 100);
  CHECK(fwd.lag_samples == -bwd.lag_samples);
}

TEST_CASE("normalized peak never exceeds one") {
  for (int trial = 0; trial < 10; ++trial) {
    auto a = oracle::white_noise(500, 40 + trial);
    auto b = oracle::white_noise(500, 80 + trial);
    auto est = estimate_lag(a, b, 40, 0.0);
    CHECK(est.peak_correlation <= 1.0 + 1e-9);
    CHECK(est.peak_correlation >= -1.0 - 1e-9);
  }
  auto self = oracle::white_noise(500, 1);
  CHECK(estimate_lag(self, self, 40).peak_correlation ==
        doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("silent windows give an insignificant estimate") {
  std::vector<float> zeros(400, 0.0f);
  auto noise = oracle::white_noise(400, 2);
  auto est = estimate_lag(zeros, noise, 50);
  CHECK(!est.significant);
  CHECK(est.lag_samples == 0);
  CHECK(est.peak_correlation == 0.0);
}

TEST_CASE("window length contract is enforced") {
  auto a = oracle::white_noise(100, 3);
  CHECK_THROWS_AS(estimate_lag(a, a, 50), InvalidArgument);   // needs 101
  CHECK_NOTHROW(estimate_lag(a, a, 49));
  CHECK_THROWS_AS(estimate_lag({}, a, 10), InvalidArgument);
  CHECK_THROWS_AS(estimate_lag(a, a, -1), InvalidArgument);
}

TEST_CASE("positive correction decimates, negative correction inserts") {
  Samples ramp(1000);
  for (int i = 0; i < 1000; ++i) ramp[i] = float(i);

  SUBCASE("decimation removes exactly lag samples, order preserved") {
    Samples b = ramp;
    auto res = apply_lag_correction(b, 37);
    CHECK(res.applied == 37);
    CHECK(res.deferred == 0);
    CHECK(!res.partial());
    REQUIRE(b.size() == 963);
    for (size_t i = 1; i < b.size(); ++i) CHECK(b[i] > b[i - 1]);
    // Dropped positions are spread out: no two adjacent samples differ by
    // more than one dropped index.
    for (size_t i = 1; i < b.size(); ++i) CHECK(b[i] - b[i - 1] <= 2.0f);
  }

  SUBCASE("insertion grows by |lag| and preserves endpoints") {
    Samples b = ramp;
    auto res = apply_lag_correction(b, -25);
    CHECK(res.applied == -25);
    CHECK(res.deferred == 0);
    REQUIRE(b.size() == 1025);
    CHECK(b.front() == 0.0f);
    CHECK(b.back() == doctest::Approx(999.0f));
    for (size_t i = 1; i < b.size(); ++i) CHECK(b[i] >= b[i - 1]);
    // Linear signal resamples to a linear signal.
    for (size_t i = 0; i < b.size(); ++i)
      CHECK(b[i] == doctest::Approx(999.0 * double(i) / 1024.0).epsilon(1e-4));
  }

  SUBCASE("zero lag is a no-op") {
    Samples b = ramp;
    auto res = apply_lag_correction(b, 0);
    CHECK(res.applied == 0);
    CHECK(b == ramp);
  }

  SUBCASE("oversized lag applies partially and defers the rest") {
    Samples b(10, 1.0f);
    auto res = apply_lag_correction(b, 25);
    CHECK(res.applied == 10);
    CHECK(res.deferred == 15);
    CHECK(res.partial());
    CHECK(b.empty());

    Samples c(10, 1.0f);
    auto res2 = apply_lag_correction(c, -25);
    CHECK(res2.applied == -10);
    CHECK(res2.deferred == -15);
    CHECK(c.size() == 20);
  }
}

TEST_CASE("decimating a delayed copy realigns its tail") {
  auto base = oracle::smooth(oracle::white_noise(20000, 6), 3);
  const long k = 120;
  Samples delayed = oracle::delay(base, k);
  auto res = apply_lag_correction(delayed, k);
  REQUIRE(res.applied == k);
  // The shift is spread across the buffer; past the last dropped position
  // the full advance is absorbed and corrected[j] == base[j] exactly.
  REQUIRE(delayed.size() == base.size() - size_t(k));
  for (size_t j = delayed.size() - 60; j < delayed.size(); ++j)
    CHECK(delayed[j] == base[j]);
}

TEST_CASE("coarse alignment finds large offsets within half a hop") {
  AlignmentConfig cfg;
  cfg.sample_rate = 8000;
  cfg.coarse_window_s = 5.0;
  cfg.coarse_hop_s = 1.0;

  const long n = 40 * cfg.sample_rate;
  auto ref = oracle::smooth(oracle::white_noise(n, 21), 100);
  const long d1 = long(12.3 * cfg.sample_rate);
  const long d2 = long(-7.8 * cfg.sample_rate);
  std::vector<Samples> streams = {
      ref, oracle::delay(ref, d1), oracle::delay(ref, d2),
      Samples(n, 0.0f)};

  auto offsets = coarse_global_align(streams, cfg);
  REQUIRE(offsets.size() == 4);
  CHECK(offsets[0].known);
  CHECK(offsets[0].offset_samples == 0);

  const long tol = long(0.5 * cfg.coarse_hop_s * cfg.sample_rate);
  REQUIRE(offsets[1].known);
  CHECK(std::abs(offsets[1].offset_samples - d1) <= tol);
  REQUIRE(offsets[2].known);
  CHECK(std::abs(offsets[2].offset_samples - d2) <= tol);
  CHECK(!offsets[3].known);
}

TEST_CASE("aligner converges on a constant offset and emits matched blocks") {
  AlignmentConfig cfg;
  cfg.sample_rate = 8000;
  cfg.detection_interval_s = 4.0;
  cfg.startup_interval_s = 0.5;
  cfg.output_delay_s = 0.5;
  cfg.max_local_lag_s = 0.2;
  cfg.block_size = 800;

  const long offset = 100;
  const long dur = 20 * cfg.sample_rate;
  auto base = oracle::smooth(oracle::white_noise(dur, 31), 2);
  auto other = oracle::delay(base, offset);

  StreamAligner al(2, cfg);
  std::vector<Samples> out0, out1;
  const long chunk = 160;
  for (long t = 0; t < dur; t += chunk) {
    long m = std::min(chunk, dur - t);
    al.push(0, std::span<const float>(base).subspan(t, m));
    al.push(1, std::span<const float>(other).subspan(t, m));
    while (auto block = al.pull()) {
      out0.push_back(block->channels[0]);
      out1.push_back(block->channels[1]);
    }
  }

  CHECK(al.cumulative_correction(0) == 0);
  CHECK(al.cumulative_correction(1) == offset);
  CHECK(al.last_estimates()[1].significant);
  REQUIRE(out0.size() > 20);

  // After convergence the non-reference channel passes through unchanged and
  // matches the reference exactly.
  size_t start = out0.size() / 2;
  for (size_t b = start; b < out0.size(); ++b)
    for (size_t i = 0; i < out0[b].size(); ++i)
      CHECK(out0[b][i] == out1[b][i]);
}

TEST_CASE("aligner tracks slow drift") {
  AlignmentConfig cfg;
  cfg.sample_rate = 8000;
  cfg.detection_interval_s = 2.0;
  cfg.startup_interval_s = 0.5;
  cfg.output_delay_s = 0.5;
  cfg.max_local_lag_s = 0.1;
  cfg.block_size = 800;

  const long dur = 30 * cfg.sample_rate;
  auto base = oracle::smooth(oracle::white_noise(dur + 4000, 77), 2);

  // Resample by 1 + ppm: the device consumes the timeline slightly slow, so
  // surplus samples accumulate.
  const double drift = 1000e-6;
  Samples other(dur);
  for (long i = 0; i < dur; ++i) {
    double x = double(i) / (1.0 + drift);
    long i0 = long(x);
    double frac = x - i0;
    other[i] = float((1.0 - frac) * base[i0] + frac * base[i0 + 1]);
  }

  StreamAligner al(2, cfg);
  std::vector<Samples> out0, out1;
  for (long t = 0; t < dur; t += 160) {
    long m = std::min<long>(160, dur - t);
    al.push(0, std::span<const float>(base).subspan(t, m));
    al.push(1, std::span<const float>(other).subspan(t, m));
    while (auto block = al.pull()) {
      out0.push_back(block->channels[0]);
      out1.push_back(block->channels[1]);
    }
  }

  // Terminal accumulated offset is dur * drift ~ 240 samples; corrections
  // lag by at most one detection interval (~16 samples at this drift).
  long corr = al.cumulative_correction(1);
  CHECK(corr > 150);
  CHECK(corr < 280);

  // Late blocks line up to within the drift accrued over one detection
  // interval (16 samples here) plus peak-picking slack.
  Samples tail0, tail1;
  for (size_t b = out0.size() - 10; b < out0.size(); ++b) {
    tail0.insert(tail0.end(), out0[b].begin(), out0[b].end());
    tail1.insert(tail1.end(), out1[b].begin(), out1[b].end());
  }
  auto est = estimate_lag(tail0, tail1, 50);
  CHECK(est.significant);
  CHECK(std::abs(est.lag_samples) <= 25);
}

TEST_CASE("starved stream stalls emission and is named") {
  AlignmentConfig cfg;
  cfg.sample_rate = 8000;
  cfg.output_delay_s = 0.25;
  cfg.block_size = 400;
  StreamAligner al(2, cfg);

  auto noise = oracle::white_noise(8000, 13);
  al.push(0, noise);
  CHECK(!al.pull().has_value());
  CHECK(al.stall().stalled);
  CHECK(al.stall().stream == 1);

  al.push(1, noise);
  CHECK(al.pull().has_value());
  CHECK(!al.stall().stalled);
}

TEST_CASE("aligner validates construction") {
  AlignmentConfig cfg;
  CHECK_THROWS_AS(StreamAligner(0, cfg), InvalidArgument);
  cfg.reference_stream = 5;
  CHECK_THROWS_AS(StreamAligner(2, cfg), InvalidArgument);
  cfg.reference_stream = 0;
  cfg.block_size = -1;
  CHECK_THROWS_AS(StreamAligner(2, cfg), InvalidArgument);
}
