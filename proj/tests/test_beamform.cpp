#include "amtk/beamform.hpp"

#include <complex>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

using namespace amtk;
using Cd = std::complex<double>;

namespace {

Eigen::MatrixXcd random_complex(int rows, int cols, std::mt19937& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXcd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = Cd(g(rng), g(rng));
  return m;
}

Eigen::MatrixXcd random_hermitian_pd(int n, std::mt19937& rng,
                                     double ridge = 0.1) {
  Eigen::MatrixXcd b = random_complex(n, 2 * n, rng);
  Eigen::MatrixXcd a = b * b.adjoint() / double(2 * n);
  a.diagonal().array() += Cd(ridge, 0.0);
  return ((a + a.adjoint()) * 0.5).eval();
}

SpatialCovariance make_cov(std::vector<Eigen::MatrixXcd> mats,
                           SpectralMask::Kind kind) {
  SpatialCovariance c;
  c.kind = kind;
  c.mask_mass = Eigen::ArrayXd::Ones(long(mats.size()));
  c.zero_mass.assign(mats.size(), 0);
  c.phi = std::move(mats);
  return c;
}

MultiSpectrogram random_batch(int channels, int bins, int frames,
                              unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  MultiSpectrogram batch(static_cast<size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    batch[size_t(c)].coef.resize(bins, frames);
    batch[size_t(c)].channel = c;
    for (int f = 0; f < bins; ++f)
      for (int t = 0; t < frames; ++t)
        batch[size_t(c)].coef(f, t) = std::complex<float>(g(rng), g(rng));
  }
  return batch;
}

SpectralMask const_mask(int bins, int frames, float v,
                        SpectralMask::Kind kind) {
  SpectralMask m;
  m.kind = kind;
  m.values = Eigen::ArrayXXf::Constant(bins, frames, v);
  return m;
}

// Loading mirrors the library rule: relative to the full-matrix trace.
Eigen::MatrixXcd load_full(const Eigen::MatrixXcd& phi, double loading) {
  Eigen::MatrixXcd r = phi;
  r.diagonal().array() += Cd(loading * phi.trace().real() / double(phi.rows()), 0.0);
  return r;
}

}  // namespace

TEST_CASE("covariance of a single fully-massed frame is the outer product") {
  MultiSpectrogram batch = random_batch(3, 2, 1, 5);
  auto cov =
      accumulate_covariance(batch, const_mask(2, 1, 1.0f,
                                              SpectralMask::Kind::Speech));
  REQUIRE(cov.bins() == 2);
  REQUIRE(cov.channels() == 3);
  for (int f = 0; f < 2; ++f) {
    Eigen::VectorXcd y(3);
    for (int c = 0; c < 3; ++c) y[c] = Cd(batch[size_t(c)].coef(f, 0));
    Eigen::MatrixXcd expect = y * y.adjoint();
    CHECK((cov.phi[size_t(f)] - expect).norm() < 1e-12);
    CHECK(cov.mask_mass[f] == doctest::Approx(1.0));
  }
}

TEST_CASE("zero-weight frames drop out of the accumulation") {
  MultiSpectrogram batch = random_batch(2, 1, 2, 6);
  SpectralMask m = const_mask(1, 2, 0.0f, SpectralMask::Kind::Noise);
  m.values(0, 0) = 1.0f;
  auto cov = accumulate_covariance(batch, m);
  Eigen::VectorXcd y(2);
  for (int c = 0; c < 2; ++c) y[c] = Cd(batch[size_t(c)].coef(0, 0));
  CHECK((cov.phi[0] - y * y.adjoint()).norm() < 1e-12);
}

TEST_CASE("masked accumulation matches the naive weighted sum") {
  MultiSpectrogram batch = random_batch(4, 6, 50, 7);
  std::mt19937 rng(8);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  SpectralMask m = const_mask(6, 50, 0.0f, SpectralMask::Kind::Speech);
  for (int f = 0; f < 6; ++f)
    for (int t = 0; t < 50; ++t) m.values(f, t) = u(rng);

  auto cov = accumulate_covariance(batch, m);
  for (int f = 0; f < 6; ++f) {
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(4, 4);
    double mass = 0.0;
    for (int t = 0; t < 50; ++t) {
      Eigen::VectorXcd y(4);
      for (int c = 0; c < 4; ++c) y[c] = Cd(batch[size_t(c)].coef(f, t));
      acc += double(m.values(f, t)) * (y * y.adjoint());
      mass += double(m.values(f, t));
    }
    acc /= mass;
    CHECK((cov.phi[size_t(f)] - acc).norm() / acc.norm() < 1e-12);
  }
}

TEST_CASE("accumulated covariances are Hermitian and positive semidefinite") {
  MultiSpectrogram batch = random_batch(5, 8, 40, 9);
  auto cov = accumulate_covariance(
      batch, const_mask(8, 40, 0.7f, SpectralMask::Kind::Noise));
  for (int f = 0; f < 8; ++f) {
    const auto& p = cov.phi[size_t(f)];
    CHECK((p - p.adjoint()).norm() < 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(p);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * p.trace().real());
  }
}

TEST_CASE("zero mask mass yields a flagged epsilon identity") {
  MultiSpectrogram batch = random_batch(2, 3, 4, 10);
  auto cov = accumulate_covariance(
      batch, const_mask(3, 4, 0.0f, SpectralMask::Kind::Noise));
  for (int f = 0; f < 3; ++f) {
    CHECK(cov.zero_mass[size_t(f)] == 1);
    CHECK(cov.phi[size_t(f)].isApprox(
        1e-10 * Eigen::MatrixXcd::Identity(2, 2)));
  }
  SpectralMask wrong = const_mask(5, 4, 1.0f, SpectralMask::Kind::Noise);
  CHECK_THROWS_AS(accumulate_covariance(batch, wrong), InvalidArgument);
}

TEST_CASE("identity noise with a single-channel source selects that channel") {
  Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(3, 3);
  Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(3, 3);
  s(0, 0) = 1.0;
  auto noise = make_cov({eye}, SpectralMask::Kind::Noise);
  auto speech = make_cov({s}, SpectralMask::Kind::Speech);
  auto w = mvdr_weights(noise, speech, 0);
  REQUIRE(w.bins() == 1);
  Eigen::VectorXcd e0 = Eigen::VectorXcd::Zero(3);
  e0[0] = 1.0;
  CHECK((w.w[0] - e0).norm() < 1e-10);
}

TEST_CASE("weights are invariant to speech covariance scale") {
  std::mt19937 rng(11);
  auto n = random_hermitian_pd(4, rng);
  auto s = random_hermitian_pd(4, rng);
  auto noise = make_cov({n}, SpectralMask::Kind::Noise);
  for (double c : {3.7, 0.002, 4000.0}) {
    auto w1 = mvdr_weights(noise, make_cov({s}, SpectralMask::Kind::Speech), 2);
    auto w2 = mvdr_weights(
        noise, make_cov({(c * s).eval()}, SpectralMask::Kind::Speech), 2);
    CHECK((w1.w[0] - w2.w[0]).norm() < 1e-10);
  }
}

TEST_CASE("rank-one source passes the reference entry undistorted") {
  std::mt19937 rng(12);
  for (int trial = 0; trial < 25; ++trial) {
    int m = 3 + int(rng() % 5);
    auto n = random_hermitian_pd(m, rng);
    Eigen::VectorXcd h = random_complex(m, 1, rng);
    Eigen::MatrixXcd s = h * h.adjoint();
    int ref = int(rng() % unsigned(m));
    auto w = mvdr_weights(make_cov({n}, SpectralMask::Kind::Noise),
                          make_cov({s}, SpectralMask::Kind::Speech), ref,
                          0.0);
    Cd response = w.w[0].adjoint() * h;
    CHECK(std::abs(response - h[ref]) < 1e-8);
  }
}

TEST_CASE("an all-zero source covariance degenerates every bin") {
  Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(3, 3);
  Eigen::MatrixXcd zero = Eigen::MatrixXcd::Zero(3, 3);
  CHECK_THROWS_AS(mvdr_weights(make_cov({eye}, SpectralMask::Kind::Noise),
                               make_cov({zero}, SpectralMask::Kind::Speech),
                               0),
                  DegenerateBeam);
}

TEST_CASE("reference selection maximizes the diagonal ratio") {
  Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(2, 2);
  Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(2, 2);
  s(0, 0) = 4.0;
  s(1, 1) = 1.0;
  CHECK(select_reference(make_cov({eye}, SpectralMask::Kind::Noise),
                         make_cov({s}, SpectralMask::Kind::Speech)) == 0);
  // All-equal channels tie-break to the lowest index.
  CHECK(select_reference(make_cov({eye}, SpectralMask::Kind::Noise),
                         make_cov({eye}, SpectralMask::Kind::Speech)) == 0);

  std::mt19937 rng(13);
  std::uniform_real_distribution<double> u(0.1, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    int m = 2 + int(rng() % 6);
    int bins = 1 + int(rng() % 4);
    std::vector<Eigen::MatrixXcd> nm, sm;
    for (int f = 0; f < bins; ++f) {
      Eigen::VectorXd nd(m), sd(m);
      for (int k = 0; k < m; ++k) {
        nd[k] = u(rng);
        sd[k] = u(rng);
      }
      nm.push_back(nd.cast<Cd>().asDiagonal());
      sm.push_back(sd.cast<Cd>().asDiagonal());
    }
    int got = select_reference(make_cov(nm, SpectralMask::Kind::Noise),
                               make_cov(sm, SpectralMask::Kind::Speech));
    // Brute-force scan.
    int best = 0;
    double best_snr = -1.0;
    for (int k = 0; k < m; ++k) {
      double snr = 0.0;
      for (int f = 0; f < bins; ++f)
        snr += sm[size_t(f)](k, k).real() / nm[size_t(f)](k, k).real();
      if (snr > best_snr) {
        best_snr = snr;
        best = k;
      }
    }
    CHECK(got == best);
  }

  Eigen::MatrixXcd zero = Eigen::MatrixXcd::Zero(2, 2);
  CHECK_THROWS_AS(select_reference(make_cov({zero}, SpectralMask::Kind::Noise),
                                   make_cov({s}, SpectralMask::Kind::Speech)),
                  InvalidCovariance);
}

TEST_CASE("the all-channel bank matches per-reference computation") {
  std::mt19937 rng(14);
  std::vector<Eigen::MatrixXcd> nm, sm;
  for (int f = 0; f < 5; ++f) {
    nm.push_back(random_hermitian_pd(4, rng));
    sm.push_back(random_hermitian_pd(4, rng));
  }
  auto noise = make_cov(nm, SpectralMask::Kind::Noise);
  auto speech = make_cov(sm, SpectralMask::Kind::Speech);

  auto bank = all_channel_bank(noise, speech);
  REQUIRE(bank.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(bank[size_t(k)].reference_channel == k);
    auto single = mvdr_weights(noise, speech, k);
    for (int f = 0; f < 5; ++f)
      CHECK((bank[size_t(k)].w[size_t(f)] - single.w[size_t(f)]).norm() ==
            0.0);
    // Independent oracle: direct inversion.
    for (int f = 0; f < 5; ++f) {
      Eigen::MatrixXcd a =
          load_full(nm[size_t(f)], 1e-3).inverse() * sm[size_t(f)];
      Eigen::VectorXcd expect = a.col(k) / a.trace();
      CHECK((bank[size_t(k)].w[size_t(f)] - expect).norm() /
                expect.norm() <
            1e-12);
    }
  }
}

TEST_CASE("swap-symmetric covariances give swap-symmetric weights") {
  Eigen::MatrixXcd n(2, 2), s(2, 2);
  n << Cd(2.0), Cd(0.3), Cd(0.3), Cd(2.0);
  s << Cd(1.5), Cd(0.7), Cd(0.7), Cd(1.5);
  auto bank = all_channel_bank(make_cov({n}, SpectralMask::Kind::Noise),
                               make_cov({s}, SpectralMask::Kind::Speech));
  CHECK(std::abs(bank[0].w[0][0] - bank[1].w[0][1]) < 1e-12);
  CHECK(std::abs(bank[0].w[0][1] - bank[1].w[0][0]) < 1e-12);
}

TEST_CASE("submatrix inverse identity on hand cases") {
  // Diagonal case: deleting index 1 from diag(1,2,4).
  Eigen::MatrixXcd p = Eigen::Vector3cd(Cd(1.0), Cd(0.5), Cd(0.25))
                           .asDiagonal();  // inverse of diag(1,2,4)
  Eigen::MatrixXcd q = loo_submatrix_inverse(p, 1);
  CHECK(std::abs(q(0, 0) - Cd(1.0)) < 1e-15);
  CHECK(std::abs(q(1, 1) - Cd(0.25)) < 1e-15);
  CHECK(std::abs(q(0, 1)) < 1e-15);

  // 2x2 [[2,1],[1,2]], deleting index 0 leaves [[2]] with inverse [[0.5]].
  Eigen::MatrixXcd phi(2, 2);
  phi << Cd(2.0), Cd(1.0), Cd(1.0), Cd(2.0);
  Eigen::MatrixXcd q2 = loo_submatrix_inverse(phi.inverse(), 0);
  REQUIRE(q2.rows() == 1);
  CHECK(std::abs(q2(0, 0) - Cd(0.5)) < 1e-12);
}

TEST_CASE("submatrix inverse agrees with direct deleted inversion") {
  std::mt19937 rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    int m = 3 + int(rng() % 8);
    Eigen::MatrixXcd phi = random_hermitian_pd(m, rng);
    Eigen::MatrixXcd p = phi.inverse();
    int k = int(rng() % unsigned(m));

    Eigen::MatrixXcd fast = loo_submatrix_inverse(p, k);

    Eigen::MatrixXcd sub(m - 1, m - 1);
    for (int i = 0, si = 0; i < m; ++i) {
      if (i == k) continue;
      for (int j = 0, sj = 0; j < m; ++j) {
        if (j == k) continue;
        sub(si, sj) = phi(i, j);
        ++sj;
      }
      ++si;
    }
    Eigen::MatrixXcd direct = sub.inverse();
    CHECK((fast - direct).norm() / direct.norm() < 1e-9);
  }
}

TEST_CASE("vanishing pivot is rejected") {
  Eigen::MatrixXcd p = Eigen::MatrixXcd::Identity(3, 3);
  p(1, 1) = 0.0;
  CHECK_THROWS_AS(loo_submatrix_inverse(p, 1), PivotDegenerate);
  CHECK_THROWS_AS(loo_submatrix_inverse(p, 5), InvalidArgument);
}

TEST_CASE("leave-one-out bank matches the direct-inversion oracle") {
  std::mt19937 rng(16);
  const int m = 5, bins = 4;
  std::vector<Eigen::MatrixXcd> nm, sm;
  for (int f = 0; f < bins; ++f) {
    nm.push_back(random_hermitian_pd(m, rng));
    sm.push_back(random_hermitian_pd(m, rng));
  }
  auto noise = make_cov(nm, SpectralMask::Kind::Noise);
  auto speech = make_cov(sm, SpectralMask::Kind::Speech);
  auto bank = loo_bank(noise, speech, 1e-3);
  REQUIRE(bank.size() == size_t(m));

  for (int leave = 0; leave < m; ++leave) {
    const auto& bw = bank[size_t(leave)];
    CHECK(bw.left_out == leave);
    REQUIRE(bw.channel_map.size() == size_t(m - 1));
    for (int f = 0; f < bins; ++f) {
      Eigen::MatrixXcd rl = load_full(nm[size_t(f)], 1e-3);
      Eigen::MatrixXcd rsub(m - 1, m - 1), ssub(m - 1, m - 1);
      for (size_t a = 0; a < bw.channel_map.size(); ++a)
        for (size_t b = 0; b < bw.channel_map.size(); ++b) {
          rsub(long(a), long(b)) = rl(bw.channel_map[a], bw.channel_map[b]);
          ssub(long(a), long(b)) =
              sm[size_t(f)](bw.channel_map[a], bw.channel_map[b]);
        }
      Eigen::MatrixXcd a = rsub.inverse() * ssub;
      int ref_pos = 0;
      for (size_t c = 0; c < bw.channel_map.size(); ++c)
        if (bw.channel_map[c] == bw.reference_channel) ref_pos = int(c);
      Eigen::VectorXcd expect = a.col(ref_pos) / a.trace();
      CHECK((bw.w[size_t(f)] - expect).norm() / expect.norm() < 1e-9);
    }
  }

  CHECK_THROWS_AS(
      loo_bank(make_cov({nm[0].topLeftCorner(2, 2).eval()},
                        SpectralMask::Kind::Noise),
               make_cov({sm[0].topLeftCorner(2, 2).eval()},
                        SpectralMask::Kind::Speech)),
      InvalidArgument);
}

TEST_CASE("permuting channels permutes the leave-one-out bank") {
  std::mt19937 rng(17);
  const int m = 4;
  auto nm = random_hermitian_pd(m, rng);
  auto sm = random_hermitian_pd(m, rng);
  std::vector<int> perm = {2, 0, 3, 1};  // new index -> original index
  Eigen::MatrixXcd np(m, m), sp(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      np(i, j) = nm(perm[size_t(i)], perm[size_t(j)]);
      sp(i, j) = sm(perm[size_t(i)], perm[size_t(j)]);
    }

  auto bank = loo_bank(make_cov({nm}, SpectralMask::Kind::Noise),
                       make_cov({sm}, SpectralMask::Kind::Speech));
  auto bank_p = loo_bank(make_cov({np}, SpectralMask::Kind::Noise),
                         make_cov({sp}, SpectralMask::Kind::Speech));

  for (int new_leave = 0; new_leave < m; ++new_leave) {
    int orig_leave = perm[size_t(new_leave)];
    const auto& a = bank[size_t(orig_leave)];
    const auto& b = bank_p[size_t(new_leave)];
    CHECK(perm[size_t(b.reference_channel)] == a.reference_channel);
    for (size_t c = 0; c < b.channel_map.size(); ++c) {
      int orig_channel = perm[size_t(b.channel_map[c])];
      // Find that channel's slot in the original beam.
      for (size_t d = 0; d < a.channel_map.size(); ++d)
        if (a.channel_map[d] == orig_channel)
          CHECK(std::abs(b.w[0][long(c)] - a.w[0][long(d)]) < 1e-9);
    }
  }
}

TEST_CASE("leaving out the noisy channel beats leaving out a clean one") {
  // Source reaches channels 0 and 1; channel 2 carries only noise.
  Eigen::VectorXcd h(3);
  h << Cd(1.0), Cd(0.8), Cd(0.0);
  Eigen::MatrixXcd s = h * h.adjoint();
  Eigen::MatrixXcd n = Eigen::MatrixXcd::Identity(3, 3);
  auto bank = loo_bank(make_cov({n}, SpectralMask::Kind::Noise),
                       make_cov({s}, SpectralMask::Kind::Speech));

  auto out_snr = [&](const BeamformerWeights& bw) {
    Eigen::MatrixXcd ssub(2, 2), nsub(2, 2);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        ssub(a, b) = s(bw.channel_map[size_t(a)], bw.channel_map[size_t(b)]);
        nsub(a, b) = n(bw.channel_map[size_t(a)], bw.channel_map[size_t(b)]);
      }
    const Eigen::VectorXcd& w = bw.w[0];
    double num = (w.adjoint() * ssub * w).value().real();
    double den = (w.adjoint() * nsub * w).value().real();
    return num / den;
  };
  CHECK(out_snr(bank[2]) > out_snr(bank[0]));
  CHECK(out_snr(bank[2]) > out_snr(bank[1]));
}

TEST_CASE("applying selection weights copies a channel") {
  MultiSpectrogram batch = random_batch(3, 4, 6, 18);
  BeamformerWeights w;
  w.channel_map = {0, 1, 2};
  w.reference_channel = 1;
  for (int f = 0; f < 4; ++f) {
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(3);
    e[1] = 1.0;
    w.w.push_back(e);
  }
  Spectrogram out = apply_beamformer(w, batch);
  for (int f = 0; f < 4; ++f)
    for (int t = 0; t < 6; ++t)
      CHECK(std::abs(std::complex<float>(out.coef(f, t)) -
                     batch[1].coef(f, t)) < 1e-6f);

  for (auto& wf : w.w) wf.setZero();
  Spectrogram zero = apply_beamformer(w, batch);
  CHECK(zero.coef.norm() == 0.0f);

  w.w.pop_back();
  CHECK_THROWS_AS(apply_beamformer(w, batch), InvalidArgument);
}

TEST_CASE("applied output matches the naive conjugate inner product") {
  std::mt19937 rng(19);
  MultiSpectrogram batch = random_batch(4, 5, 7, 20);
  BeamformerWeights w;
  w.channel_map = {0, 1, 2, 3};
  for (int f = 0; f < 5; ++f) w.w.push_back(random_complex(4, 1, rng));

  Spectrogram out = apply_beamformer(w, batch);
  for (int f = 0; f < 5; ++f)
    for (int t = 0; t < 7; ++t) {
      Cd acc = 0.0;
      for (int c = 0; c < 4; ++c)
        acc += std::conj(w.w[size_t(f)][c]) * Cd(batch[size_t(c)].coef(f, t));
      CHECK(std::abs(Cd(out.coef(f, t)) - acc) < 1e-5);
    }
}

TEST_CASE("the bank smooths covariances across batches") {
  BeamformerConfig cfg;
  cfg.forgetting = 0.95;
  BeamformerBank bank(3, cfg);

  auto batch1 = random_batch(3, 6, 20, 21);
  auto batch2 = random_batch(3, 6, 20, 22);
  MaskPair masks;
  masks.speech = const_mask(6, 20, 0.6f, SpectralMask::Kind::Speech);
  masks.noise = const_mask(6, 20, 0.4f, SpectralMask::Kind::Noise);

  auto out1 = bank.process(batch1, masks);
  REQUIRE(out1.size() == 3);
  auto c1 = accumulate_covariance(batch1, masks.noise);
  CHECK((bank.smoothed_noise().phi[0] - c1.phi[0]).norm() < 1e-12);

  bank.process(batch2, masks);
  auto c2 = accumulate_covariance(batch2, masks.noise);
  Eigen::MatrixXcd expect = 0.95 * c1.phi[0] + 0.05 * c2.phi[0];
  CHECK((bank.smoothed_noise().phi[0] - expect).norm() /
            expect.norm() <
        1e-12);

  for (const auto& o : out1) {
    CHECK(o.scheme == BeamformerConfig::Scheme::AllChannel);
    CHECK(o.left_out == -1);
    CHECK(o.spec.frames() == 20);
  }
}

TEST_CASE("bank construction validates the scheme") {
  BeamformerConfig cfg;
  cfg.scheme = BeamformerConfig::Scheme::LeaveOneOut;
  CHECK_THROWS_AS(BeamformerBank(2, cfg), InvalidArgument);
  CHECK_NOTHROW(BeamformerBank(3, cfg));
  cfg.forgetting = 1.0;
  CHECK_THROWS_AS(BeamformerBank(3, cfg), InvalidArgument);
}
