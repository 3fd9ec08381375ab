#include "amtk/beamform.hpp"

#include <algorithm>
#include <cmath>

namespace amtk {

namespace {

constexpr double kZeroMassEps = 1e-10;
constexpr double kDenomTol = 1e-12;
constexpr double kPivotTol = 1e-14;

void check_batch(const MultiSpectrogram& batch) {
  if (batch.empty())
    throw InvalidArgument("beamform: empty channel batch");
  for (const auto& s : batch) {
    if (s.bins() != batch[0].bins() || s.frames() != batch[0].frames())
      throw InvalidArgument("beamform: channel dimension mismatch");
  }
}

// Loaded noise matrix: R = Phi_N + loading * tr(Phi_N)/M * I.
Eigen::MatrixXcd loaded(const Eigen::MatrixXcd& phi_n, double loading) {
  const int m = int(phi_n.rows());
  const double tr = phi_n.trace().real();
  Eigen::MatrixXcd r = phi_n;
  r.diagonal().array() += std::complex<double>(loading * tr / m, 0.0);
  return r;
}

struct BinProduct {
  Eigen::MatrixXcd a;  // R^-1 Phi_S
  std::complex<double> denom;
  bool degenerate = false;
};

// Shared core of mvdr_weights / all_channel_bank: per-bin A = R^-1 Phi_S
// and its trace.
std::vector<BinProduct> mvdr_products(const SpatialCovariance& noise,
                                      const SpatialCovariance& speech,
                                      double loading) {
  if (noise.bins() != speech.bins() ||
      noise.channels() != speech.channels())
    throw InvalidArgument("mvdr: covariance dimension mismatch");
  const int m = noise.channels();
  std::vector<BinProduct> out(size_t(noise.bins()));
  for (int f = 0; f < noise.bins(); ++f) {
    BinProduct& bp = out[size_t(f)];
    const Eigen::MatrixXcd r = loaded(noise.phi[size_t(f)], loading);
    if (r.trace().real() <= 0.0) {
      bp.degenerate = true;
      continue;
    }
    Eigen::LDLT<Eigen::MatrixXcd> ldlt(r);
    if (ldlt.info() != Eigen::Success) {
      bp.degenerate = true;
      continue;
    }
    bp.a = ldlt.solve(speech.phi[size_t(f)]);
    bp.denom = bp.a.trace();
    if (std::abs(bp.denom) < kDenomTol * m) bp.degenerate = true;
  }
  return out;
}

BeamformerWeights weights_from_products(const std::vector<BinProduct>& prods,
                                        int m, int reference) {
  BeamformerWeights w;
  w.reference_channel = reference;
  w.channel_map.resize(size_t(m));
  for (int c = 0; c < m; ++c) w.channel_map[size_t(c)] = c;
  w.w.reserve(prods.size());
  int degenerate_count = 0;
  for (size_t f = 0; f < prods.size(); ++f) {
    if (prods[f].degenerate) {
      Eigen::VectorXcd e = Eigen::VectorXcd::Zero(m);
      e[reference] = 1.0;
      w.w.push_back(std::move(e));
      w.degenerate_bins.push_back(int(f));
      ++degenerate_count;
    } else {
      w.w.push_back(prods[f].a.col(reference) / prods[f].denom);
    }
  }
  if (degenerate_count == int(prods.size()))
    throw DegenerateBeam("all frequency bins degenerate");
  return w;
}

}  // namespace

void BeamformerConfig::validate() const {
  if (diagonal_loading < 0)
    throw InvalidArgument("beamform config: negative diagonal loading");
  if (forgetting < 0 || forgetting >= 1)
    throw InvalidArgument("beamform config: forgetting must be in [0, 1)");
}

SpatialCovariance accumulate_covariance(const MultiSpectrogram& batch,
                                        const SpectralMask& mask) {
  check_batch(batch);
  const int m = int(batch.size());
  const int bins = batch[0].bins();
  const int frames = batch[0].frames();
  if (mask.bins() != bins || mask.frames() != frames)
    throw InvalidArgument("accumulate_covariance: mask dimension mismatch");

  SpatialCovariance cov;
  cov.kind = mask.kind;
  cov.phi.assign(size_t(bins), Eigen::MatrixXcd::Zero(m, m));
  cov.mask_mass = Eigen::ArrayXd::Zero(bins);
  cov.zero_mass.assign(size_t(bins), 0);

  Eigen::VectorXcd y(m);
  for (int f = 0; f < bins; ++f) {
    Eigen::MatrixXcd& phi = cov.phi[size_t(f)];
    double mass = 0.0;
    for (int t = 0; t < frames; ++t) {
      const double w = double(mask.values(f, t));
      if (w <= 0.0) continue;
      for (int c = 0; c < m; ++c)
        y[c] = std::complex<double>(batch[size_t(c)].coef(f, t));
      phi.noalias() += w * (y * y.adjoint());
      mass += w;
    }
    cov.mask_mass[f] = mass;
    if (mass > 0.0) {
      phi /= mass;
      // Kill rounding asymmetry so the Hermitian invariant holds exactly.
      phi = ((phi + phi.adjoint()) * 0.5).eval();
    } else {
      phi = kZeroMassEps * Eigen::MatrixXcd::Identity(m, m);
      cov.zero_mass[size_t(f)] = 1;
    }
  }
  return cov;
}

BeamformerWeights mvdr_weights(const SpatialCovariance& noise,
                               const SpatialCovariance& speech,
                               int reference, double diagonal_loading) {
  const int m = noise.channels();
  if (reference < 0 || reference >= m)
    throw InvalidArgument("mvdr_weights: reference out of range");
  return weights_from_products(
      mvdr_products(noise, speech, diagonal_loading), m, reference);
}

int select_reference(const SpatialCovariance& noise,
                     const SpatialCovariance& speech) {
  if (noise.bins() != speech.bins() ||
      noise.channels() != speech.channels())
    throw InvalidArgument("select_reference: dimension mismatch");
  const int m = noise.channels();
  const int bins = noise.bins();

  std::vector<double> snr(size_t(m), 0.0);
  bool any_usable = false;
  for (int f = 0; f < bins; ++f) {
    if (noise.zero_mass[size_t(f)] || speech.zero_mass[size_t(f)]) continue;
    bool usable = true;
    for (int k = 0; k < m; ++k)
      if (noise.phi[size_t(f)](k, k).real() <= 0.0) usable = false;
    if (!usable) continue;
    any_usable = true;
    for (int k = 0; k < m; ++k)
      snr[size_t(k)] += speech.phi[size_t(f)](k, k).real() /
                        noise.phi[size_t(f)](k, k).real();
  }
  if (!any_usable)
    throw InvalidCovariance("select_reference: no bin with positive noise");

  int best = 0;
  for (int k = 1; k < m; ++k)
    if (snr[size_t(k)] > snr[size_t(best)]) best = k;
  return best;
}

std::vector<BeamformerWeights> all_channel_bank(const SpatialCovariance& noise,
                                                const SpatialCovariance& speech,
                                                double diagonal_loading) {
  const int m = noise.channels();
  const auto prods = mvdr_products(noise, speech, diagonal_loading);
  std::vector<BeamformerWeights> bank;
  bank.reserve(size_t(m));
  for (int k = 0; k < m; ++k)
    bank.push_back(weights_from_products(prods, m, k));
  return bank;
}

Eigen::MatrixXcd loo_submatrix_inverse(const Eigen::MatrixXcd& p, int k) {
  const int m = int(p.rows());
  if (p.cols() != m) throw InvalidArgument("loo_submatrix_inverse: not square");
  if (k < 0 || k >= m)
    throw InvalidArgument("loo_submatrix_inverse: index out of range");
  if (std::abs(p(k, k)) < kPivotTol * p.norm())
    throw PivotDegenerate("pivot too small at index " + std::to_string(k));

  Eigen::MatrixXcd q(m - 1, m - 1);
  for (int i = 0, qi = 0; i < m; ++i) {
    if (i == k) continue;
    for (int j = 0, qj = 0; j < m; ++j) {
      if (j == k) continue;
      q(qi, qj) = p(i, j) - p(i, k) * p(k, j) / p(k, k);
      ++qj;
    }
    ++qi;
  }
  return q;
}

std::vector<BeamformerWeights> loo_bank(const SpatialCovariance& noise,
                                        const SpatialCovariance& speech,
                                        double diagonal_loading) {
  if (noise.bins() != speech.bins() ||
      noise.channels() != speech.channels())
    throw InvalidArgument("loo_bank: covariance dimension mismatch");
  const int m = noise.channels();
  if (m < 3)
    throw InvalidArgument(
        "loo_bank: unsupported configuration, needs at least 3 channels");
  const int bins = noise.bins();
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(m, m);

  // Shared full inverses, one per bin; subset inverses derive from them.
  std::vector<Eigen::MatrixXcd> inv(static_cast<size_t>(bins));
  std::vector<uint8_t> inv_ok(size_t(bins), 0);
  for (int f = 0; f < bins; ++f) {
    const Eigen::MatrixXcd r = loaded(noise.phi[size_t(f)], diagonal_loading);
    if (r.trace().real() <= 0.0) continue;
    Eigen::LDLT<Eigen::MatrixXcd> ldlt(r);
    if (ldlt.info() != Eigen::Success) continue;
    inv[size_t(f)] = ldlt.solve(eye);
    inv_ok[size_t(f)] = 1;
  }

  std::vector<BeamformerWeights> bank;
  bank.reserve(size_t(m));
  for (int leave = 0; leave < m; ++leave) {
    BeamformerWeights bw;
    bw.left_out = leave;
    for (int c = 0; c < m; ++c)
      if (c != leave) bw.channel_map.push_back(c);

    // Subset reference by the per-channel SNR proxy over usable bins.
    std::vector<double> snr(size_t(m - 1), 0.0);
    bool any_usable = false;
    for (int f = 0; f < bins; ++f) {
      if (noise.zero_mass[size_t(f)] || speech.zero_mass[size_t(f)]) continue;
      bool usable = true;
      for (int j : bw.channel_map)
        if (noise.phi[size_t(f)](j, j).real() <= 0.0) usable = false;
      if (!usable) continue;
      any_usable = true;
      for (size_t ji = 0; ji < bw.channel_map.size(); ++ji) {
        int j = bw.channel_map[ji];
        snr[ji] += speech.phi[size_t(f)](j, j).real() /
                   noise.phi[size_t(f)](j, j).real();
      }
    }
    if (!any_usable)
      throw InvalidCovariance("loo_bank: no bin with positive noise");
    int ref_pos = 0;
    for (int j = 1; j < m - 1; ++j)
      if (snr[size_t(j)] > snr[size_t(ref_pos)]) ref_pos = j;
    bw.reference_channel = bw.channel_map[size_t(ref_pos)];

    int degenerate_count = 0;
    for (int f = 0; f < bins; ++f) {
      bool degenerate = !inv_ok[size_t(f)];
      Eigen::VectorXcd wf;
      if (!degenerate) {
        Eigen::MatrixXcd sub_inv;
        try {
          sub_inv = loo_submatrix_inverse(inv[size_t(f)], leave);
        } catch (const PivotDegenerate&) {
          // Fall back to inverting the deleted submatrix directly.
          Eigen::MatrixXcd r =
              loaded(noise.phi[size_t(f)], diagonal_loading);
          Eigen::MatrixXcd rs(m - 1, m - 1);
          for (size_t a = 0; a < bw.channel_map.size(); ++a)
            for (size_t b = 0; b < bw.channel_map.size(); ++b)
              rs(long(a), long(b)) =
                  r(bw.channel_map[a], bw.channel_map[b]);
          Eigen::LDLT<Eigen::MatrixXcd> ldlt(rs);
          if (ldlt.info() == Eigen::Success)
            sub_inv = ldlt.solve(Eigen::MatrixXcd::Identity(m - 1, m - 1));
          else
            degenerate = true;
        }
        if (!degenerate) {
          Eigen::MatrixXcd sub_s(m - 1, m - 1);
          for (size_t a = 0; a < bw.channel_map.size(); ++a)
            for (size_t b = 0; b < bw.channel_map.size(); ++b)
              sub_s(long(a), long(b)) = speech.phi[size_t(f)](
                  bw.channel_map[a], bw.channel_map[b]);
          const Eigen::MatrixXcd prod = sub_inv * sub_s;
          const std::complex<double> denom = prod.trace();
          if (std::abs(denom) < kDenomTol * (m - 1))
            degenerate = true;
          else
            wf = prod.col(ref_pos) / denom;
        }
      }
      if (degenerate) {
        wf = Eigen::VectorXcd::Zero(m - 1);
        wf[ref_pos] = 1.0;
        bw.degenerate_bins.push_back(f);
        ++degenerate_count;
      }
      bw.w.push_back(std::move(wf));
    }
    if (degenerate_count == bins)
      throw DegenerateBeam("all frequency bins degenerate");
    bank.push_back(std::move(bw));
  }
  return bank;
}

Spectrogram apply_beamformer(const BeamformerWeights& weights,
                             const MultiSpectrogram& batch) {
  check_batch(batch);
  const int bins = batch[0].bins();
  const int frames = batch[0].frames();
  if (weights.bins() != bins)
    throw InvalidArgument("apply_beamformer: bin count mismatch");
  for (int c : weights.channel_map)
    if (c < 0 || c >= int(batch.size()))
      throw InvalidArgument("apply_beamformer: channel map out of range");

  Spectrogram out;
  out.config = batch[0].config;
  out.frame0 = batch[0].frame0;
  out.channel = -1;
  out.coef.resize(bins, frames);
  for (int f = 0; f < bins; ++f) {
    const Eigen::VectorXcd& wf = weights.w[size_t(f)];
    if (wf.size() != long(weights.channel_map.size()))
      throw InvalidArgument("apply_beamformer: weight length mismatch");
    for (int t = 0; t < frames; ++t) {
      std::complex<double> acc = 0.0;
      for (size_t c = 0; c < weights.channel_map.size(); ++c)
        acc += std::conj(wf[long(c)]) *
               std::complex<double>(
                   batch[size_t(weights.channel_map[c])].coef(f, t));
      out.coef(f, t) = std::complex<float>(acc);
    }
  }
  return out;
}

BeamformerBank::BeamformerBank(int channels, BeamformerConfig config)
    : channels_(channels), cfg_(config) {
  cfg_.validate();
  if (channels < 1) throw InvalidArgument("BeamformerBank: no channels");
  if (cfg_.scheme == BeamformerConfig::Scheme::LeaveOneOut && channels < 3)
    throw InvalidArgument(
        "BeamformerBank: leave-one-out needs at least 3 channels");
}

void BeamformerBank::fold(SpatialCovariance& acc,
                          const SpatialCovariance& batch) const {
  const double lambda = cfg_.forgetting;
  for (int f = 0; f < acc.bins(); ++f) {
    // A bin that saw no mask mass this batch keeps its history instead of
    // being pulled toward the epsilon placeholder.
    if (batch.zero_mass[size_t(f)]) continue;
    if (acc.zero_mass[size_t(f)]) {
      acc.phi[size_t(f)] = batch.phi[size_t(f)];
      acc.zero_mass[size_t(f)] = 0;
    } else {
      acc.phi[size_t(f)] = lambda * acc.phi[size_t(f)] +
                           (1.0 - lambda) * batch.phi[size_t(f)];
    }
    acc.mask_mass[f] = lambda * acc.mask_mass[f] + batch.mask_mass[f];
  }
}

std::vector<BeamOutput> BeamformerBank::process(const MultiSpectrogram& batch,
                                                const MaskPair& masks) {
  check_batch(batch);
  if (int(batch.size()) != channels_)
    throw InvalidArgument("BeamformerBank: channel count changed");

  SpatialCovariance n = accumulate_covariance(batch, masks.noise);
  SpatialCovariance s = accumulate_covariance(batch, masks.speech);
  if (!primed_) {
    noise_ = std::move(n);
    speech_ = std::move(s);
    primed_ = true;
  } else {
    fold(noise_, n);
    fold(speech_, s);
  }

  std::vector<BeamformerWeights> bank;
  if (cfg_.scheme == BeamformerConfig::Scheme::AllChannel)
    bank = all_channel_bank(noise_, speech_, cfg_.diagonal_loading);
  else
    bank = loo_bank(noise_, speech_, cfg_.diagonal_loading);

  std::vector<BeamOutput> out;
  out.reserve(bank.size());
  for (auto& bw : bank) {
    BeamOutput bo;
    bo.scheme = cfg_.scheme;
    bo.reference_channel = bw.reference_channel;
    bo.left_out = bw.left_out;
    bo.spec = apply_beamformer(bw, batch);
    out.push_back(std::move(bo));
  }
  return out;
}

}  // namespace amtk
