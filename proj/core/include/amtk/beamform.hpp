// beamform.hpp -- masked spatial covariance accumulation and MVDR weight
// banks. Produces N = M enhanced outputs, either by rotating the reference
// position (all-channel bank) or by leaving each channel out in turn with a
// shared-inverse submatrix update (leave-one-out bank).
#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "amtk/mask.hpp"
#include "amtk/stft.hpp"
#include "amtk/types.hpp"

namespace amtk {

// Recoverable numerical conditions; callers choose the documented fallback.
class DegenerateBeam : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InvalidCovariance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class PivotDegenerate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpatialCovariance {
  std::vector<Eigen::MatrixXcd> phi;  // per frequency, M x M Hermitian
  Eigen::ArrayXd mask_mass;           // per frequency mask weight sum
  std::vector<uint8_t> zero_mass;     // flags bins that saw no mask weight
  SpectralMask::Kind kind = SpectralMask::Kind::Noise;

  int bins() const { return int(phi.size()); }
  int channels() const { return phi.empty() ? 0 : int(phi[0].rows()); }
};

// phi_f = sum_t m_ft y_ft y_ft^H / sum_t m_ft. Bins with zero mask mass get
// an epsilon-scaled identity and a zero_mass flag.
SpatialCovariance accumulate_covariance(const MultiSpectrogram& batch,
                                        const SpectralMask& mask);

struct BeamformerWeights {
  std::vector<Eigen::VectorXcd> w;  // per frequency, length = channel count
  std::vector<int> channel_map;     // input channel for each weight entry
  int reference_channel = 0;        // global index of the distortionless tap
  int left_out = -1;                // global index excluded, -1 = none
  std::vector<int> degenerate_bins;  // fell back to reference pass-through

  int bins() const { return int(w.size()); }
};

// w_f = R^-1 Phi_S r / tr(R^-1 Phi_S) with R = Phi_N + loading*tr(Phi_N)/M*I.
// Bins whose trace falls under 1e-12*M fall back to the reference selection
// vector and are listed in degenerate_bins; if every bin degenerates the
// call throws DegenerateBeam.
BeamformerWeights mvdr_weights(const SpatialCovariance& noise,
                               const SpatialCovariance& speech,
                               int reference, double diagonal_loading = 1e-3);

// argmax_k sum_f S[k,k]/N[k,k] over bins with strictly positive noise
// diagonals; ties break to the lowest index. No usable bin at all ->
// InvalidCovariance.
int select_reference(const SpatialCovariance& noise,
                     const SpatialCovariance& speech);

// M weight vectors sharing one R^-1 Phi_S product, reference rotated over
// every channel. Entry k equals mvdr_weights(noise, speech, k) exactly.
std::vector<BeamformerWeights> all_channel_bank(const SpatialCovariance& noise,
                                                const SpatialCovariance& speech,
                                                double diagonal_loading = 1e-3);

// Given P = Phi^-1, returns the inverse of Phi with row/column k deleted:
// P_kk_bar - P_:k P_k: / P[k,k]. |P[k,k]| under 1e-14*||P||_F ->
// PivotDegenerate (callers fall back to direct inversion).
Eigen::MatrixXcd loo_submatrix_inverse(const Eigen::MatrixXcd& p, int k);

// M beams, beam m using channels {0..M-1}\{m}; the noise inverse comes from
// loo_submatrix_inverse on the shared M-dim inverse, the subset reference
// from select_reference restricted to the subset. M < 3 ->
// InvalidArgument (a leave-one-out beam needs at least two channels).
std::vector<BeamformerWeights> loo_bank(const SpatialCovariance& noise,
                                        const SpatialCovariance& speech,
                                        double diagonal_loading = 1e-3);

// out(f,t) = w_f^H y_ft over the weight's channel subset.
Spectrogram apply_beamformer(const BeamformerWeights& weights,
                             const MultiSpectrogram& batch);

struct BeamformerConfig {
  enum class Scheme { AllChannel, LeaveOneOut };
  Scheme scheme = Scheme::AllChannel;
  double diagonal_loading = 1e-3;
  double forgetting = 0.95;  // cross-batch covariance smoothing

  void validate() const;
};

struct BeamOutput {
  Spectrogram spec;
  BeamformerConfig::Scheme scheme = BeamformerConfig::Scheme::AllChannel;
  int reference_channel = 0;
  int left_out = -1;
};

// Stateful per-session bank: smooths covariances across 1 s batches with
// exponential forgetting, recomputes weights once per batch, applies them to
// the batch, and returns N = M outputs.
class BeamformerBank {
 public:
  BeamformerBank(int channels, BeamformerConfig config = {});

  std::vector<BeamOutput> process(const MultiSpectrogram& batch,
                                  const MaskPair& masks);

  const SpatialCovariance& smoothed_noise() const { return noise_; }
  const SpatialCovariance& smoothed_speech() const { return speech_; }

 private:
  void fold(SpatialCovariance& acc, const SpatialCovariance& batch) const;

  int channels_;
  BeamformerConfig cfg_;
  SpatialCovariance noise_, speech_;
  bool primed_ = false;
};

}  // namespace amtk
