#include "amtk/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace amtk {

namespace {

constexpr uint64_t kSaturated = std::numeric_limits<uint64_t>::max() / 2;
// Beyond this many subsets, enumerating them to sample becomes unreasonable.
constexpr uint64_t kEnumerationLimit = 1u << 20;

bool next_combination(std::vector<int>& idx, int m) {
  const int k = int(idx.size());
  for (int i = k - 1; i >= 0; --i) {
    if (idx[size_t(i)] < m - (k - i)) {
      ++idx[size_t(i)];
      for (int j = i + 1; j < k; ++j)
        idx[size_t(j)] = idx[size_t(j - 1)] + 1;
      return true;
    }
  }
  return false;
}

}  // namespace

PosteriorFrameMatrix make_posterior_matrix(Eigen::MatrixXf p, int channel) {
  if (p.size() == 0) throw InvalidArgument("posterior matrix: empty");
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const float v = p(r, c);
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f + 1e-6f)
        throw InvalidArgument("posterior matrix: entry outside [0,1]");
      p(r, c) = std::min(v, 1.0f);
      sum += double(p(r, c));
    }
    if (sum > 1.0)
      for (Eigen::Index c = 0; c < p.cols(); ++c)
        p(r, c) = float(double(p(r, c)) / sum);
  }
  return {std::move(p), channel};
}

uint64_t count_subsets(int m, int k) {
  if (k < 0 || k > m) return 0;
  k = std::min(k, m - k);
  uint64_t result = 1;
  for (int i = 1; i <= k; ++i) {
    const uint64_t numer = uint64_t(m - k + i);
    if (result > kSaturated / numer) return kSaturated;
    result = result * numer / uint64_t(i);
  }
  return std::min(result, kSaturated);
}

std::vector<FusionResult> fuse_posteriors(
    const std::vector<PosteriorFrameMatrix>& inputs, FusionMode mode,
    int subset_size, uint64_t sample_count, unsigned seed) {
  const int m = int(inputs.size());
  if (m == 0) throw InvalidArgument("fuse_posteriors: no inputs");
  if (subset_size < 1 || subset_size > m)
    throw InvalidArgument("fuse_posteriors: subset size out of range");
  if (sample_count == 0)
    throw InvalidArgument("fuse_posteriors: sample count must be positive");
  const Eigen::Index rows = inputs[0].p.rows(), cols = inputs[0].p.cols();
  for (const auto& in : inputs)
    if (in.p.rows() != rows || in.p.cols() != cols)
      throw InvalidArgument("fuse_posteriors: dimension mismatch");

  const uint64_t total = count_subsets(m, subset_size);
  std::vector<std::vector<int>> chosen;

  if (total <= sample_count) {
    std::vector<int> idx(static_cast<size_t>(subset_size));
    for (int i = 0; i < subset_size; ++i) idx[size_t(i)] = i;
    do {
      chosen.push_back(idx);
    } while (next_combination(idx, m));
  } else if (total <= kEnumerationLimit) {
    // Selection sampling over the lexicographic enumeration: uniform and
    // reproducible for a given seed.
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    uint64_t remaining = total, need = sample_count;
    std::vector<int> idx(static_cast<size_t>(subset_size));
    for (int i = 0; i < subset_size; ++i) idx[size_t(i)] = i;
    do {
      if (need == 0) break;
      if (u(rng) * double(remaining) < double(need)) {
        chosen.push_back(idx);
        --need;
      }
      --remaining;
    } while (next_combination(idx, m));
  } else {
    // Too many subsets to walk: draw distinct subsets directly.
    std::mt19937 rng(seed);
    std::vector<std::vector<int>> draws;
    std::vector<int> pool(static_cast<size_t>(m));
    while (draws.size() < sample_count) {
      for (int i = 0; i < m; ++i) pool[size_t(i)] = i;
      for (int i = 0; i < subset_size; ++i) {
        std::uniform_int_distribution<int> pick(i, m - 1);
        std::swap(pool[size_t(i)], pool[size_t(pick(rng))]);
      }
      std::vector<int> subset(pool.begin(), pool.begin() + subset_size);
      std::sort(subset.begin(), subset.end());
      if (std::find(draws.begin(), draws.end(), subset) == draws.end())
        draws.push_back(subset);
    }
    std::sort(draws.begin(), draws.end());
    chosen = std::move(draws);
  }

  std::vector<FusionResult> out;
  out.reserve(chosen.size());
  for (const auto& subset : chosen) {
    Eigen::MatrixXf fused;
    if (mode == FusionMode::Sum) {
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(rows, cols);
      for (int s : subset) acc += inputs[size_t(s)].p.cast<double>();
      fused = (acc / double(subset.size())).cast<float>();
    } else {
      fused = inputs[size_t(subset[0])].p;
      for (size_t i = 1; i < subset.size(); ++i)
        fused = fused.cwiseMax(inputs[size_t(subset[i])].p);
      for (Eigen::Index r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < cols; ++c) sum += double(fused(r, c));
        if (sum > 1.0)
          for (Eigen::Index c = 0; c < cols; ++c)
            fused(r, c) = float(double(fused(r, c)) / sum);
      }
    }
    out.push_back({{std::move(fused), -1}, subset});
  }
  return out;
}

}  // namespace amtk
