// posterior.hpp -- fusion of per-channel frame posterior matrices over
// channel subsets, by elementwise mean or max.
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "amtk/types.hpp"

namespace amtk {

// Frame-by-class posterior grid for one channel. Rows are frames, columns
// are classes; entries lie in [0,1] and each row sums to at most 1.
struct PosteriorFrameMatrix {
  Eigen::MatrixXf p;
  int channel = -1;
};

// Validates entries and renormalizes any row whose sum exceeds 1.
PosteriorFrameMatrix make_posterior_matrix(Eigen::MatrixXf p, int channel = -1);

enum class FusionMode { Sum, Max };

struct FusionResult {
  PosteriorFrameMatrix matrix;
  std::vector<int> members;  // input indices of the fused subset, ascending
};

// C(m, k), saturating instead of overflowing.
uint64_t count_subsets(int m, int k);

// Fuses every size-k subset of the inputs (all of them when their count is
// within sample_count, otherwise a seed-reproducible uniform sample of
// sample_count subsets). Sum mode takes the elementwise mean; max mode takes
// the elementwise max and renormalizes any row that then exceeds 1.
std::vector<FusionResult> fuse_posteriors(
    const std::vector<PosteriorFrameMatrix>& inputs, FusionMode mode,
    int subset_size, uint64_t sample_count, unsigned seed = 1);

}  // namespace amtk
