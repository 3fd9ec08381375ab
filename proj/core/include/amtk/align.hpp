// align.hpp -- continuous alignment of asynchronous sample streams to a
// reference stream via periodic cross-correlation lag detection and sample
// decimation/insertion.
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "amtk/types.hpp"

namespace amtk {

struct AlignmentConfig {
  double detection_interval_s = 30.0;
  double startup_interval_s = 1.0;
  double output_delay_s = 2.0;
  double max_local_lag_s = 0.5;
  double significance_threshold = 0.3;
  double coarse_window_s = 10.0;
  double coarse_hop_s = 1.0;
  int sample_rate = 16000;
  int reference_stream = 0;
  int block_size = 1600;  // samples per emitted block

  void validate() const;
};

struct LagEstimate {
  // Positive: the non-reference stream leads (its buffer holds surplus
  // samples; content appears later in buffer coordinates), i.e.
  // other[t + lag] ~ ref[t]. Positive lag is corrected by decimation.
  long lag_samples = 0;
  double peak_correlation = 0.0;
  bool significant = false;
};

// Normalized cross-correlation peak over lags in [-max_lag, +max_lag].
// Throws InvalidArgument if either window is shorter than 2*max_lag+1.
// All-zero windows return an insignificant estimate with peak 0.
LagEstimate estimate_lag(std::span<const float> reference_window,
                         std::span<const float> other_window, long max_lag,
                         double significance_threshold = 0.3);

struct CorrectionResult {
  long applied = 0;   // signed samples corrected (matches the lag sign)
  long deferred = 0;  // remainder when |lag| exceeded the buffer length
  bool partial() const { return deferred != 0; }
};

// In-place on the pending output samples. lag > 0 removes |lag| samples
// uniformly spread across the buffer; lag < 0 grows the buffer by |lag| via
// linear-interpolation resampling; lag = 0 leaves it untouched.
CorrectionResult apply_lag_correction(Samples& buffer, long lag);

struct CoarseOffset {
  bool known = false;
  long offset_samples = 0;  // same sign convention as LagEstimate
  double peak_correlation = 0.0;
};

// Windowed search for large ("global") offsets, accurate to within half a
// hop before sample-level refinement. Streams with no significant peak at
// any window position come back with known = false.
std::vector<CoarseOffset> coarse_global_align(
    const std::vector<Samples>& streams, const AlignmentConfig& config);

struct AlignedFrameBlock {
  long start_sample = 0;                // reference output timeline
  std::vector<Samples> channels;        // equal-length blocks, one per stream
};

// Continuous aligner. push() ingests per-stream samples in any order;
// pull() is the single synchronization point: it runs due lag detections,
// applies corrections to the non-reference output buffers, and emits the
// next aligned block. Emitted blocks are immutable values.
class StreamAligner {
 public:
  StreamAligner(int num_streams, AlignmentConfig config);

  void push(int stream, std::span<const float> samples);

  // Next aligned block, or nullopt when some stream is starved (see stall()).
  std::optional<AlignedFrameBlock> pull();

  struct StallInfo {
    bool stalled = false;
    int stream = -1;
  };
  StallInfo stall() const { return stall_; }

  const std::vector<LagEstimate>& last_estimates() const { return last_; }
  long cumulative_correction(int stream) const;
  int num_streams() const { return int(streams_.size()); }

 private:
  struct Stream {
    Samples detect;       // lag-detection buffer (capped at T * rate)
    Samples out;          // pending output FIFO
    long pushed = 0;
    long epoch_start = 0;      // pushed-count when detect was last cleared
    long corrected_total = 0;  // net samples removed (+) / inserted (-)
    bool first_peak_found = false;
  };

  void run_detection_if_due();
  long detection_due_samples() const;

  AlignmentConfig cfg_;
  std::vector<Stream> streams_;
  std::vector<LagEstimate> last_;
  StallInfo stall_;
  long emitted_ = 0;
  long next_attempt_ = 0;  // min detect fill that triggers the next detection
  bool primed_ = false;    // initial output_delay reservoir filled
};

// Offline whole-file driver: coarse global pre-alignment, then the
// continuous aligner over the full streams, drained with trailing silence
// so the output-delay reservoir empties. Every returned stream has the
// same length; a single stream comes back unchanged.
std::vector<Samples> align_offline(const std::vector<Samples>& streams,
                                   const AlignmentConfig& config);

}  // namespace amtk
