#include "amtk/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fft_util.hpp"

namespace amtk {

void AlignmentConfig::validate() const {
  if (detection_interval_s <= 0 || startup_interval_s <= 0 ||
      output_delay_s <= 0 || max_local_lag_s <= 0 || coarse_window_s <= 0 ||
      coarse_hop_s <= 0)
    throw InvalidArgument("alignment config: durations must be positive");
  if (startup_interval_s > detection_interval_s)
    throw InvalidArgument(
        "alignment config: startup_interval_s must not exceed "
        "detection_interval_s");
  if (sample_rate <= 0 || block_size <= 0)
    throw InvalidArgument("alignment config: bad sample_rate or block_size");
}

namespace {

// c(l) = sum_t a[t] * b[t + l] for l in [-max_lag, max_lag], via one
// zero-padded FFT product. Wrapped indices read zero padding as long as the
// transform size covers max(len) + max_lag.
std::vector<double> cross_correlation(std::span<const float> a,
                                      std::span<const float> b, long max_lag) {
  const size_t s =
      detail::next_pow2(std::max(a.size(), b.size()) + size_t(max_lag) + 1);
  std::vector<std::complex<double>> fa(s), fb(s);
  for (size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
  auto A = detail::fft_forward(fa);
  auto B = detail::fft_forward(fb);
  for (size_t i = 0; i < s; ++i) A[i] = std::conj(A[i]) * B[i];
  auto c = detail::fft_inverse(A);

  std::vector<double> out(2 * max_lag + 1);
  for (long l = -max_lag; l <= max_lag; ++l)
    out[l + max_lag] = c[(l + long(s)) % long(s)].real();
  return out;
}

double energy(std::span<const float> x) {
  double e = 0.0;
  for (float v : x) e += double(v) * v;
  return e;
}

}  // namespace

LagEstimate estimate_lag(std::span<const float> reference_window,
                         std::span<const float> other_window, long max_lag,
                         double significance_threshold) {
  if (reference_window.empty() || other_window.empty())
    throw InvalidArgument("estimate_lag: empty window");
  if (max_lag < 0) throw InvalidArgument("estimate_lag: negative max_lag");
  const long min_len =
      long(std::min(reference_window.size(), other_window.size()));
  if (min_len < 2 * max_lag + 1)
    throw InvalidArgument("estimate_lag: window shorter than 2*max_lag+1");

  const double norm =
      std::sqrt(energy(reference_window) * energy(other_window));
  if (norm <= 0.0) return {0, 0.0, false};

  const std::vector<double> c =
      cross_correlation(reference_window, other_window, max_lag);

  // Prefer the smallest-magnitude lag on ties.
  long best = 0;
  double best_val = c[max_lag] / norm;
  for (long m = 1; m <= max_lag; ++m) {
    for (long l : {m, -m}) {
      double v = c[l + max_lag] / norm;
      if (v > best_val) {
        best_val = v;
        best = l;
      }
    }
  }
  return {best, best_val, best_val >= significance_threshold};
}

CorrectionResult apply_lag_correction(Samples& buffer, long lag) {
  CorrectionResult res;
  if (lag == 0) return res;
  const long n = long(buffer.size());

  if (lag > 0) {
    const long remove = std::min(lag, n);
    res.applied = remove;
    res.deferred = lag - remove;
    if (remove == 0) return res;
    // Drop samples at uniformly spread positions.
    Samples out;
    out.reserve(n - remove);
    long next_drop_idx = 0;
    long drop_at = long((0.5) * double(n) / double(remove));
    for (long i = 0; i < n; ++i) {
      if (next_drop_idx < remove && i == drop_at) {
        ++next_drop_idx;
        drop_at = long((double(next_drop_idx) + 0.5) * double(n) /
                       double(remove));
        continue;
      }
      out.push_back(buffer[i]);
    }
    buffer = std::move(out);
  } else {
    const long insert = std::min(-lag, n);
    res.applied = -insert;
    res.deferred = lag + insert;
    if (insert == 0) return res;
    const long m = n + insert;
    Samples out(m);
    if (n == 1) {
      std::fill(out.begin(), out.end(), buffer[0]);
    } else {
      // Linear-interpolation resample of the whole buffer to length n+insert.
      const double scale = double(n - 1) / double(m - 1);
      for (long j = 0; j < m; ++j) {
        double x = j * scale;
        long i0 = long(x);
        if (i0 >= n - 1) i0 = n - 2;
        double frac = x - i0;
        out[j] = float((1.0 - frac) * buffer[i0] + frac * buffer[i0 + 1]);
      }
    }
    buffer = std::move(out);
  }
  return res;
}

std::vector<CoarseOffset> coarse_global_align(
    const std::vector<Samples>& streams, const AlignmentConfig& config) {
  config.validate();
  if (streams.empty()) return {};
  const int ref = config.reference_stream;
  if (ref < 0 || ref >= int(streams.size()))
    throw InvalidArgument("coarse_global_align: bad reference index");
  const long w = long(config.coarse_window_s * config.sample_rate);
  for (const auto& s : streams)
    if (long(s.size()) < w)
      throw InvalidArgument(
          "coarse_global_align: stream shorter than coarse window");

  // The scan runs on box-decimated signals; half-hop accuracy is all this
  // stage promises, sample-level refinement belongs to estimate_lag.
  const long decim = 64;
  auto decimate = [&](const Samples& x) {
    Samples d(x.size() / decim);
    for (size_t i = 0; i < d.size(); ++i) {
      double acc = 0.0;
      for (long j = 0; j < decim; ++j) acc += x[i * decim + j];
      d[i] = float(acc / double(decim));
    }
    return d;
  };

  const Samples ref_d = decimate(streams[ref]);
  const long nr = long(ref_d.size());
  const long wd = std::max<long>(1, w / decim);  // minimum overlap

  // Cumulative energies make per-lag overlap normalization O(1).
  auto cum_energy = [](const Samples& x) {
    std::vector<double> c(x.size() + 1, 0.0);
    for (size_t i = 0; i < x.size(); ++i)
      c[i + 1] = c[i] + double(x[i]) * x[i];
    return c;
  };
  const std::vector<double> ref_cum = cum_energy(ref_d);

  std::vector<CoarseOffset> out(streams.size());
  out[ref] = {true, 0, 1.0};

  for (size_t s = 0; s < streams.size(); ++s) {
    if (int(s) == ref) continue;
    const Samples other_d = decimate(streams[s]);
    const long no = long(other_d.size());
    const long max_lag = std::max(nr, no) - 1;
    if (energy(other_d) <= 0.0 || ref_cum.back() <= 0.0) continue;

    const std::vector<double> c = cross_correlation(ref_d, other_d, max_lag);
    const std::vector<double> other_cum = cum_energy(other_d);
    long best_l = 0;
    double best_v = -1.0;
    for (long l = -max_lag; l <= max_lag; ++l) {
      // Valid summation region: t in [lo, hi) with 0 <= t < nr and
      // 0 <= t + l < no. Normalize by the overlap energies so partially
      // overlapping placements compete fairly.
      const long lo = std::max<long>(0, -l);
      const long hi = std::min(nr, no - l);
      if (hi - lo < wd) continue;
      double er = ref_cum[hi] - ref_cum[lo];
      double eo = other_cum[hi + l] - other_cum[lo + l];
      double norm = std::sqrt(er * eo);
      if (norm <= 0.0) continue;
      double v = c[l + max_lag] / norm;
      if (v > best_v) {
        best_v = v;
        best_l = l;
      }
    }
    if (best_v >= config.significance_threshold) {
      // other_d[t + l] ~ ref_d[t]  =>  offset = l in decimated units.
      out[s] = {true, best_l * decim, best_v};
    }
  }
  return out;
}

StreamAligner::StreamAligner(int num_streams, AlignmentConfig config)
    : cfg_(std::move(config)) {
  cfg_.validate();
  if (num_streams < 1)
    throw InvalidArgument("StreamAligner: need at least one stream");
  if (cfg_.reference_stream < 0 || cfg_.reference_stream >= num_streams)
    throw InvalidArgument("StreamAligner: bad reference index");
  streams_.resize(num_streams);
  last_.resize(num_streams);
  next_attempt_ = long(cfg_.startup_interval_s * cfg_.sample_rate);
}

void StreamAligner::push(int stream, std::span<const float> samples) {
  if (stream < 0 || stream >= int(streams_.size()))
    throw InvalidArgument("StreamAligner::push: bad stream index");
  Stream& s = streams_[stream];
  const long cap = long(cfg_.detection_interval_s * cfg_.sample_rate);
  for (float v : samples) {
    if (long(s.detect.size()) < cap) s.detect.push_back(v);
    s.out.push_back(v);
  }
  s.pushed += long(samples.size());
}

long StreamAligner::detection_due_samples() const {
  bool all_found = true;
  for (size_t i = 0; i < streams_.size(); ++i) {
    if (int(i) == cfg_.reference_stream) continue;
    if (!streams_[i].first_peak_found) all_found = false;
  }
  const double interval =
      all_found ? cfg_.detection_interval_s : cfg_.startup_interval_s;
  return long(interval * cfg_.sample_rate);
}

void StreamAligner::run_detection_if_due() {
  if (streams_.size() < 2) return;
  long min_detect = std::numeric_limits<long>::max();
  for (const auto& s : streams_)
    min_detect = std::min(min_detect, long(s.detect.size()));
  if (min_detect < next_attempt_) return;

  const Stream& ref = streams_[cfg_.reference_stream];
  const long cap = long(cfg_.detection_interval_s * cfg_.sample_rate);
  const long startup = long(cfg_.startup_interval_s * cfg_.sample_rate);
  bool all_significant = true;

  for (size_t i = 0; i < streams_.size(); ++i) {
    if (int(i) == cfg_.reference_stream) continue;
    Stream& s = streams_[i];
    const long n = std::min(long(ref.detect.size()), long(s.detect.size()));
    const long max_lag =
        std::min(long(cfg_.max_local_lag_s * cfg_.sample_rate), (n - 1) / 2);
    if (max_lag <= 0) {
      all_significant = false;
      continue;
    }
    LagEstimate est = estimate_lag(
        std::span<const float>(ref.detect).first(n),
        std::span<const float>(s.detect).first(n), max_lag,
        cfg_.significance_threshold);
    // Detection buffers hold raw pushed samples, so the measured lag plus
    // any epoch skew is the cumulative raw offset; only the residual beyond
    // what was already corrected gets applied.
    est.lag_samples += s.epoch_start - ref.epoch_start;
    last_[i] = est;
    if (!est.significant) {
      all_significant = false;
      continue;
    }
    s.first_peak_found = true;
    const long residual = est.lag_samples - s.corrected_total;
    CorrectionResult corr = apply_lag_correction(s.out, residual);
    s.corrected_total += corr.applied;
  }

  if (all_significant || min_detect >= cap) {
    for (auto& s : streams_) {
      s.detect.clear();
      s.epoch_start = s.pushed;
    }
    next_attempt_ = detection_due_samples();
  } else {
    // Keep growing the buffers and retry one startup interval later.
    next_attempt_ = min_detect + startup;
  }
}

std::optional<AlignedFrameBlock> StreamAligner::pull() {
  run_detection_if_due();

  const long delay = long(cfg_.output_delay_s * cfg_.sample_rate);
  if (!primed_) {
    for (size_t i = 0; i < streams_.size(); ++i) {
      if (long(streams_[i].out.size()) < delay + cfg_.block_size) {
        stall_ = {true, int(i)};
        return std::nullopt;
      }
    }
    primed_ = true;
  }

  for (size_t i = 0; i < streams_.size(); ++i) {
    if (long(streams_[i].out.size()) < cfg_.block_size) {
      stall_ = {true, int(i)};
      return std::nullopt;
    }
  }
  stall_ = {false, -1};

  AlignedFrameBlock block;
  block.start_sample = emitted_ * cfg_.block_size;
  block.channels.resize(streams_.size());
  for (size_t i = 0; i < streams_.size(); ++i) {
    Samples& out = streams_[i].out;
    block.channels[i].assign(out.begin(), out.begin() + cfg_.block_size);
    out.erase(out.begin(), out.begin() + cfg_.block_size);
  }
  ++emitted_;
  return block;
}

long StreamAligner::cumulative_correction(int stream) const {
  if (stream < 0 || stream >= int(streams_.size()))
    throw InvalidArgument("StreamAligner: bad stream index");
  return streams_[stream].corrected_total;
}

std::vector<Samples> align_offline(const std::vector<Samples>& streams,
                                   const AlignmentConfig& config) {
  config.validate();
  if (streams.empty()) throw InvalidArgument("align_offline: no streams");
  const int n = int(streams.size());
  std::vector<Samples> shifted(streams.begin(), streams.end());
  if (n == 1) return shifted;

  auto coarse = coarse_global_align(shifted, config);
  for (int k = 0; k < n; ++k) {
    if (k == config.reference_stream || !coarse[size_t(k)].known) continue;
    const long off = coarse[size_t(k)].offset_samples;
    auto& s = shifted[size_t(k)];
    if (off > 0)
      s.erase(s.begin(), s.begin() + std::min<size_t>(size_t(off), s.size()));
    else if (off < 0)
      s.insert(s.begin(), size_t(-off), 0.0f);
  }

  StreamAligner aligner(n, config);
  const size_t flush =
      size_t((config.output_delay_s + 1.0) * config.sample_rate);
  for (int k = 0; k < n; ++k) {
    aligner.push(k, shifted[size_t(k)]);
    aligner.push(k, Samples(flush, 0.0f));
  }
  std::vector<Samples> out(static_cast<size_t>(n));
  while (auto block = aligner.pull()) {
    for (int k = 0; k < n; ++k) {
      auto& ch = block->channels[size_t(k)];
      out[size_t(k)].insert(out[size_t(k)].end(), ch.begin(), ch.end());
    }
  }
  return out;
}

}  // namespace amtk
