#include "amtk/mask.hpp"

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <mutex>

namespace amtk {

namespace {

// Numerator guard is far below the floor guard so silence maps to a ratio
// well under one instead of to 0 dB.
constexpr double kPowerEps = 1e-14;
constexpr double kFloorEps = 1e-10;

}  // namespace

void BaselineMaskConfig::validate() const {
  if (tracker_window_s <= 0 || sigmoid_slope_db <= 0 || floor_bias <= 0)
    throw InvalidArgument("mask config: parameters must be positive");
  if (smoothing < 0 || smoothing >= 1)
    throw InvalidArgument("mask config: smoothing must be in [0, 1)");
  if (sample_rate <= 0) throw InvalidArgument("mask config: bad sample rate");
}

BaselineMaskEstimator::BaselineMaskEstimator(BaselineMaskConfig config)
    : cfg_(config) {
  cfg_.validate();
}

void BaselineMaskEstimator::reset() {
  smoothed_.resize(0);
  ring_.clear();
  ring_pos_ = 0;
  ring_fill_ = 0;
  started_ = false;
}

MaskPair BaselineMaskEstimator::estimate(const Spectrogram& batch) {
  if (batch.frames() < 1)
    throw InvalidArgument("mask estimate: batch spans no frames");
  const int bins = batch.bins();
  const int frames = batch.frames();
  const double frames_per_s =
      double(cfg_.sample_rate) / double(batch.config.hop);
  const int window_frames =
      std::max(1, int(std::lround(cfg_.tracker_window_s * frames_per_s)));

  if (!started_) {
    smoothed_ = Eigen::ArrayXd::Zero(bins);
    ring_.assign(size_t(window_frames), Eigen::ArrayXd::Zero(bins));
    ring_pos_ = 0;
    ring_fill_ = 0;
  } else if (int(smoothed_.size()) != bins) {
    throw InvalidArgument("mask estimate: bin count changed mid-stream");
  }

  MaskPair out;
  out.speech.values.resize(bins, frames);
  out.speech.kind = SpectralMask::Kind::Speech;
  out.speech.frame0 = batch.frame0;
  out.noise.kind = SpectralMask::Kind::Noise;
  out.noise.frame0 = batch.frame0;

  Eigen::ArrayXd power(bins), floor(bins);
  for (int t = 0; t < frames; ++t) {
    for (int f = 0; f < bins; ++f)
      power[f] = std::norm(std::complex<double>(batch.coef(f, t)));

    if (!started_) {
      smoothed_ = power;
      started_ = true;
    } else {
      smoothed_ = cfg_.smoothing * smoothed_ + (1.0 - cfg_.smoothing) * power;
    }
    ring_[size_t(ring_pos_)] = smoothed_;
    ring_pos_ = (ring_pos_ + 1) % window_frames;
    ring_fill_ = std::min(ring_fill_ + 1, window_frames);

    floor = ring_[0];
    for (int i = 1; i < ring_fill_; ++i) floor = floor.min(ring_[size_t(i)]);

    for (int f = 0; f < bins; ++f) {
      double ratio_db = 10.0 * std::log10((power[f] + kPowerEps) /
                                          (cfg_.floor_bias * floor[f] +
                                           kFloorEps));
      double m = 1.0 / (1.0 + std::exp(-ratio_db / cfg_.sigmoid_slope_db));
      out.speech.values(f, t) = float(m);
    }
  }
  out.noise.values = 1.0f - out.speech.values;
  return out;
}

SubprocessMaskEstimator::SubprocessMaskEstimator(
    std::vector<std::string> command) {
  if (command.empty())
    throw InvalidArgument("subprocess mask estimator: empty command");

  // A dying child must surface as a write error, not as SIGPIPE.
  static std::once_flag sigpipe_once;
  std::call_once(sigpipe_once, [] { signal(SIGPIPE, SIG_IGN); });

  int to_child[2], from_child[2];
  if (pipe(to_child) != 0 || pipe(from_child) != 0)
    throw StageFailure("mask", "cannot create pipes");

  pid_t pid = fork();
  if (pid < 0) throw StageFailure("mask", "fork failed");
  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    std::vector<char*> argv;
    for (auto& a : command) argv.push_back(a.data());
    argv.push_back(nullptr);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  pid_ = pid;
  to_child_ = to_child[1];
  from_child_ = from_child[0];
  close(to_child[0]);
  close(from_child[1]);
}

void SubprocessMaskEstimator::shutdown() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_t(pid_), &status, 0);
    pid_ = -1;
  }
}

SubprocessMaskEstimator::~SubprocessMaskEstimator() { shutdown(); }

namespace {

void write_all(int fd, const void* buf, size_t n) {
  const char* p = static_cast<const char*>(buf);
  while (n > 0) {
    ssize_t w = write(fd, p, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw StageFailure("mask", "write to mask process failed");
    }
    p += w;
    n -= size_t(w);
  }
}

void read_all(int fd, void* buf, size_t n) {
  char* p = static_cast<char*>(buf);
  while (n > 0) {
    ssize_t r = read(fd, p, n);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw StageFailure("mask", "read from mask process failed");
    }
    if (r == 0) throw StageFailure("mask", "mask process closed its output");
    p += r;
    n -= size_t(r);
  }
}

std::string read_line(int fd) {
  std::string line;
  char c;
  while (true) {
    read_all(fd, &c, 1);
    if (c == '\n') return line;
    line.push_back(c);
    if (line.size() > 256)
      throw StageFailure("mask", "oversized header from mask process");
  }
}

}  // namespace

MaskPair SubprocessMaskEstimator::estimate(const Spectrogram& batch) {
  if (batch.frames() < 1)
    throw InvalidArgument("mask estimate: batch spans no frames");
  const int bins = batch.bins();
  const int frames = batch.frames();

  std::string header =
      "batch " + std::to_string(bins) + " " + std::to_string(frames) + "\n";
  write_all(to_child_, header.data(), header.size());

  std::vector<float> payload(size_t(bins) * size_t(frames));
  size_t i = 0;
  for (int f = 0; f < bins; ++f)
    for (int t = 0; t < frames; ++t)
      payload[i++] = float(std::norm(std::complex<double>(batch.coef(f, t))));
  write_all(to_child_, payload.data(), payload.size() * sizeof(float));

  std::string reply = read_line(from_child_);
  int rb = 0, rf = 0;
  if (sscanf(reply.c_str(), "masks %d %d", &rb, &rf) != 2 || rb != bins ||
      rf != frames)
    throw StageFailure("mask", "bad reply header: '" + reply + "'");

  MaskPair out;
  out.speech.values.resize(bins, frames);
  out.noise.values.resize(bins, frames);
  out.speech.kind = SpectralMask::Kind::Speech;
  out.noise.kind = SpectralMask::Kind::Noise;
  out.speech.frame0 = out.noise.frame0 = batch.frame0;

  std::vector<float> buf(size_t(bins) * size_t(frames));
  for (SpectralMask* m : {&out.speech, &out.noise}) {
    read_all(from_child_, buf.data(), buf.size() * sizeof(float));
    size_t j = 0;
    for (int f = 0; f < bins; ++f)
      for (int t = 0; t < frames; ++t) {
        float v = buf[j++];
        if (!(v >= 0.0f && v <= 1.0f))
          throw StageFailure("mask", "mask value outside [0, 1]");
        m->values(f, t) = v;
      }
  }
  return out;
}

}  // namespace amtk
