#include "amtk/sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <random>

#include "fft_util.hpp"

namespace amtk {

namespace {

constexpr double kBurstRms = 0.1;

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  // splitmix64 step over the combined value; decorrelates nearby seeds.
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + ": not finite");
}

// A band-limited Gaussian noise burst with raised-cosine onset/offset and
// syllabic modulation, normalized to a fixed RMS.
std::vector<float> synth_burst(const SpeakerVoice& voice, size_t len,
                               int sample_rate, std::mt19937_64& rng) {
  if (len == 0) return {};
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::complex<double>> buf(len);
  for (auto& s : buf) s = gauss(rng);

  auto spec = detail::fft_forward(buf);
  const double bin_hz = double(sample_rate) / double(len);
  for (size_t k = 0; k < len; ++k) {
    const double f = bin_hz * double(std::min(k, len - k));  // mirrored half
    if (f < voice.band_low_hz || f > voice.band_high_hz) spec[k] = 0.0;
  }
  auto shaped = detail::fft_inverse(spec);

  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double phi = phase(rng);
  const size_t ramp = std::min<size_t>(len / 2, size_t(0.02 * sample_rate));
  std::vector<float> out(len);
  double power = 0.0;
  for (size_t n = 0; n < len; ++n) {
    const double t = double(n) / sample_rate;
    double env = 0.7 + 0.3 * std::cos(2.0 * std::numbers::pi * voice.mod_hz * t + phi);
    if (ramp > 0 && n < ramp)
      env *= 0.5 - 0.5 * std::cos(std::numbers::pi * double(n) / double(ramp));
    if (ramp > 0 && len - 1 - n < ramp)
      env *= 0.5 - 0.5 * std::cos(std::numbers::pi * double(len - 1 - n) / double(ramp));
    out[n] = float(env * shaped[n].real());
    power += double(out[n]) * out[n];
  }
  power /= double(len);
  if (power > 0.0) {
    const float scale = float(kBurstRms / std::sqrt(power));
    for (auto& s : out) s *= scale;
  }
  return out;
}

double mean_square(const Samples& x) {
  double p = 0.0;
  for (float s : x) p += double(s) * s;
  return x.empty() ? 0.0 : p / double(x.size());
}

// Accumulates gain * x delayed by whole samples into out.
void add_delayed(Samples& out, const Samples& x, size_t delay, double gain) {
  for (size_t n = 0; n < x.size() && n + delay < out.size(); ++n)
    out[n + delay] += float(gain * x[n]);
}

struct SpanEvent {
  double t;
  int delta;
};

double measured_overlap(const std::vector<Turn>& turns) {
  std::vector<SpanEvent> events;
  for (const auto& turn : turns) {
    events.push_back({turn.start, +1});
    events.push_back({turn.end, -1});
  }
  std::sort(events.begin(), events.end(), [](const SpanEvent& a, const SpanEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.delta < b.delta;  // close before open at identical times
  });
  double speech = 0.0, overlap = 0.0, prev = 0.0;
  int active = 0;
  for (const auto& e : events) {
    if (active >= 1) speech += e.t - prev;
    if (active >= 2) overlap += e.t - prev;
    prev = e.t;
    active += e.delta;
  }
  return speech > 0.0 ? overlap / speech : 0.0;
}

const char* kVocab[] = {
    "the",    "meeting", "starts",  "with",   "notes",  "about",  "budget",
    "plans",  "every",   "person",  "agrees", "that",   "timing", "matters",
    "next",   "quarter", "brings",  "review", "cycles", "teams",  "share",
    "status", "reports", "before",  "lunch",  "action", "items",  "follow",
    "after",  "break",   "someone", "asks",   "whether", "costs", "stay",
    "within", "limits",  "chair",   "closes", "session"};
constexpr size_t kVocabSize = sizeof(kVocab) / sizeof(kVocab[0]);

}  // namespace

void DeviceModel::validate() const {
  require_finite(gain, "device gain");
  require_finite(delay_s, "device delay");
  require_finite(drift_ppm, "device drift");
  if (gain <= 0.0) throw InvalidArgument("device: gain must be positive");
  if (delay_s < 0.0) throw InvalidArgument("device: delay must be non-negative");
  if (std::abs(drift_ppm) > 1000.0)
    throw InvalidArgument("device: |drift_ppm| must be at most 1000");
  if (std::isnan(snr_db)) throw InvalidArgument("device snr: not a number");
  for (const auto& tap : echo_taps) {
    require_finite(tap.delay_s, "echo delay");
    require_finite(tap.gain, "echo gain");
    if (tap.delay_s < 0.0)
      throw InvalidArgument("device: echo delays must be non-negative");
  }
}

void SpeakerVoice::validate() const {
  if (id.empty()) throw InvalidArgument("voice: empty speaker id");
  require_finite(band_low_hz, "voice band low");
  require_finite(band_high_hz, "voice band high");
  require_finite(mod_hz, "voice modulation rate");
  if (band_low_hz <= 0.0 || band_high_hz <= band_low_hz)
    throw InvalidArgument("voice: need 0 < band_low_hz < band_high_hz");
  if (mod_hz <= 0.0) throw InvalidArgument("voice: mod_hz must be positive");
}

void MeetingScript::validate() const {
  if (speakers.empty()) throw InvalidArgument("script: no speakers");
  std::map<std::string, std::vector<TimeSpan>> per_speaker;
  for (const auto& voice : speakers) {
    voice.validate();
    if (per_speaker.count(voice.id))
      throw InvalidArgument("script: duplicate speaker id " + voice.id);
    per_speaker[voice.id] = {};
  }
  if (turns.empty()) throw InvalidArgument("script: no turns");
  for (const auto& turn : turns) {
    if (!per_speaker.count(turn.speaker))
      throw InvalidArgument("script: turn names unknown speaker " + turn.speaker);
    require_finite(turn.start, "turn start");
    require_finite(turn.end, "turn end");
    if (turn.end <= turn.start) throw InvalidArgument("script: empty turn span");
    if (turn.words.empty()) throw InvalidArgument("script: turn with no words");
    double prev_end = turn.start;
    for (const auto& w : turn.words) {
      if (w.token.empty()) throw InvalidArgument("script: empty word token");
      require_finite(w.start, "word start");
      require_finite(w.end, "word end");
      if (w.end <= w.start) throw InvalidArgument("script: empty word span");
      if (w.start < prev_end - 1e-9 || w.end > turn.end + 1e-9)
        throw InvalidArgument("script: words must sit in order inside the turn");
      prev_end = w.end;
    }
    per_speaker[turn.speaker].push_back({turn.start, turn.end});
  }
  for (auto& [id, spans] : per_speaker) {
    std::sort(spans.begin(), spans.end(),
              [](const TimeSpan& a, const TimeSpan& b) { return a.start < b.start; });
    for (size_t i = 1; i < spans.size(); ++i)
      if (spans[i].start < spans[i - 1].end - 1e-9)
        throw InvalidArgument("script: overlapping turns for speaker " + id);
  }
  if (!(overlap_target >= 0.0 && overlap_target < 1.0))
    throw InvalidArgument("script: overlap_target must be in [0, 1)");
}

double MeetingScript::duration() const {
  double d = 0.0;
  for (const auto& t : turns) d = std::max(d, t.end);
  return d;
}

size_t MeetingScript::word_count() const {
  size_t n = 0;
  for (const auto& t : turns) n += t.words.size();
  return n;
}

double MeetingScript::overlap_fraction() const { return measured_overlap(turns); }

ReferenceTranscript MeetingScript::reference() const {
  ReferenceTranscript ref;
  for (const auto& turn : turns)
    for (const auto& w : turn.words)
      ref.words.push_back({w.token, w.start, w.end, turn.speaker});
  std::stable_sort(ref.words.begin(), ref.words.end(),
                   [](const ReferenceWord& a, const ReferenceWord& b) {
                     return a.start < b.start;
                   });
  return ref;
}

std::vector<SpeakerSegment> MeetingScript::reference_segments() const {
  std::vector<SpeakerSegment> segs;
  for (const auto& turn : turns) segs.push_back({turn.speaker, turn.start, turn.end});
  std::sort(segs.begin(), segs.end(), [](const SpeakerSegment& a, const SpeakerSegment& b) {
    return a.start < b.start;
  });
  return segs;
}

void ScriptConfig::validate() const {
  if (speakers < 1) throw InvalidArgument("script config: need at least one speaker");
  if (!(duration_s > 0.0) || !std::isfinite(duration_s))
    throw InvalidArgument("script config: duration must be positive");
  if (!(overlap_target >= 0.0 && overlap_target < 0.5))
    throw InvalidArgument("script config: overlap_target must be in [0, 0.5)");
  if (!(turn_s > 0.0) || !(gap_s >= 0.0) || !(word_s > 0.0))
    throw InvalidArgument("script config: turn, gap, and word lengths must be positive");
}

MeetingScript make_script(const ScriptConfig& config, uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(mix_seed(seed, 0x5c819));

  MeetingScript script;
  script.overlap_target = config.overlap_target;
  for (int s = 0; s < config.speakers; ++s) {
    SpeakerVoice voice;
    voice.id = "spk" + std::to_string(s);
    // Distinct, non-nested bands: successive 600 Hz-wide bands stepped by
    // 450 Hz so neighbors overlap a little (realistic) but centers differ.
    voice.band_low_hz = 250.0 + 450.0 * s;
    voice.band_high_hz = voice.band_low_hz + 600.0;
    voice.mod_hz = 3.0 + 0.7 * s;
    script.speakers.push_back(std::move(voice));
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  double speech = 0.0, overlap = 0.0;  // running timeline measurement
  double prev_start = 0.0, prev_end = 0.0;
  int prev_speaker = -1;
  double cursor = 0.0;

  while (cursor < config.duration_s) {
    int speaker = int(rng() % uint64_t(config.speakers));
    if (config.speakers > 1 && speaker == prev_speaker)
      speaker = (speaker + 1) % config.speakers;
    const double turn_len = config.turn_s * (0.6 + 0.8 * u(rng));

    double start;
    const double frac = speech > 0.0 ? overlap / speech : 0.0;
    const double prev_len = prev_end - prev_start;
    if (prev_speaker >= 0 && config.speakers > 1 && frac < config.overlap_target) {
      // Overlap the previous turn's tail by the amount that lands the
      // running fraction on target: (overlap + o) / (speech + len - o) = T.
      double o = (config.overlap_target * (speech + turn_len) - overlap) /
                 (1.0 + config.overlap_target);
      o = std::clamp(o, 0.0, 0.45 * std::min(turn_len, prev_len));
      start = prev_end - o;
      overlap += o;
      speech += turn_len - o;
    } else {
      start = prev_end + config.gap_s * (0.5 + u(rng));
      speech += turn_len;
    }
    const double end = start + turn_len;

    Turn turn;
    turn.speaker = script.speakers[size_t(speaker)].id;
    turn.start = start;
    turn.end = end;
    double t = start;
    while (t < end - 0.05) {
      const double wlen = std::min(config.word_s * (0.7 + 0.6 * u(rng)), end - t);
      ScriptWord w;
      w.token = kVocab[rng() % kVocabSize];
      w.start = t;
      w.end = t + wlen;
      turn.words.push_back(std::move(w));
      t += wlen + 0.04 + 0.08 * u(rng);
    }
    if (turn.words.empty()) continue;
    turn.end = std::max(end, turn.words.back().end);
    script.turns.push_back(std::move(turn));

    prev_start = start;
    prev_end = turn.end;
    prev_speaker = speaker;
    cursor = prev_end;
  }

  // Keep turns sorted by start time (an overlapped turn can start slightly
  // before a short predecessor ends, but never before it starts).
  std::stable_sort(script.turns.begin(), script.turns.end(),
                   [](const Turn& a, const Turn& b) { return a.start < b.start; });
  script.validate();
  return script;
}

Samples render_speaker(const SpeakerVoice& voice, const std::vector<Turn>& turns,
                       double duration_s, int sample_rate, uint64_t seed) {
  voice.validate();
  if (sample_rate <= 0) throw InvalidArgument("render: sample_rate must be positive");
  if (voice.band_high_hz >= 0.5 * sample_rate)
    throw InvalidArgument("render: voice band exceeds the Nyquist limit");
  Samples out(static_cast<size_t>(std::llround(duration_s * sample_rate)), 0.0f);
  std::mt19937_64 rng(mix_seed(seed, std::hash<std::string>{}(voice.id)));
  for (const auto& turn : turns) {
    if (turn.speaker != voice.id) continue;
    for (const auto& w : turn.words) {
      const auto n0 = static_cast<size_t>(std::llround(w.start * sample_rate));
      const auto n1 = static_cast<size_t>(std::llround(w.end * sample_rate));
      if (n1 <= n0 || n0 >= out.size()) continue;
      auto burst = synth_burst(voice, n1 - n0, sample_rate, rng);
      for (size_t i = 0; i < burst.size() && n0 + i < out.size(); ++i)
        out[n0 + i] += burst[i];
    }
  }
  return out;
}

Samples enrollment_clip(const SpeakerVoice& voice, double duration_s,
                        int sample_rate, uint64_t seed) {
  voice.validate();
  if (!(duration_s > 0.0)) throw InvalidArgument("enrollment: duration must be positive");
  std::vector<Turn> one;
  Turn t;
  t.speaker = voice.id;
  t.start = 0.0;
  t.end = duration_s;
  t.words.push_back({"enrollment", 0.0, duration_s});
  one.push_back(std::move(t));
  return render_speaker(voice, one, duration_s, sample_rate, seed);
}

Samples resample_linear(const Samples& x, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor))
    throw InvalidArgument("resample: factor must be positive and finite");
  if (x.empty()) return {};
  const size_t out_len = static_cast<size_t>(std::floor(double(x.size() - 1) * factor)) + 1;
  Samples out(out_len);
  for (size_t n = 0; n < out_len; ++n) {
    const double pos = double(n) / factor;
    const auto i = static_cast<size_t>(pos);
    const double frac = pos - double(i);
    const float a = x[std::min(i, x.size() - 1)];
    const float b = x[std::min(i + 1, x.size() - 1)];
    out[n] = float((1.0 - frac) * a + frac * b);
  }
  return out;
}

SimulatedMeeting simulate_meeting(const MeetingScript& script,
                                  const std::vector<DeviceModel>& devices,
                                  uint64_t seed, int sample_rate) {
  script.validate();
  if (devices.empty()) throw InvalidArgument("simulate: no devices");
  for (const auto& d : devices) d.validate();
  if (sample_rate <= 0) throw InvalidArgument("simulate: sample_rate must be positive");

  const double duration = script.duration() + 0.5;
  const auto len = static_cast<size_t>(std::llround(duration * sample_rate));

  Samples mix(len, 0.0f);
  for (size_t s = 0; s < script.speakers.size(); ++s) {
    auto src = render_speaker(script.speakers[s], script.turns, duration,
                              sample_rate, mix_seed(seed, s));
    for (size_t n = 0; n < len; ++n) mix[n] += src[n];
  }

  SimulatedMeeting result;
  result.sample_rate = sample_rate;
  result.source_mix = mix;
  result.reference = script.reference();
  result.reference_segments = script.reference_segments();
  result.overlap_fraction = script.overlap_fraction();

  for (size_t d = 0; d < devices.size(); ++d) {
    const auto& dev = devices[d];
    Samples clean(len, 0.0f);
    const auto base = static_cast<size_t>(std::llround(dev.delay_s * sample_rate));
    add_delayed(clean, mix, base, dev.gain);
    for (const auto& tap : dev.echo_taps) {
      const auto extra = static_cast<size_t>(std::llround(tap.delay_s * sample_rate));
      add_delayed(clean, mix, base + extra, dev.gain * tap.gain);
    }
    if (dev.drift_ppm != 0.0)
      clean = resample_linear(clean, 1.0 + dev.drift_ppm * 1e-6);

    Samples noise(clean.size(), 0.0f);
    if (std::isfinite(dev.snr_db)) {
      const double target_power = mean_square(clean) * std::pow(10.0, -dev.snr_db / 10.0);
      if (target_power <= 0.0)
        throw InvalidArgument("simulate: silent channel, noise level undefined");
      std::mt19937_64 rng(mix_seed(seed, 0xd3f1c30000ULL + d));
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (auto& s : noise) s = float(gauss(rng));
      const double raw_power = mean_square(noise);
      const float scale = float(std::sqrt(target_power / raw_power));
      for (auto& s : noise) s *= scale;
    }
    Samples captured(clean.size());
    for (size_t n = 0; n < clean.size(); ++n) captured[n] = clean[n] + noise[n];
    result.device_clean.push_back(std::move(clean));
    result.device_noise.push_back(std::move(noise));
    result.device_audio.push_back(std::move(captured));
  }
  return result;
}

}  // namespace amtk
