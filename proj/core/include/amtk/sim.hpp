// sim.hpp -- synthetic meeting simulator. Scripted speaker turns are
// rendered as band-limited amplitude-modulated noise bursts (one per word,
// each speaker with a distinct spectral band), then captured by device
// models that apply gain, delay, sparse echo taps, clock drift, and
// additive noise. The render also emits the aligned ground-truth transcript
// and speaker segments so every downstream stage can be scored.
#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "amtk/metrics.hpp"
#include "amtk/types.hpp"

namespace amtk {

// One reflected copy of the signal a device hears.
struct EchoTap {
  double delay_s = 0.0;
  double gain = 0.0;
};

// How one capture device distorts what it records. Positive drift_ppm means
// the device clock runs fast: its capture is stretched, and by time t its
// samples lag the session timeline by t * drift_ppm * 1e-6 seconds.
struct DeviceModel {
  double gain = 1.0;
  double delay_s = 0.0;
  double drift_ppm = 0.0;
  double snr_db = std::numeric_limits<double>::infinity();  // inf = no noise
  std::vector<EchoTap> echo_taps;

  // gain > 0, delay_s >= 0, |drift_ppm| <= 1000, tap delays >= 0.
  void validate() const;
};

// Synthesis parameters for one speaker's voice: words are noise bursts
// band-limited to [band_low_hz, band_high_hz] with syllabic amplitude
// modulation at mod_hz. Distinct bands keep speakers separable by the
// spectral embedding extractor.
struct SpeakerVoice {
  std::string id;
  double band_low_hz = 300.0;
  double band_high_hz = 3000.0;
  double mod_hz = 4.0;

  // id non-empty, 0 < low < high, mod_hz > 0.
  void validate() const;
};

struct ScriptWord {
  std::string token;
  double start = 0.0;
  double end = 0.0;
};

struct Turn {
  std::string speaker;
  double start = 0.0;
  double end = 0.0;
  std::vector<ScriptWord> words;
};

// A complete meeting plan on the shared session timeline. Turns of
// different speakers may overlap; turns of the same speaker may not.
struct MeetingScript {
  std::vector<SpeakerVoice> speakers;
  std::vector<Turn> turns;
  double overlap_target = 0.10;

  void validate() const;
  double duration() const;  // latest turn end
  size_t word_count() const;
  // Overlapped speech time (>= 2 speakers active) divided by total speech
  // time (>= 1 active), measured from the turn timeline.
  double overlap_fraction() const;
  ReferenceTranscript reference() const;
  std::vector<SpeakerSegment> reference_segments() const;
};

// Knobs for the random script generator.
struct ScriptConfig {
  int speakers = 3;
  double duration_s = 60.0;
  double overlap_target = 0.10;
  double turn_s = 3.0;  // mean turn length
  double gap_s = 0.4;   // mean pause between non-overlapped turns
  double word_s = 0.35; // mean word length

  void validate() const;
};

// Generates a script whose measured overlap fraction tracks the target:
// each turn boundary either overlaps the previous turn or leaves a gap,
// steered by the running overlap measurement.
MeetingScript make_script(const ScriptConfig& config, uint64_t seed);

struct SimulatedMeeting {
  int sample_rate = 16000;
  Samples source_mix;                 // all speakers summed, pre-device
  std::vector<Samples> device_audio;  // clean + noise, per device
  std::vector<Samples> device_clean;  // before additive noise
  std::vector<Samples> device_noise;  // the additive noise stems
  ReferenceTranscript reference;
  std::vector<SpeakerSegment> reference_segments;
  double overlap_fraction = 0.0;
};

// Renders the script through every device model. Noise power is scaled so
// each device's realized clean-to-noise ratio equals snr_db exactly,
// measured over the whole capture.
SimulatedMeeting simulate_meeting(const MeetingScript& script,
                                  const std::vector<DeviceModel>& devices,
                                  uint64_t seed, int sample_rate = 16000);

// One speaker's source signal on the session timeline (only that speaker's
// turns are rendered).
Samples render_speaker(const SpeakerVoice& voice,
                       const std::vector<Turn>& turns, double duration_s,
                       int sample_rate, uint64_t seed);

// A continuous sample of the voice for building a speaker profile.
Samples enrollment_clip(const SpeakerVoice& voice, double duration_s,
                        int sample_rate, uint64_t seed);

// Linear-interpolation resampler: output index n reads the input at
// position n / factor, so factor > 1 stretches the signal.
Samples resample_linear(const Samples& x, double factor);

}  // namespace amtk
