// wav.hpp -- RIFF/WAVE reading and writing (16-bit PCM and 32-bit float).
#pragma once

#include <filesystem>
#include <vector>

#include "amtk/types.hpp"

namespace amtk {

enum class WavFormat { Pcm16, Float32 };

struct WavData {
  int sample_rate = 16000;
  std::vector<Samples> channels;  // deinterleaved, equal lengths

  size_t frames() const { return channels.empty() ? 0 : channels[0].size(); }
};

WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const WavData& data,
               WavFormat format = WavFormat::Float32);

// Convenience for the common mono case.
Samples read_wav_mono(const std::filesystem::path& path, int expect_rate = 0);
void write_wav_mono(const std::filesystem::path& path, const Samples& samples,
                    int sample_rate, WavFormat format = WavFormat::Float32);

}  // namespace amtk
