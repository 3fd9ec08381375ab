#include "amtk/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace amtk {

namespace {

struct ChunkHeader {
  char id[4];
  uint32_t size;
};

uint16_t rd16(const uint8_t* p) { return uint16_t(p[0] | (p[1] << 8)); }
uint32_t rd32(const uint8_t* p) {
  return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
         (uint32_t(p[3]) << 24);
}

void wr16(std::ostream& os, uint16_t v) {
  char b[2] = {char(v & 0xff), char(v >> 8)};
  os.write(b, 2);
}
void wr32(std::ostream& os, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  os.write(b, 4);
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open WAV file: " + path.string());

  char riff[12];
  is.read(riff, 12);
  if (!is || std::memcmp(riff, "RIFF", 4) != 0 ||
      std::memcmp(riff + 8, "WAVE", 4) != 0)
    throw InvalidArgument("not a RIFF/WAVE file: " + path.string());

  uint16_t format_tag = 0, num_channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  std::vector<uint8_t> data;
  bool have_fmt = false, have_data = false;

  while (is) {
    char hdr[8];
    is.read(hdr, 8);
    if (!is) break;
    uint32_t size = rd32(reinterpret_cast<const uint8_t*>(hdr + 4));
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      std::vector<uint8_t> fmt(size);
      is.read(reinterpret_cast<char*>(fmt.data()), size);
      if (size < 16) throw InvalidArgument("truncated fmt chunk");
      format_tag = rd16(&fmt[0]);
      num_channels = rd16(&fmt[2]);
      sample_rate = rd32(&fmt[4]);
      bits = rd16(&fmt[14]);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data.resize(size);
      is.read(reinterpret_cast<char*>(data.data()), size);
      have_data = true;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
      continue;
    }
    if (size & 1) is.seekg(1, std::ios::cur);
  }

  if (!have_fmt || !have_data)
    throw InvalidArgument("WAV missing fmt or data chunk: " + path.string());
  if (num_channels == 0) throw InvalidArgument("WAV with zero channels");

  const bool pcm16 = (format_tag == 1 && bits == 16);
  const bool f32 = (format_tag == 3 && bits == 32);
  if (!pcm16 && !f32)
    throw InvalidArgument("unsupported WAV encoding (need 16-bit PCM or "
                          "32-bit float): " + path.string());

  const size_t bytes_per_sample = pcm16 ? 2 : 4;
  const size_t frames = data.size() / (bytes_per_sample * num_channels);

  WavData out;
  out.sample_rate = int(sample_rate);
  out.channels.assign(num_channels, Samples(frames));
  const uint8_t* p = data.data();
  for (size_t i = 0; i < frames; ++i) {
    for (int c = 0; c < num_channels; ++c) {
      if (pcm16) {
        int16_t v = int16_t(rd16(p));
        out.channels[c][i] = float(v) / 32768.0f;
        p += 2;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        out.channels[c][i] = v;
        p += 4;
      }
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const WavData& data,
               WavFormat format) {
  if (data.channels.empty()) throw InvalidArgument("write_wav: no channels");
  const size_t frames = data.frames();
  for (const auto& ch : data.channels)
    if (ch.size() != frames)
      throw InvalidArgument("write_wav: channel length mismatch");

  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot write WAV file: " + path.string());

  const int nch = int(data.channels.size());
  const bool f32 = format == WavFormat::Float32;
  const uint16_t bytes_per_sample = f32 ? 4 : 2;
  const uint32_t data_bytes = uint32_t(frames * nch * bytes_per_sample);

  os.write("RIFF", 4);
  wr32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr32(os, 16);
  wr16(os, f32 ? 3 : 1);
  wr16(os, uint16_t(nch));
  wr32(os, uint32_t(data.sample_rate));
  wr32(os, uint32_t(data.sample_rate) * nch * bytes_per_sample);
  wr16(os, uint16_t(nch * bytes_per_sample));
  wr16(os, uint16_t(bytes_per_sample * 8));
  os.write("data", 4);
  wr32(os, data_bytes);

  for (size_t i = 0; i < frames; ++i) {
    for (int c = 0; c < nch; ++c) {
      float v = data.channels[c][i];
      if (f32) {
        char b[4];
        std::memcpy(b, &v, 4);
        os.write(b, 4);
      } else {
        int s = int(std::lround(double(v) * 32768.0));
        s = std::max(-32768, std::min(32767, s));
        wr16(os, uint16_t(int16_t(s)));
      }
    }
  }
}

Samples read_wav_mono(const std::filesystem::path& path, int expect_rate) {
  WavData w = read_wav(path);
  if (expect_rate > 0 && w.sample_rate != expect_rate)
    throw InvalidArgument("WAV sample rate " + std::to_string(w.sample_rate) +
                          " != expected " + std::to_string(expect_rate) + ": " +
                          path.string());
  if (w.channels.size() == 1) return std::move(w.channels[0]);
  // Downmix by averaging.
  Samples mono(w.frames(), 0.0f);
  for (const auto& ch : w.channels)
    for (size_t i = 0; i < mono.size(); ++i) mono[i] += ch[i];
  const float g = 1.0f / float(w.channels.size());
  for (auto& v : mono) v *= g;
  return mono;
}

void write_wav_mono(const std::filesystem::path& path, const Samples& samples,
                    int sample_rate, WavFormat format) {
  WavData w;
  w.sample_rate = sample_rate;
  w.channels.push_back(samples);
  write_wav(path, w, format);
}

}  // namespace amtk
