#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "slmvc/audio.hpp"

namespace slmvc {

namespace {

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("read_wav: cannot open " + path);
  char tag[4];
  is.read(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw std::invalid_argument("read_wav: not RIFF: " + path);
  read_u32(is);  // riff size
  is.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw std::invalid_argument("read_wav: not WAVE: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<char> data;
  bool have_fmt = false, have_data = false;
  while (is && !(have_fmt && have_data)) {
    is.read(tag, 4);
    if (!is) break;
    const uint32_t size = read_u32(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16(is);
      channels = read_u16(is);
      rate = read_u32(is);
      read_u32(is);  // byte rate
      read_u16(is);  // block align
      bits = read_u16(is);
      if (size > 16) is.ignore(size - 16);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(size);
      is.read(data.data(), size);
      have_data = true;
    } else {
      is.ignore(size + (size & 1));
    }
  }
  if (!have_fmt || !have_data) throw std::invalid_argument("read_wav: missing chunks: " + path);
  if (channels != 1)
    throw std::invalid_argument("read_wav: only mono supported (" + path + " has " +
                                std::to_string(channels) + " channels)");

  std::vector<double> samples;
  if (format == 1 && bits == 16) {
    const size_t n = data.size() / 2;
    samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int16_t v;
      std::memcpy(&v, data.data() + 2 * i, 2);
      samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const size_t n = data.size() / 4;
    samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, data.data() + 4 * i, 4);
      samples[i] = static_cast<double>(v);
    }
  } else {
    throw std::invalid_argument("read_wav: unsupported format (want PCM16 or float32): " + path);
  }
  return Waveform(std::move(samples), static_cast<int>(rate));
}

void write_wav(const std::string& path, const Waveform& wav, bool float32) {
  wav.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::invalid_argument("write_wav: cannot open " + path);
  const uint32_t n = static_cast<uint32_t>(wav.samples.size());
  const uint16_t bytes_per = float32 ? 4 : 2;
  const uint32_t data_size = n * bytes_per;
  os.write("RIFF", 4);
  write_u32(os, 36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_u32(os, 16);
  write_u16(os, float32 ? 3 : 1);
  write_u16(os, 1);
  write_u32(os, static_cast<uint32_t>(wav.sample_rate_hz));
  write_u32(os, static_cast<uint32_t>(wav.sample_rate_hz) * bytes_per);
  write_u16(os, bytes_per);
  write_u16(os, float32 ? 32 : 16);
  os.write("data", 4);
  write_u32(os, data_size);
  if (float32) {
    for (double s : wav.samples) {
      const float v = static_cast<float>(s);
      os.write(reinterpret_cast<const char*>(&v), 4);
    }
  } else {
    for (double s : wav.samples) {
      const long q = std::lround(std::clamp(s, -1.0, 1.0) * 32768.0);
      const int16_t v = static_cast<int16_t>(std::clamp<long>(q, -32768, 32767));
      os.write(reinterpret_cast<const char*>(&v), 2);
    }
  }
}

}  // namespace slmvc
