#include "chorus/wav_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "chorus/ioutil.hpp"

namespace chorus {

namespace {

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 24) & 0xff);
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open WAV file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("not a RIFF/WAVE file: " + path);
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    uint32_t len = read_u32(bytes.data() + pos + 4);
    if (pos + 8 + len > bytes.size()) {
      throw std::runtime_error("truncated WAV chunk in " + path);
    }
    const uint8_t* body = bytes.data() + pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw std::runtime_error("malformed fmt chunk in " + path);
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = body;
      data_len = len;
    }
    pos += 8 + len + (len & 1);  // chunks are word-aligned
  }

  if (data == nullptr) throw std::runtime_error("WAV has no data chunk: " + path);
  if (channels < 1 || channels > 2) {
    throw std::runtime_error("unsupported channel count in " + path);
  }
  if (rate == 0) throw std::runtime_error("invalid sample rate in " + path);

  const bool pcm16 = (format == 1 && bits == 16);
  const bool f32 = (format == 3 && bits == 32);
  if (!pcm16 && !f32) {
    throw std::runtime_error("unsupported WAV encoding in " + path +
                             " (want PCM16 or float32)");
  }

  const size_t bytes_per_sample = pcm16 ? 2 : 4;
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t num_frames = data_len / frame_bytes;

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(num_frames);
  for (size_t i = 0; i < num_frames; ++i) {
    double acc = 0.0;
    for (int ch = 0; ch < channels; ++ch) {
      const uint8_t* p = data + i * frame_bytes + ch * bytes_per_sample;
      if (pcm16) {
        int16_t s;
        std::memcpy(&s, p, 2);
        acc += s / 32768.0;
      } else {
        float s;
        std::memcpy(&s, p, 4);
        acc += s;
      }
    }
    w.samples[i] = static_cast<float>(acc / channels);
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw std::runtime_error("invalid sample rate");
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  std::vector<uint8_t> out;
  out.reserve(44 + 2 * n);
  const char* riff = "RIFF";
  out.insert(out.end(), riff, riff + 4);
  put_u32(out, 36 + 2 * n);
  const char* tags = "WAVEfmt ";
  out.insert(out.end(), tags, tags + 8);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(w.sample_rate));
  put_u32(out, static_cast<uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  const char* dat = "data";
  out.insert(out.end(), dat, dat + 4);
  put_u32(out, 2 * n);
  for (uint32_t i = 0; i < n; ++i) {
    float x = std::clamp(w.samples[i], -1.0f, 1.0f);
    int v = static_cast<int>(std::lround(x * 32767.0));
    v = std::clamp(v, -32768, 32767);
    put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  atomic_write_file(path,
                    std::string(reinterpret_cast<const char*>(out.data()),
                                out.size()));
}

}  // namespace chorus
