// Copyright 2026 The spatialsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "spatialsep/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "spatialsep/errors.hpp"

namespace spatialsep {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatIeeeFloat = 3;

uint16_t read_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v & 0xff));
  b.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
void put_tag(std::vector<uint8_t>& b, const char* tag) {
  b.insert(b.end(), tag, tag + 4);
}

[[noreturn]] void malformed(const std::string& detail) {
  throw DataError("malformed WAV: " + detail);
}

}  // namespace

MultiChannelSignal read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 12) malformed("file shorter than RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    malformed("missing RIFF/WAVE magic");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  size_t data_off = 0, data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t chunk_len = read_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + chunk_len > bytes.size()) malformed("truncated chunk");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_len < 16) malformed("fmt chunk too short");
      const uint8_t* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      sample_rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
      break;  // data is the payload; trailing chunks are irrelevant here
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) malformed("missing fmt chunk");
  if (data_off == 0) malformed("missing data chunk");
  if (data_len == 0) malformed("zero-length data chunk");
  if (channels == 0 || sample_rate == 0) malformed("invalid fmt fields");

  const bool pcm16 = (format == kFormatPcm && bits == 16);
  const bool f32 = (format == kFormatIeeeFloat && bits == 32);
  if (!pcm16 && !f32)
    throw DataError("unsupported WAV codec: format " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits");

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  if (data_len % frame_bytes) malformed("data chunk not a whole number of frames");
  const auto frames = static_cast<int64_t>(data_len / frame_bytes);
  if (frames == 0) malformed("zero-length data chunk");

  MultiChannelSignal sig;
  sig.sample_rate = static_cast<int>(sample_rate);
  sig.samples = Tensor({static_cast<int64_t>(channels), frames});
  const uint8_t* d = bytes.data() + data_off;
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t c = 0; c < channels; ++c) {
      const uint8_t* s = d + (static_cast<size_t>(t) * channels + static_cast<size_t>(c)) *
                                 bytes_per_sample;
      if (pcm16) {
        int16_t v;
        std::memcpy(&v, s, 2);
        sig.samples(c, t) = static_cast<double>(v) / 32768.0;
      } else {
        uint32_t u = read_u32(s);
        float v;
        std::memcpy(&v, &u, 4);
        sig.samples(c, t) = static_cast<double>(v);
      }
    }
  }
  return sig;
}

void write_wav(const std::string& path, const MultiChannelSignal& signal) {
  signal.validate();
  const int64_t channels = signal.channels();
  const int64_t frames = signal.length();
  const uint32_t byte_rate =
      static_cast<uint32_t>(signal.sample_rate) * static_cast<uint32_t>(channels) * 4;
  const uint32_t data_len = static_cast<uint32_t>(frames * channels * 4);

  std::vector<uint8_t> b;
  b.reserve(58 + data_len);
  put_tag(b, "RIFF");
  put_u32(b, 4 + 8 + 16 + 8 + 4 + 8 + data_len);  // WAVE + fmt + fact + data
  put_tag(b, "WAVE");
  put_tag(b, "fmt ");
  put_u32(b, 16);
  put_u16(b, kFormatIeeeFloat);
  put_u16(b, static_cast<uint16_t>(channels));
  put_u32(b, static_cast<uint32_t>(signal.sample_rate));
  put_u32(b, byte_rate);
  put_u16(b, static_cast<uint16_t>(channels * 4));  // block align
  put_u16(b, 32);
  put_tag(b, "fact");  // required for non-PCM formats
  put_u32(b, 4);
  put_u32(b, static_cast<uint32_t>(frames));
  put_tag(b, "data");
  put_u32(b, data_len);
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t c = 0; c < channels; ++c) {
      const auto v = static_cast<float>(signal.samples(c, t));
      uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(b, u);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace spatialsep
