#include "bloomnet/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "bloomnet/errors.hpp"

namespace bloomnet {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorCode::UnsupportedFormat, path.string() + " is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_pos = 0, data_size = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto size = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > buf.size() && id != "data")
      throw Error(ErrorCode::UnsupportedFormat, path.string() + ": truncated chunk '" + id + "'");
    if (id == "fmt ") {
      if (size < 16) throw Error(ErrorCode::UnsupportedFormat, path.string() + ": short fmt chunk");
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible && size >= 26) format = read_le<std::uint16_t>(buf, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      data_pos = body;
      data_size = std::min<std::size_t>(size, buf.size() - body);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || data_pos == 0) throw Error(ErrorCode::UnsupportedFormat, path.string() + ": missing fmt or data chunk");
  if (channels != 1) throw Error(ErrorCode::UnsupportedFormat, path.string() + ": only mono audio is supported");

  WavData out;
  out.wave.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    out.encoding = WavEncoding::pcm16;
    const std::size_t n = data_size / 2;
    out.wave.samples.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      out.wave.samples[static_cast<Eigen::Index>(i)] = read_le<std::int16_t>(buf, data_pos + 2 * i) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    out.encoding = WavEncoding::float32;
    const std::size_t n = data_size / 4;
    out.wave.samples.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      out.wave.samples[static_cast<Eigen::Index>(i)] = read_le<float>(buf, data_pos + 4 * i);
  } else {
    throw Error(ErrorCode::UnsupportedFormat,
                path.string() + ": unsupported encoding (format " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits); expected 16-bit PCM or 32-bit float");
  }
  if (out.wave.length() == 0) throw Error(ErrorCode::UnsupportedFormat, path.string() + ": no samples");
  if (!out.wave.samples.allFinite()) throw Error(ErrorCode::UnsupportedFormat, path.string() + ": non-finite samples");
  return out;
}

void write_wav(const std::filesystem::path& path, const WaveSegment& wave, WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t block_align = bits / 8;
  const auto data_bytes = static_cast<std::uint32_t>(wave.length() * block_align);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, format);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate) * block_align);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(block_align));
  write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (Eigen::Index i = 0; i < wave.length(); ++i) {
    const double v = wave.samples[i];
    if (encoding == WavEncoding::pcm16) {
      const double clipped = std::clamp(v, -1.0, 32767.0 / 32768.0);
      write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(clipped * 32768.0)));
    } else {
      write_le<float>(out, static_cast<float>(v));
    }
  }
  if (!out) throw Error(ErrorCode::UnreadableFile, "failed writing " + path.string());
}

}  // namespace bloomnet
