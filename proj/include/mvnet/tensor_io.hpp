#pragma once

// MVNT raw tensor files:
//   "MVNT" | u8 version=1 | u8 rank | rank x u32 LE dims | prod(dims) x f32 LE

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mvnet/error.hpp"
#include "mvnet/tensor.hpp"

namespace mvnet {

using Bytes = std::vector<std::uint8_t>;

/// An n-dimensional float array as stored on disk.
struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const RawTensor &) const = default;
};

namespace io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline void put_u8(Bytes &out, std::uint8_t v) { out.push_back(v); }

inline void put_u16(Bytes &out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(Bytes &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f32(Bytes &out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

/// Bounds-checked little-endian cursor; every failure names its offset.
class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n, const char *what) const {
    if (remaining() < n)
      throw FormatError(FormatError::Kind::Truncated, pos_,
                        std::string(what) + ": expected " + std::to_string(n) + " bytes, have " +
                            std::to_string(remaining()));
  }

  std::uint8_t u8(const char *what) {
    need(1, what);
    return bytes_[pos_++];
  }

  std::uint16_t u16(const char *what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  std::uint32_t u32(const char *what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t n, const char *what) {
    need(n, what);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void magic(const char (&expected)[5]) {
    if (remaining() < 4 || std::memcmp(bytes_.data() + pos_, expected, 4) != 0)
      throw FormatError(FormatError::Kind::BadMagic, pos_, std::string("expected \"") + expected + "\"");
    pos_ += 4;
  }

  /// rank x u32 dims followed by the f32 payload.
  RawTensor tensor_body(std::uint8_t rank) {
    RawTensor t;
    t.dims.reserve(rank);
    std::uint64_t count = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const std::size_t at = pos_;
      const auto d = u32("dimension");
      if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / d)
        throw FormatError(FormatError::Kind::DimOverflow, at, "element count overflows");
      count *= d;
      t.dims.push_back(d);
    }
    const std::uint64_t payload = count * 4;
    if (payload > remaining())
      throw FormatError(FormatError::Kind::Truncated, pos_,
                        "payload: expected " + std::to_string(payload) + " bytes, have " + std::to_string(remaining()));
    t.data.resize(static_cast<std::size_t>(count));
    for (auto &f : t.data)
      f = std::bit_cast<float>(u32("payload"));
    return t;
  }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline Bytes read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError(FormatError::Kind::Io, 0, "cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string &path, const Bytes &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw FormatError(FormatError::Kind::Io, 0, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw FormatError(FormatError::Kind::Io, 0, "short write to " + path);
}

inline void put_tensor_body(Bytes &out, const RawTensor &t) {
  if (t.dims.size() > 255)
    throw ContractError("tensor rank exceeds 255");
  put_u8(out, static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims)
    put_u32(out, d);
  for (auto f : t.data)
    put_f32(out, f);
}

} // namespace io

inline constexpr std::uint8_t kTensorFormatVersion = 1;

inline Bytes encode_tensor(const RawTensor &t) {
  std::uint64_t count = 1;
  for (auto d : t.dims)
    count *= d;
  if (count != t.data.size())
    throw ShapeError("raw tensor data length does not match dims");
  Bytes out{'M', 'V', 'N', 'T'};
  io::put_u8(out, kTensorFormatVersion);
  io::put_tensor_body(out, t);
  return out;
}

inline RawTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.magic("MVNT");
  const std::size_t at = r.offset();
  if (const auto v = r.u8("version"); v != kTensorFormatVersion)
    throw FormatError(FormatError::Kind::BadVersion, at, "version " + std::to_string(v));
  const auto rank = r.u8("rank");
  RawTensor t = r.tensor_body(rank);
  if (r.remaining() != 0)
    throw FormatError(FormatError::Kind::Trailing, r.offset(), std::to_string(r.remaining()) + " unread bytes");
  return t;
}

inline RawTensor to_raw(const VideoTensor &v) {
  const auto &d = v.dims();
  return {{static_cast<std::uint32_t>(d.t), static_cast<std::uint32_t>(d.h), static_cast<std::uint32_t>(d.w),
           static_cast<std::uint32_t>(d.c)},
          v.storage()};
}

inline VideoTensor to_video(RawTensor raw) {
  if (raw.dims.size() != 4)
    throw FormatError(FormatError::Kind::BadRank, 5,
                      "video tensor must have rank 4 (T, H, W, C), got rank " + std::to_string(raw.dims.size()));
  return VideoTensor(Dims4{raw.dims[0], raw.dims[1], raw.dims[2], raw.dims[3]}, std::move(raw.data));
}

inline void save_tensor(const std::string &path, const RawTensor &t) { io::write_file(path, encode_tensor(t)); }

inline void save_video_tensor(const std::string &path, const VideoTensor &v) { save_tensor(path, to_raw(v)); }

inline RawTensor load_tensor(const std::string &path) { return decode_tensor(io::read_file(path)); }

inline VideoTensor load_video_tensor(const std::string &path) { return to_video(load_tensor(path)); }

} // namespace mvnet
