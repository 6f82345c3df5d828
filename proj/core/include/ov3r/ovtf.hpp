#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ov3r/tensor.hpp"

// OVTF: the engine's binary tensor exchange format.
//
//   offset 0   magic    "OV3R"
//          4   version  u16 (currently 1)
//          6   dtype    u8  (f32=0, f64=1, u32=2, u8=3)
//          7   ndim     u8  (1..8)
//          8   dims     ndim x u64
//          ..  payload  row-major values
//
// All integers and values are little-endian.
namespace ov3r::ovtf {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u32 = 2, u8 = 3 };

inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kMaxDims = 8;

std::size_t dtype_size(DType t);
const char* dtype_name(DType t);

/// A typed tensor held as its raw little-endian payload, so that decoding and
/// re-encoding is byte-exact for every dtype.
struct Blob {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<std::byte> payload;

  std::size_t element_count() const;

  static Blob f64(std::vector<std::uint64_t> dims, std::span<const double> values);
  static Blob f32(std::vector<std::uint64_t> dims, std::span<const float> values);
  static Blob u32(std::vector<std::uint64_t> dims, std::span<const std::uint32_t> values);
  static Blob u8(std::vector<std::uint64_t> dims, std::span<const std::uint8_t> values);
  static Blob from_tensor(const Tensor& t);

  /// f32 and f64 payloads widen to double; integer payloads convert exactly.
  std::vector<double> to_f64() const;
  std::vector<std::uint32_t> to_u32() const;  // u32 or u8 payloads only
  std::vector<std::uint8_t> to_u8() const;    // u8 payloads only
  Tensor to_tensor() const;

  friend bool operator==(const Blob&, const Blob&) = default;
};

std::vector<std::byte> encode(const Blob& blob);

/// Throws FormatError (bad magic), UnsupportedError (version, dtype, ndim)
/// or CorruptionError (truncated header, size arithmetic mismatch, overflow).
Blob decode(std::span<const std::byte> bytes);

void write(const std::filesystem::path& path, const Blob& blob);
Blob read(const std::filesystem::path& path);

/// Length-prefixed framing for byte streams: u64 little-endian byte count
/// followed by one encoded OVTF blob. read_frame returns nullopt on a clean
/// end of stream.
void write_frame(std::ostream& out, const Blob& blob);
std::optional<Blob> read_frame(std::istream& in);

}  // namespace ov3r::ovtf
