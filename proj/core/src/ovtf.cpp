#include "ov3r/ovtf.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <iomanip>

#include "ov3r/errors.hpp"

namespace ov3r::ovtf {

namespace {

static_assert(std::endian::native == std::endian::little, "OVTF payload copies assume a little-endian host");

constexpr std::array<char, 4> kMagic{'O', 'V', '3', 'R'};
constexpr std::size_t kFixedHeader = 8;
// Refuse frames larger than this when reading from a stream.
constexpr std::uint64_t kMaxFrameBytes = std::uint64_t{1} << 40;

void put_u16(std::vector<std::byte>& out, std::uint16_t v) {
  out.push_back(static_cast<std::byte>(v & 0xff));
  out.push_back(static_cast<std::byte>(v >> 8));
}

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::byte* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(p[i])) << (8 * i);
  return v;
}

template <typename T>
Blob make(DType dtype, std::vector<std::uint64_t> dims, std::span<const T> values) {
  Blob b;
  b.dtype = dtype;
  b.dims = std::move(dims);
  if (b.element_count() != values.size()) {
    throw ShapeError("ovtf: " + std::to_string(values.size()) + " values for declared dims");
  }
  b.payload.resize(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(b.payload.data(), values.data(), b.payload.size());
  return b;
}

template <typename T>
std::vector<T> copy_out(const Blob& b) {
  std::vector<T> out(b.payload.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), b.payload.data(), b.payload.size());
  return out;
}

std::string hex_bytes(std::span<const std::byte> bytes) {
  std::ostringstream os;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (i) os << ' ';
    os << std::hex << std::setw(2) << std::setfill('0') << std::to_integer<int>(bytes[i]);
  }
  return os.str();
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u32: return 4;
    case DType::u8: return 1;
  }
  throw UnsupportedError("ovtf: unknown dtype " + std::to_string(static_cast<int>(t)));
}

const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::u32: return "u32";
    case DType::u8: return "u8";
  }
  return "?";
}

std::size_t Blob::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
      throw CorruptionError("ovtf: dimension product overflows");
    }
    n *= d;
  }
  return static_cast<std::size_t>(n);
}

Blob Blob::f64(std::vector<std::uint64_t> dims, std::span<const double> values) {
  return make(DType::f64, std::move(dims), values);
}
Blob Blob::f32(std::vector<std::uint64_t> dims, std::span<const float> values) {
  return make(DType::f32, std::move(dims), values);
}
Blob Blob::u32(std::vector<std::uint64_t> dims, std::span<const std::uint32_t> values) {
  return make(DType::u32, std::move(dims), values);
}
Blob Blob::u8(std::vector<std::uint64_t> dims, std::span<const std::uint8_t> values) {
  return make(DType::u8, std::move(dims), values);
}

Blob Blob::from_tensor(const Tensor& t) {
  std::vector<std::uint64_t> dims(t.dims().begin(), t.dims().end());
  return f64(std::move(dims), t.values());
}

std::vector<double> Blob::to_f64() const {
  switch (dtype) {
    case DType::f64: return copy_out<double>(*this);
    case DType::f32: {
      const auto v = copy_out<float>(*this);
      return {v.begin(), v.end()};
    }
    case DType::u32: {
      const auto v = copy_out<std::uint32_t>(*this);
      return {v.begin(), v.end()};
    }
    case DType::u8: {
      const auto v = copy_out<std::uint8_t>(*this);
      return {v.begin(), v.end()};
    }
  }
  throw UnsupportedError("ovtf: unknown dtype");
}

std::vector<std::uint32_t> Blob::to_u32() const {
  if (dtype == DType::u32) return copy_out<std::uint32_t>(*this);
  if (dtype == DType::u8) {
    const auto v = copy_out<std::uint8_t>(*this);
    return {v.begin(), v.end()};
  }
  throw ContractError(std::string("ovtf: expected an integer tensor, got ") + dtype_name(dtype));
}

std::vector<std::uint8_t> Blob::to_u8() const {
  if (dtype != DType::u8) throw ContractError(std::string("ovtf: expected u8, got ") + dtype_name(dtype));
  return copy_out<std::uint8_t>(*this);
}

Tensor Blob::to_tensor() const {
  Dims d(dims.begin(), dims.end());
  return Tensor(std::move(d), to_f64());
}

std::vector<std::byte> encode(const Blob& blob) {
  if (blob.dims.empty() || blob.dims.size() > kMaxDims) {
    throw UnsupportedError("ovtf: ndim must be 1.." + std::to_string(kMaxDims));
  }
  if (blob.payload.size() != blob.element_count() * dtype_size(blob.dtype)) {
    throw ShapeError("ovtf: payload size does not match dims");
  }
  std::vector<std::byte> out;
  out.reserve(kFixedHeader + 8 * blob.dims.size() + blob.payload.size());
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_u16(out, kVersion);
  out.push_back(static_cast<std::byte>(blob.dtype));
  out.push_back(static_cast<std::byte>(blob.dims.size()));
  for (auto d : blob.dims) put_u64(out, d);
  out.insert(out.end(), blob.payload.begin(), blob.payload.end());
  return out;
}

Blob decode(std::span<const std::byte> bytes) {
  if (bytes.size() < 4) throw CorruptionError("ovtf: file shorter than the magic number");
  if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw FormatError("ovtf: bad magic bytes " + hex_bytes(bytes.first(4)) + " (expected 4f 56 33 52 \"OV3R\")");
  }
  if (bytes.size() < kFixedHeader) throw CorruptionError("ovtf: truncated header");
  const auto version = static_cast<std::uint16_t>(std::to_integer<std::uint16_t>(bytes[4]) |
                                                  (std::to_integer<std::uint16_t>(bytes[5]) << 8));
  if (version != kVersion) throw UnsupportedError("ovtf: unsupported version " + std::to_string(version));
  const auto raw_dtype = std::to_integer<std::uint8_t>(bytes[6]);
  if (raw_dtype > 3) throw UnsupportedError("ovtf: unknown dtype code " + std::to_string(raw_dtype));
  const auto ndim = std::to_integer<std::uint8_t>(bytes[7]);
  if (ndim == 0 || ndim > kMaxDims) throw UnsupportedError("ovtf: unsupported ndim " + std::to_string(ndim));
  const std::size_t header = kFixedHeader + 8u * ndim;
  if (bytes.size() < header) throw CorruptionError("ovtf: truncated dimension table");

  Blob blob;
  blob.dtype = static_cast<DType>(raw_dtype);
  for (std::size_t i = 0; i < ndim; ++i) blob.dims.push_back(get_u64(bytes.data() + kFixedHeader + 8 * i));
  // Overflow and size checks happen before any payload allocation.
  const std::uint64_t elems = blob.element_count();
  const std::uint64_t width = dtype_size(blob.dtype);
  if (elems > std::numeric_limits<std::uint64_t>::max() / width) {
    throw CorruptionError("ovtf: declared payload size overflows");
  }
  const std::uint64_t expected = elems * width;
  const std::uint64_t actual = bytes.size() - header;
  if (expected != actual) {
    throw CorruptionError("ovtf: payload is " + std::to_string(actual) + " bytes but dims declare " +
                          std::to_string(expected));
  }
  blob.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return blob;
}

void write(const std::filesystem::path& path, const Blob& blob) {
  const auto bytes = encode(blob);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Blob read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::byte> bytes;
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  bytes.resize(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("failed reading " + path.string());
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const CorruptionError& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  } catch (const UnsupportedError& e) {
    throw UnsupportedError(path.string() + ": " + e.what());
  }
}

void write_frame(std::ostream& out, const Blob& blob) {
  const auto bytes = encode(blob);
  std::vector<std::byte> len;
  put_u64(len, bytes.size());
  out.write(reinterpret_cast<const char*>(len.data()), 8);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("ovtf: failed writing frame to stream");
}

std::optional<Blob> read_frame(std::istream& in) {
  std::array<std::byte, 8> len{};
  in.read(reinterpret_cast<char*>(len.data()), 8);
  if (in.gcount() == 0 && in.eof()) return std::nullopt;
  if (in.gcount() != 8) throw CorruptionError("ovtf: truncated frame length prefix");
  const std::uint64_t n = get_u64(len.data());
  if (n > kMaxFrameBytes) throw CorruptionError("ovtf: frame length " + std::to_string(n) + " exceeds limit");
  if (n < kFixedHeader) throw CorruptionError("ovtf: frame shorter than an OVTF header");
  // Validate the header against n before allocating the payload.
  std::vector<std::byte> bytes(kFixedHeader);
  auto read_exact = [&in](std::byte* dst, std::size_t count) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count));
    if (in.gcount() != static_cast<std::streamsize>(count)) throw CorruptionError("ovtf: truncated frame");
  };
  read_exact(bytes.data(), kFixedHeader);
  const auto ndim = std::to_integer<std::uint8_t>(bytes[7]);
  if (std::memcmp(bytes.data(), kMagic.data(), 4) == 0 && ndim >= 1 && ndim <= kMaxDims) {
    const std::size_t header = kFixedHeader + 8u * ndim;
    if (n < header) throw CorruptionError("ovtf: frame shorter than its dimension table");
    bytes.resize(header);
    read_exact(bytes.data() + kFixedHeader, header - kFixedHeader);
    const auto raw_dtype = std::to_integer<std::uint8_t>(bytes[6]);
    if (raw_dtype <= 3) {
      Blob probe;
      probe.dtype = static_cast<DType>(raw_dtype);
      for (std::size_t i = 0; i < ndim; ++i) probe.dims.push_back(get_u64(bytes.data() + kFixedHeader + 8 * i));
      const std::uint64_t elems = probe.element_count();
      const std::uint64_t width = dtype_size(probe.dtype);
      if (elems > (n - header) / width + 1 || elems * width != n - header) {
        throw CorruptionError("ovtf: frame length " + std::to_string(n) + " disagrees with declared dims");
      }
    }
  }
  const auto have = bytes.size();
  bytes.resize(static_cast<std::size_t>(n));
  read_exact(bytes.data() + have, static_cast<std::size_t>(n) - have);
  return decode(bytes);
}

}  // namespace ov3r::ovtf
