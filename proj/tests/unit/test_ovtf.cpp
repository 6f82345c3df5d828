#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "ov3r/errors.hpp"
#include "ov3r/ovtf.hpp"

namespace ov3r::ovtf {
namespace {

TEST(Ovtf, HeaderLayout) {
  const auto bytes = encode(Blob::u8({2}, std::vector<std::uint8_t>{7, 9}));
  ASSERT_EQ(bytes.size(), 4u + 2u + 1u + 1u + 8u + 2u);
  EXPECT_EQ(static_cast<char>(bytes[0]), 'O');
  EXPECT_EQ(static_cast<char>(bytes[3]), 'R');
  EXPECT_EQ(std::to_integer<int>(bytes[4]), 1);
  EXPECT_EQ(std::to_integer<int>(bytes[6]), 3);
  EXPECT_EQ(std::to_integer<int>(bytes[7]), 1);
  EXPECT_EQ(std::to_integer<int>(bytes[8]), 2);
  EXPECT_EQ(std::to_integer<int>(bytes[16]), 7);
}

TEST(Ovtf, ValuesRoundTrip) {
  const std::vector<double> d{1.5, -2.25, 1e-300, 3.0};
  EXPECT_EQ(decode(encode(Blob::f64({2, 2}, d))).to_f64(), d);
  const std::vector<float> f{0.5f, -1.0f};
  EXPECT_EQ(decode(encode(Blob::f32({2}, f))).to_f64(), (std::vector<double>{0.5, -1.0}));
  const std::vector<std::uint32_t> u{0, 4000000000u, 7};
  EXPECT_EQ(decode(encode(Blob::u32({3, 1}, u))).to_u32(), u);
  const Tensor t = Tensor::from_rows({{1, 2, 3}});
  EXPECT_EQ(decode(encode(Blob::from_tensor(t))).to_tensor(), t);
}

TEST(Ovtf, DtypeConversionsAreChecked) {
  EXPECT_THROW(Blob::f64({1}, std::vector<double>{1.0}).to_u32(), ContractError);
  EXPECT_THROW(Blob::f64({3}, std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST(Ovtf, FileAndStreamRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "ov3r_ovtf_test";
  std::filesystem::create_directories(dir);
  const Blob b = Blob::u32({2, 2}, std::vector<std::uint32_t>{1, 2, 3, 4});
  write(dir / "a.ovtf", b);
  EXPECT_EQ(read(dir / "a.ovtf"), b);
  EXPECT_THROW(read(dir / "missing.ovtf"), IoError);
  std::filesystem::remove_all(dir);

  std::stringstream ss;
  write_frame(ss, b);
  write_frame(ss, b);
  EXPECT_EQ(read_frame(ss), b);
  EXPECT_EQ(read_frame(ss), b);
  EXPECT_FALSE(read_frame(ss).has_value());
}

TEST(Ovtf, TruncatedFrameIsCorruption) {
  std::stringstream ss;
  write_frame(ss, Blob::u8({3}, std::vector<std::uint8_t>{1, 2, 3}));
  std::string s = ss.str();
  s.pop_back();
  std::stringstream cut(s);
  EXPECT_THROW(read_frame(cut), CorruptionError);
}

TEST(Ovtf, ErrorClasses) {
  auto good = encode(Blob::f64({1}, std::vector<double>{1.0}));
  auto bad = good;
  bad[1] = std::byte{'x'};
  EXPECT_THROW(decode(bad), FormatError);
  bad = good;
  bad[5] = std::byte{1};
  EXPECT_THROW(decode(bad), UnsupportedError);
  bad = good;
  bad[6] = std::byte{4};
  EXPECT_THROW(decode(bad), UnsupportedError);
  EXPECT_THROW(decode(std::span(good).first(3)), CorruptionError);
  EXPECT_THROW(decode(std::span(good).first(12)), CorruptionError);
  good.push_back(std::byte{0});
  EXPECT_THROW(decode(good), CorruptionError);
}

}  // namespace
}  // namespace ov3r::ovtf
