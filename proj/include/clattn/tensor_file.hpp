#pragma once

// TensorFile: a minimal binary container for one float32 matrix.
//
//   offset  size  field
//        0     8  magic "CLATTN01"
//        8     4  dtype, uint32 little-endian (1 = float32 little-endian)
//       12     8  rows, uint64 little-endian
//       20     8  cols, uint64 little-endian
//       28   4rc  payload, row-major
//
// The file must end exactly at the payload's last byte.

#include <clattn/error.hpp>
#include <clattn/matrix.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>

namespace clattn {

inline constexpr std::array<char, 8> kTensorMagic{'C', 'L', 'A', 'T', 'T', 'N', '0', '1'};
inline constexpr std::uint32_t kDtypeFloat32 = 1;
inline constexpr std::size_t kTensorHeaderBytes = 28;

namespace detail {

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((value >> (8 * b)) & 0xff));
}

template <typename U>
U get_le(const char* p) {
  U value = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) value |= static_cast<U>(static_cast<unsigned char>(p[b])) << (8 * b);
  return value;
}

}  // namespace detail

inline std::string encode_tensor(const Matrix& m) {
  std::string out(kTensorMagic.begin(), kTensorMagic.end());
  detail::put_le<std::uint32_t>(out, kDtypeFloat32);
  detail::put_le<std::uint64_t>(out, m.rows());
  detail::put_le<std::uint64_t>(out, m.cols());
  out.reserve(out.size() + 4 * m.size());
  for (float x : m.data()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  return out;
}

// `source` names the input in error messages (usually the path).
inline Matrix decode_tensor(std::string_view bytes, const std::string& source = "tensor") {
  if (bytes.size() < kTensorHeaderBytes)
    throw IoError(source + ": truncated header (" + std::to_string(bytes.size()) + " bytes)", "header");
  if (!std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin()))
    throw IoError(source + ": bad magic, expected CLATTN01", "magic");
  const auto dtype = detail::get_le<std::uint32_t>(bytes.data() + 8);
  if (dtype != kDtypeFloat32)
    throw IoError(source + ": unsupported dtype " + std::to_string(dtype) + ", expected 1 (float32)", "dtype");
  const auto rows = detail::get_le<std::uint64_t>(bytes.data() + 12);
  const auto cols = detail::get_le<std::uint64_t>(bytes.data() + 20);
  const std::uint64_t payload = bytes.size() - kTensorHeaderBytes;
  if (cols != 0 && rows > std::numeric_limits<std::uint64_t>::max() / 4 / cols)
    throw IoError(source + ": rows * cols overflows", "shape");
  const std::uint64_t expected = rows * cols * 4;
  if (payload != expected)
    throw IoError(source + ": payload length " + std::to_string(payload) + " bytes, expected " +
                      std::to_string(expected),
                  "payload length");

  TrackedVector<float> values(rows * cols);
  const char* p = bytes.data() + kTensorHeaderBytes;
  for (std::size_t i = 0; i < values.size(); ++i, p += 4)
    values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p));
  try {
    return Matrix(rows, cols, values);
  } catch (const InvalidArgument&) {
    throw IoError(source + ": payload contains non-finite values", "payload");
  }
}

inline void save_tensor(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  const std::string bytes = encode_tensor(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

inline Matrix load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw IoError(path.string() + ": read failed");
  return decode_tensor(bytes, path.string());
}

}  // namespace clattn
