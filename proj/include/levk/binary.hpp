#pragma once

// Little-endian encode/decode independent of host byte order.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace levk::binary {

template <typename U>
inline void put_uint(std::vector<unsigned char>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<unsigned char>((value >> (8 * i)) & 0xFFu));
}

template <typename U>
inline U get_uint(const unsigned char* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
  return value;
}

inline void put_f32(std::vector<unsigned char>& out, float v) {
  put_uint(out, std::bit_cast<std::uint32_t>(v));
}
inline void put_f64(std::vector<unsigned char>& out, double v) {
  put_uint(out, std::bit_cast<std::uint64_t>(v));
}
inline float get_f32(const unsigned char* p) {
  return std::bit_cast<float>(get_uint<std::uint32_t>(p));
}
inline double get_f64(const unsigned char* p) {
  return std::bit_cast<double>(get_uint<std::uint64_t>(p));
}

/// Bounds-checked sequential reader over a byte buffer.
class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  bool has(std::size_t n) const { return size_ - pos_ >= n; }
  std::size_t remaining() const { return size_ - pos_; }
  std::size_t position() const { return pos_; }

  template <typename U>
  U uint() {
    U v = get_uint<U>(take(sizeof(U)));
    return v;
  }
  float f32() { return get_f32(take(4)); }
  double f64() { return get_f64(take(8)); }
  std::string bytes(std::size_t n) {
    const unsigned char* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

 private:
  const unsigned char* take(std::size_t n);

  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<unsigned char>& bytes);
void append_file(const std::string& path, const std::vector<unsigned char>& bytes);

}  // namespace levk::binary
