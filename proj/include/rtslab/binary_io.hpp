#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "rtslab/errors.hpp"

// Little-endian binary records used by every rtslab file format.
namespace rtslab::io {

static_assert(std::endian::native == std::endian::little, "file formats assume little-endian");

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  void pod(T value) {
    os_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void floats(std::span<const float> values) {
    os_.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  }
  void bytes(std::string_view raw) { os_.write(raw.data(), static_cast<std::streamsize>(raw.size())); }
  void string(std::string_view s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T pod() {
    T value{};
    read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
  }
  void floats(std::span<float> out) { read(reinterpret_cast<char*>(out.data()), out.size() * sizeof(float)); }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  std::string string(std::size_t max_len = 1u << 20) {
    const auto n = pod<std::uint32_t>();
    if (n > max_len) throw FormatError(source_ + ": implausible string length " + std::to_string(n));
    return bytes(n);
  }
  void expect_magic(std::string_view magic) {
    if (bytes(magic.size()) != magic) {
      throw FormatError(source_ + ": not a " + std::string(magic) + " file (bad magic)");
    }
  }
  const std::string& source() const { return source_; }

 private:
  void read(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw FormatError(source_ + ": truncated file");
    }
  }

  std::istream& is_;
  std::string source_;
};

}  // namespace rtslab::io
