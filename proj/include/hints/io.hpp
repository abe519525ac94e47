#pragma once

#include <array>
#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hints/error.hpp"

namespace hints::io {

/// FNV-1a, 64 bit. Used as the content hash of every persisted artifact.
inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                           std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Little-endian byte sink.
class Writer {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void raw(std::string_view s) {
    bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void c128(std::complex<double> v) {
    f64(v.real());
    f64(v.imag());
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::uint64_t hash() const { return fnv1a(buf_); }

  /// Appends the content hash of everything written so far.
  void seal() { u64(hash()); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
    if (!out) throw FormatError("write failed for '" + path + "'");
  }

 private:
  template <typename U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
      v = static_cast<U>(v >> 8);
    }
  }

  std::vector<std::uint8_t> buf_;
};

/// Little-endian byte source with bounds checking.
class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

  static Reader from_file(const std::string& path) { return Reader(read_file(path)); }

  std::string raw(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::complex<double> c128() {
    double re = f64();
    return {re, f64()};
  }
  std::string str() { return raw(u32()); }

  /// Checks the trailing content hash written by Writer::seal().
  void verify_seal() const {
    if (buf_.size() < 8) throw FormatError("file too short for content hash");
    std::span<const std::uint8_t> body(buf_.data(), buf_.size() - 8);
    std::uint64_t stored = 0;
    for (int i = 7; i >= 0; --i) stored = (stored << 8) | buf_[body.size() + static_cast<std::size_t>(i)];
    if (fnv1a(body) != stored) throw HashMismatchError("content hash mismatch");
  }

  std::uint64_t sealed_hash() const {
    std::uint64_t stored = 0;
    for (int i = 7; i >= 0; --i) stored = (stored << 8) | buf_[buf_.size() - 8 + static_cast<std::size_t>(i)];
    return stored;
  }

  std::size_t position() const { return pos_; }
  std::size_t size() const { return buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("unexpected end of data");
  }
  template <typename U>
  U get_le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

/// Reads a 5-byte magic such as "HNET1" and reports version mismatches separately
/// from foreign files.
inline void expect_magic(Reader& r, std::string_view family, char version) {
  std::string magic = r.raw(family.size() + 1);
  if (magic.substr(0, family.size()) != family)
    throw FormatError("bad magic: expected " + std::string(family));
  if (magic.back() != version)
    throw VersionMismatchError(std::string(family) + " version " + magic.back() +
                               " unsupported (expected " + version + ")");
}

}  // namespace hints::io
