// Little-endian binary container helpers.
//
// Every container starts with the same 16-byte header:
//   bytes 0..7   magic (ASCII, zero padded)
//   bytes 8..11  format version (u32)
//   bytes 12..15 reserved, zero (u32)
#pragma once

#include "qstd/common.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace qstd::io {

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void header(const char (&magic)[9], std::uint32_t version) {
    raw(magic, 8);
    u32(version);
    u32(0);
  }
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  const std::vector<char>& bytes() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("write failed: " + path);
  }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data, std::string origin = "<memory>")
      : buf_(std::move(data)), origin_(std::move(origin)) {}

  static Reader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader(std::move(data), path);
  }

  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::int32_t i32() { return pod<std::int32_t>(); }
  float f32() { return pod<float>(); }
  double f64() { return pod<double>(); }
  std::string str() {
    auto n = u32();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }

  /// Reads and checks the 16-byte header; returns the version.
  std::uint32_t header(const char (&magic)[9], std::uint32_t max_version) {
    char got[8];
    raw(got, 8);
    if (std::memcmp(got, magic, 8) != 0) {
      throw IoError(origin_ + ": bad magic, expected " + std::string(magic, 8));
    }
    auto version = u32();
    (void)u32();
    if (version == 0 || version > max_version) {
      throw IoError(origin_ + ": unsupported version " + std::to_string(version));
    }
    return version;
  }

  bool at_end() const { return pos_ == buf_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  template <typename T>
  T pod() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw IoError(origin_ + ": truncated container");
  }

  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string origin_;
};

}  // namespace qstd::io
