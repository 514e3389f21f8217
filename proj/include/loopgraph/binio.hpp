#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "loopgraph/errors.hpp"

// All on-disk binary payloads are little-endian. We target LE hosts only.
static_assert(std::endian::native == std::endian::little,
              "loopgraph binary formats require a little-endian host");

namespace lg {

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }

  void magic(const char tag[4]) { out_.write(tag, 4); }
  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f32_array(const float* data, size_t n) { raw(data, n * 4); }
  void bytes(const void* data, size_t n) { raw(data, n); }

  void close() {
    out_.close();
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  void raw(const void* p, size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed: " + path_);
  }

  std::string path_;
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open for reading: " + path);
    in_.seekg(0, std::ios::end);
    size_ = static_cast<uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  void expect_magic(const char tag[4]) {
    char buf[4] = {0, 0, 0, 0};
    raw(buf, 4);
    if (std::memcmp(buf, tag, 4) != 0) {
      throw FormatError("bad magic in " + path_ + ": expected '" + std::string(tag, 4) +
                        "', got '" + std::string(buf, 4) + "'");
    }
  }

  uint8_t u8() { uint8_t v; raw(&v, 1); return v; }
  uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
  uint64_t u64() { uint64_t v; raw(&v, 8); return v; }
  float f32() { float v; raw(&v, 4); return v; }
  void f32_array(float* data, size_t n) { raw(data, n * 4); }

  uint64_t size() const { return size_; }
  uint64_t remaining() {
    return size_ - static_cast<uint64_t>(in_.tellg());
  }

  // Dimension headers must account for the file size exactly.
  void expect_exact_remaining(uint64_t n, const std::string& what) {
    if (remaining() != n) {
      throw DimensionError(path_ + ": " + what + " expects " + std::to_string(n) +
                           " payload bytes, file has " + std::to_string(remaining()));
    }
  }

 private:
  void raw(void* p, size_t n) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw DimensionError("truncated read in " + path_);
    }
  }

  std::string path_;
  std::ifstream in_;
  uint64_t size_ = 0;
};

}  // namespace lg
