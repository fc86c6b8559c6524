// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian primitives shared by the checkpoint and cache formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace infillgen::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n);
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  /// LEB128 unsigned varint.
  void varint(std::uint64_t v);
  /// u32 length prefix then raw bytes.
  void string(std::string_view s);

 private:
  std::ostream& out_;
};

/// Throws DataError on truncated input.
class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  void bytes(void* data, std::size_t n);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::uint64_t varint();
  std::string string();
  bool at_end();

 private:
  std::istream& in_;
};

/// 64-bit FNV-1a, used for corpus and payload fingerprints.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n);
  void update_u64(std::uint64_t v) { update(&v, sizeof v); }
  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace infillgen::io
