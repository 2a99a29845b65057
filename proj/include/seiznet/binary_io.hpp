#pragma once

// Little-endian byte buffer helpers shared by the recording and checkpoint
// file formats.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace seiznet::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_le(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_le(bits);
  }
  void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

  /// Appends CRC32 of everything written so far.
  void seal() { u32(crc32(bytes_)); }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked reader; every failure is a FormatError carrying the offset.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8(const char* field) { return get_le<std::uint8_t>(field); }
  std::uint16_t u16(const char* field) { return get_le<std::uint16_t>(field); }
  std::uint32_t u32(const char* field) { return get_le<std::uint32_t>(field); }
  std::uint64_t u64(const char* field) { return get_le<std::uint64_t>(field); }
  float f32(const char* field) {
    const auto bits = get_le<std::uint32_t>(field);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  double f64(const char* field) {
    const auto bits = get_le<std::uint64_t>(field);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  /// Throws if fewer than `count` bytes remain, reporting expected vs actual.
  void require(std::uint64_t count, const char* what) const;

  /// Verifies the trailing CRC32 over all bytes before the current offset.
  void check_crc();

  std::uint64_t offset() const { return offset_; }
  std::uint64_t remaining() const { return bytes_.size() - offset_; }

 private:
  template <typename T>
  T get_le(const char* field) {
    require(sizeof(T), field);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[offset_ + i]) << (8 * i));
    offset_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::uint64_t offset_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace seiznet::io
