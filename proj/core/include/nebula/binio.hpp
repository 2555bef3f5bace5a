#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nebula {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept;
std::uint32_t crc32(std::string_view bytes) noexcept;

// Little-endian container writer shared by the .nebwin/.nebwt/.nebs/.nebt
// formats. Every container ends with a CRC32 over all preceding bytes.
class ByteWriter {
 public:
  void magic(std::string_view four_cc);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void str(std::string_view s);  // u32 length + bytes

  // Appends the CRC32 trailer and returns the finished buffer.
  std::vector<std::uint8_t> finish();
  const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Reads a container produced by ByteWriter. Construction verifies the CRC32
// trailer; every read past the payload throws CorruptContainer.
class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> bytes, std::string source);

  void expect_magic(std::string_view four_cc);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  std::string str();

  bool at_end() const noexcept { return pos_ == end_; }
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::vector<std::uint8_t> buf_;
  std::string source_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_file_text(const std::filesystem::path& path);
void write_file_text(const std::filesystem::path& path, std::string_view text);

// Lower-case hex SHA-256 of a file's contents. Containers end in their own
// CRC32, so a whole-file CRC32 would be the same constant for all of them.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace nebula
