#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "padprobe/tensor.hpp"

namespace padprobe {

/// Portable tensor weight file.
///
/// Layout (integers little-endian):
///
///   "PTWF" u16 version(=1) u32 tensor_count
///   tensor_count x { u16 name_len, name, u8 dtype(0 = f32), u8 ndim, ndim x u32 dims, f32 payload }
///   u32 meta_count
///   meta_count x { u16 key_len, key, u32 value_len, value }
///   u32 crc32 (IEEE) of every preceding byte
struct PtwTensor {
  std::string name;
  Tensor value;
};

struct PtwFile {
  std::vector<PtwTensor> tensors;
  std::vector<std::pair<std::string, std::string>> metadata;

  [[nodiscard]] const PtwTensor* find(std::string_view name) const;
  [[nodiscard]] std::optional<std::string> meta(std::string_view key) const;

  void add(std::string name, Tensor value);
  void set_meta(std::string key, std::string value);

  bool operator==(const PtwFile& other) const;
};

inline constexpr std::uint16_t kPtwVersion = 1;

class PtwError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, CrcMismatch, Malformed, Io };

  PtwError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> serialize_ptw(const PtwFile& file);
PtwFile parse_ptw(const std::vector<std::uint8_t>& bytes);

void write_ptw(const PtwFile& file, const std::filesystem::path& path);
PtwFile read_ptw(const std::filesystem::path& path);

/// CRC32 with the IEEE polynomial.
std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t size);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace padprobe
