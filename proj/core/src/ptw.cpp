#include "padprobe/ptw.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

namespace padprobe {

static_assert(std::endian::native == std::endian::little,
              "PTW payloads are copied verbatim; big-endian hosts need byte swapping");
static_assert(sizeof(float) == 4);

const PtwTensor* PtwFile::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::optional<std::string> PtwFile::meta(std::string_view key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

void PtwFile::add(std::string name, Tensor value) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate PTW tensor name: " + name);
  tensors.push_back({std::move(name), std::move(value)});
}

void PtwFile::set_meta(std::string key, std::string value) {
  for (auto& [k, v] : metadata) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  metadata.emplace_back(std::move(key), std::move(value));
}

bool PtwFile::operator==(const PtwFile& other) const {
  if (tensors.size() != other.tensors.size() || metadata != other.metadata) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name != other.tensors[i].name) return false;
    if (tensors[i].value.dims() != other.tensors[i].value.dims()) return false;
    if (!tensors[i].value.bit_equal(other.tensors[i].value)) return false;
  }
  return true;
}

std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) u8(static_cast<std::uint8_t>(v >> s));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& out() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  void need(std::size_t n, const char* what) const {
    if (size_ - pos_ < n) {
      throw PtwError(PtwError::Kind::Truncated, std::string("PTW truncated while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return data_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | data_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  void copy(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, data_ + pos_, n);
    pos_ += n;
  }
  [[nodiscard]] std::size_t remaining() const { return size_ - pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void check_len(std::size_t n, std::size_t limit, const std::string& what) {
  if (n > limit) throw PtwError(PtwError::Kind::Malformed, what + " too long for PTW");
}

}  // namespace

std::vector<std::uint8_t> serialize_ptw(const PtwFile& file) {
  Writer w;
  w.bytes("PTWF", 4);
  w.u16(kPtwVersion);
  check_len(file.tensors.size(), std::numeric_limits<std::uint32_t>::max(), "tensor list");
  w.u32(static_cast<std::uint32_t>(file.tensors.size()));
  std::set<std::string_view> seen;
  for (const auto& t : file.tensors) {
    if (!seen.insert(t.name).second) {
      throw PtwError(PtwError::Kind::Malformed, "duplicate PTW tensor name: " + t.name);
    }
    if (t.value.empty()) throw PtwError(PtwError::Kind::Malformed, "empty tensor: " + t.name);
    check_len(t.name.size(), 0xFFFF, "tensor name " + t.name);
    check_len(t.value.rank(), 0xFF, "rank of " + t.name);
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(0);
    w.u8(static_cast<std::uint8_t>(t.value.rank()));
    for (std::size_t d : t.value.dims()) {
      check_len(d, std::numeric_limits<std::uint32_t>::max(), "dimension of " + t.name);
      w.u32(static_cast<std::uint32_t>(d));
    }
    w.bytes(t.value.data(), t.value.size() * sizeof(float));
  }
  w.u32(static_cast<std::uint32_t>(file.metadata.size()));
  for (const auto& [k, v] : file.metadata) {
    check_len(k.size(), 0xFFFF, "metadata key " + k);
    check_len(v.size(), std::numeric_limits<std::uint32_t>::max(), "metadata value for " + k);
    w.u16(static_cast<std::uint16_t>(k.size()));
    w.bytes(k.data(), k.size());
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.bytes(v.data(), v.size());
  }
  auto& out = w.out();
  w.u32(crc32_ieee(out.data(), out.size()));
  return std::move(out);
}

PtwFile parse_ptw(const std::vector<std::uint8_t>& bytes) {
  const std::size_t magic_len = std::min<std::size_t>(bytes.size(), 4);
  if (magic_len > 0 && std::memcmp(bytes.data(), "PTWF", magic_len) != 0) {
    throw PtwError(PtwError::Kind::BadMagic, "not a PTW file (bad magic)");
  }
  if (bytes.size() < 4) throw PtwError(PtwError::Kind::Truncated, "PTW truncated inside magic");
  // Structure is parsed first so that a short file reports truncation; the
  // checksum is verified once the layout is known to be complete.
  Reader r(bytes.data() + 4, bytes.size() - 4);
  const std::uint16_t version = r.u16("version");
  if (version != kPtwVersion) {
    throw PtwError(PtwError::Kind::BadVersion, "unsupported PTW version " + std::to_string(version));
  }

  PtwFile file;
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16("tensor name length");
    std::string name = r.str(name_len, "tensor name");
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != 0) {
      throw PtwError(PtwError::Kind::Malformed,
                     "tensor " + name + ": unsupported dtype " + std::to_string(dtype));
    }
    const std::uint8_t ndim = r.u8("rank");
    if (ndim == 0) throw PtwError(PtwError::Kind::Malformed, "tensor " + name + ": rank 0");
    Shape dims(ndim);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = r.u32("dims");
      if (d == 0) throw PtwError(PtwError::Kind::Malformed, "tensor " + name + ": zero extent");
      if (n > r.remaining() / d) {
        throw PtwError(PtwError::Kind::Truncated, "PTW truncated in payload of " + name);
      }
      n *= d;
    }
    std::vector<float> values(n);
    r.copy(values.data(), n * sizeof(float), "tensor payload");
    if (file.find(name) != nullptr) {
      throw PtwError(PtwError::Kind::Malformed, "duplicate PTW tensor name: " + name);
    }
    file.tensors.push_back({std::move(name), Tensor(std::move(dims), std::move(values))});
  }
  const std::uint32_t meta_count = r.u32("metadata count");
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    const std::uint16_t key_len = r.u16("metadata key length");
    std::string key = r.str(key_len, "metadata key");
    const std::uint32_t value_len = r.u32("metadata value length");
    std::string value = r.str(value_len, "metadata value");
    file.metadata.emplace_back(std::move(key), std::move(value));
  }
  r.need(4, "checksum");
  if (r.remaining() != 4) {
    throw PtwError(PtwError::Kind::Malformed,
                   std::to_string(r.remaining() - 4) + " trailing bytes after PTW checksum");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 3; i >= 0; --i) stored = (stored << 8) | bytes[body + static_cast<std::size_t>(i)];
  if (stored != crc32_ieee(bytes.data(), body)) {
    throw PtwError(PtwError::Kind::CrcMismatch, "PTW checksum mismatch");
  }
  return file;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PtwError(PtwError::Kind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PtwError(PtwError::Kind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PtwError(PtwError::Kind::Io, "write failed: " + path.string());
}

void write_ptw(const PtwFile& file, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_ptw(file));
}

PtwFile read_ptw(const std::filesystem::path& path) {
  try {
    return parse_ptw(read_file_bytes(path));
  } catch (const PtwError& e) {
    throw PtwError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace padprobe
