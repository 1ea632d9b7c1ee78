#include "ccl/blobio.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ccl/errors.hpp"

namespace ccl {

namespace {

void put_u32_le(std::vector<unsigned char>& buf, std::uint32_t v) {
  buf.push_back(static_cast<unsigned char>(v & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

void check_magic(const std::vector<unsigned char>& bytes, const char magic[4],
                 const std::filesystem::path& path) {
  if (bytes.size() < 4) {
    throw FormatError("blob too short for magic: " + path.string());
  }
  if (std::memcmp(bytes.data(), magic, 4) != 0) {
    throw FormatError("bad blob magic in " + path.string());
  }
}

void check_payload_size(std::size_t actual, std::size_t expected_values,
                        const std::filesystem::path& path) {
  const std::size_t expected = expected_values * 4;
  if (actual != expected) {
    throw FormatError("truncated blob " + path.string() + ": payload " + std::to_string(actual) +
                      " bytes, expected " + std::to_string(expected));
  }
}

}  // namespace

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string fnv1a64_hex(const unsigned char* data, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a64(data, n);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

void write_float_blob(const std::filesystem::path& path, const Matrix& m) {
  std::vector<unsigned char> bytes;
  bytes.reserve(4 + m.size() * 4);
  bytes.insert(bytes.end(), kFloatBlobMagic, kFloatBlobMagic + 4);
  for (double v : m.values()) {
    put_u32_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  write_file_bytes(path, bytes);
}

Matrix read_float_blob(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
  const auto bytes = read_file_bytes(path);
  check_magic(bytes, kFloatBlobMagic, path);
  check_payload_size(bytes.size() - 4, rows * cols, path);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const float f = std::bit_cast<float>(get_u32_le(bytes.data() + 4 + i * 4));
    m.values()[i] = static_cast<double>(f);
  }
  return m;
}

void write_label_blob(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels) {
  std::vector<unsigned char> bytes;
  bytes.reserve(4 + labels.size() * 4);
  bytes.insert(bytes.end(), kLabelBlobMagic, kLabelBlobMagic + 4);
  for (std::uint32_t v : labels) put_u32_le(bytes, v);
  write_file_bytes(path, bytes);
}

std::vector<std::uint32_t> read_label_blob(const std::filesystem::path& path, std::size_t count) {
  const auto bytes = read_file_bytes(path);
  check_magic(bytes, kLabelBlobMagic, path);
  check_payload_size(bytes.size() - 4, count, path);
  std::vector<std::uint32_t> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = get_u32_le(bytes.data() + 4 + i * 4);
  return labels;
}

std::string blob_payload_hash(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 4) throw FormatError("blob too short for magic: " + path.string());
  return fnv1a64_hex(bytes.data() + 4, bytes.size() - 4);
}

}  // namespace ccl
