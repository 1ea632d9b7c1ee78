#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccl/matrix.hpp"

namespace ccl {

// Binary blob layout (documented in docs/formats.md):
//   float matrices:  magic "CCLF" + row-major little-endian IEEE-754 float32
//   label vectors:   magic "CCLU" + little-endian uint32
// Shapes live in the manifest, not the blob; a length mismatch is a
// truncation error.

inline constexpr char kFloatBlobMagic[4] = {'C', 'C', 'L', 'F'};
inline constexpr char kLabelBlobMagic[4] = {'C', 'C', 'L', 'U'};

// FNV-1a 64-bit over the payload (magic excluded), hex-encoded in manifests.
std::uint64_t fnv1a64(const unsigned char* data, std::size_t n);
std::string fnv1a64_hex(const unsigned char* data, std::size_t n);

// Writes the matrix as float32; values are narrowed from double.
void write_float_blob(const std::filesystem::path& path, const Matrix& m);

// Reads a float32 blob of exactly rows*cols values, widened to double.
Matrix read_float_blob(const std::filesystem::path& path, std::size_t rows, std::size_t cols);

void write_label_blob(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels);
std::vector<std::uint32_t> read_label_blob(const std::filesystem::path& path, std::size_t count);

// Payload hash of an existing blob, for manifest verification.
std::string blob_payload_hash(const std::filesystem::path& path);

}  // namespace ccl
