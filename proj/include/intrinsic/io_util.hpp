#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "intrinsic/tensor.hpp"

namespace intrinsic::io {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);
/// Digest of the raw float64 payload (shape excluded).
std::string sha256_tensor(const Tensor& t);

/// NumPy .npy v1.0, little-endian float64, C order.
void write_npy(const std::filesystem::path& path, const Tensor& t);
Tensor read_npy(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace intrinsic::io
