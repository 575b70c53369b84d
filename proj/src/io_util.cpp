#include "intrinsic/io_util.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstring>
#include <fstream>
#include <memory>
#include <regex>
#include <sstream>

#include "intrinsic/errors.hpp"

namespace intrinsic::io {

namespace {

std::string hex(const unsigned char* d, unsigned int n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(n * 2);
  for (unsigned int i = 0; i < n; ++i) {
    s.push_back(digits[d[i] >> 4]);
    s.push_back(digits[d[i] & 0xf]);
  }
  return s;
}

}  // namespace

std::string sha256_hex(std::span<const unsigned char> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw Error("hash", "SHA-256 computation failed");
  }
  return hex(md.data(), len);
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

std::string sha256_tensor(const Tensor& t) {
  return sha256_hex({reinterpret_cast<const unsigned char*>(t.data()), t.size() * sizeof(double)});
}

void write_npy(const std::filesystem::path& path, const Tensor& t) {
  std::string shape = "(";
  for (std::size_t i = 0; i < t.shape().size(); ++i) shape += std::to_string(t.shape()[i]) + ", ";
  if (t.shape().size() > 1) shape.resize(shape.size() - 2);
  else if (t.shape().size() == 1) shape.resize(shape.size() - 1);
  shape += ")";
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape + ", }";
  // magic(6) + version(2) + header_len(2) + header + '\n' must be a multiple of 64.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  os.put(static_cast<char>(len & 0xff));
  os.put(static_cast<char>(len >> 8));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!os) throw IoError("failed writing " + path.string());
}

Tensor read_npy(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, "\x93NUMPY", 6) != 0 || magic[6] != 1) {
    throw DataError("not a v1 .npy file: " + path.string());
  }
  unsigned char lenb[2];
  if (!is.read(reinterpret_cast<char*>(lenb), 2)) throw DataError("truncated .npy: " + path.string());
  std::string header(static_cast<std::size_t>(lenb[0] | (lenb[1] << 8)), '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(header.size()))) {
    throw DataError("truncated .npy header: " + path.string());
  }
  if (header.find("'descr': '<f8'") == std::string::npos ||
      header.find("'fortran_order': False") == std::string::npos) {
    throw DataError("unsupported .npy layout (need little-endian float64, C order): " + path.string());
  }
  std::smatch m;
  static const std::regex shape_re(R"('shape': \(([0-9, ]*)\))");
  if (!std::regex_search(header, m, shape_re)) throw DataError("malformed .npy shape: " + path.string());
  Shape shape;
  std::stringstream ss(m[1].str());
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_not_of(' ') == std::string::npos) continue;
    shape.push_back(std::stoll(tok));
  }
  std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
  if (!values.empty() &&
      !is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
    throw DataError("truncated .npy payload: " + path.string());
  }
  return Tensor(std::move(shape), std::move(values));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace intrinsic::io
