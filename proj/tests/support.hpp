#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>

#include "intrinsic/nets.hpp"
#include "intrinsic/tensor.hpp"

namespace intrinsic::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "intrinsic_test_XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

/// Smallest networks that still exercise every layer type; 8x8 inputs.
inline nets::BundleConfig tiny_bundle() {
  nets::BundleConfig cfg;
  cfg.encoder = {3, 4, 1, 3};
  cfg.generator = {3, 4, 1, 3};
  cfg.discriminator.channel_schedule = {4, 8, 8, 8, 1};
  cfg.discriminator.strides = {1, 1, 1, 1, 1};
  return cfg;
}

/// Central difference of f at t[i].
inline double central_difference(Tensor& t, std::size_t i, double h, const std::function<double()>& f) {
  const double orig = t[i];
  t[i] = orig + h;
  const double up = f();
  t[i] = orig - h;
  const double down = f();
  t[i] = orig;
  return (up - down) / (2.0 * h);
}

inline int run_cli(const std::string& args, std::string* output = nullptr) {
  const auto log = std::filesystem::temp_directory_path() /
                   ("intrinsic_cli_" + std::to_string(std::random_device{}()) + ".log");
  const std::string cmd = std::string(INTRINSIC_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream is(log);
    *output = std::string(std::istreambuf_iterator<char>(is), {});
  }
  std::filesystem::remove(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace intrinsic::testing
