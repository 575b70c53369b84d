#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "intrinsic/autograd.hpp"
#include "intrinsic/ops.hpp"
#include "json.hpp"

namespace intrinsic::nets {

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kInitStd = 0.02;

struct EncoderConfig {
  int in_channels = 3;
  int base_channels = 64;
  int num_residual_blocks = 4;
  int out_channels = 3;

  void validate() const;
};

struct GeneratorConfig {
  int in_channels = 3;
  int base_channels = 64;
  int num_residual_blocks = 9;
  int out_channels = 3;

  void validate() const;
};

struct DiscriminatorConfig {
  int in_channels = 3;
  std::vector<int> channel_schedule{64, 128, 256, 512, 1};
  std::vector<int> strides{2, 2, 2, 1, 1};
  double leaky_slope = 0.2;

  void validate() const;
  /// Smallest square input that still yields a non-empty score map.
  std::int64_t min_input_size() const;
  /// Score-map extent for an input extent (0 when too small).
  std::int64_t score_size(std::int64_t input) const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

enum class LayerKind {
  Conv,
  ConvTranspose,
  InstanceNorm,
  ReLU,
  LeakyReLU,
  Tanh,
  Sigmoid,
  ResidualBlock,
};

std::string to_string(LayerKind kind);

/// Flat description of one layer, produced by introspection.
struct LayerInfo {
  std::string name;
  LayerKind kind;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  std::string padding_mode{};  ///< "zero" or "reflect" for convolutions
};

struct NamedParameter {
  std::string name;
  ag::Var var;
};

class Module {
 public:
  virtual ~Module() = default;
  virtual ag::Var forward(const ag::Var& x) const = 0;
  virtual void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const = 0;
  virtual void describe(const std::string& prefix, std::vector<LayerInfo>& out) const = 0;
};

using ModulePtr = std::unique_ptr<Module>;

class Sequential {
 public:
  void add(std::string name, ModulePtr m);
  ag::Var forward(const ag::Var& x) const;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const;
  void describe(const std::string& prefix, std::vector<LayerInfo>& out) const;

 private:
  std::vector<std::pair<std::string, ModulePtr>> items_;
};

/// Common surface of the three network families.
class Network {
 public:
  virtual ~Network() = default;
  Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  /// Differentiable forward pass on an NCHW batch.
  ag::Var forward(const ag::Var& x) const;
  /// Non-recording forward pass.
  Tensor operator()(const Tensor& x) const;

  std::vector<NamedParameter> parameters() const;
  std::vector<LayerInfo> layers() const;

 protected:
  virtual void check_input(const Shape& shape) const = 0;
  Sequential body_;
};

class Encoder final : public Network {
 public:
  Encoder(const EncoderConfig& cfg, std::mt19937_64& rng);
  const EncoderConfig& config() const { return cfg_; }

 protected:
  void check_input(const Shape& shape) const override;

 private:
  EncoderConfig cfg_;
};

class Generator final : public Network {
 public:
  Generator(const GeneratorConfig& cfg, std::mt19937_64& rng);
  const GeneratorConfig& config() const { return cfg_; }

 protected:
  void check_input(const Shape& shape) const override;

 private:
  GeneratorConfig cfg_;
};

class Discriminator final : public Network {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng);
  const DiscriminatorConfig& config() const { return cfg_; }

 protected:
  void check_input(const Shape& shape) const override;

 private:
  DiscriminatorConfig cfg_;
};

std::unique_ptr<Encoder> build_encoder(const EncoderConfig& cfg, std::mt19937_64& rng);
std::unique_ptr<Generator> build_generator(const GeneratorConfig& cfg, std::mt19937_64& rng);
std::unique_ptr<Discriminator> build_discriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng);

/// Encoder output with the spatial size of its input; values in (-1, 1).
struct IntrinsicRepresentation {
  Tensor values;
  std::optional<std::string> source_domain;
};

IntrinsicRepresentation encode(const Encoder& encoder, const Tensor& batch,
                               std::optional<std::string> source_domain = std::nullopt);
Tensor generate(const Generator& generator, const IntrinsicRepresentation& rep);
Tensor discriminate(const Discriminator& discriminator, const Tensor& batch);

struct BundleConfig {
  EncoderConfig encoder;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;

  void validate() const;
};

void to_json(nlohmann::json& j, const BundleConfig& c);
void from_json(const nlohmann::json& j, BundleConfig& c);

/// One shared encoder plus a generator and a discriminator per domain.
class ModelBundle {
 public:
  ModelBundle(const BundleConfig& cfg, std::vector<std::string> domains, std::uint64_t seed);

  const BundleConfig& config() const { return cfg_; }
  const std::vector<std::string>& domains() const { return domains_; }
  std::uint64_t seed() const { return seed_; }

  const Encoder& encoder() const { return *encoder_; }
  const Generator& generator(const std::string& domain) const;
  const Discriminator& discriminator(const std::string& domain) const;

  /// Every parameter, keyed "encoder.*", "generator.<domain>.*" and
  /// "discriminator.<domain>.*".
  std::vector<NamedParameter> parameters() const;
  std::vector<NamedParameter> encoder_parameters() const;
  std::vector<NamedParameter> generator_parameters(const std::string& domain) const;
  std::vector<NamedParameter> discriminator_parameters(const std::string& domain) const;

  std::vector<std::pair<std::string, Tensor>> state() const;
  /// Overwrite parameter values; names and shapes must match exactly.
  void load_state(const std::vector<std::pair<std::string, Tensor>>& arrays);

 private:
  BundleConfig cfg_;
  std::vector<std::string> domains_;
  std::uint64_t seed_;
  std::unique_ptr<Encoder> encoder_;
  std::map<std::string, std::unique_ptr<Generator>> generators_;
  std::map<std::string, std::unique_ptr<Discriminator>> discriminators_;
};

void set_requires_grad(const std::vector<NamedParameter>& params, bool on);

}  // namespace intrinsic::nets
