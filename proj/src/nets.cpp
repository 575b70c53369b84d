#include "intrinsic/nets.hpp"

#include <algorithm>
#include <set>

#include "intrinsic/errors.hpp"

namespace intrinsic::nets {

namespace {

void require_positive(int v, const char* what) {
  if (v < 1) throw ConfigError(std::string(what) + " must be >= 1, got " + std::to_string(v));
}

Tensor gaussian(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  Tensor t(shape);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

class Conv2d final : public Module {
 public:
  Conv2d(int in, int out, int kernel, int stride, int padding, bool reflect, std::mt19937_64& rng)
      : in_(in), out_(out), geom_{kernel, stride, reflect ? 0 : padding}, pad_(padding), reflect_(reflect),
        weight_(gaussian({out, in, kernel, kernel}, rng), true),
        bias_(Tensor(Shape{out}, 0.0), true) {}

  ag::Var forward(const ag::Var& x) const override {
    ag::Var in = reflect_ && pad_ > 0 ? ag::reflection_pad2d(x, pad_) : x;
    return ag::conv2d(in, weight_, bias_, geom_);
  }
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const override {
    out.push_back({prefix + ".weight", weight_});
    out.push_back({prefix + ".bias", bias_});
  }
  void describe(const std::string& prefix, std::vector<LayerInfo>& out) const override {
    out.push_back({prefix, LayerKind::Conv, in_, out_, geom_.kernel, geom_.stride, pad_,
                   reflect_ ? "reflect" : "zero"});
  }

 private:
  int in_, out_;
  ag::ConvGeometry geom_;
  int pad_;
  bool reflect_;
  ag::Var weight_, bias_;
};

class ConvTranspose2d final : public Module {
 public:
  ConvTranspose2d(int in, int out, int kernel, int stride, int padding, int output_padding,
                  std::mt19937_64& rng)
      : in_(in), out_(out), geom_{kernel, stride, padding}, output_padding_(output_padding),
        weight_(gaussian({in, out, kernel, kernel}, rng), true),
        bias_(Tensor(Shape{out}, 0.0), true) {}

  ag::Var forward(const ag::Var& x) const override {
    return ag::conv_transpose2d(x, weight_, bias_, geom_, output_padding_);
  }
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const override {
    out.push_back({prefix + ".weight", weight_});
    out.push_back({prefix + ".bias", bias_});
  }
  void describe(const std::string& prefix, std::vector<LayerInfo>& out) const override {
    out.push_back({prefix, LayerKind::ConvTranspose, in_, out_, geom_.kernel, geom_.stride,
                   geom_.padding, "zero"});
  }

 private:
  int in_, out_;
  ag::ConvGeometry geom_;
  int output_padding_;
  ag::Var weight_, bias_;
};

class InstanceNorm2d final : public Module {
 public:
  explicit InstanceNorm2d(int channels)
      : channels_(channels), gamma_(Tensor(Shape{channels}, 1.0), true),
        beta_(Tensor(Shape{channels}, 0.0), true) {}

  ag::Var forward(const ag::Var& x) const override {
    return ag::instance_norm2d(x, gamma_, beta_, kNormEpsilon);
  }
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const override {
    out.push_back({prefix + ".gamma", gamma_});
    out.push_back({prefix + ".beta", beta_});
  }
  void describe(const std::string& prefix, std::vector<LayerInfo>& out) const override {
    out.push_back({.name = prefix, .kind = LayerKind::InstanceNorm, .in_channels = channels_, .out_channels = channels_});
  }

 private:
  int channels_;
  ag::Var gamma_, beta_;
};

class Activation final : public Module {
 public:
  explicit Activation(LayerKind kind, double slope = 0.0) : kind_(kind), slope_(slope) {}

  ag::Var forward(const ag::Var& x) const override {
    switch (kind_) {
      case LayerKind::ReLU: return ag::relu(x);
      case LayerKind::LeakyReLU: return ag::leaky_relu(x, slope_);
      case LayerKind::Tanh: return ag::tanh(x);
      case LayerKind::Sigmoid: return ag::sigmoid(x);
      default: throw ConfigError("not an activation: " + to_string(kind_));
    }
  }
  void collect_parameters(const std::string&, std::vector<NamedParameter>&) const override {}
  void describe(const std::string& prefix, std::vector<LayerInfo>& out) const override {
    out.push_back({.name = prefix, .kind = kind_});
  }

 private:
  LayerKind kind_;
  double slope_;
};

// conv3x3 + IN + ReLU + conv3x3 + IN, added to the input.
class ResidualBlock final : public Module {
 public:
  ResidualBlock(int channels, std::mt19937_64& rng) : channels_(channels) {
    body_.add("conv1", std::make_unique<Conv2d>(channels, channels, 3, 1, 1, true, rng));
    body_.add("norm1", std::make_unique<InstanceNorm2d>(channels));
    body_.add("relu", std::make_unique<Activation>(LayerKind::ReLU));
    body_.add("conv2", std::make_unique<Conv2d>(channels, channels, 3, 1, 1, true, rng));
    body_.add("norm2", std::make_unique<InstanceNorm2d>(channels));
  }

  ag::Var forward(const ag::Var& x) const override { return ag::add(x, body_.forward(x)); }
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const override {
    body_.collect_parameters(prefix, out);
  }
  void describe(const std::string& prefix, std::vector<LayerInfo>& out) const override {
    out.push_back({.name = prefix, .kind = LayerKind::ResidualBlock, .in_channels = channels_, .out_channels = channels_});
    body_.describe(prefix, out);
  }

 private:
  int channels_;
  Sequential body_;
};

void require_image_batch(const Shape& shape, int channels, const char* who) {
  if (shape.size() != 4) {
    throw ShapeError(std::string(who) + " expects an NCHW batch, got " + shape_str(shape));
  }
  if (shape[1] != channels) {
    throw ShapeError(std::string(who) + " expects " + std::to_string(channels) + " channels, got " +
                     shape_str(shape));
  }
}

}  // namespace

void EncoderConfig::validate() const {
  require_positive(in_channels, "encoder in_channels");
  require_positive(base_channels, "encoder base_channels");
  require_positive(num_residual_blocks, "encoder num_residual_blocks");
  require_positive(out_channels, "encoder out_channels");
}

void GeneratorConfig::validate() const {
  require_positive(in_channels, "generator in_channels");
  require_positive(base_channels, "generator base_channels");
  require_positive(num_residual_blocks, "generator num_residual_blocks");
  require_positive(out_channels, "generator out_channels");
}

void DiscriminatorConfig::validate() const {
  require_positive(in_channels, "discriminator in_channels");
  if (channel_schedule.size() != 5) throw ConfigError("discriminator channel schedule must have 5 stages");
  if (strides.size() != channel_schedule.size()) {
    throw ConfigError("discriminator strides must match the channel schedule length");
  }
  if (channel_schedule.back() != 1) throw ConfigError("discriminator channel schedule must end in 1");
  for (int c : channel_schedule) require_positive(c, "discriminator channels");
  for (int s : strides) require_positive(s, "discriminator stride");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky slope must lie in [0, 1)");
}

std::int64_t DiscriminatorConfig::score_size(std::int64_t input) const {
  std::int64_t n = input;
  for (int s : strides) {
    n = ag::conv_out_size(n, ag::ConvGeometry{4, s, 1});
    if (n <= 0) return 0;
  }
  return n;
}

std::int64_t DiscriminatorConfig::min_input_size() const {
  std::int64_t n = 1;
  while (score_size(n) < 1) ++n;
  return n;
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"base_channels", c.base_channels},
       {"num_residual_blocks", c.num_residual_blocks},
       {"out_channels", c.out_channels}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.in_channels = j.value("in_channels", c.in_channels);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.num_residual_blocks = j.value("num_residual_blocks", c.num_residual_blocks);
  c.out_channels = j.value("out_channels", c.out_channels);
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"base_channels", c.base_channels},
       {"num_residual_blocks", c.num_residual_blocks},
       {"out_channels", c.out_channels}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  c.in_channels = j.value("in_channels", c.in_channels);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.num_residual_blocks = j.value("num_residual_blocks", c.num_residual_blocks);
  c.out_channels = j.value("out_channels", c.out_channels);
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"channel_schedule", c.channel_schedule},
       {"strides", c.strides},
       {"leaky_slope", c.leaky_slope}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  c.in_channels = j.value("in_channels", c.in_channels);
  c.channel_schedule = j.value("channel_schedule", c.channel_schedule);
  c.strides = j.value("strides", c.strides);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ConvTranspose: return "conv_transpose";
    case LayerKind::InstanceNorm: return "instance_norm";
    case LayerKind::ReLU: return "relu";
    case LayerKind::LeakyReLU: return "leaky_relu";
    case LayerKind::Tanh: return "tanh";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::ResidualBlock: return "residual_block";
  }
  return "unknown";
}

void Sequential::add(std::string name, ModulePtr m) { items_.emplace_back(std::move(name), std::move(m)); }

ag::Var Sequential::forward(const ag::Var& x) const {
  ag::Var h = x;
  for (const auto& [name, m] : items_) h = m->forward(h);
  return h;
}

void Sequential::collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const {
  for (const auto& [name, m] : items_) m->collect_parameters(prefix.empty() ? name : prefix + "." + name, out);
}

void Sequential::describe(const std::string& prefix, std::vector<LayerInfo>& out) const {
  for (const auto& [name, m] : items_) m->describe(prefix.empty() ? name : prefix + "." + name, out);
}

ag::Var Network::forward(const ag::Var& x) const {
  check_input(x.shape());
  return body_.forward(x);
}

Tensor Network::operator()(const Tensor& x) const {
  ag::NoGradGuard guard;
  return forward(ag::Var(x)).value();
}

std::vector<NamedParameter> Network::parameters() const {
  std::vector<NamedParameter> out;
  body_.collect_parameters("", out);
  return out;
}

std::vector<LayerInfo> Network::layers() const {
  std::vector<LayerInfo> out;
  body_.describe("", out);
  return out;
}

Encoder::Encoder(const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.base_channels;
  body_.add("in_conv", std::make_unique<Conv2d>(cfg_.in_channels, c, 7, 1, 3, true, rng));
  body_.add("in_norm", std::make_unique<InstanceNorm2d>(c));
  body_.add("in_relu", std::make_unique<Activation>(LayerKind::ReLU));
  for (int i = 0; i < cfg_.num_residual_blocks; ++i) {
    body_.add("res" + std::to_string(i), std::make_unique<ResidualBlock>(c, rng));
  }
  body_.add("out_conv", std::make_unique<Conv2d>(c, cfg_.out_channels, 7, 1, 3, true, rng));
  body_.add("out_tanh", std::make_unique<Activation>(LayerKind::Tanh));
}

void Encoder::check_input(const Shape& shape) const {
  require_image_batch(shape, cfg_.in_channels, "encoder");
  // Reflection padding of the 7x7 stages needs at least 4 pixels per side.
  if (shape[2] < 4 || shape[3] < 4) {
    throw ShapeError("encoder input must be at least 4x4, got " + shape_str(shape));
  }
}

Generator::Generator(const GeneratorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.base_channels;
  body_.add("in_conv", std::make_unique<Conv2d>(cfg_.in_channels, c, 7, 1, 3, true, rng));
  body_.add("in_norm", std::make_unique<InstanceNorm2d>(c));
  body_.add("in_relu", std::make_unique<Activation>(LayerKind::ReLU));
  int ch = c;
  for (int i = 0; i < 2; ++i) {
    const std::string tag = "down" + std::to_string(i);
    body_.add(tag + ".conv", std::make_unique<Conv2d>(ch, ch * 2, 3, 2, 1, false, rng));
    body_.add(tag + ".norm", std::make_unique<InstanceNorm2d>(ch * 2));
    body_.add(tag + ".relu", std::make_unique<Activation>(LayerKind::ReLU));
    ch *= 2;
  }
  for (int i = 0; i < cfg_.num_residual_blocks; ++i) {
    body_.add("res" + std::to_string(i), std::make_unique<ResidualBlock>(ch, rng));
  }
  for (int i = 0; i < 2; ++i) {
    const std::string tag = "up" + std::to_string(i);
    body_.add(tag + ".conv", std::make_unique<ConvTranspose2d>(ch, ch / 2, 3, 2, 1, 1, rng));
    body_.add(tag + ".norm", std::make_unique<InstanceNorm2d>(ch / 2));
    body_.add(tag + ".relu", std::make_unique<Activation>(LayerKind::ReLU));
    ch /= 2;
  }
  body_.add("out_conv", std::make_unique<Conv2d>(ch, cfg_.out_channels, 7, 1, 3, true, rng));
  body_.add("out_tanh", std::make_unique<Activation>(LayerKind::Tanh));
}

void Generator::check_input(const Shape& shape) const {
  require_image_batch(shape, cfg_.in_channels, "generator");
  if (shape[2] % 4 != 0 || shape[3] % 4 != 0) {
    throw ShapeError("generator input spatial dims must be divisible by 4, got " + shape_str(shape));
  }
  // Residual blocks reflect-pad the quarter-resolution map by one pixel.
  if (shape[2] < 8 || shape[3] < 8) {
    throw ShapeError("generator input must be at least 8x8, got " + shape_str(shape));
  }
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  int in = cfg_.in_channels;
  const std::size_t stages = cfg_.channel_schedule.size();
  for (std::size_t i = 0; i < stages; ++i) {
    const std::string tag = "stage" + std::to_string(i);
    const int out = cfg_.channel_schedule[i];
    body_.add(tag + ".conv", std::make_unique<Conv2d>(in, out, 4, cfg_.strides[i], 1, false, rng));
    if (i + 1 == stages) break;
    if (i > 0) body_.add(tag + ".norm", std::make_unique<InstanceNorm2d>(out));
    body_.add(tag + ".lrelu", std::make_unique<Activation>(LayerKind::LeakyReLU, cfg_.leaky_slope));
    in = out;
  }
  body_.add("out_sigmoid", std::make_unique<Activation>(LayerKind::Sigmoid));
}

void Discriminator::check_input(const Shape& shape) const {
  require_image_batch(shape, cfg_.in_channels, "discriminator");
  const auto min = cfg_.min_input_size();
  if (shape[2] < min || shape[3] < min) {
    throw ShapeError("discriminator input " + shape_str(shape) + " is smaller than the minimal size " +
                     std::to_string(min));
  }
}

std::unique_ptr<Encoder> build_encoder(const EncoderConfig& cfg, std::mt19937_64& rng) {
  return std::make_unique<Encoder>(cfg, rng);
}

std::unique_ptr<Generator> build_generator(const GeneratorConfig& cfg, std::mt19937_64& rng) {
  return std::make_unique<Generator>(cfg, rng);
}

std::unique_ptr<Discriminator> build_discriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng) {
  return std::make_unique<Discriminator>(cfg, rng);
}

IntrinsicRepresentation encode(const Encoder& encoder, const Tensor& batch,
                               std::optional<std::string> source_domain) {
  return {encoder(batch), std::move(source_domain)};
}

Tensor generate(const Generator& generator, const IntrinsicRepresentation& rep) { return generator(rep.values); }

Tensor discriminate(const Discriminator& discriminator, const Tensor& batch) { return discriminator(batch); }

void BundleConfig::validate() const {
  encoder.validate();
  generator.validate();
  discriminator.validate();
  if (generator.in_channels != encoder.out_channels) {
    throw ConfigError("generator in_channels (" + std::to_string(generator.in_channels) +
                      ") must equal encoder out_channels (" + std::to_string(encoder.out_channels) + ")");
  }
  if (generator.out_channels != encoder.in_channels || discriminator.in_channels != encoder.in_channels) {
    throw ConfigError("generator output and discriminator input must use the image channel count");
  }
}

void to_json(nlohmann::json& j, const BundleConfig& c) {
  j = {{"encoder", c.encoder}, {"generator", c.generator}, {"discriminator", c.discriminator}};
}

void from_json(const nlohmann::json& j, BundleConfig& c) {
  if (j.contains("encoder")) c.encoder = j.at("encoder").get<EncoderConfig>();
  if (j.contains("generator")) c.generator = j.at("generator").get<GeneratorConfig>();
  if (j.contains("discriminator")) c.discriminator = j.at("discriminator").get<DiscriminatorConfig>();
}

ModelBundle::ModelBundle(const BundleConfig& cfg, std::vector<std::string> domains, std::uint64_t seed)
    : cfg_(cfg), domains_(std::move(domains)), seed_(seed) {
  cfg_.validate();
  std::set<std::string> unique(domains_.begin(), domains_.end());
  if (unique.size() != domains_.size()) throw ConfigError("duplicate domain id");
  if (domains_.empty()) throw ConfigError("model bundle needs at least one domain");
  std::mt19937_64 rng(seed);
  encoder_ = build_encoder(cfg_.encoder, rng);
  for (const auto& d : domains_) generators_[d] = build_generator(cfg_.generator, rng);
  for (const auto& d : domains_) discriminators_[d] = build_discriminator(cfg_.discriminator, rng);
}

const Generator& ModelBundle::generator(const std::string& domain) const {
  auto it = generators_.find(domain);
  if (it == generators_.end()) throw ConfigError("no generator for domain '" + domain + "'");
  return *it->second;
}

const Discriminator& ModelBundle::discriminator(const std::string& domain) const {
  auto it = discriminators_.find(domain);
  if (it == discriminators_.end()) throw ConfigError("no discriminator for domain '" + domain + "'");
  return *it->second;
}

namespace {
std::vector<NamedParameter> prefixed(const Network& net, const std::string& prefix) {
  auto params = net.parameters();
  for (auto& p : params) p.name = prefix + "." + p.name;
  return params;
}
}  // namespace

std::vector<NamedParameter> ModelBundle::encoder_parameters() const { return prefixed(*encoder_, "encoder"); }

std::vector<NamedParameter> ModelBundle::generator_parameters(const std::string& domain) const {
  return prefixed(generator(domain), "generator." + domain);
}

std::vector<NamedParameter> ModelBundle::discriminator_parameters(const std::string& domain) const {
  return prefixed(discriminator(domain), "discriminator." + domain);
}

std::vector<NamedParameter> ModelBundle::parameters() const {
  auto out = encoder_parameters();
  for (const auto& d : domains_) {
    auto g = generator_parameters(d);
    out.insert(out.end(), g.begin(), g.end());
  }
  for (const auto& d : domains_) {
    auto g = discriminator_parameters(d);
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> ModelBundle::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& p : parameters()) out.emplace_back(p.name, p.var.value());
  return out;
}

void ModelBundle::load_state(const std::vector<std::pair<std::string, Tensor>>& arrays) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : arrays) by_name[name] = &t;
  for (auto& p : parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("checkpoint is missing parameter '" + p.name + "'");
    if (it->second->shape() != p.var.shape()) {
      throw ShapeError("checkpoint parameter '" + p.name + "' has shape " + shape_str(it->second->shape()) +
                       ", expected " + shape_str(p.var.shape()));
    }
    p.var.mutable_value() = *it->second;
  }
}

void set_requires_grad(const std::vector<NamedParameter>& params, bool on) {
  for (const auto& p : params) {
    ag::Var v = p.var;
    v.set_requires_grad(on);
  }
}

}  // namespace intrinsic::nets
