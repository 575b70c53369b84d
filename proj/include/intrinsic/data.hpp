#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "intrinsic/nets.hpp"
#include "intrinsic/tensor.hpp"
#include "json.hpp"

namespace intrinsic::data {

namespace fs = std::filesystem;

struct ImageSize {
  int height = 100;
  int width = 100;
};

/// 8-bit RGB image, row-major, interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Decode a PNG/JPEG file as RGB. Throws DataError naming the file when it
/// cannot be decoded.
Image read_image(const fs::path& path);
/// Encode as PNG. Throws IoError on failure.
void write_png(const fs::path& path, const Image& image);

/// Bilinear resize (half-pixel centres) to `size`, CHW layout, values mapped
/// linearly from [0, 255] to [-1, 1]. Result shape (3, H, W).
Tensor preprocess(const Image& image, ImageSize size = {});

/// Inverse value mapping of preprocess for a (3,H,W) or (1,3,H,W) tensor,
/// rounding to the nearest level and clamping to [0, 255].
Image to_image(const Tensor& chw);

struct FrameRecord {
  fs::path path;  ///< empty for in-memory frames
  std::int64_t index = 0;
};

struct DomainSet {
  std::string domain_id;
  std::vector<FrameRecord> frames;
  /// Preprocessed frames (3,H,W), either resident or empty for lazy loading.
  std::vector<Tensor> images;

  std::size_t size() const { return frames.size(); }
};

class Dataset {
 public:
  std::vector<DomainSet> domains;
  ImageSize image_size;

  std::vector<std::string> domain_ids() const;
  const DomainSet& domain(const std::string& id) const;
  bool has_domain(const std::string& id) const;
  /// Frame as a (3,H,W) tensor, decoding from disk when not resident.
  Tensor frame(const std::string& domain, std::int64_t index) const;
  /// Dataset restricted to the given domains, in the given order.
  Dataset subset(const std::vector<std::string>& ids) const;
};

/// Load `<root>/<domain>/<frame>.{png,jpg,jpeg}`. Domains are the
/// subdirectories of root in lexicographic order; frame indices follow
/// lexicographic filename order. Every file must decode.
Dataset load_domain_sets(const fs::path& root, ImageSize size = {}, bool resident = true);

/// Appearance transform of one synthetic domain, applied per pixel to a base
/// structure image b in [0,1]^3:
///   v = clamp(M b + o)^gamma + a * sin(2 pi f (x cos t + y sin t) / W + phi) + n
/// with phi drawn per image and n ~ N(0, sigma^2).
struct DomainAppearance {
  std::array<double, 9> color_matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> color_offset{0, 0, 0};
  double gamma = 1.0;
  double texture_amplitude = 0.0;
  double texture_frequency = 4.0;
  double texture_angle = 0.0;
  double noise_sigma = 0.0;
};

struct SynthSpec {
  int num_places = 64;
  int num_domains = 2;
  ImageSize image_size{32, 32};
  std::vector<std::string> domain_names;  ///< defaults to season names
  std::vector<DomainAppearance> appearances;  ///< drawn from `strength` when empty
  double strength = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// Names and appearances with defaults filled in.
  SynthSpec resolved() const;
};

void to_json(nlohmann::json& j, const DomainAppearance& a);
void from_json(const nlohmann::json& j, DomainAppearance& a);
void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

std::vector<std::string> default_domain_names(int count);

struct SyntheticDataset {
  Dataset dataset;
  std::vector<std::vector<Image>> images;  ///< [domain][place]
  std::vector<Image> base_structures;      ///< [place]
  SynthSpec spec;                           ///< resolved
  /// Ground truth: frame index f in any domain shows place truth[f].
  std::vector<std::int64_t> place_of_frame;
};

SyntheticDataset synth_generate(const SynthSpec& spec);

/// Write `<root>/<domain>/<place:04d>.png` plus `<root>/manifest.json`
/// recording the resolved spec and the ground-truth place of every frame.
void write_synthetic(const SyntheticDataset& synth, const fs::path& root);

struct ExportEntry {
  std::string domain;
  std::int64_t frame_index = 0;
  std::string file;  ///< relative to the manifest directory
  Shape shape;
  std::string sha256;
};

struct ExportManifest {
  std::vector<ExportEntry> entries;
  nlohmann::json to_json() const;
  static ExportManifest from_json(const nlohmann::json& j);
};

/// Encode every frame of every domain and write one .npy (float64) array per
/// frame under out_dir/<domain>/, plus out_dir/manifest.json.
ExportManifest export_representations(const nets::Encoder& encoder, const Dataset& dataset,
                                      const fs::path& out_dir);

/// Read an exported set back: domain -> frames ordered by index.
std::vector<std::pair<std::string, std::vector<Tensor>>> read_representations(const fs::path& manifest_path);

}  // namespace intrinsic::data
