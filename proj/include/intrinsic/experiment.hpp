#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "intrinsic/data.hpp"
#include "intrinsic/placerec.hpp"
#include "intrinsic/trainer.hpp"
#include "json.hpp"

namespace intrinsic::experiment {

namespace fs = std::filesystem;

struct EvalConfig {
  std::vector<int> lens{1, 4};
  int dis = 1;
  int window = placerec::kDefaultWindow;
  std::string reference_domain = "winter";
  bool velocity_sweep = false;
  /// Standard deviation of Gaussian noise added to every enhanced difference
  /// matrix; 0 disables.
  double match_noise = 0.0;
  std::uint64_t noise_seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);

/// Folder data (train_root/test_root) or a synthetic spec, never both.
struct ExperimentConfig {
  std::optional<fs::path> train_root;
  std::optional<fs::path> test_root;
  data::ImageSize image_size{100, 100};  ///< folder data only
  std::optional<data::SynthSpec> synth = data::SynthSpec{};
  /// Places in the synthetic evaluation set; 0 means synth->num_places.
  int synth_test_places = 0;
  trainer::TrainingConfig training;
  EvalConfig eval;
  fs::path output_dir = "runs/default";

  void validate() const;
  bool uses_synth() const { return synth.has_value(); }
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_config(const fs::path& path);

/// Evaluation counterpart of a synthetic training spec: same domains and
/// appearances, freshly drawn places.
data::SynthSpec evaluation_spec(const data::SynthSpec& train_spec, int places);

data::Dataset training_dataset(const ExperimentConfig& cfg);
data::Dataset evaluation_dataset(const ExperimentConfig& cfg);

/// Domain order for display: spring, summer, autumn, winter first, then the
/// rest lexicographically.
std::vector<std::string> display_order(std::vector<std::string> domains);

using DomainFrames = std::vector<std::pair<std::string, std::vector<Tensor>>>;

/// The single matching path behind every evaluation: each non-reference
/// domain is matched against the reference domain for every configured len.
/// Query frame i is the same place as reference frame i.
std::vector<placerec::Metric> evaluate_sets(const std::string& method, const DomainFrames& sets,
                                            const EvalConfig& eval);

DomainFrames image_frames(const data::Dataset& dataset);

/// Audit record written next to every command's outputs.
struct RunManifest {
  std::string command;
  std::string config_sha256;
  std::uint64_t seed = 0;
  std::optional<std::string> checkpoint_sha256;
  std::map<std::string, std::string> outputs;  ///< relative path -> sha256

  nlohmann::json to_json() const;
};

std::string config_hash(const ExperimentConfig& cfg);
/// Hashes every listed file (relative to dir) and writes dir/run_manifest.json.
RunManifest write_run_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                               const std::vector<fs::path>& outputs,
                               const std::optional<fs::path>& checkpoint = std::nullopt);

enum class Split { Train, Test };

/// Writes <output_dir>/synth/<split>/ and returns that directory.
fs::path cmd_synth(const ExperimentConfig& cfg, Split split = Split::Train);
/// Writes <output_dir>/train/ and returns the final checkpoint path.
fs::path cmd_train(const ExperimentConfig& cfg, const std::optional<fs::path>& resume = std::nullopt);
/// Writes <output_dir>/representations/ and returns its manifest path.
fs::path cmd_encode(const ExperimentConfig& cfg, const fs::path& checkpoint);

/// One row of the results table: exported representations, or raw
/// preprocessed evaluation images when `manifest` is empty.
struct EvalSource {
  std::string label;
  std::optional<fs::path> manifest;
};

/// Writes <output_dir>/eval/{metrics.csv, metrics.json, table.md}.
std::vector<placerec::Metric> cmd_eval(const ExperimentConfig& cfg, const std::vector<EvalSource>& sources);

/// Writes one panel per place to <output_dir>/visualize/: a row per domain,
/// original image on the left, equalized representation on the right.
std::vector<fs::path> cmd_visualize(const ExperimentConfig& cfg, const fs::path& checkpoint,
                                    const std::vector<std::int64_t>& places);

}  // namespace intrinsic::experiment
