#include "intrinsic/experiment.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <set>

#include "intrinsic/checkpoint.hpp"
#include "intrinsic/errors.hpp"
#include "intrinsic/io_util.hpp"

namespace intrinsic::experiment {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

std::vector<fs::path> list_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::unique_ptr<nets::ModelBundle> load_bundle(const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint.string());
  return bundle_from_checkpoint(load_checkpoint(checkpoint));
}

}  // namespace

void EvalConfig::validate() const {
  if (lens.empty()) throw ConfigError("eval.lens must not be empty");
  for (int l : lens) {
    if (l < 1) throw ConfigError("eval.lens entries must be >= 1");
  }
  if (dis < 0) throw ConfigError("eval.dis must be >= 0");
  if (window < 1) throw ConfigError("eval.window must be >= 1");
  if (reference_domain.empty()) throw ConfigError("eval.reference_domain must not be empty");
  if (match_noise < 0.0) throw ConfigError("eval.match_noise must be >= 0");
}

void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = {{"lens", c.lens},
       {"dis", c.dis},
       {"window", c.window},
       {"reference_domain", c.reference_domain},
       {"velocity_sweep", c.velocity_sweep},
       {"match_noise", c.match_noise},
       {"noise_seed", c.noise_seed}};
}

void from_json(const nlohmann::json& j, EvalConfig& c) {
  reject_unknown(j, {"lens", "dis", "window", "reference_domain", "velocity_sweep", "match_noise", "noise_seed"},
                 "eval");
  c.lens = j.value("lens", c.lens);
  c.dis = j.value("dis", c.dis);
  c.window = j.value("window", c.window);
  c.reference_domain = j.value("reference_domain", c.reference_domain);
  c.velocity_sweep = j.value("velocity_sweep", c.velocity_sweep);
  c.match_noise = j.value("match_noise", c.match_noise);
  c.noise_seed = j.value("noise_seed", c.noise_seed);
}

void ExperimentConfig::validate() const {
  const bool folders = train_root.has_value() || test_root.has_value();
  if (folders == synth.has_value()) {
    throw ConfigError("exactly one data source is required: folder roots or a synthetic spec");
  }
  if (synth) {
    synth->validate();
    if (synth_test_places < 0 || synth_test_places == 1) throw ConfigError("synth test_places must be 0 or >= 2");
  }
  if (image_size.height < 1 || image_size.width < 1) throw ConfigError("image_size must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  training.validate();
  eval.validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json::object();
  if (c.synth) {
    j["synth"] = *c.synth;
    j["synth"]["test_places"] = c.synth_test_places;
  } else {
    nlohmann::json d = {{"image_size", {c.image_size.height, c.image_size.width}}};
    if (c.train_root) d["train_root"] = c.train_root->string();
    if (c.test_root) d["test_root"] = c.test_root->string();
    j["data"] = d;
  }
  j["training"] = c.training;
  j["eval"] = c.eval;
  j["output_dir"] = c.output_dir.string();
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  reject_unknown(j, {"data", "synth", "training", "eval", "output_dir"}, "experiment config");
  if (j.contains("data") && j.contains("synth")) throw ConfigError("config gives both 'data' and 'synth'");
  try {
    if (j.contains("data")) {
      const auto& d = j.at("data");
      reject_unknown(d, {"train_root", "test_root", "image_size"}, "data");
      c.synth.reset();
      if (d.contains("train_root")) c.train_root = d.at("train_root").get<std::string>();
      if (d.contains("test_root")) c.test_root = d.at("test_root").get<std::string>();
      if (d.contains("image_size")) {
        const auto& sz = d.at("image_size");
        if (!sz.is_array() || sz.size() != 2) throw ConfigError("data.image_size must be [height, width]");
        c.image_size = {sz[0].get<int>(), sz[1].get<int>()};
      }
    }
    if (j.contains("synth")) {
      nlohmann::json s = j.at("synth");
      reject_unknown(s,
                     {"num_places", "num_domains", "image_size", "domain_names", "appearances", "strength", "seed",
                      "test_places"},
                     "synth");
      c.synth_test_places = s.value("test_places", c.synth_test_places);
      s.erase("test_places");
      data::SynthSpec spec = c.synth.value_or(data::SynthSpec{});
      data::from_json(s, spec);
      c.synth = spec;
      c.train_root.reset();
      c.test_root.reset();
    }
    if (j.contains("training")) c.training = j.at("training").get<trainer::TrainingConfig>();
    if (j.contains("eval")) c.eval = j.at("eval").get<EvalConfig>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  ExperimentConfig cfg;
  from_json(j, cfg);
  return cfg;
}

data::SynthSpec evaluation_spec(const data::SynthSpec& train_spec, int places) {
  data::SynthSpec s = train_spec.resolved();
  if (places > 0) s.num_places = places;
  s.seed = train_spec.seed ^ 0x5eedf00dcafe1234ULL;
  return s;
}

data::Dataset training_dataset(const ExperimentConfig& cfg) {
  if (cfg.synth) return data::synth_generate(*cfg.synth).dataset;
  if (!cfg.train_root) throw ConfigError("no training data: set data.train_root");
  return data::load_domain_sets(*cfg.train_root, cfg.image_size);
}

data::Dataset evaluation_dataset(const ExperimentConfig& cfg) {
  if (cfg.synth) return data::synth_generate(evaluation_spec(*cfg.synth, cfg.synth_test_places)).dataset;
  if (!cfg.test_root) throw ConfigError("no evaluation data: set data.test_root");
  return data::load_domain_sets(*cfg.test_root, cfg.image_size);
}

std::vector<std::string> display_order(std::vector<std::string> domains) {
  static constexpr std::array<std::string_view, 4> seasons{"spring", "summer", "autumn", "winter"};
  auto rank = [](const std::string& d) {
    const auto it = std::find(seasons.begin(), seasons.end(), d);
    return static_cast<int>(it - seasons.begin());
  };
  std::stable_sort(domains.begin(), domains.end(), [&](const std::string& a, const std::string& b) {
    const int ra = rank(a), rb = rank(b);
    return ra != rb ? ra < rb : a < b;
  });
  return domains;
}

DomainFrames image_frames(const data::Dataset& dataset) {
  DomainFrames out;
  for (const auto& set : dataset.domains) {
    std::vector<Tensor> frames;
    for (const auto& rec : set.frames) frames.push_back(dataset.frame(set.domain_id, rec.index));
    out.emplace_back(set.domain_id, std::move(frames));
  }
  return out;
}

std::vector<placerec::Metric> evaluate_sets(const std::string& method, const DomainFrames& sets,
                                            const EvalConfig& eval) {
  eval.validate();
  const auto ref_it = std::find_if(sets.begin(), sets.end(), [&](const auto& s) { return s.first == eval.reference_domain; });
  if (ref_it == sets.end()) throw DataError("reference domain '" + eval.reference_domain + "' not found");
  const auto& reference = ref_it->second;

  std::vector<std::string> queries;
  for (const auto& [domain, frames] : sets) {
    if (domain != eval.reference_domain) queries.push_back(domain);
  }
  if (queries.empty()) throw DataError("evaluation needs at least one non-reference domain");

  std::vector<placerec::Metric> metrics;
  std::uint64_t pair_index = 0;
  for (const auto& domain : display_order(queries)) {
    const auto& frames = std::find_if(sets.begin(), sets.end(), [&](const auto& s) { return s.first == domain; })->second;
    if (frames.size() > reference.size()) {
      throw DataError("domain '" + domain + "' has frames without a reference counterpart");
    }
    placerec::DifferenceMatrix d =
        placerec::contrast_enhance(placerec::difference_matrix(frames, reference), eval.window);
    if (eval.match_noise > 0.0) {
      std::mt19937_64 rng(eval.noise_seed + 0x9e3779b97f4a7c15ULL * ++pair_index);
      std::normal_distribution<double> noise(0.0, eval.match_noise);
      for (Eigen::Index c = 0; c < d.values.cols(); ++c)
        for (Eigen::Index r = 0; r < d.values.rows(); ++r) d.values(r, c) += noise(rng);
    }
    std::vector<std::int64_t> truth(frames.size());
    for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<std::int64_t>(i);
    for (int len : eval.lens) {
      const auto options = eval.velocity_sweep ? placerec::MatchOptions::with_sweep(len) : placerec::MatchOptions{len};
      const auto result = placerec::sequence_match(d, options);
      metrics.push_back({method, domain + "-" + eval.reference_domain, len, eval.dis,
                         placerec::accuracy(result, truth, eval.dis), static_cast<std::int64_t>(truth.size())});
    }
  }
  return metrics;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j = {{"command", command}, {"config_sha256", config_sha256}, {"seed", seed}, {"outputs", outputs}};
  if (checkpoint_sha256) j["checkpoint_sha256"] = *checkpoint_sha256;
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) { return io::sha256_hex(nlohmann::json(cfg).dump()); }

RunManifest write_run_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                               const std::vector<fs::path>& outputs, const std::optional<fs::path>& checkpoint) {
  RunManifest m;
  m.command = command;
  m.config_sha256 = config_hash(cfg);
  m.seed = cfg.training.seed;
  if (checkpoint) m.checkpoint_sha256 = io::sha256_file(*checkpoint);
  for (const auto& rel : outputs) m.outputs[rel.generic_string()] = io::sha256_file(dir / rel);
  io::write_text(dir / "run_manifest.json", m.to_json().dump(2) + "\n");
  return m;
}

namespace {

void write_config(const fs::path& dir, const ExperimentConfig& cfg) {
  io::write_text(dir / "config.json", nlohmann::json(cfg).dump(2) + "\n");
}

}  // namespace

fs::path cmd_synth(const ExperimentConfig& cfg, Split split) {
  cfg.validate();
  if (!cfg.synth) throw ConfigError("synth needs a synthetic spec in the config");
  const fs::path dir = cfg.output_dir / "synth" / (split == Split::Train ? "train" : "test");
  if (fs::exists(dir)) fs::remove_all(dir);
  const auto spec = split == Split::Train ? *cfg.synth : evaluation_spec(*cfg.synth, cfg.synth_test_places);
  data::write_synthetic(data::synth_generate(spec), dir);
  write_config(dir, cfg);
  write_run_manifest(dir, "synth", cfg, list_files(dir));
  return dir;
}

fs::path cmd_train(const ExperimentConfig& cfg, const std::optional<fs::path>& resume) {
  cfg.validate();
  const fs::path dir = cfg.output_dir / "train";
  trainer::TrainOptions options;
  options.output_dir = dir;
  if (resume) {
    if (!fs::exists(*resume)) throw IoError("resume checkpoint not found: " + resume->string());
    options.resume = load_checkpoint(*resume);
  }
  const auto dataset = training_dataset(cfg);
  trainer::train(dataset, cfg.training, options);
  write_config(dir, cfg);
  const fs::path final_ckpt = dir / "final.ckpt";
  write_run_manifest(dir, "train", cfg, {"final.ckpt", "loss_log.csv", "samples.csv", "config.json"}, final_ckpt);
  return final_ckpt;
}

fs::path cmd_encode(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  cfg.validate();
  const auto bundle = load_bundle(checkpoint);
  const fs::path dir = cfg.output_dir / "representations";
  if (fs::exists(dir)) fs::remove_all(dir);
  data::export_representations(bundle->encoder(), evaluation_dataset(cfg), dir);
  write_config(dir, cfg);
  write_run_manifest(dir, "encode", cfg, list_files(dir), checkpoint);
  return dir / "manifest.json";
}

std::vector<placerec::Metric> cmd_eval(const ExperimentConfig& cfg, const std::vector<EvalSource>& sources) {
  cfg.validate();
  if (sources.empty()) throw ConfigError("eval needs at least one source (images or representations)");
  std::vector<placerec::Metric> metrics;
  std::optional<DomainFrames> images;
  for (const auto& src : sources) {
    std::vector<placerec::Metric> rows;
    if (src.manifest) {
      rows = evaluate_sets(src.label, data::read_representations(*src.manifest), cfg.eval);
    } else {
      if (!images) images = image_frames(evaluation_dataset(cfg));
      rows = evaluate_sets(src.label, *images, cfg.eval);
    }
    metrics.insert(metrics.end(), rows.begin(), rows.end());
  }
  const fs::path dir = cfg.output_dir / "eval";
  fs::create_directories(dir);
  io::write_text(dir / "metrics.csv", placerec::metrics_csv(metrics));
  io::write_text(dir / "metrics.json", placerec::metrics_json(metrics).dump(2) + "\n");
  io::write_text(dir / "table.md", placerec::metrics_table(metrics));
  write_config(dir, cfg);
  write_run_manifest(dir, "eval", cfg, {"metrics.csv", "metrics.json", "table.md", "config.json"});
  return metrics;
}

std::vector<fs::path> cmd_visualize(const ExperimentConfig& cfg, const fs::path& checkpoint,
                                    const std::vector<std::int64_t>& places) {
  cfg.validate();
  if (places.empty()) throw ConfigError("visualize needs at least one place index");
  const auto bundle = load_bundle(checkpoint);
  const auto dataset = evaluation_dataset(cfg);
  const auto domains = display_order(dataset.domain_ids());
  const fs::path dir = cfg.output_dir / "visualize";
  std::vector<fs::path> written;
  for (const auto place : places) {
    std::vector<std::pair<data::Image, data::Image>> rows;
    for (const auto& domain : domains) {
      const Tensor img = dataset.frame(domain, place);
      const Tensor batch = img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
      const auto rep = nets::encode(bundle->encoder(), batch, domain);
      rows.emplace_back(data::to_image(img), placerec::histogram_equalize(rep.values));
    }
    const int h = rows.front().first.height, w = rows.front().first.width;
    data::Image panel{2 * w, h * static_cast<int>(rows.size()),
                      std::vector<std::uint8_t>(static_cast<std::size_t>(6 * w * h) * rows.size())};
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) {
            const int py = static_cast<int>(r) * h + y;
            panel.at(py, x, c) = rows[r].first.at(y, x, c);
            panel.at(py, w + x, c) = rows[r].second.at(y, x, c);
          }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "place_%04lld.png", static_cast<long long>(place));
    data::write_png(dir / name, panel);
    written.push_back(dir / name);
  }
  std::vector<fs::path> rel;
  for (const auto& p : written) rel.push_back(p.filename());
  write_config(dir, cfg);
  write_run_manifest(dir, "visualize", cfg, rel, checkpoint);
  return written;
}

}  // namespace intrinsic::experiment
