#include "intrinsic/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "intrinsic/errors.hpp"
#include "intrinsic/io_util.hpp"

namespace intrinsic::data {

namespace {

bool is_hidden(const fs::path& p) {
  const auto name = p.filename().string();
  return !name.empty() && name.front() == '.';
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (is_hidden(e.path())) continue;
    if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return out;
}

// Base structure of one place: a smooth colour field plus 2-4 hard-edged shapes.
Image draw_base(ImageSize size, std::mt19937_64& rng) {
  const int h = size.height, w = size.width;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> field(static_cast<std::size_t>(3 * h * w));
  for (int c = 0; c < 3; ++c) {
    double* f = field.data() + static_cast<std::size_t>(c) * h * w;
    for (int k = 0; k < 3; ++k) {
      const double amp = 0.3 + 0.7 * uni(rng);
      const double u = 4.0 * uni(rng) - 2.0, v = 4.0 * uni(rng) - 2.0;
      const double phase = 2.0 * std::numbers::pi * uni(rng);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          f[y * w + x] += amp * std::cos(2.0 * std::numbers::pi * (u * x / w + v * y / h) + phase);
    }
    const auto [lo, hi] = std::minmax_element(f, f + h * w);
    const double span = std::max(*hi - *lo, 1e-12);
    const double low = *lo;
    for (int i = 0; i < h * w; ++i) f[i] = 0.25 + 0.5 * (f[i] - low) / span;
  }

  std::uniform_int_distribution<int> count_dist(2, 4), kind_dist(0, 2);
  const int shapes = count_dist(rng);
  const double extent = std::min(h, w);
  for (int s = 0; s < shapes; ++s) {
    const int kind = kind_dist(rng);
    const double color[3] = {uni(rng), uni(rng), uni(rng)};
    const double cx = (0.15 + 0.7 * uni(rng)) * w, cy = (0.15 + 0.7 * uni(rng)) * h;
    const double r = (0.12 + 0.18 * uni(rng)) * extent;
    const double aspect = 0.5 + uni(rng);
    double tri[3][2];
    for (auto& v : tri) {
      const double ang = 2.0 * std::numbers::pi * uni(rng);
      v[0] = cx + r * std::cos(ang);
      v[1] = cy + r * std::sin(ang);
    }
    auto inside = [&](double x, double y) {
      switch (kind) {
        case 0: return std::abs(x - cx) <= r * aspect && std::abs(y - cy) <= r / aspect;
        case 1: return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
        default: {
          auto edge = [](const double* a, const double* b, double px, double py) {
            return (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
          };
          const double e0 = edge(tri[0], tri[1], x, y), e1 = edge(tri[1], tri[2], x, y),
                       e2 = edge(tri[2], tri[0], x, y);
          return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
        }
      }
    };
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (inside(x + 0.5, y + 0.5))
          for (int c = 0; c < 3; ++c) field[(static_cast<std::size_t>(c) * h + y) * w + x] = color[c];
  }

  Image img{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(3 * h * w))};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<std::uint8_t>(
            std::lround(255.0 * std::clamp(field[(static_cast<std::size_t>(c) * h + y) * w + x], 0.0, 1.0)));
  return img;
}

Image render(const Image& base, const DomainAppearance& a, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double phase = 2.0 * std::numbers::pi * uni(rng);
  const double ca = std::cos(a.texture_angle), sa = std::sin(a.texture_angle);
  Image out{base.width, base.height, std::vector<std::uint8_t>(base.rgb.size())};
  for (int y = 0; y < base.height; ++y) {
    for (int x = 0; x < base.width; ++x) {
      double b[3];
      for (int c = 0; c < 3; ++c) b[c] = base.at(y, x, c) / 255.0;
      const double tex = a.texture_amplitude *
                         std::sin(2.0 * std::numbers::pi * a.texture_frequency * (x * ca + y * sa) / base.width + phase);
      for (int c = 0; c < 3; ++c) {
        double v = a.color_offset[c];
        for (int k = 0; k < 3; ++k) v += a.color_matrix[c * 3 + k] * b[k];
        v = std::pow(std::clamp(v, 0.0, 1.0), a.gamma) + tex;
        if (a.noise_sigma > 0.0) v += a.noise_sigma * noise(rng);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
      }
    }
  }
  return out;
}

// Domains with even and odd index shift hue, brightness and gamma in opposite
// directions, so neighbouring domains always differ by a large margin.
DomainAppearance draw_appearance(double strength, int index, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto sym = [&] { return 2.0 * uni(rng) - 1.0; };
  const double sign = index % 2 == 0 ? 1.0 : -1.0;
  auto directed = [&](double max) { return sign * max * strength * (0.5 + 0.5 * uni(rng)); };
  // Invertible colour change: hue rotation about the grey axis, channel gains,
  // global contrast and brightness, all pivoting on mid-grey.
  const double theta = directed(0.35 * std::numbers::pi);
  const double ct = std::cos(theta), st = std::sin(theta), n = 1.0 / std::sqrt(3.0);
  const double rot[9] = {ct + (1 - ct) / 3,      (1 - ct) / 3 - st * n, (1 - ct) / 3 + st * n,
                         (1 - ct) / 3 + st * n, ct + (1 - ct) / 3,      (1 - ct) / 3 - st * n,
                         (1 - ct) / 3 - st * n, (1 - ct) / 3 + st * n, ct + (1 - ct) / 3};
  const double contrast = std::exp(-0.6 * strength * uni(rng));
  const double brightness = directed(0.2);
  DomainAppearance a;
  for (int c = 0; c < 3; ++c) {
    const double gain = contrast * std::exp(0.3 * strength * sym());
    double row = 0.0;
    for (int k = 0; k < 3; ++k) {
      a.color_matrix[c * 3 + k] = gain * rot[c * 3 + k];
      row += a.color_matrix[c * 3 + k];
    }
    a.color_offset[c] = 0.5 + brightness - 0.5 * row;
  }
  a.gamma = std::exp(directed(0.35));
  a.texture_amplitude = 0.1 * strength * (0.5 + 0.5 * uni(rng));
  a.texture_frequency = 3.0 + 5.0 * uni(rng);
  a.texture_angle = std::numbers::pi * uni(rng);
  a.noise_sigma = 0.02 * strength;
  return a;
}

}  // namespace

Image read_image(const fs::path& path) {
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DataError("cannot decode image " + path.string() + ": " + e.what());
  }
  if (bgr.empty()) throw DataError("cannot decode image " + path.string());
  Image img{bgr.cols, bgr.rows, std::vector<std::uint8_t>(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3)};
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[x][2 - c];
  }
  return img;
}

void write_png(const fs::path& path, const Image& image) {
  if (image.width <= 0 || image.height <= 0) throw IoError("refusing to write an empty image: " + path.string());
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) row[x][2 - c] = image.at(y, x, c);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr, {cv::IMWRITE_PNG_COMPRESSION, 6});
  } catch (const cv::Exception& e) {
    throw IoError("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write image " + path.string());
}

Tensor preprocess(const Image& image, ImageSize size) {
  if (image.width <= 0 || image.height <= 0 || image.rgb.empty()) throw DataError("zero-area image");
  if (size.width <= 0 || size.height <= 0) throw ConfigError("target size must be positive");
  const int ih = image.height, iw = image.width, oh = size.height, ow = size.width;
  Tensor out(Shape{3, oh, ow});
  const double sy = static_cast<double>(ih) / oh, sx = static_cast<double>(iw) / ow;
  for (int y = 0; y < oh; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(ih - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, ih - 1);
    const double wy = fy - y0;
    for (int x = 0; x < ow; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(iw - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, iw - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c);
        const double bottom = (1.0 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c);
        const double v = (1.0 - wy) * top + wy * bottom;
        out[(static_cast<std::size_t>(c) * oh + y) * ow + x] = v / 127.5 - 1.0;
      }
    }
  }
  return out;
}

Image to_image(const Tensor& t) {
  Shape s = t.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || s[0] != 3) throw ShapeError("to_image expects (3,H,W), got " + shape_str(t.shape()));
  const int h = static_cast<int>(s[1]), w = static_cast<int>(s[2]);
  Image img{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(3 * h * w))};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double v = (t[(static_cast<std::size_t>(c) * h + y) * w + x] + 1.0) * 127.5;
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
  return img;
}

std::vector<std::string> Dataset::domain_ids() const {
  std::vector<std::string> ids;
  for (const auto& d : domains) ids.push_back(d.domain_id);
  return ids;
}

const DomainSet& Dataset::domain(const std::string& id) const {
  for (const auto& d : domains) {
    if (d.domain_id == id) return d;
  }
  throw DataError("unknown domain '" + id + "'");
}

bool Dataset::has_domain(const std::string& id) const {
  return std::any_of(domains.begin(), domains.end(), [&](const DomainSet& d) { return d.domain_id == id; });
}

Tensor Dataset::frame(const std::string& id, std::int64_t index) const {
  const auto& d = domain(id);
  if (index < 0 || index >= static_cast<std::int64_t>(d.size())) {
    throw DataError("frame " + std::to_string(index) + " out of range for domain '" + id + "'");
  }
  if (!d.images.empty()) return d.images[static_cast<std::size_t>(index)];
  return preprocess(read_image(d.frames[static_cast<std::size_t>(index)].path), image_size);
}

Dataset Dataset::subset(const std::vector<std::string>& ids) const {
  Dataset out;
  out.image_size = image_size;
  for (const auto& id : ids) out.domains.push_back(domain(id));
  return out;
}

Dataset load_domain_sets(const fs::path& root, ImageSize size, bool resident) {
  if (!fs::exists(root)) throw IoError("dataset root does not exist: " + root.string());
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());
  Dataset ds;
  ds.image_size = size;
  for (const auto& dir : sorted_entries(root, true)) {
    DomainSet set;
    set.domain_id = dir.filename().string();
    std::int64_t index = 0;
    for (const auto& file : sorted_entries(dir, false)) {
      Image img = read_image(file);  // throws DataError naming the file
      set.frames.push_back({file, index++});
      if (resident) set.images.push_back(preprocess(img, size));
    }
    if (set.frames.empty()) throw DataError("domain directory has no images: " + dir.string());
    ds.domains.push_back(std::move(set));
  }
  if (ds.domains.empty()) throw DataError("dataset root has no domain subdirectories: " + root.string());
  return ds;
}

std::vector<std::string> default_domain_names(int count) {
  switch (count) {
    case 2: return {"summer", "winter"};
    case 3: return {"spring", "summer", "winter"};
    case 4: return {"spring", "summer", "autumn", "winter"};
    default: {
      std::vector<std::string> out;
      for (int i = 0; i < count; ++i) out.push_back("domain" + std::to_string(i));
      return out;
    }
  }
}

void SynthSpec::validate() const {
  if (num_places < 2) throw ConfigError("synthetic spec needs at least 2 places");
  if (num_domains < 2) throw ConfigError("synthetic spec needs at least 2 domains");
  if (image_size.height < 4 || image_size.width < 4 || image_size.height % 4 || image_size.width % 4) {
    throw ConfigError("synthetic image size must be positive multiples of 4");
  }
  if (!domain_names.empty()) {
    if (static_cast<int>(domain_names.size()) != num_domains) throw ConfigError("domain_names count mismatch");
    std::set<std::string> unique(domain_names.begin(), domain_names.end());
    if (unique.size() != domain_names.size()) throw ConfigError("duplicate synthetic domain name");
  }
  if (!appearances.empty() && static_cast<int>(appearances.size()) != num_domains) {
    throw ConfigError("appearances count mismatch");
  }
  for (const auto& a : appearances) {
    if (!(a.gamma > 0.0) || a.noise_sigma < 0.0) throw ConfigError("invalid domain appearance");
  }
  if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("synthetic strength must lie in [0, 1]");
}

SynthSpec SynthSpec::resolved() const {
  validate();
  SynthSpec s = *this;
  if (s.domain_names.empty()) s.domain_names = default_domain_names(num_domains);
  if (s.appearances.empty()) {
    std::mt19937_64 rng(seed ^ 0xa5a5a5a5ULL);
    for (int d = 0; d < num_domains; ++d) s.appearances.push_back(draw_appearance(strength, d, rng));
  }
  return s;
}

void to_json(nlohmann::json& j, const DomainAppearance& a) {
  j = {{"color_matrix", a.color_matrix},
       {"color_offset", a.color_offset},
       {"gamma", a.gamma},
       {"texture_amplitude", a.texture_amplitude},
       {"texture_frequency", a.texture_frequency},
       {"texture_angle", a.texture_angle},
       {"noise_sigma", a.noise_sigma}};
}

void from_json(const nlohmann::json& j, DomainAppearance& a) {
  a.color_matrix = j.value("color_matrix", a.color_matrix);
  a.color_offset = j.value("color_offset", a.color_offset);
  a.gamma = j.value("gamma", a.gamma);
  a.texture_amplitude = j.value("texture_amplitude", a.texture_amplitude);
  a.texture_frequency = j.value("texture_frequency", a.texture_frequency);
  a.texture_angle = j.value("texture_angle", a.texture_angle);
  a.noise_sigma = j.value("noise_sigma", a.noise_sigma);
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = {{"num_places", s.num_places},
       {"num_domains", s.num_domains},
       {"image_size", {s.image_size.height, s.image_size.width}},
       {"domain_names", s.domain_names},
       {"appearances", s.appearances},
       {"strength", s.strength},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  s.num_places = j.value("num_places", s.num_places);
  s.num_domains = j.value("num_domains", s.num_domains);
  if (j.contains("image_size")) {
    const auto& sz = j.at("image_size");
    if (!sz.is_array() || sz.size() != 2) throw ConfigError("image_size must be [height, width]");
    s.image_size = {sz[0].get<int>(), sz[1].get<int>()};
  }
  s.domain_names = j.value("domain_names", s.domain_names);
  s.appearances = j.value("appearances", s.appearances);
  s.strength = j.value("strength", s.strength);
  s.seed = j.value("seed", s.seed);
}

SyntheticDataset synth_generate(const SynthSpec& spec) {
  SyntheticDataset out;
  out.spec = spec.resolved();
  const auto& s = out.spec;
  std::mt19937_64 rng(s.seed);
  for (int p = 0; p < s.num_places; ++p) out.base_structures.push_back(draw_base(s.image_size, rng));
  out.dataset.image_size = s.image_size;
  out.images.resize(static_cast<std::size_t>(s.num_domains));
  for (int d = 0; d < s.num_domains; ++d) {
    DomainSet set;
    set.domain_id = s.domain_names[static_cast<std::size_t>(d)];
    for (int p = 0; p < s.num_places; ++p) {
      Image img = render(out.base_structures[static_cast<std::size_t>(p)],
                         s.appearances[static_cast<std::size_t>(d)], rng);
      set.frames.push_back({{}, p});
      set.images.push_back(preprocess(img, s.image_size));
      out.images[static_cast<std::size_t>(d)].push_back(std::move(img));
    }
    out.dataset.domains.push_back(std::move(set));
  }
  for (int p = 0; p < s.num_places; ++p) out.place_of_frame.push_back(p);
  return out;
}

void write_synthetic(const SyntheticDataset& synth, const fs::path& root) {
  fs::create_directories(root);
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t d = 0; d < synth.images.size(); ++d) {
    const auto& id = synth.dataset.domains[d].domain_id;
    for (std::size_t p = 0; p < synth.images[d].size(); ++p) {
      char name[32];
      std::snprintf(name, sizeof(name), "%04zu.png", p);
      const fs::path rel = fs::path(id) / name;
      write_png(root / rel, synth.images[d][p]);
      files.push_back({{"domain", id}, {"frame_index", p}, {"place", synth.place_of_frame[p]}, {"file", rel.string()}});
    }
  }
  nlohmann::json manifest = {{"spec", synth.spec}, {"frames", files}};
  io::write_text(root / "manifest.json", manifest.dump(2) + "\n");
}

nlohmann::json ExportManifest::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries) {
    arr.push_back({{"domain", e.domain}, {"frame_index", e.frame_index}, {"file", e.file},
                   {"shape", e.shape}, {"sha256", e.sha256}});
  }
  return {{"format", "npy-float64"}, {"entries", arr}};
}

ExportManifest ExportManifest::from_json(const nlohmann::json& j) {
  ExportManifest m;
  try {
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("domain").get<std::string>(), e.at("frame_index").get<std::int64_t>(),
                           e.at("file").get<std::string>(), e.at("shape").get<Shape>(),
                           e.at("sha256").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed representation manifest: ") + ex.what());
  }
  return m;
}

ExportManifest export_representations(const nets::Encoder& encoder, const Dataset& dataset, const fs::path& out_dir) {
  ExportManifest manifest;
  fs::create_directories(out_dir);
  for (const auto& set : dataset.domains) {
    for (const auto& rec : set.frames) {
      Tensor img = dataset.frame(set.domain_id, rec.index);
      Tensor batch = img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
      Tensor rep = nets::encode(encoder, batch, set.domain_id).values;
      char name[32];
      std::snprintf(name, sizeof(name), "%06lld.npy", static_cast<long long>(rec.index));
      const fs::path rel = fs::path(set.domain_id) / name;
      io::write_npy(out_dir / rel, rep);
      manifest.entries.push_back({set.domain_id, rec.index, rel.string(), rep.shape(), io::sha256_tensor(rep)});
    }
  }
  io::write_text(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

std::vector<std::pair<std::string, std::vector<Tensor>>> read_representations(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw IoError("representation manifest not found: " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed representation manifest " + manifest_path.string() + ": " + e.what());
  }
  const auto manifest = ExportManifest::from_json(j);
  const fs::path base = manifest_path.parent_path();
  std::vector<std::pair<std::string, std::vector<Tensor>>> out;
  for (const auto& e : manifest.entries) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == e.domain; });
    if (it == out.end()) {
      out.emplace_back(e.domain, std::vector<Tensor>{});
      it = std::prev(out.end());
    }
    if (e.frame_index != static_cast<std::int64_t>(it->second.size())) {
      throw DataError("manifest frames for domain '" + e.domain + "' are not consecutive from 0");
    }
    Tensor t = io::read_npy(base / e.file);
    if (t.shape() != e.shape) throw DataError("array shape disagrees with manifest: " + (base / e.file).string());
    if (io::sha256_tensor(t) != e.sha256) throw DataError("checksum mismatch for " + (base / e.file).string());
    it->second.push_back(std::move(t));
  }
  return out;
}

}  // namespace intrinsic::data
