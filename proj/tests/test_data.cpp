#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "intrinsic/data.hpp"
#include "intrinsic/errors.hpp"
#include "intrinsic/io_util.hpp"
#include "support.hpp"

namespace intrinsic::data {
namespace {

Image solid(int w, int h, std::uint8_t v) { return Image{w, h, std::vector<std::uint8_t>(3u * w * h, v)}; }

Image noise_image(int w, int h, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 255);
  Image img = solid(w, h, 0);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(d(rng));
  return img;
}

void make_folder_dataset(const fs::path& root) {
  std::mt19937_64 rng(1);
  for (const char* d : {"winter", "summer"})
    for (const char* f : {"0002.png", "0001.png"}) write_png(root / d / f, noise_image(12, 10, rng));
}

/// Sum over channels of the central-difference gradient magnitude.
std::vector<double> gradient_magnitude(const Image& img) {
  std::vector<double> out(static_cast<std::size_t>(img.width) * img.height, 0.0);
  for (int y = 1; y + 1 < img.height; ++y)
    for (int x = 1; x + 1 < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double gx = img.at(y, x + 1, c) - img.at(y, x - 1, c);
        const double gy = img.at(y + 1, x, c) - img.at(y - 1, x, c);
        out[static_cast<std::size_t>(y) * img.width + x] += std::hypot(gx, gy);
      }
  return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(Loader, EnumeratesDomainsAndFramesLexicographically) {
  testing::TempDir dir;
  make_folder_dataset(dir.path());
  const auto ds = load_domain_sets(dir.path(), {8, 8});
  EXPECT_EQ(ds.domain_ids(), (std::vector<std::string>{"summer", "winter"}));
  for (const auto& d : ds.domains) {
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.frames[0].index, 0);
    EXPECT_EQ(d.frames[1].index, 1);
    EXPECT_EQ(d.frames[0].path.filename(), "0001.png");
    EXPECT_EQ(d.images[0].shape(), (Shape{3, 8, 8}));
  }
  const auto again = load_domain_sets(dir.path(), {8, 8}, false);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(again.domains[k].frames[i].path, ds.domains[k].frames[i].path);
      EXPECT_TRUE(bit_identical(again.frame(again.domains[k].domain_id, static_cast<std::int64_t>(i)),
                                ds.domains[k].images[i]));
    }
  EXPECT_THROW(ds.frame("summer", 2), DataError);
  EXPECT_THROW(ds.domain("autumn"), DataError);
}

TEST(Loader, SingleDomainLoads) {
  testing::TempDir dir;
  std::mt19937_64 rng(2);
  write_png(dir / "winter/0001.png", noise_image(4, 4, rng));
  EXPECT_EQ(load_domain_sets(dir.path()).domains.size(), 1u);
}

TEST(Loader, Errors) {
  testing::TempDir dir;
  EXPECT_THROW(load_domain_sets(dir / "missing"), IoError);
  EXPECT_THROW(load_domain_sets(dir.path()), DataError);
  make_folder_dataset(dir.path());
  io::write_text(dir / "summer" / "notes.txt", "not an image");
  try {
    load_domain_sets(dir.path());
    ADD_FAILURE() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("notes.txt"), std::string::npos);
  }
  fs::remove(dir / "summer" / "notes.txt");
  fs::create_directories(dir / "autumn");
  EXPECT_THROW(load_domain_sets(dir.path()), DataError);
  EXPECT_THROW(load_domain_sets(dir / "summer" / "0001.png"), IoError);
}

TEST(Preprocess, ShapeAndAffineEndpoints) {
  std::mt19937_64 rng(3);
  EXPECT_EQ(preprocess(noise_image(640, 480, rng)).shape(), (Shape{3, 100, 100}));
  const Tensor white = preprocess(solid(37, 23, 255));
  const Tensor black = preprocess(solid(37, 23, 0));
  for (double v : white.values()) EXPECT_EQ(v, 1.0);
  for (double v : black.values()) EXPECT_EQ(v, -1.0);
  EXPECT_THROW(preprocess(Image{}), DataError);
}

TEST(Preprocess, HalvingIsBlockAverage) {
  std::mt19937_64 rng(4);
  const Image img = noise_image(16, 12, rng);
  const Tensor t = preprocess(img, {6, 8});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 8; ++x) {
        const double mean = (img.at(2 * y, 2 * x, c) + img.at(2 * y, 2 * x + 1, c) + img.at(2 * y + 1, 2 * x, c) +
                             img.at(2 * y + 1, 2 * x + 1, c)) /
                            4.0;
        EXPECT_NEAR(t[(static_cast<std::size_t>(c) * 6 + y) * 8 + x], mean / 127.5 - 1.0, 1e-12);
      }
}

TEST(Preprocess, IdempotentAtTargetSize) {
  std::mt19937_64 rng(5);
  const Tensor once = preprocess(noise_image(90, 70, rng), {20, 24});
  const Tensor twice = preprocess(to_image(once), {20, 24});
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_LE(std::abs(once[i] - twice[i]), 1.0 / 255.0 + 1e-12);
}

TEST(ImageIo, PngRoundTrip) {
  testing::TempDir dir;
  std::mt19937_64 rng(6);
  const Image img = noise_image(9, 5, rng);
  write_png(dir / "x.png", img);
  const Image back = read_image(dir / "x.png");
  EXPECT_EQ(back.width, 9);
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.rgb, img.rgb);
  EXPECT_THROW(read_image(dir / "none.png"), DataError);
}

TEST(Synth, DeterministicAndCounted) {
  SynthSpec spec;
  spec.seed = 11;
  const auto a = synth_generate(spec), b = synth_generate(spec);
  ASSERT_EQ(a.dataset.domains.size(), 2u);
  for (std::size_t d = 0; d < 2; ++d) {
    ASSERT_EQ(a.dataset.domains[d].size(), 64u);
    for (std::size_t p = 0; p < 64; ++p) {
      EXPECT_EQ(a.dataset.domains[d].images[p].shape(), (Shape{3, 32, 32}));
      EXPECT_TRUE(bit_identical(a.dataset.domains[d].images[p], b.dataset.domains[d].images[p]));
    }
  }
  for (std::size_t f = 0; f < 64; ++f) EXPECT_EQ(a.place_of_frame[f], static_cast<std::int64_t>(f));
  spec.seed = 12;
  EXPECT_FALSE(bit_identical(synth_generate(spec).dataset.domains[0].images[0], a.dataset.domains[0].images[0]));
}

TEST(Synth, CorrespondingPlacesShareEdgeStructure) {
  SynthSpec spec;
  spec.seed = 13;
  const auto synth = synth_generate(spec);
  const int P = spec.num_places;
  std::vector<std::vector<double>> ga, gb;
  for (int p = 0; p < P; ++p) {
    ga.push_back(gradient_magnitude(synth.images[0][p]));
    gb.push_back(gradient_magnitude(synth.images[1][p]));
  }
  int wins = 0;
  for (int p = 0; p < P; ++p) {
    const double own = pearson(ga[p], gb[p]);
    bool best = true;
    for (int q = 0; q < P; ++q) best &= q == p || own > pearson(ga[p], gb[q]);
    wins += best;
  }
  EXPECT_GE(wins, static_cast<int>(std::ceil(0.95 * P)));
  // Appearance itself differs strongly across domains.
  double diff = 0.0;
  for (int p = 0; p < P; ++p) {
    const auto& a = synth.images[0][p].rgb;
    const auto& b = synth.images[1][p].rgb;
    for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
  }
  EXPECT_GT(diff / (P * 3.0 * 32 * 32), 40.0);
}

TEST(Synth, SpecValidation) {
  SynthSpec spec;
  spec.num_places = 1;
  EXPECT_THROW(synth_generate(spec), ConfigError);
  spec = {};
  spec.num_domains = 1;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.image_size = {30, 32};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.domain_names = {"a", "a"};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.strength = 1.5;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.appearances.resize(2);
  spec.appearances[1].gamma = 0.0;
  EXPECT_THROW(spec.validate(), ConfigError);

  spec = {};
  spec.num_domains = 4;
  const auto r = spec.resolved();
  EXPECT_EQ(r.domain_names, (std::vector<std::string>{"spring", "summer", "autumn", "winter"}));
  EXPECT_EQ(r.appearances.size(), 4u);
  const nlohmann::json j = r;
  EXPECT_EQ(nlohmann::json(j.get<SynthSpec>()), j);
}

TEST(Synth, WrittenDatasetIsByteStable) {
  testing::TempDir a, b;
  SynthSpec spec;
  spec.seed = 14;
  write_synthetic(synth_generate(spec), a.path());
  write_synthetic(synth_generate(spec), b.path());
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), a.path());
    EXPECT_EQ(io::sha256_file(e.path()), io::sha256_file(b.path() / rel)) << rel;
  }
  EXPECT_EQ(files, 129);
  const auto manifest = nlohmann::json::parse(io::read_text(a / "manifest.json"));
  EXPECT_EQ(manifest.at("frames").size(), 128u);
  const auto loaded = load_domain_sets(a.path(), {32, 32});
  EXPECT_EQ(loaded.domain_ids(), (std::vector<std::string>{"summer", "winter"}));
  const auto direct = synth_generate(spec);
  EXPECT_TRUE(bit_identical(loaded.domain("winter").images[5], direct.dataset.domain("winter").images[5]));
}

TEST(Export, CountsRoundTripAndChecksums) {
  testing::TempDir dir;
  SynthSpec spec;
  spec.num_places = 3;
  spec.image_size = {8, 8};
  const auto ds = synth_generate(spec).dataset;
  std::mt19937_64 rng(15);
  const nets::Encoder enc({3, 4, 1, 3}, rng);
  const auto m = export_representations(enc, ds, dir / "r1");
  ASSERT_EQ(m.entries.size(), 6u);
  const auto back = read_representations(dir / "r1" / "manifest.json");
  ASSERT_EQ(back.size(), 2u);
  for (const auto& [domain, frames] : back) {
    ASSERT_EQ(frames.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
      const Tensor x = ds.frame(domain, static_cast<std::int64_t>(i));
      EXPECT_TRUE(bit_identical(frames[i], enc(x.reshaped({1, 3, 8, 8})))) << domain << i;
    }
  }
  const auto same = export_representations(enc, ds, dir / "r2");
  const nets::Encoder other({3, 4, 1, 3}, rng);
  const auto changed = export_representations(other, ds, dir / "r3");
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(m.entries[i].sha256, same.entries[i].sha256);
    EXPECT_NE(m.entries[i].sha256, changed.entries[i].sha256);
    EXPECT_EQ(m.entries[i].shape, (Shape{1, 3, 8, 8}));
  }
  EXPECT_EQ(ExportManifest::from_json(m.to_json()).to_json(), m.to_json());

  io::write_npy(dir / "r1" / m.entries[0].file, Tensor(Shape{1, 3, 8, 8}, 0.5));
  EXPECT_THROW(read_representations(dir / "r1" / "manifest.json"), DataError);
  EXPECT_THROW(read_representations(dir / "none" / "manifest.json"), IoError);
}

}  // namespace
}  // namespace intrinsic::data
