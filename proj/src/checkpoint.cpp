#include "intrinsic/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "intrinsic/errors.hpp"

namespace intrinsic {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'I', 'N', 'T', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError("truncated checkpoint: " + path.string());
  }
  return v;
}

std::string get_string(std::istream& is, std::size_t len, const std::filesystem::path& path) {
  std::string s(len, '\0');
  if (len && !is.read(s.data(), static_cast<std::streamsize>(len))) {
    throw DataError("truncated checkpoint: " + path.string());
  }
  return s;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : arrays) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling temp file first so a crash never leaves a torn checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    put(os, kVersion);
    const std::string meta = ckpt.metadata.dump();
    put(os, static_cast<std::uint64_t>(meta.size()));
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put(os, static_cast<std::uint64_t>(ckpt.arrays.size()));
    for (const auto& [name, t] : ckpt.arrays) {
      put(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put(os, static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape()) put(os, static_cast<std::int64_t>(d));
      os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw IoError("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  }
  Checkpoint ckpt;
  const auto meta_len = get<std::uint64_t>(is, path);
  try {
    ckpt.metadata = nlohmann::json::parse(get_string(is, meta_len, path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint metadata in " + path.string() + ": " + e.what());
  }
  const auto count = get<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is, path);
    std::string name = get_string(is, name_len, path);
    const auto rank = get<std::uint32_t>(is, path);
    if (rank > 8) throw DataError("implausible array rank in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) d = get<std::int64_t>(is, path);
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    std::vector<double> values(n);
    if (n && !is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      throw DataError("truncated checkpoint: " + path.string());
    }
    ckpt.arrays.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return ckpt;
}

Checkpoint bundle_checkpoint(const nets::ModelBundle& bundle, std::int64_t step) {
  Checkpoint ckpt;
  ckpt.metadata["config"] = bundle.config();
  ckpt.metadata["domains"] = bundle.domains();
  ckpt.metadata["seed"] = bundle.seed();
  ckpt.metadata["step"] = step;
  ckpt.arrays = bundle.state();
  return ckpt;
}

std::unique_ptr<nets::ModelBundle> bundle_from_checkpoint(const Checkpoint& ckpt) {
  try {
    const auto& m = ckpt.metadata;
    auto cfg = m.at("config").get<nets::BundleConfig>();
    auto domains = m.at("domains").get<std::vector<std::string>>();
    auto seed = m.at("seed").get<std::uint64_t>();
    auto bundle = std::make_unique<nets::ModelBundle>(cfg, domains, seed);
    bundle->load_state(ckpt.arrays);
    return bundle;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
}

}  // namespace intrinsic
