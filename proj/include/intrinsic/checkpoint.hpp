#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "intrinsic/nets.hpp"
#include "intrinsic/tensor.hpp"
#include "json.hpp"

namespace intrinsic {

/// Contents of a checkpoint container: named arrays plus a JSON metadata
/// block. On disk:
///
///   "INTRCKPT" | u32 version | u64 meta_len | meta (UTF-8 JSON)
///   u64 count | count x { u32 name_len | name | u32 rank | i64 dims[rank] | f64 data[] }
///
/// All integers and doubles are little-endian.
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Bundle parameters under their hierarchical names, with metadata
/// {config, domains, seed, step}. Extra arrays (optimizer moments) and
/// metadata fields can be appended by the caller.
Checkpoint bundle_checkpoint(const nets::ModelBundle& bundle, std::int64_t step);

/// Rebuild a bundle from a checkpoint written by bundle_checkpoint.
std::unique_ptr<nets::ModelBundle> bundle_from_checkpoint(const Checkpoint& ckpt);

}  // namespace intrinsic
