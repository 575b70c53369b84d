#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "intrinsic/data.hpp"
#include "intrinsic/tensor.hpp"
#include "json.hpp"

namespace intrinsic::placerec {

inline constexpr int kDefaultWindow = 10;
inline constexpr double kSigmaFloor = 1e-9;

/// Query x reference dissimilarities.
struct DifferenceMatrix {
  Eigen::MatrixXd values;
  bool enhanced = false;

  Eigen::Index queries() const { return values.rows(); }
  Eigen::Index references() const { return values.cols(); }
};

/// D[i,j] = mean |q_i - r_j| over all elements.
DifferenceMatrix difference_matrix(std::span<const Tensor> queries, std::span<const Tensor> references);

/// Column-wise local normalization over a vertical window of half-width
/// `window`, clipped at the matrix edges.
DifferenceMatrix contrast_enhance(const DifferenceMatrix& d, int window = kDefaultWindow);

struct MatchOptions {
  int len = 1;
  /// Trajectory slopes searched; {1.0} assumes frame-synchronized sequences.
  std::vector<double> velocities{1.0};

  static MatchOptions with_sweep(int len) { return {len, {0.8, 0.9, 1.0, 1.1, 1.2}}; }
};

struct MatchResult {
  std::vector<std::int64_t> best;  ///< best reference index per query
  std::vector<double> score;       ///< score of that reference
  int len = 1;
};

/// score(j) = mean over t in [0, len) of D[i - t, j - round(v t)], over the
/// offsets that stay inside the matrix; the best reference minimizes it.
MatchResult sequence_match(const DifferenceMatrix& d, const MatchOptions& options);
inline MatchResult sequence_match(const DifferenceMatrix& d, int len) { return sequence_match(d, MatchOptions{len}); }

/// Fraction of queries whose prediction is within `dis` of truth.
double accuracy(const MatchResult& result, std::span<const std::int64_t> truth, int dis);

/// Per-channel CDF remapping to [0,255]; constant channels become 128.
/// Accepts (C,H,W) or (1,C,H,W) with C in {1, 3}.
data::Image histogram_equalize(const Tensor& representation);

struct Metric {
  std::string method;
  std::string domain_pair;  ///< "<query>-<reference>"
  int len = 1;
  int dis = 0;
  double accuracy = 0.0;
  std::int64_t num_queries = 0;
};

std::string metrics_csv(std::span<const Metric> metrics);
nlohmann::json metrics_json(std::span<const Metric> metrics);
/// Markdown grid: one row per method, one column per (domain pair, len).
std::string metrics_table(std::span<const Metric> metrics);

}  // namespace intrinsic::placerec
