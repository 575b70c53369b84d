#pragma once

#include <string>
#include <utility>
#include <vector>

#include "intrinsic/nets.hpp"

namespace intrinsic {

struct AdamOptions {
  double learning_rate = 2e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Adaptive-moment optimizer over a named parameter group. Every parameter
/// keeps its own step counter; parameters that received no gradient since the
/// last zero_grad() are skipped entirely, moments included.
///
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
class Adam {
 public:
  Adam(AdamOptions options, std::vector<nets::NamedParameter> params);

  void step();
  void zero_grad();

  const AdamOptions& options() const { return options_; }
  const std::vector<nets::NamedParameter>& parameters() const { return params_; }

  /// Moments as arrays "<prefix>.m.<name>" / "<prefix>.v.<name>" and step
  /// counters as "<prefix>.t.<name>" (rank-0).
  std::vector<std::pair<std::string, Tensor>> state(const std::string& prefix) const;
  void load_state(const std::string& prefix, const std::vector<std::pair<std::string, Tensor>>& arrays);

 private:
  struct Slot {
    Tensor m;
    Tensor v;
    std::int64_t t = 0;
  };
  AdamOptions options_;
  std::vector<nets::NamedParameter> params_;
  std::vector<Slot> slots_;
};

}  // namespace intrinsic
