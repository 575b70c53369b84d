#include "intrinsic/placerec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "intrinsic/errors.hpp"

namespace intrinsic::placerec {

DifferenceMatrix difference_matrix(std::span<const Tensor> queries, std::span<const Tensor> references) {
  if (queries.empty() || references.empty()) throw DataError("difference matrix needs non-empty sets");
  const Shape& shape = queries.front().shape();
  auto check = [&](const Tensor& t) {
    if (t.shape() != shape) {
      throw ShapeError("representation shape " + shape_str(t.shape()) + " differs from " + shape_str(shape));
    }
  };
  for (const auto& t : queries) check(t);
  for (const auto& t : references) check(t);

  const auto n = static_cast<Eigen::Index>(shape_numel(shape));
  DifferenceMatrix d;
  d.values.resize(static_cast<Eigen::Index>(queries.size()), static_cast<Eigen::Index>(references.size()));
  for (std::size_t i = 0; i < queries.size(); ++i) {
    Eigen::Map<const Eigen::VectorXd> q(queries[i].data(), n);
    for (std::size_t j = 0; j < references.size(); ++j) {
      Eigen::Map<const Eigen::VectorXd> r(references[j].data(), n);
      d.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (q - r).cwiseAbs().sum() / n;
    }
  }
  return d;
}

DifferenceMatrix contrast_enhance(const DifferenceMatrix& d, int window) {
  if (window < 1) throw ConfigError("contrast window must be >= 1");
  const Eigen::Index rows = d.queries(), cols = d.references();
  DifferenceMatrix out{Eigen::MatrixXd(rows, cols), true};
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::Index lo = std::max<Eigen::Index>(0, i - window);
      const Eigen::Index hi = std::min<Eigen::Index>(rows - 1, i + window);
      const auto seg = d.values.col(j).segment(lo, hi - lo + 1);
      if (seg.minCoeff() == seg.maxCoeff()) {
        out.values(i, j) = 0.0;
        continue;
      }
      const double mu = seg.mean();
      const double sigma = std::sqrt((seg.array() - mu).square().mean());
      out.values(i, j) = (d.values(i, j) - mu) / std::max(sigma, kSigmaFloor);
    }
  }
  return out;
}

MatchResult sequence_match(const DifferenceMatrix& d, const MatchOptions& options) {
  if (options.len < 1) throw ConfigError("sequence length must be >= 1");
  if (options.velocities.empty()) throw ConfigError("at least one trajectory velocity is required");
  const Eigen::Index rows = d.queries(), cols = d.references();
  if (rows == 0 || cols == 0) throw DataError("empty difference matrix");
  if (rows < options.len) throw DataError("fewer queries than the sequence length");

  MatchResult result;
  result.len = options.len;
  result.best.resize(static_cast<std::size_t>(rows));
  result.score.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) {
    double best_score = std::numeric_limits<double>::infinity();
    Eigen::Index best = 0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (const double v : options.velocities) {
        double sum = 0.0;
        int terms = 0;
        for (int t = 0; t < options.len; ++t) {
          const Eigen::Index qi = i - t;
          const auto rj = static_cast<Eigen::Index>(j - std::lround(v * t));
          if (qi < 0 || rj < 0 || rj >= cols) continue;
          sum += d.values(qi, rj);
          ++terms;
        }
        const double score = sum / terms;
        if (score < best_score) {
          best_score = score;
          best = j;
        }
      }
    }
    result.best[static_cast<std::size_t>(i)] = best;
    result.score[static_cast<std::size_t>(i)] = best_score;
  }
  return result;
}

double accuracy(const MatchResult& result, std::span<const std::int64_t> truth, int dis) {
  if (dis < 0) throw ConfigError("dis must be >= 0");
  if (result.best.empty()) throw DataError("no queries to score");
  if (truth.size() < result.best.size()) {
    throw DataError("missing ground truth for query " + std::to_string(truth.size()));
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < result.best.size(); ++i) {
    if (truth[i] < 0) throw DataError("missing ground truth for query " + std::to_string(i));
    if (std::llabs(result.best[i] - truth[i]) <= dis) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(result.best.size());
}

data::Image histogram_equalize(const Tensor& representation) {
  Shape s = representation.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || (s[0] != 1 && s[0] != 3)) {
    throw ShapeError("histogram_equalize expects (C,H,W) with C in {1,3}, got " + shape_str(representation.shape()));
  }
  const auto channels = static_cast<int>(s[0]);
  const int h = static_cast<int>(s[1]), w = static_cast<int>(s[2]);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  data::Image img{w, h, std::vector<std::uint8_t>(n * 3)};
  std::vector<double> sorted(n);
  for (int c = 0; c < channels; ++c) {
    const double* plane = representation.data() + static_cast<std::size_t>(c) * n;
    for (std::size_t k = 0; k < n; ++k) {
      if (!std::isfinite(plane[k])) throw NumericError("non-finite value in representation");
    }
    std::copy(plane, plane + n, sorted.begin());
    std::sort(sorted.begin(), sorted.end());
    const bool constant = sorted.front() == sorted.back();
    // cdf(v) = #{values <= v}; the smallest value maps to 0, the largest to 255.
    const auto cdf_min = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), sorted.front()) - sorted.begin());
    for (std::size_t k = 0; k < n; ++k) {
      std::uint8_t level = 128;
      if (!constant) {
        const auto cdf = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), plane[k]) - sorted.begin());
        level = static_cast<std::uint8_t>(std::lround((cdf - cdf_min) / (static_cast<double>(n) - cdf_min) * 255.0));
      }
      const int y = static_cast<int>(k / w), x = static_cast<int>(k % w);
      if (channels == 1) {
        for (int o = 0; o < 3; ++o) img.at(y, x, o) = level;
      } else {
        img.at(y, x, c) = level;
      }
    }
  }
  return img;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(std::span<const Metric> metrics) {
  std::ostringstream os;
  os << "method,domain_pair,len,dis,accuracy,num_queries\n";
  for (const auto& m : metrics) {
    os << m.method << ',' << m.domain_pair << ',' << m.len << ',' << m.dis << ',' << fmt(m.accuracy) << ','
       << m.num_queries << '\n';
  }
  return os.str();
}

nlohmann::json metrics_json(std::span<const Metric> metrics) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : metrics) {
    arr.push_back({{"method", m.method},
                   {"domain_pair", m.domain_pair},
                   {"len", m.len},
                   {"dis", m.dis},
                   {"accuracy", m.accuracy},
                   {"num_queries", m.num_queries}});
  }
  return arr;
}

std::string metrics_table(std::span<const Metric> metrics) {
  std::vector<std::string> methods;
  std::vector<std::pair<std::string, int>> columns;
  std::map<std::pair<std::string, std::pair<std::string, int>>, double> cells;
  std::vector<int> dis_values;
  for (const auto& m : metrics) {
    if (std::find(methods.begin(), methods.end(), m.method) == methods.end()) methods.push_back(m.method);
    const std::pair<std::string, int> col{m.domain_pair, m.len};
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
    if (std::find(dis_values.begin(), dis_values.end(), m.dis) == dis_values.end()) dis_values.push_back(m.dis);
    cells[{m.method, col}] = m.accuracy;
  }
  if (dis_values.size() > 1) throw ConfigError("metrics_table expects a single dis value");

  std::ostringstream os;
  os << "| Method |";
  for (const auto& [pair, len] : columns) os << ' ' << pair << " len=" << len << " |";
  os << "\n|---|";
  for (std::size_t k = 0; k < columns.size(); ++k) os << "---:|";
  os << '\n';
  for (const auto& method : methods) {
    os << "| " << method << " |";
    for (const auto& col : columns) {
      const auto it = cells.find({method, col});
      if (it == cells.end()) {
        os << " - |";
      } else {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " %.2f |", 100.0 * it->second);
        os << buf;
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace intrinsic::placerec
