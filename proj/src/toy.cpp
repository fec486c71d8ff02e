#include "mars/toy.hpp"

#include "mars/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace mars::toy {

namespace {

void validate_simplex(const Vector& p, int classes, const char* name) {
  if (p.size() != classes) {
    throw Error(ErrorCode::InvalidProportions, std::string(name) + " has the wrong length");
  }
  if ((p.array() < 0.0).any() || !p.allFinite() || std::abs(p.sum() - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidProportions, std::string(name) + " is not a simplex vector");
  }
}

LabeledDataset sample_domain(const ToyConfig& config, const Vector& proportions, int n,
                             bool target, std::mt19937_64& rng) {
  const std::vector<int> counts = class_counts(proportions, n);
  const double stddev = std::sqrt(config.cov_scale);
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledDataset out;
  out.points.resize(n, config.dim());
  out.labels.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (int k = 0; k < config.classes(); ++k) {
    const Vector mean = target ? config.target_mean(k) : config.source_means[static_cast<std::size_t>(k)];
    for (int i = 0; i < counts[static_cast<std::size_t>(k)]; ++i, ++row) {
      for (int c = 0; c < config.dim(); ++c) out.points(row, c) = mean[c] + stddev * normal(rng);
      out.labels.push_back(k);
    }
  }
  // Shuffle rows so minibatch order carries no class structure.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  LabeledDataset shuffled;
  shuffled.points.resize(n, config.dim());
  shuffled.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    shuffled.points.row(i) = out.points.row(order[static_cast<std::size_t>(i)]);
    shuffled.labels[static_cast<std::size_t>(i)] = out.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
  }
  shuffled.true_proportions = proportions;
  return shuffled;
}

}  // namespace

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::Low: return "low";
    case Regime::Mid: return "mid";
    case Regime::High: return "high";
  }
  return "low";
}

Regime regime_from_string(std::string_view name) {
  if (name == "low" || name == "easy") return Regime::Low;
  if (name == "mid") return Regime::Mid;
  if (name == "high" || name == "hard") return Regime::High;
  throw Error(ErrorCode::InvalidConfig, "unknown regime '" + std::string(name) + "'");
}

double covariance_scale(Regime regime) {
  switch (regime) {
    case Regime::Low: return 0.3;
    case Regime::Mid: return 0.8;
    case Regime::High: return 1.6;
  }
  return 0.3;
}

ToyConfig ToyConfig::standard(Regime regime) {
  ToyConfig config;
  const double radius = kTriangleSide / std::sqrt(3.0);
  for (int k = 0; k < 3; ++k) {
    const double angle = M_PI / 2.0 + 2.0 * M_PI * k / 3.0;
    Vector m(2);
    m << radius * std::cos(angle), radius * std::sin(angle);
    config.source_means.push_back(m);
  }
  config.cov_scale = covariance_scale(regime);
  config.shift = Vector::Zero(2);
  config.shift[1] = kDefaultShift;
  config.source_proportions = Vector::Constant(3, 1.0 / 3.0);
  config.target_proportions = Vector::Constant(3, 1.0 / 3.0);
  return config;
}

void validate(const ToyConfig& config) {
  if (config.classes() < 1) {
    throw Error(ErrorCode::InvalidProportions, "toy config has no classes");
  }
  validate_simplex(config.source_proportions, config.classes(), "source proportions");
  validate_simplex(config.target_proportions, config.classes(), "target proportions");
  if (!(config.cov_scale > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "covariance scale must be positive");
  }
  if (config.shift.size() != config.dim()) {
    throw Error(ErrorCode::InvalidConfig, "shift dimension differs from the means");
  }
  for (const Vector& m : config.source_means) {
    if (m.size() != config.dim()) throw Error(ErrorCode::InvalidConfig, "means differ in dimension");
  }
  if (config.n_source < 1 || config.n_target < 1) {
    throw Error(ErrorCode::InvalidConfig, "sample counts must be positive");
  }
}

ToyData gen_toy(const ToyConfig& config) {
  validate(config);
  std::mt19937_64 rng(config.seed);
  ToyData data;
  data.source = sample_domain(config, config.source_proportions, config.n_source, false, rng);
  data.target = sample_domain(config, config.target_proportions, config.n_target, true, rng);
  return data;
}

std::vector<int> class_counts(const Vector& proportions, int n) {
  const auto classes = static_cast<std::size_t>(proportions.size());
  std::vector<int> counts(classes);
  std::vector<double> remainder(classes);
  int assigned = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    const double exact = proportions[static_cast<Eigen::Index>(k)] * n;
    counts[k] = static_cast<int>(std::floor(exact));
    remainder[k] = exact - counts[k];
    assigned += counts[k];
  }
  std::vector<std::size_t> order(classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n && i < classes; ++i, ++assigned) ++counts[order[i]];
  return counts;
}

Vector empirical_proportions(std::span<const int> labels, int classes) {
  if (labels.empty()) throw Error(ErrorCode::EmptyInput, "no labels");
  Vector p = Vector::Zero(classes);
  for (int y : labels) {
    if (y < 0 || y >= classes) throw Error(ErrorCode::DimensionMismatch, "label out of range");
    p[y] += 1.0;
  }
  return p / static_cast<double>(labels.size());
}

Vector majority_proportions(double majority) {
  if (!(majority > 0.0 && majority < 1.0)) {
    throw Error(ErrorCode::InvalidProportions, "majority proportion must lie in (0, 1)");
  }
  Vector p(3);
  if (std::abs(majority - kBalancedMajority) < 1e-12) {
    p.setConstant(1.0 / 3.0);
  } else {
    p << majority, (1.0 - majority) / 2.0, (1.0 - majority) / 2.0;
  }
  return p;
}

std::vector<double> default_imbalance_grid() {
  return {kBalancedMajority, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

std::vector<ToyConfig> imbalance_sweep_configs(Regime regime, std::span<const double> majority_grid) {
  std::vector<ToyConfig> configs;
  for (double majority : majority_grid) {
    ToyConfig config = ToyConfig::standard(regime);
    config.target_proportions = majority_proportions(majority);
    configs.push_back(std::move(config));
  }
  return configs;
}

std::vector<ToyConfig> imbalance_sweep_configs(Regime regime) {
  const auto grid = default_imbalance_grid();
  return imbalance_sweep_configs(regime, grid);
}

Vector shift_preset(int preset) {
  Vector p(3);
  switch (preset) {
    case 0: p << 0.33, 0.33, 0.34; break;
    // Listed as (0.5, 0.2, 0.2), which does not sum to one; renormalized.
    case 1: p << 0.5, 0.25, 0.25; break;
    case 2: p << 0.8, 0.1, 0.1; break;
    default: throw Error(ErrorCode::InvalidConfig, "shift preset must be 0, 1 or 2");
  }
  return p;
}

std::vector<double> default_shift_grid() { return {0.0, 0.4, 0.8, 1.2, 1.6, 2.0}; }

std::vector<ToyConfig> shift_sweep_configs(int preset, std::span<const double> shift_grid,
                                           Regime regime) {
  const Vector proportions = shift_preset(preset);
  if (!std::is_sorted(shift_grid.begin(), shift_grid.end())) {
    throw Error(ErrorCode::InvalidConfig, "shift grid must be increasing");
  }
  std::vector<ToyConfig> configs;
  for (double magnitude : shift_grid) {
    ToyConfig config = ToyConfig::standard(regime);
    config.shift[0] = 0.0;
    config.shift[1] = magnitude;
    config.target_proportions = proportions;
    configs.push_back(std::move(config));
  }
  return configs;
}

std::vector<ToyConfig> shift_sweep_configs(int preset) {
  const auto grid = default_shift_grid();
  return shift_sweep_configs(preset, grid);
}

double l1_proportion_error(const Vector& estimate, const Vector& truth) {
  if (estimate.size() != truth.size()) {
    throw Error(ErrorCode::DimensionMismatch, "proportion vectors differ in length");
  }
  return (estimate - truth).cwiseAbs().sum();
}

double lemma1_sup_ratio(const ToyConfig& config, int resolution) {
  validate(config);
  if (config.dim() != 2) {
    throw Error(ErrorCode::DimensionMismatch, "grid evaluation supports 2-D configs only");
  }
  if (resolution < 2) {
    throw Error(ErrorCode::InvalidConfig, "grid resolution must be at least 2");
  }
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  for (int k = 0; k < config.classes(); ++k) {
    for (const Vector& m : {config.source_means[static_cast<std::size_t>(k)], config.target_mean(k)}) {
      lo = lo.cwiseMin(Eigen::Vector2d(m[0], m[1]));
      hi = hi.cwiseMax(Eigen::Vector2d(m[0], m[1]));
    }
  }
  const double margin = 3.0 * std::sqrt(config.cov_scale);
  lo.array() -= margin;
  hi.array() += margin;

  // Shared isotropic covariance: log S_k(z) = (|z - mS|^2 - |z - mT|^2) / (2 s).
  double best_log = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < config.classes(); ++k) {
    const double ps = config.source_proportions[k];
    const double pt = config.target_proportions[k];
    if (!(ps > 0.0) || !(pt > 0.0)) continue;
    const double log_w = std::log(pt) - std::log(ps);
    const Vector& ms = config.source_means[static_cast<std::size_t>(k)];
    const Vector mt = config.target_mean(k);
    for (int a = 0; a < resolution; ++a) {
      const double x = lo[0] + (hi[0] - lo[0]) * a / (resolution - 1);
      for (int b = 0; b < resolution; ++b) {
        const double y = lo[1] + (hi[1] - lo[1]) * b / (resolution - 1);
        const double ds = (x - ms[0]) * (x - ms[0]) + (y - ms[1]) * (y - ms[1]);
        const double dt = (x - mt[0]) * (x - mt[0]) + (y - mt[1]) * (y - mt[1]);
        best_log = std::max(best_log, log_w + (ds - dt) / (2.0 * config.cov_scale));
      }
    }
  }
  return std::exp(best_log);
}

}  // namespace mars::toy
