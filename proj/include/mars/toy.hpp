#pragma once

// Three-class Gaussian toy benchmark: class-conditionals N(m_k, s I) in the
// source, translated by a common shift in the target, with independent source
// and target label proportions.

#include "mars/types.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace mars::toy {

enum class Regime { Low, Mid, High };

std::string_view to_string(Regime regime);
Regime regime_from_string(std::string_view name);

// Isotropic covariance scale s per regime.
double covariance_scale(Regime regime);

struct ToyConfig {
  std::vector<Vector> source_means;
  double cov_scale = 0.3;
  Vector shift;  // target means are source_means[k] + shift
  Vector source_proportions;
  Vector target_proportions;
  int n_source = 600;
  int n_target = 600;
  std::uint64_t seed = 0;

  int classes() const { return static_cast<int>(source_means.size()); }
  int dim() const { return source_means.empty() ? 0 : static_cast<int>(source_means.front().size()); }
  Vector target_mean(int k) const { return source_means[static_cast<std::size_t>(k)] + shift; }

  // Equilateral triangle of side 4 centred at the origin, uniform source,
  // shift kDefaultShift along +y.
  static ToyConfig standard(Regime regime);
};

inline constexpr double kTriangleSide = 4.0;
inline constexpr double kDefaultShift = 1.8;

void validate(const ToyConfig& config);

struct ToyData {
  LabeledDataset source;
  // Labels are kept for evaluation only.
  LabeledDataset target;
};

ToyData gen_toy(const ToyConfig& config);

// round(n p) per class, fixed up by largest remainder so the total is n.
std::vector<int> class_counts(const Vector& proportions, int n);

Vector empirical_proportions(std::span<const int> labels, int classes);

// Target proportions with class 0 as the majority: [m, (1-m)/2, (1-m)/2].
Vector majority_proportions(double majority);

inline constexpr double kBalancedMajority = 1.0 / 3.0;

// Majority grid from 1/3 to 0.9.
std::vector<double> default_imbalance_grid();

std::vector<ToyConfig> imbalance_sweep_configs(Regime regime,
                                               std::span<const double> majority_grid);
std::vector<ToyConfig> imbalance_sweep_configs(Regime regime);

// Target proportion presets of the shift sweep (index 0..2).
Vector shift_preset(int preset);

std::vector<double> default_shift_grid();

std::vector<ToyConfig> shift_sweep_configs(int preset, std::span<const double> shift_grid,
                                           Regime regime = Regime::Low);
std::vector<ToyConfig> shift_sweep_configs(int preset);

double l1_proportion_error(const Vector& estimate, const Vector& truth);

// Grid maximum over k and z of w_k * p_T(z | k) / p_S(z | k), where
// w_k = p_T(k) / p_S(k), using the closed-form Gaussian densities. The grid
// spans the bounding box of all source and target means widened by three
// standard deviations, with `resolution` points per axis (2-D configs only).
double lemma1_sup_ratio(const ToyConfig& config, int resolution);

}  // namespace mars::toy
