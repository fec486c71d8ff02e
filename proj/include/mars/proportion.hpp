#pragma once

// Target label-proportion estimation by mixture fitting plus optimal
// assignment of target modes to source classes, and the importance weights
// derived from it.

#include "mars/mixture.hpp"
#include "mars/ot.hpp"
#include "mars/types.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace mars::proportion {

enum class Method { Gmm, Agglomerative };

std::string_view to_string(Method method);

struct SourceStats {
  std::vector<Vector> means;
  Vector proportions;
};

SourceStats source_class_means(const Matrix& latents, std::span<const int> labels, int classes);

struct ModeMatch {
  Matrix cost;  // source class i x target mode j, squared Euclidean
  ot::TransportPlan plan;
  ot::Permutation permutation;  // source class -> target mode
};

ModeMatch match_modes(const std::vector<Vector>& source_means,
                      const std::vector<Vector>& mode_means);

struct ProportionEstimate {
  Vector target_proportions;  // indexed by source class
  ot::Permutation permutation;
  Method method = Method::Agglomerative;
  Vector mode_proportions;  // mixture weights in estimator order
  Matrix cost;
};

ProportionEstimate estimate_target_proportions(const Matrix& source_latents,
                                               std::span<const int> source_labels,
                                               const Matrix& target_latents, int classes,
                                               Method method, std::uint64_t seed);

inline constexpr double kDefaultWeightFloor = 1e-3;

struct ImportanceWeights {
  Vector weights;  // max(p_T, floor) / p_S
  Vector raw;      // p_T / p_S
};

ImportanceWeights importance_weights(const Vector& source_proportions,
                                     const Vector& target_proportions,
                                     double floor = kDefaultWeightFloor);

}  // namespace mars::proportion
