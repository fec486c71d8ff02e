#include "mars/proportion.hpp"

#include "mars/error.hpp"

#include <algorithm>
#include <string>

namespace mars::proportion {

namespace {

Matrix stack_rows(const std::vector<Vector>& vectors) {
  Matrix out(static_cast<Eigen::Index>(vectors.size()), vectors.front().size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = vectors[i].transpose();
  }
  return out;
}

}  // namespace

std::string_view to_string(Method method) {
  return method == Method::Gmm ? "gmm" : "agglomerative";
}

SourceStats source_class_means(const Matrix& latents, std::span<const int> labels, int classes) {
  if (static_cast<Eigen::Index>(labels.size()) != latents.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "one label per source latent required");
  }
  SourceStats stats;
  stats.means.assign(static_cast<std::size_t>(classes), Vector::Zero(latents.cols()));
  Vector counts = Vector::Zero(classes);
  for (Eigen::Index i = 0; i < latents.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) {
      throw Error(ErrorCode::DimensionMismatch, "source label " + std::to_string(y) + " out of range");
    }
    stats.means[static_cast<std::size_t>(y)] += latents.row(i).transpose();
    counts[y] += 1.0;
  }
  for (int k = 0; k < classes; ++k) {
    if (counts[k] == 0.0) {
      throw Error(ErrorCode::MissingClass, "source class " + std::to_string(k) + " has no samples");
    }
    stats.means[static_cast<std::size_t>(k)] /= counts[k];
  }
  stats.proportions = counts / static_cast<double>(latents.rows());
  return stats;
}

ModeMatch match_modes(const std::vector<Vector>& source_means,
                      const std::vector<Vector>& mode_means) {
  if (source_means.size() != mode_means.size() || source_means.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "need as many target modes as source classes");
  }
  const auto classes = static_cast<Eigen::Index>(source_means.size());
  ModeMatch match;
  match.cost = ot::squared_euclidean_cost(stack_rows(source_means), stack_rows(mode_means));
  const Vector uniform = Vector::Constant(classes, 1.0 / static_cast<double>(classes));
  match.plan = ot::solve_discrete_ot(match.cost, uniform, uniform);
  match.permutation = ot::permutation_from_plan(match.plan);
  return match;
}

ProportionEstimate estimate_target_proportions(const Matrix& source_latents,
                                               std::span<const int> source_labels,
                                               const Matrix& target_latents, int classes,
                                               Method method, std::uint64_t seed) {
  if (source_latents.cols() != target_latents.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "source and target latents differ in dimension");
  }
  const SourceStats source = source_class_means(source_latents, source_labels, classes);

  ProportionEstimate estimate;
  estimate.method = method;
  std::vector<Vector> modes;
  if (method == Method::Gmm) {
    const mixture::GmmFit fit = mixture::gmm_fit(target_latents, classes, seed);
    modes = fit.model.means;
    estimate.mode_proportions = fit.model.proportions;
  } else {
    const mixture::ClusterLabels labels = mixture::agglomerative_cluster(target_latents, classes);
    modes = mixture::cluster_means(target_latents, labels, classes);
    estimate.mode_proportions = mixture::cluster_proportions(labels, classes);
  }

  const ModeMatch match = match_modes(source.means, modes);
  // C * P* is a permutation matrix mapping mode proportions onto classes.
  estimate.target_proportions =
      static_cast<double>(classes) * match.plan.coupling * estimate.mode_proportions;
  estimate.permutation = match.permutation;
  estimate.cost = match.cost;
  return estimate;
}

ImportanceWeights importance_weights(const Vector& source_proportions,
                                     const Vector& target_proportions, double floor) {
  if (source_proportions.size() != target_proportions.size()) {
    throw Error(ErrorCode::DimensionMismatch, "proportion vectors differ in length");
  }
  ImportanceWeights out;
  out.weights.resize(source_proportions.size());
  out.raw.resize(source_proportions.size());
  for (Eigen::Index k = 0; k < source_proportions.size(); ++k) {
    if (!(source_proportions[k] > 0.0)) {
      throw Error(ErrorCode::ZeroSourceClass,
                  "source proportion of class " + std::to_string(k) + " is zero");
    }
    out.raw[k] = target_proportions[k] / source_proportions[k];
    out.weights[k] = std::max(target_proportions[k], floor) / source_proportions[k];
  }
  return out;
}

}  // namespace mars::proportion
