#pragma once

// Mixture estimation over target latents: full-covariance Gaussian mixture
// fitted by EM, and Ward agglomerative clustering.

#include "mars/types.hpp"

#include <cstdint>
#include <vector>

namespace mars::mixture {

struct MixtureModel {
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  Vector proportions;

  int components() const { return static_cast<int>(means.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
};

struct GmmOptions {
  int max_iter = 200;
  // Stop once the mean per-point log-likelihood improves by less than this.
  double tol = 1e-6;
  // Independent k-means++ seedings; the fit with the highest final likelihood wins.
  int restarts = 10;
};

struct GmmFit {
  MixtureModel model;
  // Mean per-point log-likelihood after the initial M-step and after every EM
  // iteration.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
};

// Per restart: k-means++ seeding, one hard-assignment M-step, then EM.
GmmFit gmm_fit(const Matrix& points, int components, std::uint64_t seed,
               const GmmOptions& options = {});

// EM from a caller-supplied starting model.
GmmFit gmm_fit_from(const Matrix& points, MixtureModel init, const GmmOptions& options = {});

// n x C matrix, rows sum to one.
Matrix gmm_responsibilities(const MixtureModel& model, const Matrix& points);

double gmm_mean_log_likelihood(const MixtureModel& model, const Matrix& points);

// Diagonal loading added to every fitted covariance: 1e-6 * trace / d.
double covariance_floor(const Matrix& covariance);

struct ClusterLabels {
  std::vector<int> labels;
  int num_clusters = 0;
};

// Exactly `clusters` groups by Ward linkage. Labels are numbered in order of
// first appearance in `points`.
ClusterLabels agglomerative_cluster(const Matrix& points, int clusters);

Vector cluster_proportions(const ClusterLabels& labels, int clusters);

std::vector<Vector> cluster_means(const Matrix& points, const ClusterLabels& labels,
                                  int clusters);

}  // namespace mars::mixture
