#include "mars/error.hpp"
#include "mars/mixture.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace mars::mixture {

namespace {

constexpr double kFloorScale = 1e-6;

double global_variance(const Matrix& points) {
  const Eigen::RowVectorXd mean = points.colwise().mean();
  return (points.rowwise() - mean).squaredNorm() / static_cast<double>(points.rows() * points.cols());
}

void apply_floor(Matrix& covariance, double fallback_variance) {
  double floor = covariance_floor(covariance);
  if (!(floor > 0.0)) floor = kFloorScale * (fallback_variance > 0.0 ? fallback_variance : 1.0);
  covariance = 0.5 * (covariance + covariance.transpose());
  covariance.diagonal().array() += floor;
}

// Per-component log N(x | mean, cov) for every point, as an n x C matrix.
Matrix component_log_densities(const MixtureModel& model, const Matrix& points) {
  const Eigen::Index n = points.rows();
  const int d = model.dim();
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  Matrix out(n, model.components());
  for (int k = 0; k < model.components(); ++k) {
    Matrix cov = model.covariances[static_cast<std::size_t>(k)];
    Eigen::LLT<Matrix> llt(cov);
    double jitter = covariance_floor(cov);
    if (!(jitter > 0.0)) jitter = kFloorScale;
    while (llt.info() != Eigen::Success) {
      cov.diagonal().array() += jitter;
      jitter *= 10.0;
      llt.compute(cov);
    }
    const Matrix& l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const Matrix centered =
        (points.rowwise() - model.means[static_cast<std::size_t>(k)].transpose()).transpose();
    const Matrix whitened = llt.matrixL().solve(centered);
    const Eigen::RowVectorXd mahalanobis = whitened.colwise().squaredNorm();
    out.col(k) = (-0.5 * (d * log_two_pi + log_det + mahalanobis.array())).transpose();
  }
  return out;
}

// Returns the mean log-likelihood; fills responsibilities.
double e_step(const MixtureModel& model, const Matrix& points, Matrix& responsibilities) {
  Matrix log_joint = component_log_densities(model, points);
  for (int k = 0; k < model.components(); ++k) {
    const double pk = model.proportions[k];
    log_joint.col(k).array() += pk > 0.0 ? std::log(pk) : -std::numeric_limits<double>::infinity();
  }
  responsibilities.resize(log_joint.rows(), log_joint.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < log_joint.rows(); ++i) {
    const double top = log_joint.row(i).maxCoeff();
    const Eigen::ArrayXd shifted = (log_joint.row(i).array() - top).exp().transpose();
    const double sum = shifted.sum();
    responsibilities.row(i) = (shifted / sum).matrix().transpose();
    total += top + std::log(sum);
  }
  return total / static_cast<double>(points.rows());
}

void m_step(const Matrix& points, const Matrix& responsibilities, double fallback_variance,
            MixtureModel& model) {
  const double n = static_cast<double>(points.rows());
  for (int k = 0; k < model.components(); ++k) {
    const Vector r = responsibilities.col(k);
    const double mass = r.sum();
    if (!(mass > 0.0)) {
      // Dead component: keep its parameters, it can no longer gain mass.
      model.proportions[k] = 0.0;
      continue;
    }
    model.proportions[k] = mass / n;
    Vector mean = (points.transpose() * r) / mass;
    const Matrix centered = points.rowwise() - mean.transpose();
    Matrix cov = (centered.transpose() * r.asDiagonal() * centered) / mass;
    apply_floor(cov, fallback_variance);
    model.means[static_cast<std::size_t>(k)] = std::move(mean);
    model.covariances[static_cast<std::size_t>(k)] = std::move(cov);
  }
  model.proportions /= model.proportions.sum();
}

std::vector<Eigen::Index> kmeanspp_centers(const Matrix& points, int components,
                                           std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  std::vector<Eigen::Index> centers;
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.push_back(first(rng));
  Vector nearest = (points.rowwise() - points.row(centers[0])).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(centers.size()) < components) {
    const double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double running = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        running += nearest[i];
        if (running > target && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centers.push_back(pick);
    nearest = nearest.cwiseMin((points.rowwise() - points.row(pick)).rowwise().squaredNorm());
  }
  return centers;
}

void validate_points(const Matrix& points, int components) {
  if (components < 1) {
    throw Error(ErrorCode::DegenerateInput, "need at least one component");
  }
  if (points.cols() < 1) {
    throw Error(ErrorCode::DegenerateInput, "points must have at least one dimension");
  }
  if (points.rows() < components) {
    throw Error(ErrorCode::DegenerateInput, "n = " + std::to_string(points.rows()) +
                                                " points cannot support " +
                                                std::to_string(components) + " components");
  }
}

}  // namespace

double covariance_floor(const Matrix& covariance) {
  return kFloorScale * covariance.trace() / static_cast<double>(covariance.rows());
}

GmmFit gmm_fit_from(const Matrix& points, MixtureModel init, const GmmOptions& options) {
  validate_points(points, init.components());
  if (init.dim() != points.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "initial model dimension does not match points");
  }
  const double fallback = global_variance(points);
  GmmFit fit;
  fit.model = std::move(init);
  Matrix resp;
  double previous = e_step(fit.model, points, resp);
  fit.log_likelihood.push_back(previous);
  for (int it = 1; it <= options.max_iter; ++it) {
    m_step(points, resp, fallback, fit.model);
    const double current = e_step(fit.model, points, resp);
    fit.log_likelihood.push_back(current);
    fit.iterations = it;
    if (current - previous < options.tol) {
      fit.converged = true;
      break;
    }
    previous = current;
  }
  return fit;
}

namespace {

GmmFit gmm_fit_once(const Matrix& points, int components, std::mt19937_64& rng,
                    const GmmOptions& options) {
  const auto centers = kmeanspp_centers(points, components, rng);
  const Eigen::Index n = points.rows();
  const double fallback = global_variance(points);

  // Hard assignment to the nearest seed, lowest index on ties.
  Matrix hard = Matrix::Zero(n, components);
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int k = 0; k < components; ++k) {
      const double dist = (points.row(i) - points.row(centers[static_cast<std::size_t>(k)])).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    hard(i, best) = 1.0;
  }

  MixtureModel init;
  init.proportions = Vector::Zero(components);
  const Eigen::RowVectorXd global_mean = points.colwise().mean();
  Matrix global_cov = (points.rowwise() - global_mean).transpose() *
                      (points.rowwise() - global_mean) / static_cast<double>(n);
  apply_floor(global_cov, fallback);
  for (int k = 0; k < components; ++k) {
    init.means.emplace_back(points.row(centers[static_cast<std::size_t>(k)]).transpose());
    init.covariances.push_back(global_cov);
  }
  m_step(points, hard, fallback, init);
  return gmm_fit_from(points, std::move(init), options);
}

}  // namespace

GmmFit gmm_fit(const Matrix& points, int components, std::uint64_t seed,
               const GmmOptions& options) {
  validate_points(points, components);
  if (options.restarts < 1) {
    throw Error(ErrorCode::InvalidConfig, "gmm restarts must be at least 1");
  }
  // Restarts draw successive seedings from one stream; the first matches a single fit.
  std::mt19937_64 rng(seed);
  GmmFit best = gmm_fit_once(points, components, rng, options);
  for (int r = 1; r < options.restarts; ++r) {
    GmmFit fit = gmm_fit_once(points, components, rng, options);
    if (fit.log_likelihood.back() > best.log_likelihood.back()) best = std::move(fit);
  }
  return best;
}

Matrix gmm_responsibilities(const MixtureModel& model, const Matrix& points) {
  if (model.dim() != points.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "model dimension " + std::to_string(model.dim()) +
                                                  " does not match points of dimension " +
                                                  std::to_string(points.cols()));
  }
  Matrix resp;
  e_step(model, points, resp);
  return resp;
}

double gmm_mean_log_likelihood(const MixtureModel& model, const Matrix& points) {
  if (model.dim() != points.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "model dimension does not match points");
  }
  Matrix resp;
  return e_step(model, points, resp);
}

}  // namespace mars::mixture
