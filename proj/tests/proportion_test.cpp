#include "mars/error.hpp"
#include "mars/proportion.hpp"
#include "mars/toy.hpp"

#include <gtest/gtest.h>

#include <random>

namespace {

using mars::Matrix;
using mars::Vector;
namespace pr = mars::proportion;
namespace toy = mars::toy;

TEST(SourceClassMeans, Examples) {
  Matrix z(3, 2);
  z << 1, 2, 3, 4, 5, 6;
  const std::vector<int> y{0, 1, 2};
  const auto s = pr::source_class_means(z, y, 3);
  for (int k = 0; k < 3; ++k) EXPECT_TRUE(s.means[static_cast<std::size_t>(k)].isApprox(z.row(k).transpose()));
  EXPECT_TRUE(s.proportions.isApprox(Vector::Constant(3, 1.0 / 3.0)));

  std::vector<int> counts(40, 0);
  std::fill(counts.begin() + 30, counts.end(), 1);
  const auto two = pr::source_class_means(Matrix::Zero(40, 1), counts, 2);
  EXPECT_TRUE(two.proportions.isApprox(Vector{{0.75, 0.25}}));

  try {
    pr::source_class_means(z, std::vector<int>{0, 0, 2}, 3);
    FAIL() << "expected MissingClass";
  } catch (const mars::Error& e) {
    EXPECT_EQ(e.code(), mars::ErrorCode::MissingClass);
  }
}

TEST(EstimateTargetProportions, SelfMatchingReturnsSourceProportions) {
  auto config = toy::ToyConfig::standard(toy::Regime::Low);
  config.source_proportions = Vector{{0.5, 0.3, 0.2}};
  config.seed = 3;
  const auto data = toy::gen_toy(config);
  for (auto method : {pr::Method::Gmm, pr::Method::Agglomerative}) {
    const auto est = pr::estimate_target_proportions(data.source.points, data.source.labels,
                                                     data.source.points, 3, method, 1);
    EXPECT_LE((est.target_proportions - config.source_proportions).lpNorm<1>(), 0.05);
    EXPECT_NEAR(est.target_proportions.sum(), 1.0, 1e-9);
    EXPECT_GE(est.target_proportions.minCoeff(), 0.0);
  }
}

TEST(EstimateTargetProportions, ShiftedImbalancedToy) {
  auto config = toy::ToyConfig::standard(toy::Regime::Low);
  config.target_proportions = Vector{{0.8, 0.1, 0.1}};
  config.n_target = 1000;
  config.seed = 11;
  const auto data = toy::gen_toy(config);
  for (auto method : {pr::Method::Gmm, pr::Method::Agglomerative}) {
    const auto est = pr::estimate_target_proportions(data.source.points, data.source.labels,
                                                     data.target.points, 3, method, 2);
    EXPECT_LE(toy::l1_proportion_error(est.target_proportions, config.target_proportions), 0.05)
        << pr::to_string(method);
  }
}

TEST(EstimateTargetProportions, NearnessViolationSwapsClasses) {
  // Target class 0 sits on top of source class 1 and vice versa.
  auto config = toy::ToyConfig::standard(toy::Regime::Low);
  config.shift.setZero();
  config.seed = 5;
  auto data = toy::gen_toy(config);
  const Vector offset = config.source_means[1] - config.source_means[0];
  for (Eigen::Index i = 0; i < data.target.points.rows(); ++i) {
    const int y = data.target.labels[static_cast<std::size_t>(i)];
    if (y == 0) data.target.points.row(i) += offset.transpose();
    if (y == 1) data.target.points.row(i) -= offset.transpose();
  }
  const auto est = pr::estimate_target_proportions(data.source.points, data.source.labels,
                                                   data.target.points, 3, pr::Method::Agglomerative, 0);
  EXPECT_FALSE(est.permutation.is_identity());
}

TEST(EstimateTargetProportions, ScaleEquivariantAndDeterministic) {
  auto config = toy::ToyConfig::standard(toy::Regime::Mid);
  config.target_proportions = Vector{{0.2, 0.5, 0.3}};
  config.seed = 8;
  const auto data = toy::gen_toy(config);
  for (auto method : {pr::Method::Gmm, pr::Method::Agglomerative}) {
    const auto a = pr::estimate_target_proportions(data.source.points, data.source.labels,
                                                   data.target.points, 3, method, 4);
    const auto b = pr::estimate_target_proportions(3.0 * data.source.points, data.source.labels,
                                                   3.0 * data.target.points, 3, method, 4);
    EXPECT_EQ(a.permutation, b.permutation);
    const auto again = pr::estimate_target_proportions(data.source.points, data.source.labels,
                                                       data.target.points, 3, method, 4);
    EXPECT_EQ(a.target_proportions, again.target_proportions);
  }
}

TEST(EstimateTargetProportions, CyclicallyMonotoneCostKeepsIdentityPairing) {
  auto config = toy::ToyConfig::standard(toy::Regime::Low);
  config.shift = Vector{{0.3, 0.4}};
  config.target_proportions = Vector{{0.6, 0.3, 0.1}};
  config.seed = 21;
  const auto data = toy::gen_toy(config);
  const auto est = pr::estimate_target_proportions(data.source.points, data.source.labels,
                                                   data.target.points, 3, pr::Method::Agglomerative, 0);
  // Modes come in estimator order, so reorder the cost by the permutation
  // before checking the identity pairing.
  Matrix aligned(3, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) aligned(i, j) = est.cost(i, est.permutation[j]);
  }
  EXPECT_TRUE(mars::ot::check_cyclical_monotonicity(aligned));
  EXPECT_LE(toy::l1_proportion_error(est.target_proportions, config.target_proportions), 0.05);
}

TEST(ImportanceWeights, Examples) {
  const auto same = pr::importance_weights(Vector{{0.3, 0.7}}, Vector{{0.3, 0.7}});
  EXPECT_TRUE(same.weights.isApprox(Vector::Ones(2)));
  const auto ratio = pr::importance_weights(Vector{{0.5, 0.5}}, Vector{{0.8, 0.2}});
  EXPECT_TRUE(ratio.weights.isApprox(Vector{{1.6, 0.4}}));
  const auto floored = pr::importance_weights(Vector{{0.5, 0.5}}, Vector{{1.0, 0.0}}, 1e-3);
  EXPECT_DOUBLE_EQ(floored.weights[1], 1e-3 / 0.5);
  EXPECT_DOUBLE_EQ(floored.raw[1], 0.0);
  try {
    pr::importance_weights(Vector{{1.0, 0.0}}, Vector{{0.5, 0.5}});
    FAIL() << "expected ZeroSourceClass";
  } catch (const mars::Error& e) {
    EXPECT_EQ(e.code(), mars::ErrorCode::ZeroSourceClass);
  }
}

}  // namespace
