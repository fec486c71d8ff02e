#include "mars/error.hpp"
#include "mars/nn.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <sstream>

namespace {

using mars::Matrix;
using mars::Vector;
using mars::testing::oracles;
using mars::testing::to_matrix;
using mars::testing::to_vector;
namespace nn = mars::nn;

constexpr double kStep = 1e-5;
constexpr double kTolerance = 1e-4;
// Instances with a ReLU pre-activation closer than this to zero are redrawn so
// that +-kStep never crosses a kink.
constexpr double kKinkMargin = 1e-3;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n01;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * n01(rng);
  return m;
}

nn::Mlp random_mlp(const std::vector<int>& dims, nn::Activation output, std::mt19937_64& rng) {
  nn::Mlp mlp = nn::Mlp::make(dims, nn::Activation::Relu, output, rng());
  for (auto& layer : mlp.layers()) layer.bias = random_matrix(layer.bias.size(), 1, rng, 0.3);
  return mlp;
}

bool near_kink(const nn::Mlp& mlp, const Matrix& x) {
  const nn::ForwardCache c = mlp.forward_cached(x);
  for (std::size_t l = 0; l < c.pre.size(); ++l) {
    if (mlp.layers()[l].activation == nn::Activation::Relu && c.pre[l].cwiseAbs().minCoeff() < kKinkMargin) {
      return true;
    }
  }
  return false;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

Matrix numeric_gradient(Matrix& x, const std::function<double()>& f) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + kStep;
    const double up = f();
    x.data()[i] = saved - kStep;
    const double down = f();
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * kStep);
  }
  return g;
}

// Checks every weight and bias gradient of `mlp` in `tape` against f.
void expect_parameter_gradients(nn::Mlp& mlp, const nn::GradTape& tape, const std::function<double()>& f) {
  for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
    Matrix& w = mlp.layers()[l].weight;
    EXPECT_LE(relative_error(numeric_gradient(w, f), tape.weight[l]), kTolerance) << "weight " << l;
    Matrix b = mlp.layers()[l].bias;
    const auto bias_f = [&] {
      mlp.layers()[l].bias = b;
      return f();
    };
    const Matrix gb = numeric_gradient(b, bias_f);
    mlp.layers()[l].bias = b;
    EXPECT_LE(relative_error(gb, Matrix(tape.bias[l])), kTolerance) << "bias " << l;
  }
}

TEST(Forward, Examples) {
  nn::Layer zero{Matrix::Zero(3, 2), Vector::Zero(3), nn::Activation::Relu};
  EXPECT_TRUE(nn::Mlp({zero}).forward(Matrix::Random(4, 2)).isZero());
  nn::Layer id{Matrix::Identity(3, 3), Vector::Zero(3), nn::Activation::Identity};
  const Matrix x = Matrix::Random(5, 3);
  EXPECT_EQ(nn::Mlp({id}).forward(x), x);

  const auto& o = oracles()["mlp_forward"];
  nn::Mlp two({{to_matrix(o["w0"]), to_vector(o["b0"]), nn::Activation::Relu},
               {to_matrix(o["w1"]), to_vector(o["b1"]), nn::Activation::Identity}});
  EXPECT_LT((two.forward(to_matrix(o["x"])) - to_matrix(o["y"])).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(two.forward(Matrix::Zero(2, 4)), mars::Error);
}

TEST(Forward, BatchOrderEquivariant) {
  std::mt19937_64 rng(1);
  const nn::Mlp mlp = random_mlp({3, 6, 6, 2}, nn::Activation::Identity, rng);
  const Matrix x = random_matrix(7, 3, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(7);
  p.setIdentity();
  std::shuffle(p.indices().data(), p.indices().data() + 7, rng);
  EXPECT_TRUE((p * mlp.forward(x)).isApprox(mlp.forward(p * x), 1e-14));
}

TEST(Mlp, RejectsBrokenChains) {
  nn::Layer a{Matrix::Zero(3, 2), Vector::Zero(3), nn::Activation::Relu};
  nn::Layer b{Matrix::Zero(1, 4), Vector::Zero(1), nn::Activation::Identity};
  EXPECT_THROW(nn::Mlp({a, b}), mars::Error);
}

TEST(Checkpoint, RoundTripIsExact) {
  std::mt19937_64 rng(2);
  const nn::Mlp mlp = random_mlp({4, 5, 3}, nn::Activation::Identity, rng);
  std::stringstream ss;
  mlp.save(ss);
  const nn::Mlp back = nn::Mlp::load(ss);
  ASSERT_EQ(back.num_layers(), mlp.num_layers());
  for (int l = 0; l < mlp.num_layers(); ++l) {
    EXPECT_EQ(back.layers()[static_cast<std::size_t>(l)].weight, mlp.layers()[static_cast<std::size_t>(l)].weight);
    EXPECT_EQ(back.layers()[static_cast<std::size_t>(l)].bias, mlp.layers()[static_cast<std::size_t>(l)].bias);
    EXPECT_EQ(back.layers()[static_cast<std::size_t>(l)].activation, mlp.layers()[static_cast<std::size_t>(l)].activation);
  }
  std::stringstream again;
  back.save(again);
  std::stringstream first;
  mlp.save(first);
  EXPECT_EQ(again.str(), first.str());
  std::stringstream junk("not a checkpoint");
  EXPECT_THROW(nn::Mlp::load(junk), mars::Error);
}

TEST(Init, SeededAndBounded) {
  const std::vector<int> dims{10, 20, 3};
  const auto a = nn::Mlp::make(dims, nn::Activation::Relu, nn::Activation::Identity, 5);
  const auto b = nn::Mlp::make(dims, nn::Activation::Relu, nn::Activation::Identity, 5);
  EXPECT_EQ(a.layers()[0].weight, b.layers()[0].weight);
  EXPECT_LE(a.layers()[0].weight.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 10.0));
  EXPECT_TRUE(a.layers()[1].bias.isZero());
}

TEST(WeightedCrossEntropy, Examples) {
  const std::vector<int> y{0, 1, 2, 1};
  const auto ce = nn::weighted_cross_entropy(Matrix::Zero(4, 3), y, Vector::Ones(3));
  EXPECT_NEAR(ce.loss, std::log(3.0), 1e-15);

  std::mt19937_64 rng(4);
  const Matrix logits = random_matrix(4, 3, rng);
  const auto one = nn::weighted_cross_entropy(logits, y, Vector::Ones(3));
  const auto two = nn::weighted_cross_entropy(logits, y, Vector::Constant(3, 2.0));
  EXPECT_DOUBLE_EQ(two.loss, 2.0 * one.loss);
  EXPECT_TRUE(two.grad_logits.isApprox(2.0 * one.grad_logits));

  const auto& o = oracles()["cross_entropy"];
  const auto ref = nn::weighted_cross_entropy(to_matrix(o["logits"]), o["labels"].get<std::vector<int>>(),
                                              to_vector(o["class_weights"]));
  EXPECT_NEAR(ref.loss, o["loss"].get<double>(), 1e-12);
  EXPECT_LT((ref.grad_logits - to_matrix(o["grad"])).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(nn::weighted_cross_entropy(logits, std::vector<int>{0, 1}, Vector::Ones(3)), mars::Error);
}

TEST(WassersteinDual, Examples) {
  nn::Layer zero{Matrix::Zero(1, 2), Vector::Zero(1), nn::Activation::Identity};
  const nn::Mlp v0({zero});
  std::mt19937_64 rng(6);
  const Matrix zs = random_matrix(5, 2, rng), zt = random_matrix(5, 2, rng);
  EXPECT_EQ(nn::wasserstein_dual_loss(v0, zs, zt, Vector::Ones(5)).value, 0.0);

  nn::Layer lin{Matrix::Ones(1, 1), Vector::Zero(1), nn::Activation::Identity};
  const nn::Mlp v1({lin});
  const Matrix a = random_matrix(6, 1, rng), b = random_matrix(6, 1, rng);
  EXPECT_NEAR(nn::wasserstein_dual_loss(v1, a, a, Vector::Ones(6)).value, 0.0, 1e-15);
  EXPECT_NEAR(nn::wasserstein_dual_loss(v1, a, b, Vector::Ones(6)).value, a.mean() - b.mean(), 1e-14);
  EXPECT_THROW(nn::wasserstein_dual_loss(v1, a, b, Vector::Ones(5)), mars::Error);
}

TEST(GradientPenalty, Examples) {
  Matrix w(1, 3);
  w << 0.6, 0.0, 0.8;
  const nn::Mlp unit({{w, Vector::Zero(1), nn::Activation::Identity}});
  std::mt19937_64 rng(8);
  const Matrix zs = random_matrix(4, 3, rng), zt = random_matrix(4, 3, rng);
  EXPECT_NEAR(nn::gradient_penalty(unit, zs, zt, 1).value, 0.0, 1e-15);
  const nn::Mlp zero({{Matrix::Zero(1, 3), Vector::Zero(1), nn::Activation::Identity}});
  EXPECT_DOUBLE_EQ(nn::gradient_penalty(zero, zs, zt, 1).value, 1.0);
  EXPECT_THROW(nn::gradient_penalty(zero, zs, random_matrix(3, 3, rng), 1), mars::Error);
}

TEST(GradientPenalty, InterpolatesPerPair) {
  // For a piecewise-linear critic the input gradient at z_hat is what matters;
  // with mix = 1 every pair sits at the source point.
  std::mt19937_64 rng(9);
  const nn::Mlp v = random_mlp({2, 5, 1}, nn::Activation::Identity, rng);
  const Matrix zs = random_matrix(3, 2, rng), zt = random_matrix(3, 2, rng);
  const auto at_source = nn::gradient_penalty(v, zs, zt, Vector::Ones(3));
  const auto same = nn::gradient_penalty(v, zs, zs, Vector::Constant(3, 0.5));
  EXPECT_NEAR(at_source.value, same.value, 1e-14);
  const Vector t = nn::interpolation_coefficients(1000, 3);
  EXPECT_GE(t.minCoeff(), 0.0);
  EXPECT_LT(t.maxCoeff(), 1.0);
  EXPECT_NEAR(t.mean(), 0.5, 0.05);
}

// Random small nets: classification loss through h and g, dual loss and
// gradient penalty through the critic and into the latents.
class GradientCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradientCheck, CrossEntropyParametersAndInputs) {
  std::mt19937_64 rng(100 + GetParam());
  nn::Mlp mlp;
  Matrix x;
  do {
    mlp = random_mlp({3, 5, 4, 3}, nn::Activation::Identity, rng);
    x = random_matrix(6, 3, rng);
  } while (near_kink(mlp, x));
  const std::vector<int> y{0, 2, 1, 1, 0, 2};
  const Vector cw = (random_matrix(3, 1, rng).array().abs() + 0.2).matrix();
  const auto loss = [&] { return nn::weighted_cross_entropy(mlp.forward(x), y, cw).loss; };
  const nn::ForwardCache cache = mlp.forward_cached(x);
  const auto ce = nn::weighted_cross_entropy(cache.output(), y, cw);
  nn::GradTape tape = nn::GradTape::zeros_like(mlp);
  const Matrix dx = mlp.backward(cache, ce.grad_logits, tape);
  expect_parameter_gradients(mlp, tape, loss);
  EXPECT_LE(relative_error(numeric_gradient(x, loss), dx), kTolerance);
}

TEST_P(GradientCheck, DualLossParametersAndInputs) {
  std::mt19937_64 rng(200 + GetParam());
  nn::Mlp v;
  Matrix zs, zt;
  do {
    v = random_mlp({4, 6, 6, 1}, nn::Activation::Identity, rng);
    zs = random_matrix(5, 4, rng);
    zt = random_matrix(5, 4, rng);
  } while (near_kink(v, zs) || near_kink(v, zt));
  const Vector w = (random_matrix(5, 1, rng).array().abs() + 0.1).matrix();
  const auto value = [&] { return nn::wasserstein_dual_loss(v, zs, zt, w).value; };
  const auto obj = nn::wasserstein_dual_loss(v, zs, zt, w);
  expect_parameter_gradients(v, obj.critic, value);
  EXPECT_LE(relative_error(numeric_gradient(zs, value), obj.grad_source), kTolerance);
  EXPECT_LE(relative_error(numeric_gradient(zt, value), obj.grad_target), kTolerance);
}

TEST_P(GradientCheck, GradientPenaltyParametersAndInputs) {
  std::mt19937_64 rng(300 + GetParam());
  nn::Mlp v;
  Matrix zs, zt, zhat;
  Vector mix;
  do {
    v = random_mlp({3, 6, 6, 6, 1}, nn::Activation::Identity, rng);
    zs = random_matrix(4, 3, rng);
    zt = random_matrix(4, 3, rng);
    mix = nn::interpolation_coefficients(4, rng());
    zhat = mix.asDiagonal() * zs + (Vector::Ones(4) - mix).asDiagonal() * zt;
  } while (near_kink(v, zhat));
  const auto value = [&] { return nn::gradient_penalty(v, zs, zt, mix).value; };
  const auto obj = nn::gradient_penalty(v, zs, zt, mix);
  EXPECT_GT(obj.critic.squared_norm(), 0.0);
  expect_parameter_gradients(v, obj.critic, value);
  EXPECT_LE(relative_error(numeric_gradient(zs, value), obj.grad_source), kTolerance);
  EXPECT_LE(relative_error(numeric_gradient(zt, value), obj.grad_target), kTolerance);
}

INSTANTIATE_TEST_SUITE_P(RandomNets, GradientCheck, ::testing::Range(0, 10));

TEST(Optimizer, SgdExamples) {
  nn::Mlp m({{Matrix::Constant(1, 1, 2.0), Vector::Zero(1), nn::Activation::Identity}});
  nn::Optimizer sgd(nn::OptimizerKind::Sgd, 1.0, m);
  nn::GradTape g = nn::GradTape::zeros_like(m);
  sgd.step(m, g, nn::Direction::Descend);
  EXPECT_EQ(m.layers()[0].weight(0, 0), 2.0);
  g.weight[0](0, 0) = 3.0;
  sgd.step(m, g, nn::Direction::Descend);
  EXPECT_EQ(m.layers()[0].weight(0, 0), -1.0);
  sgd.step(m, g, nn::Direction::Ascend);
  EXPECT_EQ(m.layers()[0].weight(0, 0), 2.0);
  nn::GradTape wrong = nn::GradTape::zeros_like(nn::Mlp({{Matrix::Zero(2, 1), Vector::Zero(2), nn::Activation::Identity}}));
  EXPECT_THROW(sgd.step(m, wrong, nn::Direction::Descend), mars::Error);
}

TEST(Optimizer, AdamFirstStepMatchesFormula) {
  nn::Mlp m({{Matrix::Constant(1, 1, 2.0), Vector::Constant(1, -1.0), nn::Activation::Identity}});
  nn::Optimizer adam(nn::OptimizerKind::Adam, 0.1, m);
  nn::GradTape g = nn::GradTape::zeros_like(m);
  g.weight[0](0, 0) = 3.0;
  g.bias[0][0] = -0.5;
  adam.step(m, g, nn::Direction::Descend);
  // m_hat = g and v_hat = g^2 after one step, so the update is lr * g / (|g| + eps).
  EXPECT_NEAR(m.layers()[0].weight(0, 0), 2.0 - 0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(m.layers()[0].bias[0], -1.0 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  // Second step with the same gradient: m_hat = g, v_hat = g^2 again.
  adam.step(m, g, nn::Direction::Descend);
  EXPECT_NEAR(m.layers()[0].weight(0, 0), 2.0 - 2.0 * 0.1 * 3.0 / (3.0 + 1e-8), 1e-14);
}

}  // namespace
