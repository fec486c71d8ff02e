#include "mars/nn.hpp"

#include "mars/error.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace mars::nn {

namespace {

void apply_activation(Matrix& values, Activation activation) {
  if (activation == Activation::Relu) values = values.cwiseMax(0.0);
}

// Derivative mask of the activation at the given pre-activations; ReLU uses
// subgradient 0 at exactly 0.
Matrix activation_mask(const Matrix& pre, Activation activation) {
  if (activation == Activation::Identity) return Matrix::Ones(pre.rows(), pre.cols());
  return (pre.array() > 0.0).cast<double>().matrix();
}

void check_shapes_match(const Mlp& mlp, const GradTape& tape) {
  if (tape.weight.size() != mlp.layers().size() || tape.bias.size() != mlp.layers().size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient tape has the wrong number of layers");
  }
  for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
    const Layer& layer = mlp.layers()[l];
    if (tape.weight[l].rows() != layer.weight.rows() || tape.weight[l].cols() != layer.weight.cols() ||
        tape.bias[l].size() != layer.bias.size()) {
      throw Error(ErrorCode::ShapeMismatch, "gradient tape shape differs at layer " + std::to_string(l));
    }
  }
}

void check_critic_inputs(const Mlp& critic, const Matrix& source, const Matrix& target) {
  if (critic.out_dim() != 1) {
    throw Error(ErrorCode::DimensionMismatch, "critic must have a scalar output");
  }
  if (source.cols() != critic.in_dim() || target.cols() != critic.in_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "critic input dimension does not match latents");
  }
}

}  // namespace

GradTape GradTape::zeros_like(const Mlp& mlp) {
  GradTape tape;
  for (const Layer& layer : mlp.layers()) {
    tape.weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    tape.bias.push_back(Vector::Zero(layer.bias.size()));
  }
  return tape;
}

void GradTape::add_scaled(const GradTape& other, double scale) {
  if (other.weight.size() != weight.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient tapes differ in layer count");
  }
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += scale * other.weight[l];
    bias[l] += scale * other.bias[l];
  }
}

double GradTape::squared_norm() const {
  double total = 0.0;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    total += weight[l].squaredNorm() + bias[l].squaredNorm();
  }
  return total;
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "an Mlp needs at least one layer");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "bias size differs from layer width at layer " +
                                                    std::to_string(l));
    }
    if (l > 0 && layer.in_dim() != layers_[l - 1].out_dim()) {
      throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(l) +
                                                    " does not chain with its predecessor");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw Error(ErrorCode::NonFiniteLoss, "non-finite parameter at layer " + std::to_string(l));
    }
  }
}

Mlp Mlp::make(std::span<const int> dims, Activation hidden, Activation output,
              std::uint64_t seed) {
  if (dims.size() < 2) {
    throw Error(ErrorCode::DimensionMismatch, "need at least input and output widths");
  }
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Layer layer;
    layer.weight.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = uniform(rng);
    }
    layer.bias = Vector::Zero(fan_out);
    layer.activation = l + 2 == dims.size() ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

int Mlp::in_dim() const { return layers_.front().in_dim(); }

int Mlp::out_dim() const { return layers_.back().out_dim(); }

std::size_t Mlp::num_parameters() const {
  std::size_t total = 0;
  for (const Layer& layer : layers_) {
    total += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  }
  return total;
}

Matrix Mlp::forward(const Matrix& batch) const {
  if (batch.cols() != in_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "batch has " + std::to_string(batch.cols()) +
                                                  " columns, network expects " +
                                                  std::to_string(in_dim()));
  }
  Matrix current = batch;
  for (const Layer& layer : layers_) {
    Matrix next = current * layer.weight.transpose();
    next.rowwise() += layer.bias.transpose();
    apply_activation(next, layer.activation);
    current = std::move(next);
  }
  return current;
}

ForwardCache Mlp::forward_cached(const Matrix& batch) const {
  if (batch.cols() != in_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "batch has " + std::to_string(batch.cols()) +
                                                  " columns, network expects " +
                                                  std::to_string(in_dim()));
  }
  ForwardCache cache;
  cache.inputs.reserve(layers_.size() + 1);
  cache.pre.reserve(layers_.size());
  cache.inputs.push_back(batch);
  for (const Layer& layer : layers_) {
    Matrix pre = cache.inputs.back() * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    Matrix out = pre;
    apply_activation(out, layer.activation);
    cache.pre.push_back(std::move(pre));
    cache.inputs.push_back(std::move(out));
  }
  return cache;
}

Matrix Mlp::backward(const ForwardCache& cache, const Matrix& grad_output, GradTape& tape) const {
  if (grad_output.rows() != cache.output().rows() || grad_output.cols() != cache.output().cols()) {
    throw Error(ErrorCode::DimensionMismatch, "grad_output shape differs from the network output");
  }
  check_shapes_match(*this, tape);
  Matrix delta = grad_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& layer = layers_[l];
    if (layer.activation == Activation::Relu) {
      delta = delta.cwiseProduct(activation_mask(cache.pre[l], layer.activation));
    }
    tape.weight[l].noalias() += delta.transpose() * cache.inputs[l];
    tape.bias[l] += delta.colwise().sum().transpose();
    delta = delta * layer.weight;
  }
  return delta;
}

void Mlp::save(std::ostream& out) const {
  out << "mars-mlp v1\n";
  out << "layers " << layers_.size() << "\n";
  out << std::setprecision(17);
  for (const Layer& layer : layers_) {
    out << "layer " << layer.in_dim() << " " << layer.out_dim() << " "
        << (layer.activation == Activation::Relu ? "relu" : "identity") << "\n";
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        out << (c ? " " : "") << layer.weight(r, c);
      }
      out << "\n";
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out << (r ? " " : "") << layer.bias[r];
    out << "\n";
  }
}

Mlp Mlp::load(std::istream& in) {
  std::string magic;
  std::string version;
  in >> magic >> version;
  if (magic != "mars-mlp" || version != "v1") {
    throw Error(ErrorCode::Io, "not a mars-mlp v1 checkpoint");
  }
  std::string token;
  std::size_t count = 0;
  in >> token >> count;
  if (token != "layers" || !in) throw Error(ErrorCode::Io, "missing layer count");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < count; ++l) {
    int in_dim = 0;
    int out_dim = 0;
    std::string activation;
    in >> token >> in_dim >> out_dim >> activation;
    if (token != "layer" || !in || in_dim <= 0 || out_dim <= 0) {
      throw Error(ErrorCode::Io, "malformed layer header " + std::to_string(l));
    }
    Layer layer;
    layer.activation = activation == "relu" ? Activation::Relu : Activation::Identity;
    layer.weight.resize(out_dim, in_dim);
    layer.bias.resize(out_dim);
    for (int r = 0; r < out_dim; ++r) {
      for (int c = 0; c < in_dim; ++c) in >> layer.weight(r, c);
    }
    for (int r = 0; r < out_dim; ++r) in >> layer.bias[r];
    if (!in) throw Error(ErrorCode::Io, "truncated parameters in layer " + std::to_string(l));
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

CrossEntropy weighted_cross_entropy(const Matrix& logits, std::span<const int> labels,
                                    const Vector& class_weights) {
  const Eigen::Index batch = logits.rows();
  if (static_cast<Eigen::Index>(labels.size()) != batch || class_weights.size() != logits.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "logits, labels and class weights disagree in shape");
  }
  CrossEntropy out;
  out.grad_logits.resize(batch, logits.cols());
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "label " + std::to_string(y) + " out of range");
    }
    const double top = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - top).exp().matrix();
    const double sum = e.sum();
    const double w = class_weights[y];
    out.loss += w * (std::log(sum) + top - logits(i, y));
    out.grad_logits.row(i) = (w * inv_batch / sum) * e;
    out.grad_logits(i, y) -= w * inv_batch;
  }
  out.loss *= inv_batch;
  return out;
}

CriticObjective wasserstein_dual_loss(const Mlp& critic, const Matrix& source, const Matrix& target,
                                      const Vector& source_weights) {
  check_critic_inputs(critic, source, target);
  if (source_weights.size() != source.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "one weight per source sample required");
  }
  const double inv_s = 1.0 / static_cast<double>(source.rows());
  const double inv_t = 1.0 / static_cast<double>(target.rows());
  const ForwardCache cs = critic.forward_cached(source);
  const ForwardCache ct = critic.forward_cached(target);

  CriticObjective out;
  out.value = inv_s * source_weights.dot(cs.output().col(0)) - inv_t * ct.output().sum();
  out.critic = GradTape::zeros_like(critic);
  out.grad_source = critic.backward(cs, inv_s * source_weights, out.critic);
  out.grad_target =
      critic.backward(ct, Matrix::Constant(target.rows(), 1, -inv_t), out.critic);
  return out;
}

Vector interpolation_coefficients(int batch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector t(batch);
  for (int i = 0; i < batch; ++i) t[i] = unit(rng);
  return t;
}

CriticObjective gradient_penalty(const Mlp& critic, const Matrix& source, const Matrix& target,
                                 std::uint64_t seed) {
  return gradient_penalty(critic, source, target,
                          interpolation_coefficients(static_cast<int>(source.rows()), seed));
}

CriticObjective gradient_penalty(const Mlp& critic, const Matrix& source, const Matrix& target,
                                 const Vector& mix) {
  check_critic_inputs(critic, source, target);
  if (source.rows() != target.rows() || mix.size() != source.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient penalty needs paired batches");
  }
  const Eigen::Index batch = source.rows();
  const Matrix interpolated = mix.asDiagonal() * source + (1.0 - mix.array()).matrix().asDiagonal() * target;
  const ForwardCache cache = critic.forward_cached(interpolated);
  const auto& layers = critic.layers();
  const std::size_t depth = layers.size();

  // delta[l] = d v / d pre[l] per sample; masks are locally constant, so the
  // input gradient is a product of fixed linear maps.
  std::vector<Matrix> masks(depth);
  std::vector<Matrix> delta(depth);
  for (std::size_t l = 0; l < depth; ++l) masks[l] = activation_mask(cache.pre[l], layers[l].activation);
  Matrix back = Matrix::Ones(batch, 1);
  for (std::size_t l = depth; l-- > 0;) {
    delta[l] = back.cwiseProduct(masks[l]);
    back = delta[l] * layers[l].weight;
  }
  const Matrix& input_grad = back;  // batch x d

  CriticObjective out;
  out.critic = GradTape::zeros_like(critic);
  out.grad_source = Matrix::Zero(source.rows(), source.cols());
  out.grad_target = Matrix::Zero(target.rows(), target.cols());

  // d/dg of (||g|| - 1)^2, averaged over the batch.
  Matrix direction(batch, input_grad.cols());
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double norm = input_grad.row(i).norm();
    out.value += (norm - 1.0) * (norm - 1.0);
    if (norm > 0.0) {
      direction.row(i) = (2.0 * (norm - 1.0) / norm * inv_batch) * input_grad.row(i);
    } else {
      direction.row(i).setZero();
    }
  }
  out.value *= inv_batch;

  // direction . g is the directional derivative of v along `direction`;
  // its weight gradient at layer l is delta[l]^T * tangent[l].
  Matrix tangent = direction;
  for (std::size_t l = 0; l < depth; ++l) {
    out.critic.weight[l].noalias() = delta[l].transpose() * tangent;
    tangent = (tangent * layers[l].weight.transpose()).cwiseProduct(masks[l]);
  }
  // Bias gradients and input gradients vanish almost everywhere for a
  // piecewise-linear critic.
  return out;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, const Mlp& shape)
    : kind_(kind), learning_rate_(learning_rate) {
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "learning rate must be positive");
  }
  if (kind_ == OptimizerKind::Adam) {
    first_moment_ = GradTape::zeros_like(shape);
    second_moment_ = GradTape::zeros_like(shape);
  }
}

void Optimizer::step(Mlp& mlp, const GradTape& grads, Direction direction) {
  check_shapes_match(mlp, grads);
  const double sign = direction == Direction::Descend ? -1.0 : 1.0;
  auto& layers = mlp.layers();
  if (kind_ == OptimizerKind::Sgd) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight += sign * learning_rate_ * grads.weight[l];
      layers[l].bias += sign * learning_rate_ * grads.bias[l];
    }
    return;
  }
  check_shapes_match(mlp, first_moment_);
  ++steps_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
    param.array() += sign * learning_rate_ * (m.array() / c1) / ((v.array() / c2).sqrt() + kEpsilon);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, first_moment_.weight[l], second_moment_.weight[l], grads.weight[l]);
    update(layers[l].bias, first_moment_.bias[l], second_moment_.bias[l], grads.bias[l]);
  }
}

}  // namespace mars::nn
