#pragma once

// Small fully connected networks with exact reverse-mode gradients, and the
// three training losses: weighted cross-entropy, the weighted Wasserstein dual
// objective, and the critic gradient penalty.

#include "mars/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace mars::nn {

enum class Activation { Relu, Identity };

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::Identity;

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

// Activations seen during a forward pass, needed for backward.
struct ForwardCache {
  std::vector<Matrix> inputs;  // inputs[l] enters layer l; inputs.back() is the output
  std::vector<Matrix> pre;     // pre-activations of each layer

  const Matrix& output() const { return inputs.back(); }
};

class Mlp;

// Gradient buffers mirroring an Mlp's parameters.
struct GradTape {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  static GradTape zeros_like(const Mlp& mlp);

  void add_scaled(const GradTape& other, double scale);
  double squared_norm() const;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  // He-uniform weights (bound sqrt(6 / fan_in)), zero biases. dims lists the
  // widths from input to output; the last layer uses `output`.
  static Mlp make(std::span<const int> dims, Activation hidden, Activation output,
                  std::uint64_t seed);

  int in_dim() const;
  int out_dim() const;
  int num_layers() const { return static_cast<int>(layers_.size()); }
  std::size_t num_parameters() const;

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  Matrix forward(const Matrix& batch) const;
  ForwardCache forward_cached(const Matrix& batch) const;

  // Backpropagates grad_output (same shape as the output) and accumulates
  // parameter gradients into tape. Returns the gradient w.r.t. the input.
  Matrix backward(const ForwardCache& cache, const Matrix& grad_output, GradTape& tape) const;

  // Plain-text checkpoint; values are written with 17 significant digits so a
  // save/load round trip is exact.
  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

 private:
  std::vector<Layer> layers_;
};

struct CrossEntropy {
  double loss = 0.0;
  Matrix grad_logits;
};

// Mean over the batch of class_weights[y_i] * (-log softmax(logits_i)[y_i]).
CrossEntropy weighted_cross_entropy(const Matrix& logits, std::span<const int> labels,
                                    const Vector& class_weights);

struct CriticObjective {
  double value = 0.0;
  GradTape critic;
  Matrix grad_source;
  Matrix grad_target;
};

// (1/Bs) sum_i w_i v(zs_i) - (1/Bt) sum_i v(zt_i).
CriticObjective wasserstein_dual_loss(const Mlp& critic, const Matrix& source, const Matrix& target,
                                      const Vector& source_weights);

// Mean of (||grad_z v(z_hat)|| - 1)^2 at z_hat = t zs + (1 - t) zt with one
// t ~ U(0, 1) per pair drawn from `seed`.
CriticObjective gradient_penalty(const Mlp& critic, const Matrix& source, const Matrix& target,
                                 std::uint64_t seed);

// Same, with explicit interpolation coefficients.
CriticObjective gradient_penalty(const Mlp& critic, const Matrix& source, const Matrix& target,
                                 const Vector& mix);

Vector interpolation_coefficients(int batch, std::uint64_t seed);

enum class OptimizerKind { Sgd, Adam };
enum class Direction { Descend, Ascend };

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, const Mlp& shape);

  void step(Mlp& mlp, const GradTape& grads, Direction direction);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return learning_rate_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

 private:
  OptimizerKind kind_;
  double learning_rate_;
  long steps_ = 0;
  GradTape first_moment_;
  GradTape second_moment_;
};

}  // namespace mars::nn
