#include "mars/train.hpp"

#include "mars/error.hpp"
#include "mars/seed.hpp"
#include "mars/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace mars::adapt {

namespace {

enum Stream : std::uint64_t {
  kFeatureInit = 1,
  kClassifierInit,
  kCriticInit,
  kSourceOrder,
  kTargetBatches,
  kPenaltyMix,
  kEstimator,
};

enum class Weighting { Estimated, Constant, None };

struct Networks {
  nn::Mlp features;
  nn::Mlp classifier;
  nn::Mlp critic;
};

Networks make_networks(const TrainConfig& config, int in_dim, int classes) {
  const int h = config.hidden;
  const std::vector<int> g_dims{in_dim, h, h};
  const std::vector<int> h_dims{h, h, h, classes};
  const std::vector<int> v_dims{h, h, h, h, 1};
  return {
      nn::Mlp::make(g_dims, nn::Activation::Relu, nn::Activation::Relu,
                    derive_seed(config.seed, kFeatureInit)),
      nn::Mlp::make(h_dims, nn::Activation::Relu, nn::Activation::Identity,
                    derive_seed(config.seed, kClassifierInit)),
      nn::Mlp::make(v_dims, nn::Activation::Relu, nn::Activation::Identity,
                    derive_seed(config.seed, kCriticInit)),
  };
}

void add_weight_decay(nn::GradTape& grads, const nn::Mlp& mlp, double coeff) {
  if (coeff == 0.0) return;
  for (std::size_t l = 0; l < grads.weight.size(); ++l) {
    grads.weight[l] += coeff * mlp.layers()[l].weight;
  }
}

Matrix gather_rows(const Matrix& points, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), points.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = points.row(rows[i]);
  }
  return out;
}

void require_finite(double value, const char* what, int epoch, int step) {
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::NonFiniteLoss, std::string(what) + " became non-finite at epoch " +
                                              std::to_string(epoch) + ", step " +
                                              std::to_string(step));
  }
}

int count_classes(const LabeledDataset& source) {
  if (source.labels.empty()) throw Error(ErrorCode::EmptyInput, "source set is empty");
  return *std::max_element(source.labels.begin(), source.labels.end()) + 1;
}

TrainedModel run(const TrainConfig& config, const LabeledDataset& source, const TargetData* target,
                 Weighting weighting) {
  config.validate();
  if (static_cast<Eigen::Index>(source.labels.size()) != source.points.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "one label per source point required");
  }
  const bool adversarial = weighting != Weighting::None;
  if (adversarial) {
    if (target == nullptr || target->points.rows() == 0) {
      throw Error(ErrorCode::EmptyInput, "adaptation needs target samples");
    }
    if (target->points.cols() != source.points.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "source and target inputs differ in dimension");
    }
  }
  const int classes = count_classes(source);
  const Vector source_proportions = toy::empirical_proportions(source.labels, classes);
  for (int k = 0; k < classes; ++k) {
    if (source_proportions[k] == 0.0) {
      throw Error(ErrorCode::MissingClass, "source class " + std::to_string(k) + " has no samples");
    }
  }

  Networks nets = make_networks(config, static_cast<int>(source.points.cols()), classes);
  nn::Optimizer g_opt(config.optimizer, config.lr_features, nets.features);
  nn::Optimizer h_opt(config.optimizer, config.lr_classifier, nets.classifier);
  nn::Optimizer v_opt(config.optimizer, config.lr_critic, nets.critic);

  std::mt19937_64 order_rng(derive_seed(config.seed, kSourceOrder));
  std::mt19937_64 target_rng(derive_seed(config.seed, kTargetBatches));
  std::mt19937_64 mix_rng(derive_seed(config.seed, kPenaltyMix));

  const int n_source = static_cast<int>(source.points.rows());
  const int batch = std::min(config.batch_size, n_source);
  const int steps_per_epoch = (n_source + batch - 1) / batch;
  std::uniform_int_distribution<int> pick_target(
      0, adversarial ? static_cast<int>(target->points.rows()) - 1 : 0);

  TrainedModel model;
  model.classes = classes;
  Vector target_proportions = source_proportions;
  Vector class_weights = Vector::Ones(classes);  // classification loss
  Vector dual_weights = Vector::Ones(classes);   // source term of the dual loss
  if (weighting == Weighting::Constant) dual_weights.setConstant(1.0 / (1.0 + config.beta));

  std::vector<int> order(static_cast<std::size_t>(n_source));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (weighting == Weighting::Estimated && epoch % config.refresh_period == 0) {
      if (config.fixed_target_proportions) {
        target_proportions = *config.fixed_target_proportions;
      } else {
        const Matrix zs = nets.features.forward(source.points);
        const Matrix zt = nets.features.forward(target->points);
        const auto method = config.method == Method::MarsG ? proportion::Method::Gmm
                                                           : proportion::Method::Agglomerative;
        model.estimate = proportion::estimate_target_proportions(
            zs, source.labels, zt, classes, method,
            derive_seed(config.seed, kEstimator + static_cast<std::uint64_t>(epoch)));
        target_proportions = model.estimate->target_proportions;
      }
      const auto w = proportion::importance_weights(source_proportions, target_proportions,
                                                    config.weight_floor);
      class_weights = w.weights;
      dual_weights = w.weights;
    }

    std::shuffle(order.begin(), order.end(), order_rng);
    EpochLog entry;
    entry.epoch = epoch;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const int begin = step * batch;
      const int end = std::min(begin + batch, n_source);
      const std::span<const int> rows(order.data() + begin, static_cast<std::size_t>(end - begin));
      const Matrix xs = gather_rows(source.points, rows);
      std::vector<int> ys(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) ys[i] = source.labels[static_cast<std::size_t>(rows[i])];

      const nn::ForwardCache gs = nets.features.forward_cached(xs);
      nn::GradTape g_grads = nn::GradTape::zeros_like(nets.features);

      if (adversarial) {
        std::vector<int> target_rows(rows.size());
        for (int& r : target_rows) r = pick_target(target_rng);
        const nn::ForwardCache gt = nets.features.forward_cached(gather_rows(target->points, target_rows));
        const Matrix& zs = gs.output();
        const Matrix& zt = gt.output();
        Vector sample_weights(static_cast<Eigen::Index>(ys.size()));
        for (std::size_t i = 0; i < ys.size(); ++i) sample_weights[static_cast<Eigen::Index>(i)] = dual_weights[ys[i]];
        const Vector mix = nn::interpolation_coefficients(static_cast<int>(ys.size()), mix_rng());

        nn::CriticObjective dual;
        double start_objective = 0.0;
        for (int t = 0; t < config.critic_iters; ++t) {
          dual = nn::wasserstein_dual_loss(nets.critic, zs, zt, sample_weights);
          const nn::CriticObjective penalty = nn::gradient_penalty(nets.critic, zs, zt, mix);
          require_finite(dual.value, "dual loss", epoch, step);
          require_finite(penalty.value, "gradient penalty", epoch, step);
          if (t == 0) start_objective = dual.value - config.gp_coeff * penalty.value;
          nn::GradTape ascent = dual.critic;
          ascent.add_scaled(penalty.critic, -config.gp_coeff);
          v_opt.step(nets.critic, ascent, nn::Direction::Ascend);
          if (t + 1 == config.critic_iters) entry.grad_penalty += penalty.value;
        }
        if (config.track_critic_ascent) {
          const double end_objective =
              nn::wasserstein_dual_loss(nets.critic, zs, zt, sample_weights).value -
              config.gp_coeff * nn::gradient_penalty(nets.critic, zs, zt, mix).value;
          ++entry.critic_steps;
          if (end_objective >= start_objective) ++entry.critic_steps_ascending;
        }
        entry.dual_loss += dual.value;
        if (config.lambda != 0.0) {
          nets.features.backward(gt, config.lambda * dual.grad_target, g_grads);
          nets.features.backward(gs, config.lambda * dual.grad_source, g_grads);
        }
      }

      const nn::ForwardCache hc = nets.classifier.forward_cached(gs.output());
      const nn::CrossEntropy ce = nn::weighted_cross_entropy(hc.output(), ys, class_weights);
      require_finite(ce.loss, "classification loss", epoch, step);
      entry.class_loss += ce.loss;
      nn::GradTape h_grads = nn::GradTape::zeros_like(nets.classifier);
      const Matrix dz = nets.classifier.backward(hc, ce.grad_logits, h_grads);
      nets.features.backward(gs, dz, g_grads);
      add_weight_decay(h_grads, nets.classifier, config.weight_decay);
      add_weight_decay(g_grads, nets.features, config.weight_decay);
      h_opt.step(nets.classifier, h_grads, nn::Direction::Descend);
      g_opt.step(nets.features, g_grads, nn::Direction::Descend);
    }

    entry.class_loss /= steps_per_epoch;
    entry.dual_loss /= steps_per_epoch;
    entry.grad_penalty /= steps_per_epoch;
    entry.target_proportions = target_proportions;
    entry.weights = class_weights;
    if (weighting == Weighting::Constant) entry.weights = dual_weights;
    if (target != nullptr && target->true_proportions.size() == classes &&
        weighting == Weighting::Estimated) {
      entry.l1_error = toy::l1_proportion_error(target_proportions, target->true_proportions);
    }
    if (config.log_accuracy) {
      auto balanced = [&](const Matrix& x, const std::vector<int>& y) {
        const Matrix scores = nets.classifier.forward(nets.features.forward(x));
        std::vector<int> predicted(static_cast<std::size_t>(scores.rows()));
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
          Eigen::Index best = 0;
          scores.row(i).maxCoeff(&best);
          predicted[static_cast<std::size_t>(i)] = static_cast<int>(best);
        }
        return evaluate_predictions(predicted, y, classes).balanced_accuracy;
      };
      entry.source_balanced_accuracy = balanced(source.points, source.labels);
      if (target != nullptr && !target->labels.empty()) {
        entry.target_balanced_accuracy = balanced(target->points, target->labels);
      }
    }
    model.log.push_back(std::move(entry));
  }

  model.features = std::move(nets.features);
  model.classifier = std::move(nets.classifier);
  return model;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw Error(ErrorCode::InvalidConfig, "batch size must be at least 2");
  if (critic_iters < 1) throw Error(ErrorCode::InvalidConfig, "critic iterations must be at least 1");
  if (epochs < 0) throw Error(ErrorCode::InvalidConfig, "epochs must be nonnegative");
  if (refresh_period < 1) throw Error(ErrorCode::InvalidConfig, "refresh period must be at least 1");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be nonnegative");
  if (!(beta >= 0.0)) throw Error(ErrorCode::InvalidConfig, "beta must be nonnegative");
  if (!(gp_coeff >= 0.0)) throw Error(ErrorCode::InvalidConfig, "gradient penalty must be nonnegative");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "weight decay must be nonnegative");
  if (hidden < 1) throw Error(ErrorCode::InvalidConfig, "hidden width must be positive");
}

std::string method_name(Method method, double beta) {
  switch (method) {
    case Method::MarsG: return "MARSg";
    case Method::MarsC: return "MARSc";
    case Method::SourceOnly: return "SourceOnly";
    case Method::WdBeta: {
      std::ostringstream name;
      name << "WDBeta(" << beta << ")";
      return name.str();
    }
  }
  return "unknown";
}

Matrix TrainedModel::logits(const Matrix& inputs) const {
  return classifier.forward(features.forward(inputs));
}

std::vector<int> TrainedModel::predict(const Matrix& inputs) const {
  const Matrix scores = logits(inputs);
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

TrainedModel train_mars(const TrainConfig& config, const LabeledDataset& source,
                        const TargetData& target) {
  if (config.method != Method::MarsC && config.method != Method::MarsG) {
    throw Error(ErrorCode::InvalidConfig, "train_mars needs method MARSc or MARSg");
  }
  return run(config, source, &target, Weighting::Estimated);
}

TrainedModel train_source_only(const TrainConfig& config, const LabeledDataset& source,
                                const TargetData* target) {
  return run(config, source, target, Weighting::None);
}

TrainedModel train_wd_beta(const TrainConfig& config, const LabeledDataset& source,
                           const TargetData& target) {
  return run(config, source, &target, Weighting::Constant);
}

TrainedModel train(const TrainConfig& config, const LabeledDataset& source, const TargetData& target) {
  switch (config.method) {
    case Method::MarsC:
    case Method::MarsG: return train_mars(config, source, target);
    case Method::SourceOnly: return train_source_only(config, source, &target);
    case Method::WdBeta: return train_wd_beta(config, source, target);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown method");
}

EvalReport evaluate_predictions(std::span<const int> predictions, std::span<const int> labels,
                                int classes) {
  if (labels.empty()) throw Error(ErrorCode::EmptyTestSet, "no test samples");
  if (predictions.size() != labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one prediction per label required");
  }
  EvalReport report;
  report.confusion = Eigen::MatrixXi::Zero(classes, classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes || predictions[i] < 0 || predictions[i] >= classes) {
      throw Error(ErrorCode::DimensionMismatch, "label or prediction out of range");
    }
    ++report.confusion(labels[i], predictions[i]);
  }
  report.recall = Vector::Constant(classes, std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  int present = 0;
  for (int k = 0; k < classes; ++k) {
    const int count = report.confusion.row(k).sum();
    if (count == 0) {
      report.absent_classes.push_back(k);
      continue;
    }
    report.recall[k] = static_cast<double>(report.confusion(k, k)) / count;
    total += report.recall[k];
    ++present;
  }
  report.balanced_accuracy = total / present;
  return report;
}

EvalReport evaluate(const TrainedModel& model, const Matrix& inputs, std::span<const int> labels) {
  if (inputs.rows() == 0) throw Error(ErrorCode::EmptyTestSet, "no test samples");
  return evaluate_predictions(model.predict(inputs), labels, model.classes);
}

void write_training_log(std::ostream& out, const TrainedModel& model) {
  out << kTrainingLogSchema << "\n";
  out << "epoch,class_loss,dual_loss,grad_penalty";
  for (int k = 0; k < model.classes; ++k) out << ",p_target_" << k;
  out << ",l1_error,source_balanced_accuracy,target_balanced_accuracy\n";
  auto number = [&](double v) {
    if (std::isfinite(v)) out << v;
  };
  out.precision(10);
  for (const EpochLog& e : model.log) {
    out << e.epoch << ",";
    number(e.class_loss);
    out << ",";
    number(e.dual_loss);
    out << ",";
    number(e.grad_penalty);
    for (Eigen::Index k = 0; k < e.target_proportions.size(); ++k) {
      out << ",";
      number(e.target_proportions[k]);
    }
    out << ",";
    number(e.l1_error);
    out << ",";
    number(e.source_balanced_accuracy);
    out << ",";
    number(e.target_balanced_accuracy);
    out << "\n";
  }
}

}  // namespace mars::adapt
