#pragma once

// Importance-weighted adversarial Wasserstein training (MARS), the source-only
// and constant-weight WD_beta baselines, and balanced-accuracy evaluation.

#include "mars/nn.hpp"
#include "mars/proportion.hpp"
#include "mars/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mars::adapt {

enum class Method { MarsG, MarsC, SourceOnly, WdBeta };

struct TrainConfig {
  Method method = Method::MarsC;
  double beta = 0.0;          // WdBeta only: source weight 1 / (1 + beta)
  double lambda = 1.0;        // weight of the dual loss in the feature update
  int batch_size = 64;
  int critic_iters = 5;
  int epochs = 100;
  // Epochs between target proportion re-estimates.
  int refresh_period = 10;
  double lr_critic = 1e-2;
  double lr_classifier = 1e-2;
  double lr_features = 1e-2;
  double weight_decay = 1e-4;
  double gp_coeff = 10.0;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Sgd;
  int hidden = 200;
  double weight_floor = proportion::kDefaultWeightFloor;
  // Overrides proportion estimation with a fixed target distribution.
  std::optional<Vector> fixed_target_proportions;
  // Records, per outer step, whether the critic objective rose over its
  // inner iterations (costs one extra critic evaluation per step).
  bool track_critic_ascent = false;
  // Evaluates source and target balanced accuracy after every epoch.
  bool log_accuracy = false;
  std::uint64_t seed = 0;

  void validate() const;
};

std::string method_name(Method method, double beta = 0.0);

struct EpochLog {
  int epoch = 0;
  double class_loss = 0.0;
  double dual_loss = 0.0;
  double grad_penalty = 0.0;
  Vector target_proportions;  // estimate in force during the epoch
  Vector weights;             // importance weights in force during the epoch
  double l1_error = std::numeric_limits<double>::quiet_NaN();
  double source_balanced_accuracy = std::numeric_limits<double>::quiet_NaN();
  double target_balanced_accuracy = std::numeric_limits<double>::quiet_NaN();
  int critic_steps = 0;
  int critic_steps_ascending = 0;
};

struct TrainedModel {
  nn::Mlp features;
  nn::Mlp classifier;
  std::optional<proportion::ProportionEstimate> estimate;
  std::vector<EpochLog> log;
  int classes = 0;

  Matrix logits(const Matrix& inputs) const;
  std::vector<int> predict(const Matrix& inputs) const;
};

// Optional labels for the target, used only to fill the log.
struct TargetData {
  Matrix points;
  std::vector<int> labels;  // may be empty
  Vector true_proportions;  // may be empty
};

TrainedModel train(const TrainConfig& config, const LabeledDataset& source, const TargetData& target);

TrainedModel train_mars(const TrainConfig& config, const LabeledDataset& source,
                        const TargetData& target);
// The target, if given, is used only for the accuracy log.
TrainedModel train_source_only(const TrainConfig& config, const LabeledDataset& source,
                               const TargetData* target = nullptr);
TrainedModel train_wd_beta(const TrainConfig& config, const LabeledDataset& source,
                           const TargetData& target);

struct EvalReport {
  double balanced_accuracy = 0.0;
  Vector recall;  // NaN for classes absent from the test set
  Eigen::MatrixXi confusion;  // rows: true class, columns: predicted class
  std::vector<int> absent_classes;
};

EvalReport evaluate_predictions(std::span<const int> predictions, std::span<const int> labels,
                                int classes);
EvalReport evaluate(const TrainedModel& model, const Matrix& inputs, std::span<const int> labels);

inline constexpr std::string_view kTrainingLogSchema = "# mars-training-log v1";

void write_training_log(std::ostream& out, const TrainedModel& model);

}  // namespace mars::adapt
