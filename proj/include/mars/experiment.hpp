#pragma once

// Config-driven experiment runner: builds toy configs, runs every method for
// every repetition, and writes per-run rows plus a mean/std aggregate as CSV.

#include "mars/toy.hpp"
#include "mars/train.hpp"
#include "mars/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mars::experiment {

enum class Kind { SweepImbalance, SweepShift, SingleRun, EstimateProportions, GmmOtBaseline };

std::string_view to_string(Kind kind);
Kind kind_from_string(std::string_view name);

enum class Profile { Full, Ci };

Profile profile_from_string(std::string_view name);
int default_reps(Profile profile);

// One column of the results: a trained method, the GMM+OT labeller, or (for
// estimate-proportions) a proportion estimator run on raw inputs.
struct MethodSpec {
  enum class Family { Train, GmmOt, Estimator };
  Family family = Family::Train;
  adapt::Method method = adapt::Method::SourceOnly;
  double beta = 0.0;
  proportion::Method estimator = proportion::Method::Agglomerative;

  std::string name() const;
};

// Accepts SourceOnly, MARSc, MARSg, WDBeta(<beta>), GMM+OT, and the
// estimator names gmm / agglomerative.
MethodSpec parse_method(std::string_view name);

struct ExperimentSpec {
  Kind kind = Kind::SingleRun;
  toy::Regime regime = toy::Regime::Low;
  // Majority proportions (imbalance sweep) or shift magnitudes (shift sweep);
  // empty means the default grid.
  std::vector<double> grid;
  int shift_preset = 2;
  // Single runs, estimate-proportions and gmm-ot-baseline use one config.
  double majority = toy::kBalancedMajority;
  double shift = toy::kDefaultShift;
  int n_source = 600;
  int n_target = 600;
  adapt::TrainConfig train;
  std::vector<MethodSpec> methods;
  int reps = 20;
  std::uint64_t base_seed = 0;

  void validate() const;
};

// Default methods for a kind when the config names none.
std::vector<MethodSpec> default_methods(Kind kind);

// Applies `key = value` lines on top of `spec`; '#' starts a comment.
// Unknown keys are errors.
void read_settings(std::istream& in, ExperimentSpec& spec);
void load_settings(const std::string& path, ExperimentSpec& spec);

// Defaults for `kind`, then the settings; methods default per kind.
ExperimentSpec parse_spec(std::istream& in, Kind kind);

void apply_setting(ExperimentSpec& spec, std::string_view key, std::string_view value);

struct ConfigPoint {
  int id = 0;
  double axis = 0.0;  // majority proportion or shift magnitude
  toy::ToyConfig toy;
};

std::vector<ConfigPoint> build_configs(const ExperimentSpec& spec);

struct ResultRow {
  int config_id = 0;
  double axis = 0.0;
  std::string method;
  std::uint64_t seed = 0;
  double balanced_accuracy = std::numeric_limits<double>::quiet_NaN();
  double l1_error = std::numeric_limits<double>::quiet_NaN();
};

struct AggregateRow {
  int config_id = 0;
  double axis = 0.0;
  std::string method;
  int reps = 0;
  double mean_balanced_accuracy = std::numeric_limits<double>::quiet_NaN();
  double std_balanced_accuracy = std::numeric_limits<double>::quiet_NaN();
  double mean_l1_error = std::numeric_limits<double>::quiet_NaN();
  double std_l1_error = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr std::string_view kResultsSchema = "# mars-results v1";
inline constexpr std::string_view kAggregateSchema = "# mars-aggregate v1";

void write_results_header(std::ostream& out, std::string_view generated);
void write_result_row(std::ostream& out, const ResultRow& row);
void write_aggregate(std::ostream& out, std::span<const AggregateRow> rows,
                     std::string_view generated);

// Groups by (config, method) in order of first appearance; sample standard
// deviation, 0 for a single repetition. Missing values are skipped.
std::vector<AggregateRow> aggregate(std::span<const ResultRow> rows);

std::vector<ResultRow> read_results(std::istream& in);

// Called after every finished row, e.g. for progress output.
using RowCallback = std::function<void(const ResultRow&)>;
// Called with each neural model right after it is evaluated.
using ModelCallback = std::function<void(const ResultRow&, const adapt::TrainedModel&)>;

// Runs the experiment, streaming rows to `results` (flushed per row), and
// returns them. Seeds are base_seed + rep; all methods of one repetition see
// the same data.
std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, std::ostream& results,
                                      std::string_view generated, const RowCallback& on_row = {},
                                      const ModelCallback& on_model = {});

// Labels target points by the GMM component with the highest responsibility,
// mapped to source classes through the OT matching of means.
std::vector<int> gmm_ot_classify(const Matrix& source_latents, std::span<const int> source_labels,
                                 const Matrix& target_latents, int classes, std::uint64_t seed);

// UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string timestamp_now();

}  // namespace mars::experiment
