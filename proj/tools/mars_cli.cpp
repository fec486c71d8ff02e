// mars: toy-benchmark experiments, proportion estimation and debugging tools.

#include "mars/csv.hpp"
#include "mars/error.hpp"
#include "mars/experiment.hpp"
#include "mars/mixture.hpp"
#include "mars/ot.hpp"
#include "mars/proportion.hpp"
#include "mars/toy.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

namespace ex = mars::experiment;
namespace fs = std::filesystem;

constexpr int kExitFailure = 1;
constexpr int kExitNonFinite = 3;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::string profile = "full";
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_out = true) {
  cmd->add_option("--config", flags.config, "key = value experiment settings")->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", flags.out, "output CSV path");
  if (needs_out) out->required();
  cmd->add_option("--seed", flags.seed, "base seed (rep r uses seed + r)");
  cmd->add_option("--reps", flags.reps, "repetitions per config and method");
  cmd->add_option("--profile", flags.profile, "default repetitions: full = 20, ci = 3")
      ->check(CLI::IsMember({"full", "ci"}));
}

ex::ExperimentSpec make_spec(ex::Kind kind, const CommonFlags& flags) {
  ex::ExperimentSpec spec;
  spec.kind = kind;
  spec.reps = ex::default_reps(ex::profile_from_string(flags.profile));
  if (!flags.config.empty()) ex::load_settings(flags.config, spec);
  if (spec.methods.empty()) spec.methods = ex::default_methods(kind);
  if (flags.seed) spec.base_seed = *flags.seed;
  if (flags.reps) spec.reps = *flags.reps;
  return spec;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw mars::Error(mars::ErrorCode::Io, "cannot write '" + path.string() + "'");
  return out;
}

fs::path aggregate_path(const fs::path& results) {
  fs::path p = results;
  p.replace_extension();
  p += ".aggregate.csv";
  return p;
}

fs::path with_suffix(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p.replace_extension();
  p += suffix;
  return p;
}

int run(const ex::ExperimentSpec& spec, const fs::path& out_path, const std::string& log_dir) {
  const std::string generated = ex::timestamp_now();
  std::ofstream results = open_out(out_path);
  ex::ModelCallback on_model;
  if (!log_dir.empty()) {
    fs::create_directories(log_dir);
    on_model = [&](const ex::ResultRow& row, const mars::adapt::TrainedModel& model) {
      const std::string stem = log_dir + "/c" + std::to_string(row.config_id) + "_" + row.method +
                               "_s" + std::to_string(row.seed);
      std::ofstream log = open_out(stem + ".log.csv");
      mars::adapt::write_training_log(log, model);
      std::ofstream g = open_out(stem + ".features.mlp");
      model.features.save(g);
      std::ofstream h = open_out(stem + ".classifier.mlp");
      model.classifier.save(h);
    };
  }
  const auto rows = ex::run_experiment(
      spec, results, generated,
      [](const ex::ResultRow& r) {
        std::cerr << "config " << r.config_id << " " << r.method << " seed " << r.seed
                  << " bacc " << r.balanced_accuracy << " l1 " << r.l1_error << "\n";
      },
      on_model);
  std::ofstream agg = open_out(aggregate_path(out_path));
  ex::write_aggregate(agg, ex::aggregate(rows), generated);
  return 0;
}

int gen_data(const CommonFlags& flags) {
  ex::ExperimentSpec spec = make_spec(ex::Kind::SingleRun, flags);
  mars::toy::ToyConfig config = ex::build_configs(spec).front().toy;
  config.seed = spec.base_seed;
  const mars::toy::ToyData data = mars::toy::gen_toy(config);
  std::ofstream source = open_out(with_suffix(flags.out, ".source.csv"));
  mars::io::write_dataset(source, data.source);
  std::ofstream target = open_out(with_suffix(flags.out, ".target.csv"));
  mars::io::write_dataset(target, data.target);
  return 0;
}

int solve_ot(const std::string& cost_path, const std::string& a_path, const std::string& b_path,
             const std::string& out) {
  const mars::Matrix cost = mars::io::read_matrix_file(cost_path);
  auto marginal = [](const std::string& path, Eigen::Index n) -> mars::Vector {
    if (path.empty()) return mars::Vector::Constant(n, 1.0 / static_cast<double>(n));
    const mars::Matrix m = mars::io::read_matrix_file(path);
    return m.rows() == 1 ? mars::Vector(m.row(0).transpose()) : mars::Vector(m.col(0));
  };
  const auto plan = mars::ot::solve_discrete_ot(cost, marginal(a_path, cost.rows()),
                                                marginal(b_path, cost.cols()));
  std::cout.precision(17);
  std::cout << "cost " << plan.cost << "\n";
  if (cost.rows() == cost.cols()) {
    const auto sigma = mars::ot::optimal_assignment(cost);
    std::cout << "assignment";
    for (int i = 0; i < sigma.size(); ++i) std::cout << " " << sigma[i];
    std::cout << "\n";
  }
  if (!out.empty()) {
    std::ofstream file = open_out(out);
    mars::io::write_matrix(file, plan.coupling);
  } else {
    mars::io::write_matrix(std::cout, plan.coupling);
  }
  return 0;
}

int fit_gmm(const std::string& data_path, int components, std::uint64_t seed, const std::string& out) {
  const mars::LabeledDataset data = mars::io::read_dataset_file(data_path);
  const auto fit = mars::mixture::gmm_fit(data.points, components, seed);
  std::cerr << "iterations " << fit.iterations << " converged " << fit.converged
            << " mean log-likelihood " << fit.log_likelihood.back() << "\n";
  if (out.empty()) {
    mars::io::write_mixture(std::cout, fit.model);
  } else {
    std::ofstream file = open_out(out);
    mars::io::write_mixture(file, fit.model);
  }
  return 0;
}

// Points-only CSV with an optional header line; a trailing `label` column is
// dropped so generated datasets can be passed directly.
mars::Matrix read_points_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mars::Error(mars::ErrorCode::Io, "cannot open '" + path + "'");
  std::stringstream body;
  std::string line;
  bool drop_last = false;
  bool first = true;
  while (std::getline(in, line)) {
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    if (first && std::isalpha(static_cast<unsigned char>(line[start]))) {
      first = false;
      drop_last = line.find("label") != std::string::npos;
      continue;
    }
    first = false;
    body << line << "\n";
  }
  const mars::Matrix m = mars::io::read_matrix(body);
  return drop_last ? mars::Matrix(m.leftCols(m.cols() - 1)) : m;
}

int estimate_latents(const std::string& source_path, const std::string& target_path,
                     const std::string& method_name, std::uint64_t seed, double floor) {
  const mars::LabeledDataset source = mars::io::read_dataset_file(source_path);
  const mars::Matrix target = read_points_file(target_path);
  const int classes = static_cast<int>(source.true_proportions.size());
  const auto method = method_name == "gmm" ? mars::proportion::Method::Gmm
                                           : mars::proportion::Method::Agglomerative;
  const auto est = mars::proportion::estimate_target_proportions(source.points, source.labels,
                                                                 target, classes, method, seed);
  const auto w = mars::proportion::importance_weights(source.true_proportions,
                                                      est.target_proportions, floor);
  std::cout.precision(12);
  std::cout << "class,p_source,p_target,mode,weight\n";
  for (int k = 0; k < classes; ++k) {
    std::cout << k << "," << source.true_proportions[k] << "," << est.target_proportions[k] << ","
              << est.permutation[k] << "," << w.weights[k] << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MARS domain adaptation on the three-class Gaussian toy benchmark"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string log_dir;

  auto* gen = app.add_subcommand("gen-data", "write source and target toy datasets");
  add_common(gen, flags);
  auto* train = app.add_subcommand("train", "train the configured methods on one toy config");
  add_common(train, flags);
  train->add_option("--log-dir", log_dir, "write per-run training logs and checkpoints here");
  auto* imbalance = app.add_subcommand("sweep-imbalance", "sweep the target majority proportion");
  add_common(imbalance, flags);
  imbalance->add_option("--log-dir", log_dir, "write per-run training logs and checkpoints here");
  auto* shift = app.add_subcommand("sweep-shift", "sweep the class-conditional shift magnitude");
  add_common(shift, flags);
  shift->add_option("--log-dir", log_dir, "write per-run training logs and checkpoints here");
  auto* estimate = app.add_subcommand("estimate-proportions",
                                      "estimate target proportions on raw toy inputs");
  add_common(estimate, flags, false);
  std::string latent_source, latent_target, estimator = "agglomerative";
  double weight_floor = mars::proportion::kDefaultWeightFloor;
  estimate->add_option("--source", latent_source, "labeled source latents CSV (x0,...,label)")
      ->check(CLI::ExistingFile);
  estimate->add_option("--target", latent_target, "target latents CSV")->check(CLI::ExistingFile);
  estimate->add_option("--method", estimator, "estimator on latent inputs")
      ->check(CLI::IsMember({"gmm", "agglomerative"}));
  estimate->add_option("--weight-floor", weight_floor, "floor on p_target in the weights");
  auto* gmm_ot = app.add_subcommand("gmm-ot-baseline", "GMM + OT labelling against Source-only");
  add_common(gmm_ot, flags);

  std::string cost_path, a_path, b_path, debug_out, data_path;
  int components = 3;
  std::uint64_t debug_seed = 0;
  auto* ot = app.add_subcommand("solve-ot", "solve a transport problem from a cost-matrix CSV");
  ot->add_option("--cost", cost_path, "cost matrix CSV")->required()->check(CLI::ExistingFile);
  ot->add_option("--a", a_path, "row marginal CSV (default uniform)")->check(CLI::ExistingFile);
  ot->add_option("--b", b_path, "column marginal CSV (default uniform)")->check(CLI::ExistingFile);
  ot->add_option("--out", debug_out, "coupling CSV (default stdout)");
  auto* gmm = app.add_subcommand("fit-gmm", "fit a Gaussian mixture and dump it as text");
  gmm->add_option("--data", data_path, "dataset CSV")->required()->check(CLI::ExistingFile);
  gmm->add_option("--components", components, "mixture components")->check(CLI::PositiveNumber);
  gmm->add_option("--seed", debug_seed, "seed of the k-means++ restarts");
  gmm->add_option("--out", debug_out, "mixture dump (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return gen_data(flags);
    if (ot->parsed()) return solve_ot(cost_path, a_path, b_path, debug_out);
    if (gmm->parsed()) return fit_gmm(data_path, components, debug_seed, debug_out);
    if (estimate->parsed()) {
      if (!latent_source.empty() || !latent_target.empty()) {
        if (latent_source.empty() || latent_target.empty()) {
          throw mars::Error(mars::ErrorCode::InvalidConfig, "--source and --target go together");
        }
        return estimate_latents(latent_source, latent_target, estimator, flags.seed.value_or(0),
                                weight_floor);
      }
      if (flags.out.empty()) throw mars::Error(mars::ErrorCode::InvalidConfig, "--out is required");
    }
    const std::pair<CLI::App*, ex::Kind> commands[] = {
        {train, ex::Kind::SingleRun},
        {imbalance, ex::Kind::SweepImbalance},
        {shift, ex::Kind::SweepShift},
        {estimate, ex::Kind::EstimateProportions},
        {gmm_ot, ex::Kind::GmmOtBaseline},
    };
    for (const auto& [cmd, kind] : commands) {
      if (cmd->parsed()) return run(make_spec(kind, flags), flags.out, log_dir);
    }
  } catch (const mars::Error& e) {
    std::cerr << "error [" << mars::to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == mars::ErrorCode::NonFiniteLoss ? kExitNonFinite : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
