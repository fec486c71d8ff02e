#include "mars/experiment.hpp"

#include "mars/error.hpp"
#include "mars/seed.hpp"

#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mars::experiment {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double parse_double(std::string_view key, std::string_view value) {
  // std::from_chars for double is unavailable in older libstdc++ releases.
  const std::string text(value);
  char* end = nullptr;
  const double out = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(out)) {
    throw Error(ErrorCode::InvalidConfig,
                "'" + std::string(key) + "' expects a number, got '" + text + "'");
  }
  return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view value) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::InvalidConfig,
                "'" + std::string(key) + "' expects an integer, got '" + std::string(value) + "'");
  }
  return out;
}

void write_number(std::ostream& out, double v) {
  if (std::isfinite(v)) out << v;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

adapt::TargetData target_of(const LabeledDataset& target) {
  return {target.points, target.labels, target.true_proportions};
}

ResultRow run_method(const MethodSpec& method, const ExperimentSpec& spec, const toy::ToyData& data,
                     std::uint64_t seed, const ConfigPoint& point, const ModelCallback& on_model) {
  ResultRow row;
  row.method = method.name();
  row.seed = seed;
  row.config_id = point.id;
  row.axis = point.axis;
  const int classes = static_cast<int>(data.source.true_proportions.size());
  switch (method.family) {
    case MethodSpec::Family::Train: {
      adapt::TrainConfig config = spec.train;
      config.method = method.method;
      config.beta = method.beta;
      config.seed = seed;
      const adapt::TrainedModel model = adapt::train(config, data.source, target_of(data.target));
      row.balanced_accuracy =
          adapt::evaluate(model, data.target.points, data.target.labels).balanced_accuracy;
      if (model.estimate) {
        row.l1_error = toy::l1_proportion_error(model.estimate->target_proportions,
                                                data.target.true_proportions);
      }
      if (on_model) on_model(row, model);
      break;
    }
    case MethodSpec::Family::GmmOt: {
      const auto predicted = gmm_ot_classify(data.source.points, data.source.labels,
                                             data.target.points, classes, seed);
      row.balanced_accuracy =
          adapt::evaluate_predictions(predicted, data.target.labels, classes).balanced_accuracy;
      row.l1_error = toy::l1_proportion_error(toy::empirical_proportions(predicted, classes),
                                              data.target.true_proportions);
      break;
    }
    case MethodSpec::Family::Estimator: {
      const auto estimate = proportion::estimate_target_proportions(
          data.source.points, data.source.labels, data.target.points, classes, method.estimator,
          seed);
      row.l1_error =
          toy::l1_proportion_error(estimate.target_proportions, data.target.true_proportions);
      break;
    }
  }
  return row;
}

}  // namespace

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::SweepImbalance: return "sweep-imbalance";
    case Kind::SweepShift: return "sweep-shift";
    case Kind::SingleRun: return "train";
    case Kind::EstimateProportions: return "estimate-proportions";
    case Kind::GmmOtBaseline: return "gmm-ot-baseline";
  }
  return "train";
}

Kind kind_from_string(std::string_view name) {
  for (Kind k : {Kind::SweepImbalance, Kind::SweepShift, Kind::SingleRun,
                 Kind::EstimateProportions, Kind::GmmOtBaseline}) {
    if (to_string(k) == name) return k;
  }
  if (name == "single-run") return Kind::SingleRun;
  throw Error(ErrorCode::InvalidConfig, "unknown experiment kind '" + std::string(name) + "'");
}

Profile profile_from_string(std::string_view name) {
  if (name == "full") return Profile::Full;
  if (name == "ci") return Profile::Ci;
  throw Error(ErrorCode::InvalidConfig, "profile must be full or ci");
}

int default_reps(Profile profile) { return profile == Profile::Full ? 20 : 3; }

std::string MethodSpec::name() const {
  switch (family) {
    case Family::Train: return adapt::method_name(method, beta);
    case Family::GmmOt: return "GMM+OT";
    case Family::Estimator: return std::string(proportion::to_string(estimator));
  }
  return "unknown";
}

MethodSpec parse_method(std::string_view name) {
  MethodSpec m;
  if (name == "SourceOnly") {
    m.method = adapt::Method::SourceOnly;
  } else if (name == "MARSc") {
    m.method = adapt::Method::MarsC;
  } else if (name == "MARSg") {
    m.method = adapt::Method::MarsG;
  } else if (name.starts_with("WDBeta(") && name.ends_with(")")) {
    m.method = adapt::Method::WdBeta;
    m.beta = parse_double("methods", name.substr(7, name.size() - 8));
  } else if (name == "GMM+OT") {
    m.family = MethodSpec::Family::GmmOt;
  } else if (name == "gmm") {
    m.family = MethodSpec::Family::Estimator;
    m.estimator = proportion::Method::Gmm;
  } else if (name == "agglomerative") {
    m.family = MethodSpec::Family::Estimator;
    m.estimator = proportion::Method::Agglomerative;
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown method '" + std::string(name) + "'");
  }
  return m;
}

std::vector<MethodSpec> default_methods(Kind kind) {
  std::vector<std::string_view> names;
  switch (kind) {
    case Kind::SweepImbalance:
    case Kind::SweepShift: names = {"SourceOnly", "WDBeta(0)", "MARSc", "MARSg"}; break;
    case Kind::SingleRun: names = {"MARSc"}; break;
    case Kind::EstimateProportions: names = {"gmm", "agglomerative"}; break;
    case Kind::GmmOtBaseline: names = {"SourceOnly", "GMM+OT"}; break;
  }
  std::vector<MethodSpec> out;
  for (auto n : names) out.push_back(parse_method(n));
  return out;
}

void ExperimentSpec::validate() const {
  if (reps < 1) throw Error(ErrorCode::InvalidConfig, "reps must be at least 1");
  if (methods.empty()) throw Error(ErrorCode::InvalidConfig, "no methods selected");
  if (n_source < 1 || n_target < 1) throw Error(ErrorCode::InvalidConfig, "sample counts must be positive");
  for (const MethodSpec& m : methods) {
    if (kind == Kind::EstimateProportions && m.family != MethodSpec::Family::Estimator) {
      throw Error(ErrorCode::InvalidConfig, "estimate-proportions takes estimator methods only");
    }
    if (kind != Kind::EstimateProportions && m.family == MethodSpec::Family::Estimator) {
      throw Error(ErrorCode::InvalidConfig, "estimator methods belong to estimate-proportions");
    }
  }
  train.validate();
}

void apply_setting(ExperimentSpec& spec, std::string_view key, std::string_view value) {
  adapt::TrainConfig& t = spec.train;
  if (key == "regime") {
    spec.regime = toy::regime_from_string(value);
  } else if (key == "grid") {
    spec.grid.clear();
    for (auto part : split(value, ',')) spec.grid.push_back(parse_double(key, part));
  } else if (key == "shift_preset") {
    spec.shift_preset = parse_int<int>(key, value);
  } else if (key == "majority") {
    spec.majority = parse_double(key, value);
  } else if (key == "shift") {
    spec.shift = parse_double(key, value);
  } else if (key == "n_source") {
    spec.n_source = parse_int<int>(key, value);
  } else if (key == "n_target") {
    spec.n_target = parse_int<int>(key, value);
  } else if (key == "methods") {
    spec.methods.clear();
    for (auto part : split(value, ',')) spec.methods.push_back(parse_method(part));
  } else if (key == "reps") {
    spec.reps = parse_int<int>(key, value);
  } else if (key == "seed") {
    spec.base_seed = parse_int<std::uint64_t>(key, value);
  } else if (key == "epochs") {
    t.epochs = parse_int<int>(key, value);
  } else if (key == "batch_size") {
    t.batch_size = parse_int<int>(key, value);
  } else if (key == "critic_iters") {
    t.critic_iters = parse_int<int>(key, value);
  } else if (key == "refresh_period") {
    t.refresh_period = parse_int<int>(key, value);
  } else if (key == "lambda") {
    t.lambda = parse_double(key, value);
  } else if (key == "lr_critic") {
    t.lr_critic = parse_double(key, value);
  } else if (key == "lr_classifier") {
    t.lr_classifier = parse_double(key, value);
  } else if (key == "lr_features") {
    t.lr_features = parse_double(key, value);
  } else if (key == "weight_decay") {
    t.weight_decay = parse_double(key, value);
  } else if (key == "gp_coeff") {
    t.gp_coeff = parse_double(key, value);
  } else if (key == "weight_floor") {
    t.weight_floor = parse_double(key, value);
  } else if (key == "hidden") {
    t.hidden = parse_int<int>(key, value);
  } else if (key == "optimizer") {
    if (value == "adam") {
      t.optimizer = nn::OptimizerKind::Adam;
    } else if (value == "sgd") {
      t.optimizer = nn::OptimizerKind::Sgd;
    } else {
      throw Error(ErrorCode::InvalidConfig, "optimizer must be adam or sgd");
    }
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
  }
}

void read_settings(std::istream& in, ExperimentSpec& spec) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(number) + ": expected key = value");
    }
    apply_setting(spec, trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
  }
}

void load_settings(const std::string& path, ExperimentSpec& spec) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config '" + path + "'");
  read_settings(in, spec);
}

ExperimentSpec parse_spec(std::istream& in, Kind kind) {
  ExperimentSpec spec;
  spec.kind = kind;
  read_settings(in, spec);
  if (spec.methods.empty()) spec.methods = default_methods(kind);
  return spec;
}

std::vector<ConfigPoint> build_configs(const ExperimentSpec& spec) {
  std::vector<ConfigPoint> points;
  std::vector<toy::ToyConfig> configs;
  std::vector<double> axis;
  switch (spec.kind) {
    case Kind::SweepImbalance: {
      axis = spec.grid.empty() ? toy::default_imbalance_grid() : spec.grid;
      configs = toy::imbalance_sweep_configs(spec.regime, axis);
      for (auto& c : configs) c.shift[1] = spec.shift;
      break;
    }
    case Kind::SweepShift: {
      axis = spec.grid.empty() ? toy::default_shift_grid() : spec.grid;
      configs = toy::shift_sweep_configs(spec.shift_preset, axis, spec.regime);
      break;
    }
    case Kind::SingleRun:
    case Kind::EstimateProportions:
    case Kind::GmmOtBaseline: {
      toy::ToyConfig c = toy::ToyConfig::standard(spec.regime);
      c.shift[1] = spec.shift;
      c.target_proportions = toy::majority_proportions(spec.majority);
      configs.push_back(c);
      axis.push_back(spec.majority);
      break;
    }
  }
  for (std::size_t i = 0; i < configs.size(); ++i) {
    configs[i].n_source = spec.n_source;
    configs[i].n_target = spec.n_target;
    points.push_back({static_cast<int>(i), axis[i], configs[i]});
  }
  return points;
}

void write_results_header(std::ostream& out, std::string_view generated) {
  out << kResultsSchema << "\n# generated " << generated << "\n";
  out << "config_id,axis,method,seed,balanced_accuracy,l1_error\n";
  out.flush();
}

void write_result_row(std::ostream& out, const ResultRow& row) {
  out.precision(12);
  out << row.config_id << ",";
  write_number(out, row.axis);
  out << "," << row.method << "," << row.seed << ",";
  write_number(out, row.balanced_accuracy);
  out << ",";
  write_number(out, row.l1_error);
  out << "\n";
  out.flush();
}

void write_aggregate(std::ostream& out, std::span<const AggregateRow> rows,
                     std::string_view generated) {
  out << kAggregateSchema << "\n# generated " << generated << "\n";
  out << "config_id,axis,method,reps,mean_balanced_accuracy,std_balanced_accuracy,"
         "mean_l1_error,std_l1_error\n";
  out.precision(12);
  for (const AggregateRow& r : rows) {
    out << r.config_id << ",";
    write_number(out, r.axis);
    out << "," << r.method << "," << r.reps << ",";
    write_number(out, r.mean_balanced_accuracy);
    out << ",";
    write_number(out, r.std_balanced_accuracy);
    out << ",";
    write_number(out, r.mean_l1_error);
    out << ",";
    write_number(out, r.std_l1_error);
    out << "\n";
  }
  out.flush();
}

std::vector<AggregateRow> aggregate(std::span<const ResultRow> rows) {
  struct Cell {
    AggregateRow row;
    std::vector<double> accuracy;
    std::vector<double> l1;
  };
  std::vector<Cell> cells;
  for (const ResultRow& r : rows) {
    Cell* cell = nullptr;
    for (Cell& c : cells) {
      if (c.row.config_id == r.config_id && c.row.method == r.method) cell = &c;
    }
    if (cell == nullptr) {
      cells.emplace_back();
      cell = &cells.back();
      cell->row.config_id = r.config_id;
      cell->row.axis = r.axis;
      cell->row.method = r.method;
    }
    ++cell->row.reps;
    if (std::isfinite(r.balanced_accuracy)) cell->accuracy.push_back(r.balanced_accuracy);
    if (std::isfinite(r.l1_error)) cell->l1.push_back(r.l1_error);
  }
  std::vector<AggregateRow> out;
  for (Cell& c : cells) {
    if (!c.accuracy.empty()) {
      c.row.mean_balanced_accuracy = mean_of(c.accuracy);
      c.row.std_balanced_accuracy = sample_std(c.accuracy, c.row.mean_balanced_accuracy);
    }
    if (!c.l1.empty()) {
      c.row.mean_l1_error = mean_of(c.l1);
      c.row.std_l1_error = sample_std(c.l1, c.row.mean_l1_error);
    }
    out.push_back(c.row);
  }
  return out;
}

std::vector<ResultRow> read_results(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kResultsSchema) {
    throw Error(ErrorCode::Io, "results file lacks the schema line");
  }
  std::vector<ResultRow> rows;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 6) throw Error(ErrorCode::Io, "results row needs 6 fields: " + line);
    ResultRow r;
    r.config_id = parse_int<int>("config_id", f[0]);
    r.axis = parse_double("axis", f[1]);
    r.method = std::string(f[2]);
    r.seed = parse_int<std::uint64_t>("seed", f[3]);
    if (!f[4].empty()) r.balanced_accuracy = parse_double("balanced_accuracy", f[4]);
    if (!f[5].empty()) r.l1_error = parse_double("l1_error", f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, std::ostream& results,
                                      std::string_view generated, const RowCallback& on_row,
                                      const ModelCallback& on_model) {
  spec.validate();
  const std::vector<ConfigPoint> points = build_configs(spec);
  write_results_header(results, generated);
  std::vector<ResultRow> rows;
  for (const ConfigPoint& point : points) {
    for (int rep = 0; rep < spec.reps; ++rep) {
      const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(rep);
      toy::ToyConfig config = point.toy;
      config.seed = derive_seed(seed, static_cast<std::uint64_t>(point.id));
      const toy::ToyData data = toy::gen_toy(config);
      for (const MethodSpec& method : spec.methods) {
        ResultRow row = run_method(method, spec, data, seed, point, on_model);
        write_result_row(results, row);
        if (on_row) on_row(row);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<int> gmm_ot_classify(const Matrix& source_latents, std::span<const int> source_labels,
                                 const Matrix& target_latents, int classes, std::uint64_t seed) {
  if (target_latents.rows() == 0) throw Error(ErrorCode::EmptyInput, "no target points");
  const proportion::SourceStats source =
      proportion::source_class_means(source_latents, source_labels, classes);
  if (source_latents.cols() != target_latents.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "source and target latents differ in dimension");
  }
  const mixture::GmmFit fit = mixture::gmm_fit(target_latents, classes, seed);
  const proportion::ModeMatch match = proportion::match_modes(source.means, fit.model.means);
  std::vector<int> class_of_mode(static_cast<std::size_t>(classes));
  for (int k = 0; k < classes; ++k) class_of_mode[static_cast<std::size_t>(match.permutation[k])] = k;
  const Matrix resp = mixture::gmm_responsibilities(fit.model, target_latents);
  std::vector<int> out(static_cast<std::size_t>(target_latents.rows()));
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    Eigen::Index best = 0;
    resp.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = class_of_mode[static_cast<std::size_t>(best)];
  }
  return out;
}

std::string timestamp_now() {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

}  // namespace mars::experiment
