#include "mars/csv.hpp"
#include "mars/error.hpp"
#include "mars/experiment.hpp"
#include "mars/mixture.hpp"
#include "mars/ot.hpp"
#include "mars/proportion.hpp"
#include "mars/toy.hpp"
#include "mars/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace mars;

namespace {

py::dict dataset_dict(const LabeledDataset& d) {
  py::dict out;
  out["points"] = d.points;
  out["labels"] = d.labels;
  out["true_proportions"] = d.true_proportions;
  return out;
}

py::dict estimate_dict(const proportion::ProportionEstimate& e) {
  py::dict out;
  out["target_proportions"] = e.target_proportions;
  out["permutation"] = e.permutation.mapping();
  out["mode_proportions"] = e.mode_proportions;
  out["cost"] = e.cost;
  return out;
}

// Keyword names match the config-file keys.
adapt::TrainConfig train_config(const std::string& method, const py::kwargs& options) {
  experiment::ExperimentSpec spec;
  for (const auto& [key, value] : options) {
    experiment::apply_setting(spec, py::str(key).cast<std::string>(),
                              py::str(value).cast<std::string>());
  }
  const experiment::MethodSpec m = experiment::parse_method(method);
  if (m.family != experiment::MethodSpec::Family::Train) {
    throw Error(ErrorCode::InvalidConfig, "not a trainable method: " + method);
  }
  adapt::TrainConfig config = spec.train;
  config.method = m.method;
  config.beta = m.beta;
  config.seed = spec.base_seed;
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MARS domain adaptation core";

  static py::exception<Error> error(m, "MarsError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def(
      "gen_toy",
      [](const std::string& regime, double majority, double shift, int n_source, int n_target,
         std::uint64_t seed) {
        auto config = toy::ToyConfig::standard(toy::regime_from_string(regime));
        config.target_proportions = toy::majority_proportions(majority);
        config.shift[1] = shift;
        config.n_source = n_source;
        config.n_target = n_target;
        config.seed = seed;
        const auto data = toy::gen_toy(config);
        return py::make_tuple(dataset_dict(data.source), dataset_dict(data.target));
      },
      py::arg("regime") = "low", py::arg("majority") = toy::kBalancedMajority,
      py::arg("shift") = toy::kDefaultShift, py::arg("n_source") = 600, py::arg("n_target") = 600,
      py::arg("seed") = 0);

  m.def(
      "solve_ot",
      [](const Matrix& cost, const Vector& a, const Vector& b) {
        const auto plan = ot::solve_discrete_ot(cost, a, b);
        return py::make_tuple(plan.coupling, plan.cost);
      },
      py::arg("cost"), py::arg("a"), py::arg("b"));
  m.def(
      "optimal_assignment",
      [](const Matrix& cost) { return ot::optimal_assignment(cost).mapping(); }, py::arg("cost"));
  m.def(
      "wasserstein1",
      [](const Matrix& x, const Vector& xw, const Matrix& y, const Vector& yw) {
        return ot::wasserstein1_empirical(x, xw, y, yw);
      },
      py::arg("x"), py::arg("x_weights"), py::arg("y"), py::arg("y_weights"));

  m.def(
      "estimate_target_proportions",
      [](const Matrix& source, const std::vector<int>& labels, const Matrix& target, int classes,
         const std::string& method, std::uint64_t seed) {
        const auto kind = method == "gmm" ? proportion::Method::Gmm
                          : method == "agglomerative"
                              ? proportion::Method::Agglomerative
                              : throw Error(ErrorCode::InvalidConfig, "method must be gmm or agglomerative");
        return estimate_dict(
            proportion::estimate_target_proportions(source, labels, target, classes, kind, seed));
      },
      py::arg("source"), py::arg("labels"), py::arg("target"), py::arg("classes"),
      py::arg("method") = "agglomerative", py::arg("seed") = 0);
  m.def(
      "importance_weights",
      [](const Vector& source, const Vector& target, double floor) {
        return proportion::importance_weights(source, target, floor).weights;
      },
      py::arg("source_proportions"), py::arg("target_proportions"),
      py::arg("floor") = proportion::kDefaultWeightFloor);

  m.def(
      "gmm_fit",
      [](const Matrix& points, int components, std::uint64_t seed) {
        const auto fit = mixture::gmm_fit(points, components, seed);
        std::ostringstream dump;
        io::write_mixture(dump, fit.model);
        py::dict out;
        out["means"] = fit.model.means;
        out["covariances"] = fit.model.covariances;
        out["proportions"] = fit.model.proportions;
        out["log_likelihood"] = fit.log_likelihood;
        out["converged"] = fit.converged;
        out["dump"] = dump.str();
        return out;
      },
      py::arg("points"), py::arg("components"), py::arg("seed") = 0);
  m.def(
      "agglomerative_cluster",
      [](const Matrix& points, int clusters) {
        return mixture::agglomerative_cluster(points, clusters).labels;
      },
      py::arg("points"), py::arg("clusters"));

  m.def("lemma1_sup_ratio",
        [](const std::string& regime, double majority, double shift, int resolution) {
          auto config = toy::ToyConfig::standard(toy::regime_from_string(regime));
          config.target_proportions = toy::majority_proportions(majority);
          config.shift[1] = shift;
          return toy::lemma1_sup_ratio(config, resolution);
        },
        py::arg("regime") = "low", py::arg("majority") = toy::kBalancedMajority,
        py::arg("shift") = toy::kDefaultShift, py::arg("resolution") = 201);

  m.def(
      "balanced_accuracy",
      [](const std::vector<int>& predictions, const std::vector<int>& labels, int classes) {
        return adapt::evaluate_predictions(predictions, labels, classes).balanced_accuracy;
      },
      py::arg("predictions"), py::arg("labels"), py::arg("classes"));

  // Trains on (source points, labels) and a target point set, returning the
  // target predictions, per-epoch log and final proportion estimate.
  m.def(
      "train",
      [](const std::string& method, const Matrix& source, const std::vector<int>& labels,
         const Matrix& target, const py::kwargs& options) {
        const adapt::TrainConfig config = train_config(method, options);
        LabeledDataset s{source, labels, {}};
        adapt::TargetData t{target, {}, {}};
        adapt::TrainedModel model;
        {
          py::gil_scoped_release release;
          model = adapt::train(config, s, t);
        }
        py::dict out;
        out["predictions"] = model.predict(target);
        std::ostringstream log;
        adapt::write_training_log(log, model);
        out["log"] = log.str();
        std::ostringstream g, h;
        model.features.save(g);
        model.classifier.save(h);
        out["features"] = g.str();
        out["classifier"] = h.str();
        if (model.estimate) out["estimate"] = estimate_dict(*model.estimate);
        return out;
      },
      py::arg("method"), py::arg("source"), py::arg("labels"), py::arg("target"));
}
