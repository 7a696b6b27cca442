#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "interplan/errors.hpp"
#include "interplan/inference.hpp"
#include "interplan/io.hpp"
#include "interplan/learning.hpp"
#include "interplan/losses.hpp"
#include "interplan/planner.hpp"
#include "interplan/simworld.hpp"
#include "interplan/trajectory.hpp"

namespace py = pybind11;
using namespace interplan;
using namespace pybind11::literals;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (T, 4) rows of x, y, heading, speed.
Array states_array(const Trajectory& t) {
  Array out({t.size(), std::size_t{4}});
  auto a = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < t.size(); ++i) {
    a(i, 0) = t[i].x;
    a(i, 1) = t[i].y;
    a(i, 2) = t[i].heading;
    a(i, 3) = t[i].speed;
  }
  return out;
}

Array table(const std::vector<double>& values, std::size_t rows, std::size_t cols) {
  Array out({rows, cols});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

py::dict marginals_dict(const ConditionalMarginals& m) {
  py::list pairs;
  for (const auto& p : m.pairwise) pairs.append(table(p.values, m.n_states, m.n_states));
  py::dict d("unary"_a = table(m.unary, m.n_nodes, m.n_states), "pairwise"_a = pairs,
             "converged"_a = m.converged, "iterations"_a = m.iterations);
  if (m.log_partition) d["log_partition"] = *m.log_partition;
  return d;
}

// unary: (N, K); edges: [(i, j, (K, K))].
PairwiseMRF mrf_from(const Array& unary, const std::vector<std::tuple<std::size_t, std::size_t, Array>>& edges) {
  if (unary.ndim() != 2) throw ShapeError("unary must be 2-D");
  PairwiseMRF m(unary.shape(0), unary.shape(1));
  std::copy(unary.data(), unary.data() + unary.size(), m.log_unary.begin());
  for (const auto& [i, j, pot] : edges) m.add_edge(i, j, std::vector<double>(pot.data(), pot.data() + pot.size()));
  m.validate();
  return m;
}

LbpOptions lbp_options(std::size_t iterations, double damping, double tolerance) {
  LbpOptions o;
  o.max_iterations = iterations;
  o.damping = damping;
  o.tolerance = tolerance;
  o.validate();
  return o;
}

ScenarioConfig scenario_config(const std::string& kind) {
  ScenarioConfig c;
  c.kind = kind;
  return c;
}

py::dict metrics_dict(const Metrics& m) {
  return py::dict("success_rate"_a = m.success_rate, "right_lane_rate"_a = m.right_lane_rate,
                  "episodes"_a = m.episodes, "successes"_a = m.successes, "collisions"_a = m.collisions,
                  "timeouts"_a = m.timeouts, "off_road"_a = m.off_road,
                  "planning_failures"_a = m.planning_failures);
}

EnergyWeights weights_or_default(const std::optional<std::filesystem::path>& path) {
  return path ? load_weights(*path) : EnergyWeights::defaults();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Interactive prediction and planning core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_MemoryError);
  py::register_exception<PlanningError>(m, "PlanningError", PyExc_RuntimeError);

  m.attr("TRACE_SCHEMA") = std::string(kTraceSchema);
  m.attr("CONFIG_SCHEMA") = std::string(kConfigSchema);
  m.attr("MRF_SCHEMA") = std::string(kMrfSchema);

  m.def(
      "integrate_maneuver",
      [](std::array<double, 4> origin, double acceleration, double curvature, double curvature_rate, double dt,
         std::size_t steps, std::size_t substeps) {
        Maneuver mv;
        mv.family = curvature_rate != 0.0 ? ManeuverFamily::spiral
                    : curvature != 0.0    ? ManeuverFamily::arc
                                          : ManeuverFamily::straight;
        mv.acceleration = acceleration;
        mv.curvature = curvature;
        mv.curvature_rate = curvature_rate;
        return states_array(
            integrate_maneuver({origin[0], origin[1], origin[2], origin[3]}, mv, dt, steps, substeps));
      },
      "origin"_a, "acceleration"_a = 0.0, "curvature"_a = 0.0, "curvature_rate"_a = 0.0, "dt"_a = 0.5,
      "steps"_a = 8, "substeps"_a = 4, "Rollout as a (steps+1, 4) array of x, y, heading, speed.");

  m.def(
      "sample_candidates",
      [](std::array<double, 4> origin, std::size_t k) {
        auto profile = SamplerProfile::defaults();
        profile.k = k;
        const auto set = sample_candidates({origin[0], origin[1], origin[2], origin[3]}, profile);
        py::list out;
        for (const auto& t : set.candidates) out.append(states_array(t));
        return out;
      },
      "origin"_a, "k"_a = 12);

  m.def(
      "lbp_marginals",
      [](const Array& unary, const std::vector<std::tuple<std::size_t, std::size_t, Array>>& edges,
         std::size_t max_iterations, double damping, double tolerance) {
        return marginals_dict(
            lbp_marginals(mrf_from(unary, edges), lbp_options(max_iterations, damping, tolerance)));
      },
      "unary"_a, "edges"_a = std::vector<std::tuple<std::size_t, std::size_t, Array>>{}, "max_iterations"_a = 50,
      "damping"_a = 0.5, "tolerance"_a = 1e-6);

  m.def(
      "exact_marginals",
      [](const Array& unary, const std::vector<std::tuple<std::size_t, std::size_t, Array>>& edges) {
        return marginals_dict(enumerate_exact(mrf_from(unary, edges)));
      },
      "unary"_a, "edges"_a = std::vector<std::tuple<std::size_t, std::size_t, Array>>{});

  m.def(
      "load_mrf",
      [](const std::filesystem::path& path) {
        const auto mrf = load_mrf(path);
        std::vector<std::tuple<std::size_t, std::size_t, Array>> edges;
        for (const auto& e : mrf.edges) edges.emplace_back(e.i, e.j, table(e.log_potential, mrf.n_states, mrf.n_states));
        return py::make_tuple(table(mrf.log_unary, mrf.n_nodes, mrf.n_states), edges);
      },
      "path"_a, "Returns (unary, edges) ready for lbp_marginals.");

  m.def(
      "cross_entropy",
      [](const std::vector<double>& target, const std::vector<double>& pred) { return cross_entropy(target, pred); },
      "target"_a, "pred"_a);
  m.def("smooth_l1", &smooth_l1, "diff"_a, "beta"_a = 1.0);
  m.def(
      "distill_class_loss",
      [](const std::vector<double>& teacher, const std::vector<double>& student, std::size_t classes) {
        return distill_class_loss(teacher, student, classes);
      },
      "teacher"_a, "student"_a, "classes"_a);
  m.def(
      "distill_reg_loss",
      [](const std::vector<double>& gt, const std::vector<double>& teacher, const std::vector<double>& student) {
        return distill_reg_loss(gt, teacher, student);
      },
      "gt"_a, "teacher"_a, "student"_a);

  m.def(
      "plan_scenario",
      [](const std::string& kind, std::uint64_t seed, const std::string& mode,
         const std::optional<std::filesystem::path>& weights) {
        const Scenario sc = scenario_config(kind).instantiate(seed);
        const SimOptions opts;
        std::vector<std::vector<KinematicState>> histories;
        for (const auto& a : sc.agents) histories.push_back({a.init});
        const std::vector<KinematicState> ego_history{sc.ego_init};
        const auto ctx = observe(sc, sc.ego_init, histories, ego_history, opts);
        std::vector<CandidateSet> sets{sample_candidates(ctx.ego.current(), opts.sampler)};
        for (const auto& a : ctx.agents) sets.push_back(sample_candidates(a.current(), opts.sampler));
        const auto r = plan(ctx, sets, weights_or_default(weights), planning_mode_from_string(mode), opts.lbp);
        return py::dict("chosen"_a = r.chosen_index, "costs"_a = r.costs,
                        "trajectory"_a = states_array(r.chosen_trajectory));
      },
      "kind"_a = "dense_merge", "seed"_a = 0, "mode"_a = "interactive", "weights"_a = py::none(),
      "Plans once from a scenario's initial state.");

  m.def(
      "evaluate",
      [](const std::string& kind, std::uint64_t seed, const std::string& mode, std::size_t episodes,
         std::size_t workers, const std::optional<std::filesystem::path>& weights) {
        auto cfg = scenario_config(kind);
        cfg.seed = seed;
        const std::vector<ScenarioConfig> configs{cfg};
        const auto w = weights_or_default(weights);
        const auto pm = planning_mode_from_string(mode);
        py::gil_scoped_release release;
        const auto metrics = evaluate(configs, w, pm, episodes, SimOptions{}, workers);
        py::gil_scoped_acquire acquire;
        return metrics_dict(metrics);
      },
      "kind"_a = "dense_merge", "seed"_a = 0, "mode"_a = "interactive", "episodes"_a = 1, "workers"_a = 1,
      "weights"_a = py::none());

  m.def(
      "check_gradient",
      [](std::uint64_t corpus_seed, std::size_t scenes) {
        const auto corpus = make_toy_corpus(corpus_seed, scenes);
        return check_gradient(corpus, EnergyWeights::defaults(), OptimizerOptions{}, 1e-5).max_relative_error;
      },
      "corpus_seed"_a = 0, "scenes"_a = 4, "Max relative error of the loss gradient on a toy corpus.");
}
