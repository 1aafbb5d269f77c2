#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cctmpc/error.hpp"
#include "cctmpc/scenario.hpp"
#include "cctmpc/simulator.hpp"

namespace py = pybind11;
using namespace cctmpc;

namespace {

// Rows of a per-step vector field stacked into a (steps x dim) array.
template <class Get>
Matrix stack(const RunResult& run, Get get) {
  if (run.steps.empty()) return Matrix(0, 0);
  const Eigen::Index n = get(run.steps.front()).size();
  Matrix out = Matrix::Constant(static_cast<Eigen::Index>(run.steps.size()), n, std::nan(""));
  for (size_t t = 0; t < run.steps.size(); ++t) {
    const Vector& v = get(run.steps[t]);
    if (v.size() == n) out.row(static_cast<Eigen::Index>(t)) = v.transpose();
  }
  return out;
}

template <class Get>
Vector column(const RunResult& run, Get get) {
  Vector out(static_cast<Eigen::Index>(run.steps.size()));
  for (size_t t = 0; t < run.steps.size(); ++t) out[static_cast<Eigen::Index>(t)] = get(run.steps[t]);
  return out;
}

DisturbancePolicy disturbance_from(const std::string& s) {
  for (auto p : {DisturbancePolicy::kZero, DisturbancePolicy::kUniform, DisturbancePolicy::kExtremeCycling,
                 DisturbancePolicy::kAdversarial})
    if (s == to_string(p)) return p;
  throw Error(ErrorCode::kSchema, "unknown disturbance policy '" + s + "'");
}

py::dict solution_dict(const MPCSolution& s) {
  py::dict d;
  d["status"] = to_string(s.status);
  d["objective"] = s.objective;
  d["iterations"] = s.iterations;
  d["y"] = s.y;
  d["u"] = s.u;
  d["ys"] = s.ys;
  d["us"] = s.us;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Configuration-constrained tube MPC for reference tracking";

  // Messages start with the error code name, e.g. "Schema: ...".
  py::register_exception<Error>(m, "CctmpcError", PyExc_RuntimeError);

  py::class_<Scenario>(m, "Scenario")
      .def_readwrite("name", &Scenario::name)
      .def_readwrite("description", &Scenario::description)
      .def_property_readonly("state_dim", [](const Scenario& s) { return s.model.state_dim(); })
      .def_property_readonly("output_dim", [](const Scenario& s) { return s.model.output_dim(); })
      .def_property_readonly("is_lpv", [](const Scenario& s) { return s.lpv.has_value(); })
      .def_property(
          "steps", [](const Scenario& s) { return s.simulation.steps; },
          [](Scenario& s, int n) { s.simulation.steps = n; })
      .def_property(
          "seed", [](const Scenario& s) { return s.simulation.seed; },
          [](Scenario& s, std::optional<std::uint64_t> v) { s.simulation.seed = v; })
      .def_property(
          "x0", [](const Scenario& s) { return s.simulation.x0; },
          [](Scenario& s, const Vector& x) {
            if (x.size() != s.model.state_dim()) throw Error(ErrorCode::kDimensionMismatch, "x0 has the wrong size");
            s.simulation.x0 = x;
          })
      .def_property(
          "disturbance", [](const Scenario& s) { return std::string(to_string(s.simulation.disturbance)); },
          [](Scenario& s, const std::string& p) { s.simulation.disturbance = disturbance_from(p); })
      .def("set_references",
           [](Scenario& s, const std::vector<std::pair<int, Vector>>& refs) {
             std::vector<ReferenceStep> steps;
             for (const auto& [t, r] : refs) steps.push_back({t, r});
             s.simulation.references = steps;
           })
      .def("apply_tolerance_overrides",
           [](Scenario& s, const std::string& spec) { s.tolerances.apply_overrides(spec); })
      .def("dump", [](const Scenario& s, bool embed) { return dump_scenario(s, embed); },
           py::arg("embed_template") = false)
      .def("__repr__", [](const Scenario& s) { return "<Scenario '" + s.name + "'>"; });

  m.def("load_scenario", &read_scenario, py::arg("path"));
  m.def("parse_scenario", &parse_scenario, py::arg("text"), py::arg("base_dir") = ".");

  m.def(
      "validate",
      [](const Scenario& s) {
        std::vector<std::tuple<std::string, bool, std::string>> out;
        for (const auto& c : validate_scenario(s).checks) out.emplace_back(c.name, c.ok, c.message);
        return out;
      },
      "List of (check, ok, message) in evaluation order.");

  m.def(
      "optimal_rci",
      [](const Scenario& s, const Vector& r) {
        const TubeProblem p = build_problem(s);
        const OptimalRCI o = solve_optimal_rci(p, r, s.controller.qp);
        py::dict d;
        d["cost"] = o.cost;
        d["y"] = o.y;
        d["u"] = o.u;
        d["theta"] = o.theta;
        d["vertices"] = p.tmpl.vertices(o.y);
        return d;
      },
      py::arg("scenario"), py::arg("r"));

  py::class_<TrackingMPC>(m, "Controller")
      .def(py::init([](const Scenario& s) { return build_controller(s); }))
      .def("solve", [](const TrackingMPC& c, const Vector& x, const Vector& r) { return solution_dict(c.solve(x, r)); })
      .def("lyapunov", &TrackingMPC::lyapunov_value)
      .def("size_report", [](const TrackingMPC& c) {
        const SizeReport r = c.size_report();
        py::dict d;
        d["rows_before_steady"] = r.rows_before_steady;
        d["trajectory_variables"] = r.trajectory_variables;
        d["total_rows"] = r.total_rows;
        return d;
      });

  py::class_<RunResult>(m, "RunResult")
      .def_property_readonly("ok", &RunResult::ok)
      .def_readonly("seed", &RunResult::seed)
      .def_readonly("mid_run_infeasible", &RunResult::mid_run_infeasible)
      .def_readonly("first_violation", &RunResult::first_violation)
      .def_readonly("violation_step", &RunResult::violation_step)
      .def("__len__", [](const RunResult& r) { return r.steps.size(); })
      .def_property_readonly("x", [](const RunResult& r) { return stack(r, [](const StepRecord& s) -> const Vector& { return s.x; }); })
      .def_property_readonly("u", [](const RunResult& r) { return stack(r, [](const StepRecord& s) -> const Vector& { return s.u; }); })
      .def_property_readonly("w", [](const RunResult& r) { return stack(r, [](const StepRecord& s) -> const Vector& { return s.w; }); })
      .def_property_readonly("r", [](const RunResult& r) { return stack(r, [](const StepRecord& s) -> const Vector& { return s.r; }); })
      .def_property_readonly("lyapunov", [](const RunResult& r) { return column(r, [](const StepRecord& s) { return s.lyapunov; }); })
      .def_property_readonly("width", [](const RunResult& r) { return column(r, [](const StepRecord& s) { return s.width; }); })
      .def_property_readonly("width_o", [](const RunResult& r) { return column(r, [](const StepRecord& s) { return s.width_o; }); })
      .def_property_readonly("schedule", [](const RunResult& r) { return column(r, [](const StepRecord& s) { return s.schedule; }); })
      .def_property_readonly("flags_ok", [](const RunResult& r) {
        std::vector<bool> out;
        for (const auto& s : r.steps) out.push_back(s.flags.all());
        return out;
      })
      .def("trace_csv", [](const RunResult& r) {
        std::ostringstream os;
        write_trace_csv(os, r);
        return os.str();
      });

  m.def("run", &run_closed_loop, py::arg("scenario"), py::call_guard<py::gil_scoped_release>());
}
