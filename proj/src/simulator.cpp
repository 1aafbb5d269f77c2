#include "cctmpc/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cctmpc/error.hpp"

namespace cctmpc {

namespace {

std::vector<std::uint64_t> key_of(const Vector& r) {
  std::vector<std::uint64_t> k(r.size());
  std::memcpy(k.data(), r.data(), sizeof(double) * r.size());
  return k;
}

Vector dirichlet(int n, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0);
  Vector l(n);
  for (auto& v : l) v = g(rng);
  return l / l.sum();
}

class DisturbanceSource {
 public:
  DisturbanceSource(const UncertainModel& m, DisturbancePolicy policy, std::mt19937_64& rng)
      : policy_(policy), bw_(m.effective_disturbance_input()), set_(m.disturbance_set), rng_(rng) {
    vertices_ = m.disturbance_vertices();
    if (policy == DisturbancePolicy::kUniform) {
      const auto raw = enumerate_vertices(m.disturbance_set);
      lo_ = hi_ = raw.front();
      for (const auto& v : raw) lo_ = lo_.cwiseMin(v), hi_ = hi_.cwiseMax(v);
    }
    order_.resize(vertices_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    if (policy == DisturbancePolicy::kExtremeCycling) std::shuffle(order_.begin(), order_.end(), rng_);
  }

  const std::vector<Vector>& vertices() const { return vertices_; }

  Vector draw(int t) {
    switch (policy_) {
      case DisturbancePolicy::kZero:
      case DisturbancePolicy::kAdversarial:
        return Vector::Zero(bw_.rows());
      case DisturbancePolicy::kExtremeCycling:
        return vertices_[order_[t % order_.size()]];
      case DisturbancePolicy::kUniform: {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int tries = 0; tries < 100000; ++tries) {
          Vector w = lo_;
          for (Eigen::Index i = 0; i < w.size(); ++i) w[i] += u(rng_) * (hi_[i] - lo_[i]);
          if (set_.contains(w, 1e-12)) return bw_ * w;
        }
        throw Error(ErrorCode::kSolverFailure, "rejection sampling of the disturbance set failed");
      }
    }
    return Vector::Zero(bw_.rows());
  }

 private:
  DisturbancePolicy policy_;
  Matrix bw_;
  HPolytope set_;
  std::mt19937_64& rng_;
  std::vector<Vector> vertices_;
  std::vector<int> order_;
  Vector lo_, hi_;
};

std::vector<std::pair<Matrix, Matrix>> pairs_of(const UncertainModel& m) {
  std::vector<std::pair<Matrix, Matrix>> out;
  for (int i = 0; i < m.num_vertices(); ++i) out.emplace_back(m.A[i], m.B[i]);
  return out;
}

}  // namespace

bool StepFlags::all() const { return first_failed().empty(); }

std::string StepFlags::first_failed() const {
  const std::pair<const char*, bool> f[] = {{"state_admissible", state_admissible},
                                            {"input_admissible", input_admissible},
                                            {"initial_row", initial_row},
                                            {"successor_in_tube", successor_in_tube},
                                            {"lyapunov_nonnegative", lyapunov_nonnegative},
                                            {"descent", descent},
                                            {"candidate_feasible", candidate_feasible},
                                            {"hull_nested", hull_nested},
                                            {"plant_in_hull", plant_in_hull}};
  for (const auto& [name, ok] : f)
    if (!ok) return name;
  return {};
}

Vector adversarial_disturbance(const TrackingMPC& controller, const MPCSolution& current, const Vector& x_next_nominal,
                               const Vector& r, const std::vector<Vector>& vertices) {
  if (vertices.empty()) return Vector::Zero(x_next_nominal.size());
  const MPCSolution cand = controller.shifted_candidate(current);
  int best = 0;
  double best_value = -kInfinity;
  for (size_t k = 0; k < vertices.size(); ++k) {
    const MPCSolution s = controller.solve(x_next_nominal + vertices[k], r, cand);
    const double value = s.feasible() ? s.objective : kInfinity;
    if (k == 0 || value > best_value + 1e-9 * std::max(1.0, std::abs(best_value))) {
      best = static_cast<int>(k);
      best_value = value;
    }
  }
  return vertices[best];
}

RunResult run_closed_loop(const Scenario& s) {
  const SimulationSpec& sim = s.simulation;
  const Tolerances& tol = s.tolerances;
  TrackingMPC ctrl = build_controller(s);

  RunResult out;
  out.seed = sim.seed.value_or(0);
  std::mt19937_64 rng(out.seed);
  DisturbanceSource dist(s.model, sim.disturbance, rng);

  std::map<std::vector<std::uint64_t>, OptimalRCI> rci_cache;
  auto pairs = pairs_of(s.model);
  Interval range = s.lpv ? s.lpv->initial_range : Interval{};

  Vector x = sim.x0;
  std::optional<MPCSolution> prev;
  Vector prev_r;
  double prev_lyapunov = 0.0, prev_gap = 0.0;

  for (int t = 0; t < sim.steps; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.x = x;
    rec.r = sim.reference_at(t);
    rec.schedule = std::nan("");

    bool model_changed = false;
    if (sim.plant == PlantPolicy::kLPVSchedule) {
      rec.schedule = sim.schedule_at(t);
      const Interval next{std::clamp(rec.schedule, s.lpv->initial_range.lo, s.lpv->initial_range.hi), range.hi};
      if (next.lo != range.lo) {
        auto np = restrict_uncertainty(*s.lpv, next);
        rec.flags.hull_nested = vertex_hull_nested(np, pairs, tol.hull_membership);
        pairs = std::move(np);
        range = next;
        ctrl.update_vertex_pairs(pairs);
        rci_cache.clear();
        model_changed = true;
      }
    }
    const TubeProblem& p = ctrl.problem();

    std::optional<MPCSolution> cand;
    if (prev) {
      cand = ctrl.shifted_candidate(*prev);
      rec.flags.candidate_feasible = ctrl.check_solution(*cand, x, tol.containment).ok;
    }
    const auto t0 = std::chrono::steady_clock::now();
    MPCSolution sol = ctrl.solve(x, rec.r, cand);
    rec.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!sol.feasible()) {
      const std::string why = std::string("MPC solve at t = ") + std::to_string(t) + ": " + to_string(sol.status);
      if (t == 0) throw Error(ErrorCode::kInfeasibleAtStart, why);
      out.mid_run_infeasible = true;
      out.infeasible_step = t;
      out.first_violation = why;
      break;
    }
    rec.solution = sol;

    const auto key = key_of(rec.r);
    auto it = rci_cache.find(key);
    if (it == rci_cache.end()) it = rci_cache.emplace(key, solve_optimal_rci(p, rec.r, s.controller.qp)).first;
    rec.y_o = it->second.y;
    rec.cost = sol.objective;
    rec.cost_o = it->second.cost;
    rec.lyapunov = rec.cost - rec.cost_o;
    rec.flags.lyapunov_nonnegative = rec.lyapunov >= -tol.lyapunov_floor;
    if (prev && !model_changed && (rec.r - prev_r).cwiseAbs().maxCoeff() == 0.0) {
      rec.flags.descent = rec.lyapunov <= prev_lyapunov + tol.lyapunov_slack;
      // The margin only applies while L can still drop by that much.
      if (prev_gap > tol.tracking_gap && prev_lyapunov > tol.strict_descent)
        rec.flags.descent = rec.flags.descent && rec.lyapunov < prev_lyapunov - tol.strict_descent;
    }
    const double gap = (sol.y[0] - sol.ys).cwiseAbs().maxCoeff();

    rec.flags.initial_row = p.tmpl.polytope(sol.y[0]).max_violation(x) <= tol.containment;
    try {
      rec.lambda = interpolation_weights(x, sol.y[0], p.tmpl, s.controller.qp);
    } catch (const Error& e) {
      out.steps.push_back(rec);
      out.first_violation = std::string("initial_row: ") + e.what();
      out.violation_step = t;
      return out;
    }
    rec.u = control_input(rec.lambda, sol.u[0]);
    rec.z = p.model.C * x + p.model.D * rec.u;
    rec.state_margin = -p.model.state_set.max_violation(x);
    rec.input_margin = -p.model.input_set.max_violation(rec.u);
    rec.flags.state_admissible = rec.state_margin >= -tol.containment;
    rec.flags.input_admissible = rec.input_margin >= -tol.containment;

    auto extent = [&](const Vector& y) {
      double lo = kInfinity, hi = -kInfinity;
      for (const auto& v : p.tmpl.vertices(y)) {
        lo = std::min(lo, v[sim.width_axis]);
        hi = std::max(hi, v[sim.width_axis]);
      }
      return hi - lo;
    };
    rec.width = extent(sol.y[0]);
    rec.width_s = extent(sol.ys);
    rec.width_o = extent(rec.y_o);

    switch (sim.plant) {
      case PlantPolicy::kFixedVertex: {
        const int k = std::min(sim.plant_vertex, p.model.num_vertices() - 1);
        rec.A = p.model.A[k];
        rec.B = p.model.B[k];
        break;
      }
      case PlantPolicy::kRandomConvex: {
        const Vector l = dirichlet(p.model.num_vertices(), rng);
        rec.A = Matrix::Zero(x.size(), x.size());
        rec.B = Matrix::Zero(x.size(), p.nu());
        for (int k = 0; k < p.model.num_vertices(); ++k) rec.A += l[k] * p.model.A[k], rec.B += l[k] * p.model.B[k];
        break;
      }
      case PlantPolicy::kLPVSchedule:
        rec.A = s.lpv->A_at(rec.schedule);
        rec.B = s.lpv->B;
        rec.flags.plant_in_hull = vertex_hull_nested({{rec.A, rec.B}}, pairs, tol.hull_membership);
        break;
    }

    const Vector nominal = rec.A * x + rec.B * rec.u;
    rec.w = sim.disturbance == DisturbancePolicy::kAdversarial
                ? adversarial_disturbance(ctrl, sol, nominal, sim.reference_at(t + 1), dist.vertices())
                : dist.draw(t);
    const Vector x_next = nominal + rec.w;
    rec.flags.successor_in_tube = p.tmpl.polytope(sol.y[1]).max_violation(x_next) <= tol.containment;

    if (!rec.flags.all() && out.violation_step < 0) {
      out.violation_step = t;
      out.first_violation = rec.flags.first_failed();
    }
    out.steps.push_back(rec);
    prev = std::move(sol);
    prev_r = rec.r;
    prev_lyapunov = rec.lyapunov;
    prev_gap = gap;
    x = x_next;
  }
  return out;
}

// ---------------------------------------------------------------------------

int RegionProbe::num_feasible() const { return static_cast<int>(std::count(feasible.begin(), feasible.end(), 1)); }

HPolytope RegionProbe::hull(bool grid_only) const {
  // Only the extremes along axis 0 of each grid line can be hull vertices.
  std::map<std::vector<double>, std::pair<int, int>> extremes;
  for (size_t i = 0; i < points.size(); ++i) {
    if (!feasible[i]) continue;
    const std::vector<double> key(points[i].data() + 1, points[i].data() + points[i].size());
    auto [it, fresh] = extremes.try_emplace(key, static_cast<int>(i), static_cast<int>(i));
    if (fresh) continue;
    if (points[i][0] < points[it->second.first][0]) it->second.first = static_cast<int>(i);
    if (points[i][0] > points[it->second.second][0]) it->second.second = static_cast<int>(i);
  }
  std::vector<Vector> pts;
  for (const auto& [_, e] : extremes) {
    pts.push_back(points[e.first]);
    if (e.second != e.first) pts.push_back(points[e.second]);
  }
  if (!grid_only) pts.insert(pts.end(), boundary.begin(), boundary.end());
  if (pts.size() <= static_cast<size_t>(lower.size()))
    throw Error(ErrorCode::kEmpty, "too few feasible points for a full-dimensional hull");
  return convex_hull(pts);
}

RegionProbe feasible_region_probe(const TrackingMPC& controller, const Vector& r, double resolution, bool refine,
                                  double refine_tolerance, int threads) {
  if (!(resolution > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid resolution must be positive");
  const HPolytope& xs = controller.problem().model.state_set;
  const int n = xs.dim();
  RegionProbe probe;
  probe.resolution = resolution;
  const auto verts = enumerate_vertices(xs);
  probe.lower = probe.upper = verts.front();
  for (const auto& v : verts) probe.lower = probe.lower.cwiseMin(v), probe.upper = probe.upper.cwiseMax(v);

  std::vector<int> counts(n);
  long total = 1;
  for (int a = 0; a < n; ++a) {
    counts[a] = static_cast<int>(std::floor((probe.upper[a] - probe.lower[a]) / resolution + 1e-9)) + 1;
    total *= counts[a];
  }
  auto index_of = [&](const std::vector<int>& idx) {
    long k = 0;
    for (int a = n - 1; a >= 0; --a) k = k * counts[a] + idx[a];
    return k;
  };
  probe.points.resize(total);
  for (long k = 0; k < total; ++k) {
    Vector p(n);
    long rest = k;
    for (int a = 0; a < n; ++a) {
      p[a] = probe.lower[a] + (rest % counts[a]) * resolution;
      rest /= counts[a];
    }
    probe.points[k] = p;
  }
  probe.feasible.assign(total, 0);

  const int workers = std::max(1, threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency()));
  std::atomic<long> next{0};
  std::atomic<int> solves{0};
  auto run_parallel = [&](long count, auto&& job) {
    next = 0;
    std::vector<std::thread> pool;
    std::mutex err_mutex;
    std::exception_ptr err;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        const TrackingMPC local = controller;
        try {
          for (long k; (k = next++) < count;) job(local, k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          err = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  };
  auto is_feasible = [&](const TrackingMPC& c, const Vector& x) {
    ++solves;
    return c.solve(x, r).feasible();
  };

  run_parallel(total, [&](const TrackingMPC& c, long k) { probe.feasible[k] = is_feasible(c, probe.points[k]); });

  if (refine) {
    // Grid lines along every axis; each line's feasible set is an interval.
    struct Line {
      int axis;
      std::vector<long> members;
    };
    std::vector<Line> lines;
    for (int a = 0; a < n; ++a)
      for (long k = 0; k < total; ++k) {
        std::vector<int> idx(n);
        long rest = k;
        for (int b = 0; b < n; ++b) idx[b] = rest % counts[b], rest /= counts[b];
        if (idx[a] != 0) continue;
        Line line{a, {}};
        for (int i = 0; i < counts[a]; ++i) {
          idx[a] = i;
          line.members.push_back(index_of(idx));
        }
        lines.push_back(std::move(line));
      }
    std::vector<std::vector<Vector>> ends(lines.size());
    run_parallel(static_cast<long>(lines.size()), [&](const TrackingMPC& c, long li) {
      const Line& line = lines[li];
      int first = -1, last = -1;
      for (int i = 0; i < static_cast<int>(line.members.size()); ++i)
        if (probe.feasible[line.members[i]]) {
          if (first < 0) first = i;
          last = i;
        }
      if (first < 0) return;
      auto bisect = [&](Vector in, Vector outp) {
        while ((in - outp).norm() > refine_tolerance) {
          const Vector mid = 0.5 * (in + outp);
          (is_feasible(c, mid) ? in : outp) = mid;
        }
        return in;
      };
      const auto& pts = probe.points;
      ends[li].push_back(first > 0 ? bisect(pts[line.members[first]], pts[line.members[first - 1]])
                                   : pts[line.members[first]]);
      const int lastidx = static_cast<int>(line.members.size()) - 1;
      ends[li].push_back(last < lastidx ? bisect(pts[line.members[last]], pts[line.members[last + 1]])
                                        : pts[line.members[last]]);
    });
    for (const auto& e : ends) probe.boundary.insert(probe.boundary.end(), e.begin(), e.end());
  }
  probe.solves = solves;
  return probe;
}

// ---------------------------------------------------------------------------

RunSummary summarize(const RunResult& run, const Tolerances& tol) {
  RunSummary s;
  s.steps = static_cast<int>(run.steps.size());
  if (run.steps.empty()) return s;
  s.final_lyapunov = run.steps.back().lyapunov;
  s.max_lyapunov = -kInfinity;
  s.min_state_margin = s.min_input_margin = kInfinity;
  s.max_state_margin = s.max_input_margin = -kInfinity;
  int last_change = 0;
  for (size_t t = 0; t < run.steps.size(); ++t) {
    const StepRecord& r = run.steps[t];
    s.max_lyapunov = std::max(s.max_lyapunov, r.lyapunov);
    s.min_state_margin = std::min(s.min_state_margin, r.state_margin);
    s.max_state_margin = std::max(s.max_state_margin, r.state_margin);
    s.min_input_margin = std::min(s.min_input_margin, r.input_margin);
    s.max_input_margin = std::max(s.max_input_margin, r.input_margin);
    s.total_solve_seconds += r.solve_seconds;
    s.flag_failures += !r.flags.all();
    if (t > 0 && (r.r - run.steps[t - 1].r).cwiseAbs().maxCoeff() != 0.0) last_change = static_cast<int>(t);
  }
  for (int t = static_cast<int>(run.steps.size()) - 1; t >= last_change && run.steps[t].lyapunov <= tol.settle; --t)
    s.settle_time = t;
  return s;
}

namespace {

void names(std::vector<std::string>& cols, const std::string& prefix, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) cols.push_back(prefix + "_" + std::to_string(i));
}

const char* kFlagNames[] = {"state_admissible", "input_admissible", "initial_row",  "successor_in_tube", "lyapunov_nonnegative",
                            "descent",          "candidate_feasible", "hull_nested", "plant_in_hull"};

}  // namespace

std::string trace_csv_header(const RunResult& run) {
  if (run.steps.empty()) return "t";
  const StepRecord& r = run.steps.front();
  std::vector<std::string> cols = {"t"};
  names(cols, "x", r.x.size());
  names(cols, "u", r.u.size());
  names(cols, "z", r.z.size());
  names(cols, "r", r.r.size());
  names(cols, "w", r.w.size());
  for (const char* c : {"schedule", "cost", "cost_o", "lyapunov", "width", "width_s", "width_o", "qp_iterations", "solve_ms", "state_margin",
                        "input_margin"})
    cols.push_back(c);
  for (const char* f : kFlagNames) cols.push_back(f);
  names(cols, "y0", r.solution.y[0].size());
  names(cols, "y1", r.solution.y[1].size());
  names(cols, "ys", r.solution.ys.size());
  names(cols, "us", r.solution.us.size());
  names(cols, "yo", r.y_o.size());
  names(cols, "lambda", r.lambda.lambda.size());
  std::string out;
  for (size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  return out;
}

void write_trace_csv(std::ostream& out, const RunResult& run) {
  out << trace_csv_header(run) << "\n";
  out.precision(17);
  if (run.steps.empty()) return;
  // Column widths come from the first step; a truncated last step (failed
  // interpolation) leaves its missing fields empty.
  const StepRecord& f0 = run.steps.front();
  for (const StepRecord& r : run.steps) {
    out << r.t;
    auto put = [&](const Vector& v, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n; ++i) {
        out << ",";
        if (i < v.size()) out << v[i];
      }
    };
    put(r.x, f0.x.size()), put(r.u, f0.u.size()), put(r.z, f0.z.size()), put(r.r, f0.r.size()), put(r.w, f0.w.size());
    out << "," << r.schedule << "," << r.cost << "," << r.cost_o << "," << r.lyapunov << "," << r.width << "," << r.width_s << "," << r.width_o << ","
        << r.solution.iterations << "," << 1e3 * r.solve_seconds << "," << r.state_margin << "," << r.input_margin;
    const StepFlags& f = r.flags;
    for (bool b : {f.state_admissible, f.input_admissible, f.initial_row, f.successor_in_tube, f.lyapunov_nonnegative,
                   f.descent, f.candidate_feasible, f.hull_nested, f.plant_in_hull})
      out << "," << (b ? 1 : 0);
    put(r.solution.y[0], f0.solution.y[0].size()), put(r.solution.y[1], f0.solution.y[1].size());
    put(r.solution.ys, f0.solution.ys.size()), put(r.solution.us, f0.solution.us.size());
    put(r.y_o, f0.y_o.size()), put(r.lambda.lambda, f0.lambda.lambda.size());
    out << "\n";
  }
}

void write_summary_json(std::ostream& out, const Scenario& s, const RunResult& run, const RunSummary& sum) {
  using nlohmann::json;
  json flags = json::object();
  for (const char* f : kFlagNames) flags[f] = 0;
  for (const StepRecord& r : run.steps) {
    const StepFlags& f = r.flags;
    const bool v[] = {f.state_admissible, f.input_admissible, f.initial_row, f.successor_in_tube, f.lyapunov_nonnegative,
                      f.descent, f.candidate_feasible, f.hull_nested, f.plant_in_hull};
    for (size_t i = 0; i < std::size(kFlagNames); ++i) flags[kFlagNames[i]] = flags[kFlagNames[i]].get<int>() + !v[i];
  }
  json j = {{"scenario", s.name},
            {"seed", run.seed},
            {"steps", sum.steps},
            {"ok", run.ok()},
            {"mid_run_infeasible", run.mid_run_infeasible},
            {"infeasible_step", run.infeasible_step},
            {"first_violation", run.first_violation},
            {"violation_step", run.violation_step},
            {"final_lyapunov", sum.final_lyapunov},
            {"max_lyapunov", sum.max_lyapunov},
            {"settle_time", sum.settle_time},
            {"min_state_margin", sum.min_state_margin},
            {"max_state_margin", sum.max_state_margin},
            {"min_input_margin", sum.min_input_margin},
            {"max_input_margin", sum.max_input_margin},
            {"total_solve_seconds", sum.total_solve_seconds},
            {"flag_failures", flags}};
  out << j.dump(2) << "\n";
}

}  // namespace cctmpc
