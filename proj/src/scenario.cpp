#include "cctmpc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cctmpc/error.hpp"

namespace cctmpc {

using json = nlohmann::json;

namespace {

[[noreturn]] void schema(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kSchema, path + ": " + what);
}

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed,
                const std::set<std::string>& required = {}) {
  if (!j.is_object()) schema(path, "expected an object");
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) schema(path, "unknown key '" + k + "'");
  for (const auto& k : required)
    if (!j.contains(k)) schema(path, "missing key '" + k + "'");
}

double read_number(const json& j, const std::string& path) {
  if (!j.is_number()) schema(path, "expected a number");
  return j.get<double>();
}

int read_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) schema(path, "expected an integer");
  return j.get<int>();
}

std::string read_string(const json& j, const std::string& path) {
  if (!j.is_string()) schema(path, "expected a string");
  return j.get<std::string>();
}

Vector read_vector(const json& j, const std::string& path) {
  if (!j.is_array()) schema(path, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v[i] = read_number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

Matrix read_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) schema(path, "expected a non-empty array of rows");
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != cols) schema(rp, "rows must all have " + std::to_string(cols) + " entries");
    for (size_t c = 0; c < cols; ++c) m(i, c) = read_number(j[i][c], rp + "[" + std::to_string(c) + "]");
  }
  return m;
}

std::vector<Matrix> read_matrix_list(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) schema(path, "expected a non-empty array of matrices");
  std::vector<Matrix> out;
  for (size_t i = 0; i < j.size(); ++i) out.push_back(read_matrix(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

HPolytope read_polytope(const json& j, const std::string& path) {
  check_keys(j, path, {"lower", "upper", "normals", "offsets"});
  if (j.contains("lower") || j.contains("upper")) {
    if (j.contains("normals") || j.contains("offsets")) schema(path, "give either lower/upper or normals/offsets");
    check_keys(j, path, {"lower", "upper"}, {"lower", "upper"});
    const Vector lo = read_vector(j["lower"], path + ".lower"), hi = read_vector(j["upper"], path + ".upper");
    if (lo.size() != hi.size()) schema(path, "lower and upper differ in size");
    if ((lo.array() > hi.array()).any()) schema(path, "lower exceeds upper");
    return HPolytope::box(lo, hi);
  }
  check_keys(j, path, {"normals", "offsets"}, {"normals", "offsets"});
  HPolytope p{read_matrix(j["normals"], path + ".normals"), read_vector(j["offsets"], path + ".offsets")};
  if (p.normals.rows() != p.offsets.size()) schema(path, "normals and offsets differ in row count");
  return p;
}

json write_vector(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json write_matrix(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(write_vector(m.row(i).transpose()));
  return rows;
}

json write_polytope(const HPolytope& p) { return {{"normals", write_matrix(p.normals)}, {"offsets", write_vector(p.offsets)}}; }

template <class E>
E parse_enum(const json& j, const std::string& path, const std::map<std::string, E>& table) {
  const std::string s = read_string(j, path);
  const auto it = table.find(s);
  if (it == table.end()) {
    std::string opts;
    for (const auto& [k, _] : table) opts += (opts.empty() ? "" : ", ") + k;
    schema(path, "'" + s + "' is not one of {" + opts + "}");
  }
  return it->second;
}

const std::map<std::string, DisturbancePolicy> kDisturbanceNames = {{"zero", DisturbancePolicy::kZero},
                                                                    {"uniform", DisturbancePolicy::kUniform},
                                                                    {"extreme-cycling", DisturbancePolicy::kExtremeCycling},
                                                                    {"adversarial", DisturbancePolicy::kAdversarial}};
const std::map<std::string, PlantPolicy> kPlantNames = {{"fixed-vertex", PlantPolicy::kFixedVertex},
                                                        {"random-convex", PlantPolicy::kRandomConvex},
                                                        {"lpv-schedule", PlantPolicy::kLPVSchedule}};

// --- template -----------------------------------------------------------------

TemplateSpec template_from_json(const json& j, const std::string& path) {
  TemplateSpec t;
  check_keys(j, path, {"F", "y_ref", "E", "vertex_maps"}, {"F"});
  t.F = read_matrix(j["F"], path + ".F");
  if (j.contains("y_ref")) {
    if (j.contains("E") || j.contains("vertex_maps")) schema(path, "give either y_ref or E/vertex_maps");
    t.y_ref = read_vector(j["y_ref"], path + ".y_ref");
    if (t.y_ref.size() != t.F.rows()) schema(path + ".y_ref", "size must equal the row count of F");
    return t;
  }
  if (!j.contains("E") || !j.contains("vertex_maps")) schema(path, "missing y_ref (or E and vertex_maps)");
  t.imported = true;
  t.E = read_matrix(j["E"], path + ".E");
  t.vertex_maps = read_matrix_list(j["vertex_maps"], path + ".vertex_maps");
  if (t.E.cols() != t.F.rows()) schema(path + ".E", "column count must equal the row count of F");
  for (const auto& v : t.vertex_maps)
    if (v.rows() != t.F.cols() || v.cols() != t.F.rows()) schema(path + ".vertex_maps", "each map must be n_x x m");
  return t;
}

json template_to_json(const TemplateSpec& t) {
  json j = {{"F", write_matrix(t.F)}};
  if (!t.imported) {
    j["y_ref"] = write_vector(t.y_ref);
  } else {
    j["E"] = write_matrix(t.E);
    json maps = json::array();
    for (const auto& v : t.vertex_maps) maps.push_back(write_matrix(v));
    j["vertex_maps"] = maps;
  }
  return j;
}

// --- blocks -------------------------------------------------------------------

void read_model(const json& j, Scenario& s) {
  const std::string p = "model";
  check_keys(j, p, {"A", "B", "C", "D", "state_set", "input_set", "disturbance_set", "disturbance_input", "lpv"},
             {"C", "D", "state_set", "input_set", "disturbance_set"});
  UncertainModel& m = s.model;
  if (j.contains("lpv")) {
    if (j.contains("A") || j.contains("B")) schema(p, "give either A/B or lpv");
    const json& l = j["lpv"];
    check_keys(l, p + ".lpv", {"A0", "A1", "A2", "B", "initial_range", "initial_hull"},
               {"A0", "A1", "A2", "B", "initial_range"});
    LPVScheduler sch;
    sch.A0 = read_matrix(l["A0"], p + ".lpv.A0");
    sch.A1 = read_matrix(l["A1"], p + ".lpv.A1");
    sch.A2 = read_matrix(l["A2"], p + ".lpv.A2");
    sch.B = read_matrix(l["B"], p + ".lpv.B");
    const Vector range = read_vector(l["initial_range"], p + ".lpv.initial_range");
    if (range.size() != 2) schema(p + ".lpv.initial_range", "expected [lo, hi]");
    sch.initial_range = {range[0], range[1]};
    if (l.contains("initial_hull")) {
      const Matrix h = read_matrix(l["initial_hull"], p + ".lpv.initial_hull");
      if (h.cols() != 2) schema(p + ".lpv.initial_hull", "points must be (s, 1/s) pairs");
      for (Eigen::Index i = 0; i < h.rows(); ++i) sch.initial_hull.push_back(h.row(i).transpose());
    }
    const Eigen::Index n = sch.A0.rows();
    for (const Matrix* a : {&sch.A0, &sch.A1, &sch.A2})
      if (a->rows() != n || a->cols() != n) schema(p + ".lpv", "A0, A1, A2 must be square of equal size");
    if (sch.B.rows() != n) schema(p + ".lpv.B", "row count must equal the state dimension");
    s.lpv = sch;
  } else {
    if (!j.contains("A") || !j.contains("B")) schema(p, "missing A/B vertex lists (or lpv)");
    m.A = read_matrix_list(j["A"], p + ".A");
    m.B = read_matrix_list(j["B"], p + ".B");
    if (m.A.size() != m.B.size()) schema(p, "A and B lists differ in length");
  }
  m.C = read_matrix(j["C"], p + ".C");
  m.D = read_matrix(j["D"], p + ".D");
  m.state_set = read_polytope(j["state_set"], p + ".state_set");
  m.input_set = read_polytope(j["input_set"], p + ".input_set");
  m.disturbance_set = read_polytope(j["disturbance_set"], p + ".disturbance_set");
  if (j.contains("disturbance_input")) m.disturbance_input = read_matrix(j["disturbance_input"], p + ".disturbance_input");
}

void read_rci_cost(const json& j, Scenario& s) {
  check_keys(j, "rci_cost", {"Qv", "Qc", "Qr", "theta_regularization"}, {"Qv", "Qc", "Qr"});
  s.weights.Qv = read_matrix(j["Qv"], "rci_cost.Qv");
  s.weights.Qc = read_matrix(j["Qc"], "rci_cost.Qc");
  s.weights.Qr = read_matrix(j["Qr"], "rci_cost.Qr");
  if (j.contains("theta_regularization"))
    s.weights.theta_regularization = read_number(j["theta_regularization"], "rci_cost.theta_regularization");
}

void read_controller(const json& j, Scenario& s) {
  const std::string p = "controller";
  check_keys(j, p, {"N", "gamma", "Q", "P", "qp"}, {"N", "gamma", "Q", "P"});
  ControllerSpec& c = s.controller;
  c.N = read_int(j["N"], p + ".N");
  c.gamma = read_number(j["gamma"], p + ".gamma");

  const json& q = j["Q"];
  check_keys(q, p + ".Q", {"mode", "regularization", "y", "u", "matrix"}, {"mode"});
  c.Q.mode = parse_enum(q["mode"], p + ".Q.mode",
                        std::map<std::string, StageWeightSpec::Mode>{{"vertex-spread", StageWeightSpec::Mode::kVertexSpread},
                                                                     {"diagonal", StageWeightSpec::Mode::kDiagonal},
                                                                     {"explicit", StageWeightSpec::Mode::kExplicit}});
  switch (c.Q.mode) {
    case StageWeightSpec::Mode::kVertexSpread:
      check_keys(q, p + ".Q", {"mode", "regularization"});
      if (q.contains("regularization")) c.Q.regularization = read_number(q["regularization"], p + ".Q.regularization");
      break;
    case StageWeightSpec::Mode::kDiagonal:
      check_keys(q, p + ".Q", {"mode", "y", "u"}, {"y", "u"});
      c.Q.y_weight = read_number(q["y"], p + ".Q.y");
      c.Q.u_weight = read_number(q["u"], p + ".Q.u");
      break;
    case StageWeightSpec::Mode::kExplicit:
      check_keys(q, p + ".Q", {"mode", "matrix"}, {"matrix"});
      c.Q.matrix = read_matrix(q["matrix"], p + ".Q.matrix");
      break;
  }

  const json& pj = j["P"];
  check_keys(pj, p + ".P", {"mode", "matrix"}, {"mode"});
  c.P.mode = parse_enum(pj["mode"], p + ".P.mode",
                        std::map<std::string, TerminalWeightSpec::Mode>{{"terminal-recipe", TerminalWeightSpec::Mode::kRecipe},
                                                                        {"explicit", TerminalWeightSpec::Mode::kExplicit}});
  if (c.P.mode == TerminalWeightSpec::Mode::kExplicit) {
    if (!pj.contains("matrix")) schema(p + ".P", "missing key 'matrix'");
    c.P.matrix = read_matrix(pj["matrix"], p + ".P.matrix");
  } else if (pj.contains("matrix")) {
    schema(p + ".P", "'matrix' is only valid with mode 'explicit'");
  }

  if (j.contains("qp")) {
    const json& qp = j["qp"];
    check_keys(qp, p + ".qp", {"feasibility_tolerance", "duality_gap_tolerance", "max_iterations"});
    if (qp.contains("feasibility_tolerance"))
      c.qp.feasibility_tolerance = read_number(qp["feasibility_tolerance"], p + ".qp.feasibility_tolerance");
    if (qp.contains("duality_gap_tolerance"))
      c.qp.duality_gap_tolerance = read_number(qp["duality_gap_tolerance"], p + ".qp.duality_gap_tolerance");
    if (qp.contains("max_iterations")) c.qp.max_iterations = read_int(qp["max_iterations"], p + ".qp.max_iterations");
  }
}

void read_simulation(const json& j, Scenario& s) {
  const std::string p = "simulation";
  check_keys(j, p, {"x0", "steps", "references", "disturbance", "plant", "seed", "width_axis", "region"},
             {"x0", "steps", "references", "disturbance", "plant"});
  SimulationSpec& sim = s.simulation;
  sim.x0 = read_vector(j["x0"], p + ".x0");
  sim.steps = read_int(j["steps"], p + ".steps");
  if (sim.steps < 1) schema(p + ".steps", "must be >= 1");

  const json& refs = j["references"];
  if (!refs.is_array() || refs.empty()) schema(p + ".references", "expected a non-empty array");
  for (size_t i = 0; i < refs.size(); ++i) {
    const std::string rp = p + ".references[" + std::to_string(i) + "]";
    check_keys(refs[i], rp, {"start", "r"}, {"start", "r"});
    sim.references.push_back({read_int(refs[i]["start"], rp + ".start"), read_vector(refs[i]["r"], rp + ".r")});
    if (i == 0 && sim.references[0].start != 0) schema(rp + ".start", "the first reference must start at 0");
    if (i > 0 && sim.references[i].start <= sim.references[i - 1].start)
      schema(rp + ".start", "start times must be strictly increasing");
  }

  sim.disturbance = parse_enum(j["disturbance"], p + ".disturbance", kDisturbanceNames);

  const json& pl = j["plant"];
  check_keys(pl, p + ".plant", {"policy", "vertex", "schedule"}, {"policy"});
  sim.plant = parse_enum(pl["policy"], p + ".plant.policy", kPlantNames);
  if (pl.contains("vertex")) {
    if (sim.plant != PlantPolicy::kFixedVertex) schema(p + ".plant.vertex", "only valid with policy 'fixed-vertex'");
    sim.plant_vertex = read_int(pl["vertex"], p + ".plant.vertex");
  }
  if (sim.plant == PlantPolicy::kLPVSchedule) {
    if (!pl.contains("schedule")) schema(p + ".plant", "missing key 'schedule'");
    const json& sc = pl["schedule"];
    if (!sc.is_array() || sc.empty()) schema(p + ".plant.schedule", "expected a non-empty array");
    for (size_t i = 0; i < sc.size(); ++i) {
      const std::string sp = p + ".plant.schedule[" + std::to_string(i) + "]";
      check_keys(sc[i], sp, {"start", "value"}, {"start", "value"});
      sim.schedule.push_back({read_int(sc[i]["start"], sp + ".start"), read_number(sc[i]["value"], sp + ".value")});
      if (i == 0 && sim.schedule[0].start != 0) schema(sp + ".start", "the schedule must start at 0");
      if (i > 0 && sim.schedule[i].start <= sim.schedule[i - 1].start)
        schema(sp + ".start", "start times must be strictly increasing");
    }
  } else if (pl.contains("schedule")) {
    schema(p + ".plant.schedule", "only valid with policy 'lpv-schedule'");
  }

  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0))
      schema(p + ".seed", "expected a non-negative integer");
    sim.seed = j["seed"].get<std::uint64_t>();
  }
  const bool randomized = sim.disturbance == DisturbancePolicy::kUniform ||
                          sim.disturbance == DisturbancePolicy::kExtremeCycling ||
                          sim.plant == PlantPolicy::kRandomConvex;
  if (randomized && !sim.seed) schema(p + ".seed", "a seed is required for randomized policies");

  if (j.contains("width_axis")) sim.width_axis = read_int(j["width_axis"], p + ".width_axis");
  if (j.contains("region")) {
    const json& rg = j["region"];
    check_keys(rg, p + ".region", {"resolution", "reference"});
    if (rg.contains("resolution")) sim.region_resolution = read_number(rg["resolution"], p + ".region.resolution");
    if (rg.contains("reference")) sim.region_reference = read_vector(rg["reference"], p + ".region.reference");
  }
}

void read_tolerances(const json& j, Tolerances& t) {
  check_keys(j, "tolerances",
             {"containment", "lyapunov_floor", "lyapunov_slack", "strict_descent", "tracking_gap", "hull_membership",
              "settle"});
  const std::pair<const char*, double*> fields[] = {
      {"containment", &t.containment},       {"lyapunov_floor", &t.lyapunov_floor},
      {"lyapunov_slack", &t.lyapunov_slack}, {"strict_descent", &t.strict_descent},
      {"tracking_gap", &t.tracking_gap},     {"hull_membership", &t.hull_membership},
      {"settle", &t.settle}};
  for (const auto& [k, dst] : fields)
    if (j.contains(k)) *dst = read_number(j[k], std::string("tolerances.") + k);
}

// Dimension consistency across blocks, still before any numeric work.
void check_dimensions(const Scenario& s) {
  const UncertainModel& m = s.model;
  const int n = s.lpv ? static_cast<int>(s.lpv->A0.rows()) : m.state_dim();
  const int nu = s.lpv ? static_cast<int>(s.lpv->B.cols()) : m.input_dim();
  auto need = [](bool ok, const std::string& path, const std::string& what) {
    if (!ok) schema(path, what);
  };
  for (size_t i = 0; i < m.A.size(); ++i) {
    need(m.A[i].rows() == n && m.A[i].cols() == n, "model.A[" + std::to_string(i) + "]", "must be n_x x n_x");
    need(m.B[i].rows() == n && m.B[i].cols() == nu, "model.B[" + std::to_string(i) + "]", "must be n_x x n_u");
  }
  need(m.C.cols() == n, "model.C", "column count must equal n_x");
  need(m.D.rows() == m.C.rows() && m.D.cols() == nu, "model.D", "must be n_z x n_u");
  need(m.state_set.dim() == n, "model.state_set", "dimension must equal n_x");
  need(m.input_set.dim() == nu, "model.input_set", "dimension must equal n_u");
  if (m.disturbance_input.size() > 0)
    need(m.disturbance_input.rows() == n && m.disturbance_input.cols() == m.disturbance_set.dim(),
         "model.disturbance_input", "must be n_x x n_w");
  else
    need(m.disturbance_set.dim() == n, "model.disturbance_set", "dimension must equal n_x without disturbance_input");
  need(s.tmpl.F.cols() == n, "template.F", "column count must equal n_x");
  const int nz = static_cast<int>(m.C.rows());
  need(s.weights.Qv.rows() == n + nu && s.weights.Qv.cols() == n + nu, "rci_cost.Qv", "must be (n_x+n_u) square");
  need(s.weights.Qc.rows() == n + nu && s.weights.Qc.cols() == n + nu, "rci_cost.Qc", "must be (n_x+n_u) square");
  need(s.weights.Qr.rows() == nz && s.weights.Qr.cols() == nz, "rci_cost.Qr", "must be n_z square");
  const SimulationSpec& sim = s.simulation;
  need(sim.x0.size() == n, "simulation.x0", "size must equal n_x");
  for (size_t i = 0; i < sim.references.size(); ++i)
    need(sim.references[i].r.size() == nz, "simulation.references[" + std::to_string(i) + "].r", "size must equal n_z");
  need(sim.width_axis >= 0 && sim.width_axis < n, "simulation.width_axis", "must index a state coordinate");
  if (sim.region_reference.size() > 0) need(sim.region_reference.size() == nz, "simulation.region.reference", "size must equal n_z");
  need(sim.region_resolution > 0.0, "simulation.region.resolution", "must be positive");
  if (sim.plant == PlantPolicy::kLPVSchedule) {
    need(s.lpv.has_value(), "simulation.plant", "'lpv-schedule' needs model.lpv");
    // Restriction is only sound while the admissible range shrinks.
    for (size_t i = 0; i < sim.schedule.size(); ++i) {
      const std::string sp = "simulation.plant.schedule[" + std::to_string(i) + "].value";
      need(sim.schedule[i].value >= s.lpv->initial_range.lo && sim.schedule[i].value <= s.lpv->initial_range.hi, sp,
           "outside model.lpv.initial_range");
      need(i == 0 || sim.schedule[i].value >= sim.schedule[i - 1].value, sp, "the schedule must be non-decreasing");
    }
  }
  if (sim.plant == PlantPolicy::kFixedVertex && !s.lpv)
    need(sim.plant_vertex >= 0 && sim.plant_vertex < static_cast<int>(m.A.size()), "simulation.plant.vertex",
         "out of range");
}

}  // namespace

const char* to_string(DisturbancePolicy p) {
  for (const auto& [k, v] : kDisturbanceNames)
    if (v == p) return k.c_str();
  return "?";
}

const char* to_string(PlantPolicy p) {
  for (const auto& [k, v] : kPlantNames)
    if (v == p) return k.c_str();
  return "?";
}

void Tolerances::apply_overrides(const std::string& spec) {
  json j = json::object();
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) schema("--tolerance-overrides", "expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    try {
      size_t used = 0;
      j[key] = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      schema("--tolerance-overrides", "'" + value + "' is not a number");
    }
  }
  read_tolerances(j, *this);
}

Vector SimulationSpec::reference_at(int t) const {
  const ReferenceStep* cur = &references.front();
  for (const auto& r : references)
    if (r.start <= t) cur = &r;
  return cur->r;
}

double SimulationSpec::schedule_at(int t) const {
  if (schedule.empty()) return std::nan("");
  if (t <= schedule.front().start) return schedule.front().value;
  for (size_t i = 1; i < schedule.size(); ++i)
    if (t < schedule[i].start) {
      const auto& a = schedule[i - 1];
      const auto& b = schedule[i];
      const double f = static_cast<double>(t - a.start) / (b.start - a.start);
      return a.value + f * (b.value - a.value);
    }
  return schedule.back().value;
}

Scenario parse_scenario(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    schema("document", e.what());
  }
  check_keys(j, "document", {"name", "description", "model", "template", "rci_cost", "controller", "simulation", "tolerances"},
             {"model", "template", "rci_cost", "controller", "simulation"});
  Scenario s;
  if (j.contains("name")) s.name = read_string(j["name"], "name");
  if (j.contains("description")) s.description = read_string(j["description"], "description");
  read_model(j["model"], s);

  const json& t = j["template"];
  if (t.is_object() && t.contains("import")) {
    check_keys(t, "template", {"import"});
    const std::filesystem::path file = std::filesystem::path(base_dir) / read_string(t["import"], "template.import");
    std::ifstream in(file);
    if (!in) schema("template.import", "cannot read " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    s.tmpl = parse_template(buf.str());
  } else {
    s.tmpl = template_from_json(t, "template");
  }

  read_rci_cost(j["rci_cost"], s);
  read_controller(j["controller"], s);
  read_simulation(j["simulation"], s);
  if (j.contains("tolerances")) read_tolerances(j["tolerances"], s.tolerances);
  check_dimensions(s);
  if (s.lpv) apply_vertex_pairs(s.model, restrict_uncertainty(*s.lpv, s.lpv->initial_range));
  return s;
}

Scenario read_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kSchema, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), std::filesystem::path(path).parent_path().string());
}

std::string dump_scenario(const Scenario& s, bool embed_derived_template) {
  json j;
  if (!s.name.empty()) j["name"] = s.name;
  if (!s.description.empty()) j["description"] = s.description;

  json m;
  if (s.lpv) {
    json l = {{"A0", write_matrix(s.lpv->A0)},
              {"A1", write_matrix(s.lpv->A1)},
              {"A2", write_matrix(s.lpv->A2)},
              {"B", write_matrix(s.lpv->B)},
              {"initial_range", {s.lpv->initial_range.lo, s.lpv->initial_range.hi}}};
    if (!s.lpv->initial_hull.empty()) {
      json h = json::array();
      for (const auto& p : s.lpv->initial_hull) h.push_back(write_vector(p));
      l["initial_hull"] = h;
    }
    m["lpv"] = l;
  } else {
    json a = json::array(), b = json::array();
    for (const auto& x : s.model.A) a.push_back(write_matrix(x));
    for (const auto& x : s.model.B) b.push_back(write_matrix(x));
    m["A"] = a;
    m["B"] = b;
  }
  m["C"] = write_matrix(s.model.C);
  m["D"] = write_matrix(s.model.D);
  m["state_set"] = write_polytope(s.model.state_set);
  m["input_set"] = write_polytope(s.model.input_set);
  m["disturbance_set"] = write_polytope(s.model.disturbance_set);
  if (s.model.disturbance_input.size() > 0) m["disturbance_input"] = write_matrix(s.model.disturbance_input);
  j["model"] = m;

  if (embed_derived_template && !s.tmpl.imported) {
    const TemplateConfig tc = build_template(s.tmpl);
    j["template"] = json::parse(dump_template(tc));
  } else {
    j["template"] = template_to_json(s.tmpl);
  }

  j["rci_cost"] = {{"Qv", write_matrix(s.weights.Qv)},
                   {"Qc", write_matrix(s.weights.Qc)},
                   {"Qr", write_matrix(s.weights.Qr)},
                   {"theta_regularization", s.weights.theta_regularization}};

  const ControllerSpec& c = s.controller;
  json q;
  switch (c.Q.mode) {
    case StageWeightSpec::Mode::kVertexSpread:
      q = {{"mode", "vertex-spread"}, {"regularization", c.Q.regularization}};
      break;
    case StageWeightSpec::Mode::kDiagonal:
      q = {{"mode", "diagonal"}, {"y", c.Q.y_weight}, {"u", c.Q.u_weight}};
      break;
    case StageWeightSpec::Mode::kExplicit:
      q = {{"mode", "explicit"}, {"matrix", write_matrix(c.Q.matrix)}};
      break;
  }
  json p = c.P.mode == TerminalWeightSpec::Mode::kRecipe
               ? json{{"mode", "terminal-recipe"}}
               : json{{"mode", "explicit"}, {"matrix", write_matrix(c.P.matrix)}};
  j["controller"] = {{"N", c.N},
                     {"gamma", c.gamma},
                     {"Q", q},
                     {"P", p},
                     {"qp",
                      {{"feasibility_tolerance", c.qp.feasibility_tolerance},
                       {"duality_gap_tolerance", c.qp.duality_gap_tolerance},
                       {"max_iterations", c.qp.max_iterations}}}};

  const SimulationSpec& sim = s.simulation;
  json refs = json::array();
  for (const auto& r : sim.references) refs.push_back({{"start", r.start}, {"r", write_vector(r.r)}});
  json plant = {{"policy", to_string(sim.plant)}};
  if (sim.plant == PlantPolicy::kFixedVertex) plant["vertex"] = sim.plant_vertex;
  if (sim.plant == PlantPolicy::kLPVSchedule) {
    json sc = json::array();
    for (const auto& pt : sim.schedule) sc.push_back({{"start", pt.start}, {"value", pt.value}});
    plant["schedule"] = sc;
  }
  json simj = {{"x0", write_vector(sim.x0)},
               {"steps", sim.steps},
               {"references", refs},
               {"disturbance", to_string(sim.disturbance)},
               {"plant", plant},
               {"width_axis", sim.width_axis}};
  if (sim.seed) simj["seed"] = *sim.seed;
  json region = {{"resolution", sim.region_resolution}};
  if (sim.region_reference.size() > 0) region["reference"] = write_vector(sim.region_reference);
  simj["region"] = region;
  j["simulation"] = simj;

  const Tolerances& t = s.tolerances;
  j["tolerances"] = {{"containment", t.containment},         {"lyapunov_floor", t.lyapunov_floor},
                     {"lyapunov_slack", t.lyapunov_slack},   {"strict_descent", t.strict_descent},
                     {"tracking_gap", t.tracking_gap},       {"hull_membership", t.hull_membership},
                     {"settle", t.settle}};
  return j.dump(2) + "\n";
}

void write_scenario(const std::string& path, const Scenario& s, bool embed_derived_template) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path);
  out << dump_scenario(s, embed_derived_template);
}

TemplateConfig build_template(const TemplateSpec& spec) {
  if (spec.imported) return make_template(spec.F, spec.E, spec.vertex_maps);
  return derive_configuration(spec.F, spec.y_ref);
}

std::string dump_template(const TemplateConfig& tmpl) {
  TemplateSpec t;
  t.F = tmpl.F;
  t.imported = true;
  t.E = tmpl.E;
  t.vertex_maps = tmpl.vertex_maps;
  return template_to_json(t).dump(2) + "\n";
}

TemplateSpec parse_template(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    schema("template", e.what());
  }
  return template_from_json(j, "template");
}

TubeProblem build_problem(const Scenario& s) {
  return TubeProblem::build(s.model, build_template(s.tmpl), s.weights);
}

MPCConfig build_mpc_config(const Scenario& s, const TubeProblem& problem) {
  MPCConfig cfg;
  cfg.N = s.controller.N;
  cfg.gamma = s.controller.gamma;
  const int dim = problem.m() + problem.vu();
  switch (s.controller.Q.mode) {
    case StageWeightSpec::Mode::kVertexSpread:
      cfg.Q = vertex_spread_weight(problem, s.controller.Q.regularization);
      break;
    case StageWeightSpec::Mode::kDiagonal:
      cfg.Q = diagonal_weight(problem, s.controller.Q.y_weight, s.controller.Q.u_weight);
      break;
    case StageWeightSpec::Mode::kExplicit:
      cfg.Q = s.controller.Q.matrix;
      break;
  }
  if (cfg.Q.rows() != dim || cfg.Q.cols() != dim)
    throw Error(ErrorCode::kSchema, "controller.Q.matrix: must be " + std::to_string(dim) + " square");
  if (s.controller.P.mode == TerminalWeightSpec::Mode::kRecipe) {
    // The recipe is undefined at gamma = 1; validate_config reports the range.
    cfg.P = s.controller.gamma < 1.0 ? terminal_weight(cfg.Q, s.controller.gamma) : cfg.Q;
  } else {
    cfg.P = s.controller.P.matrix;
    if (cfg.P.rows() != dim || cfg.P.cols() != dim)
      throw Error(ErrorCode::kSchema, "controller.P.matrix: must be " + std::to_string(dim) + " square");
  }
  return cfg;
}

TrackingMPC build_controller(const Scenario& s) {
  TubeProblem p = build_problem(s);
  MPCConfig cfg = build_mpc_config(s, p);
  return TrackingMPC(std::move(p), std::move(cfg), s.controller.qp);
}

bool ValidationReport::ok() const { return first_failure() == nullptr; }

const ValidationCheck* ValidationReport::first_failure() const {
  for (const auto& c : checks)
    if (!c.ok) return &c;
  return nullptr;
}

ValidationReport validate_scenario(const Scenario& s) {
  ValidationReport rep;
  auto run = [&](const std::string& name, auto&& body) {
    ValidationCheck c{name, true, "ok"};
    try {
      body(c);
    } catch (const Error& e) {
      c.ok = false;
      c.message = e.what();
    }
    rep.checks.push_back(c);
    return c.ok;
  };

  if (!run("model", [&](ValidationCheck&) {
        s.model.validate();
        if (s.lpv) s.lpv->validate();
      }))
    return rep;

  std::optional<TemplateConfig> tmpl;
  if (!run("template", [&](ValidationCheck& c) {
        tmpl = build_template(s.tmpl);
        // Probe around a strictly interior cone point.
        const Vector yref = s.tmpl.imported ? Vector(tmpl->F.rowwise().norm()) : s.tmpl.y_ref;
        if (!tmpl->in_cone(yref, 1e-9)) {
          c.ok = false;
          c.message = "reference offset violates the configuration cone";
          return;
        }
        const TemplateCheck chk = check_template(*tmpl, yref, 200, 7);
        if (!chk.ok) {
          std::ostringstream os;
          os << "configuration check failed (vertex violation " << chk.worst_vertex_violation << ", enumeration gap "
             << chk.worst_enumeration_gap << ")";
          c.ok = false;
          c.message = os.str();
        }
      }))
    return rep;

  std::optional<TubeProblem> problem;
  if (!run("rci_cost", [&](ValidationCheck&) { problem = TubeProblem::build(s.model, *tmpl, s.weights); })) return rep;

  run("feasibility at r = 0", [&](ValidationCheck& c) {
    const OptimalRCI o = solve_optimal_rci(*problem, Vector::Zero(s.model.output_dim()), s.controller.qp);
    std::ostringstream os;
    os << "optimal RCI cost " << o.cost;
    c.message = os.str();
  });

  run("controller", [&](ValidationCheck& c) {
    const MPCConfig cfg = build_mpc_config(s, *problem);
    const ConfigReport r = validate_config(cfg, problem->m() + problem->vu());
    if (!r.ok) {
      c.ok = false;
      c.message = r.message;
    } else {
      std::ostringstream os;
      os << "min eigenvalue of P - Q - gamma^2 P is " << r.worst_eigenvalue;
      c.message = os.str();
    }
  });

  run("initial state", [&](ValidationCheck& c) {
    if (!s.model.state_set.contains(s.simulation.x0, s.tolerances.containment)) {
      c.ok = false;
      c.message = "x0 is outside the state set";
    }
  });
  return rep;
}

}  // namespace cctmpc
