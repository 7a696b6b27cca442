#include "interplan/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "interplan/errors.hpp"
#include "json.hpp"

namespace interplan {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

void check_schema(const json& obj, std::string_view expected, const std::string& where) {
  if (!obj.contains("schema")) return;
  if (!obj["schema"].is_string() || obj["schema"].get<std::string>() != expected) {
    throw ConfigError(where + ": expected schema '" + std::string(expected) + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

// JSON has no infinities; they round-trip through null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double as_num(const json& v) {
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  return v.get<double>();
}

json vec_json(Vec2 v) { return json::array({num(v.x), num(v.y)}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json points_json(const std::vector<Vec2>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back(vec_json(p));
  return a;
}
std::vector<Vec2> points_from(const json& j) {
  std::vector<Vec2> out;
  for (const auto& p : j) out.push_back(vec_from(p));
  return out;
}

json state_json(const KinematicState& s) {
  return {{"x", s.x}, {"y", s.y}, {"heading", s.heading}, {"speed", s.speed}};
}
KinematicState state_from(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("heading").get<double>(),
          j.at("speed").get<double>()};
}

json box_json(const BoundingBox& b) { return {{"length", b.length}, {"width", b.width}}; }
BoundingBox box_from(const json& j) {
  BoundingBox b;
  read(j, "length", b.length, "box");
  read(j, "width", b.width, "box");
  if (!(b.length > 0.0) || !(b.width > 0.0)) throw ConfigError("box dimensions must be positive");
  return b;
}

json behavior_json(const AgentBehavior& b) {
  return {{"desired_speed", b.desired_speed}, {"time_headway", b.time_headway},
          {"max_accel", b.max_accel},         {"comfort_decel", b.comfort_decel},
          {"max_decel", b.max_decel},         {"standstill_gap", b.standstill_gap},
          {"yields_to_merging", b.yields_to_merging}};
}
AgentBehavior behavior_from(const json& j) {
  const std::string w = "behavior";
  check_keys(j, {"desired_speed", "time_headway", "max_accel", "comfort_decel", "max_decel", "standstill_gap",
                 "yields_to_merging"},
             w);
  AgentBehavior b;
  read(j, "desired_speed", b.desired_speed, w);
  read(j, "time_headway", b.time_headway, w);
  read(j, "max_accel", b.max_accel, w);
  read(j, "comfort_decel", b.comfort_decel, w);
  read(j, "max_decel", b.max_decel, w);
  read(j, "standstill_gap", b.standstill_gap, w);
  read(j, "yields_to_merging", b.yields_to_merging, w);
  if (!(b.max_accel > 0.0) || !(b.comfort_decel > 0.0) || !(b.max_decel > 0.0) || b.desired_speed < 0.0) {
    throw ConfigError("behavior parameters out of range");
  }
  return b;
}

json lanes_json(const std::vector<Lane>& lanes) {
  json a = json::array();
  for (const auto& l : lanes) a.push_back({{"centerline", points_json(l.centerline.vertices())}, {"width", l.width}});
  return a;
}
std::vector<Lane> lanes_from(const json& j) {
  std::vector<Lane> out;
  for (const auto& l : j) {
    Lane lane{Polyline(points_from(l.at("centerline"))), 3.5};
    read(l, "width", lane.width, "lane");
    if (!(lane.width > 0.0)) throw ConfigError("lane width must be positive");
    out.push_back(std::move(lane));
  }
  return out;
}

json agent_spec_json(const AgentSpec& a, std::size_t id) {
  return {{"id", id},       {"state", state_json(a.init)}, {"box", box_json(a.box)},
          {"lane", a.lane}, {"parked", a.parked},          {"behavior", behavior_json(a.behavior)}};
}
AgentSpec agent_spec_from(const json& j) {
  check_keys(j, {"id", "state", "box", "lane", "parked", "behavior"}, "agent");
  AgentSpec a;
  a.init = state_from(j.at("state"));
  if (j.contains("box")) a.box = box_from(j["box"]);
  read(j, "lane", a.lane, "agent");
  read(j, "parked", a.parked, "agent");
  if (j.contains("behavior")) a.behavior = behavior_from(j["behavior"]);
  return a;
}

json goal_json(const Goal& g) { return {{"center", vec_json(g.center)}, {"radius", g.radius}}; }
Goal goal_from(const json& j) {
  Goal g{vec_from(j.at("center")), 5.0};
  read(j, "radius", g.radius, "goal");
  return g;
}

// -- config sections --------------------------------------------------------

SamplerProfile sampler_from(const json& j, SamplerProfile p) {
  const std::string w = "sampler";
  check_keys(j, {"accelerations", "curvatures", "curvature_rates", "families", "dt", "horizon", "k", "substeps",
                 "max_lateral_accel", "max_heading_change"},
             w);
  read(j, "accelerations", p.accelerations, w);
  read(j, "curvatures", p.curvatures, w);
  read(j, "curvature_rates", p.curvature_rates, w);
  if (j.contains("families")) {
    p.families.clear();
    for (const auto& f : j["families"]) p.families.push_back(maneuver_family_from_string(f.get<std::string>()));
  }
  read(j, "dt", p.dt, w);
  read(j, "horizon", p.horizon, w);
  read(j, "k", p.k, w);
  read(j, "substeps", p.substeps, w);
  read(j, "max_lateral_accel", p.max_lateral_accel, w);
  read(j, "max_heading_change", p.max_heading_change, w);
  return p;
}

LbpOptions lbp_from(const json& j, LbpOptions o) {
  check_keys(j, {"max_iterations", "damping", "tolerance"}, "lbp");
  read(j, "max_iterations", o.max_iterations, "lbp");
  read(j, "damping", o.damping, "lbp");
  read(j, "tolerance", o.tolerance, "lbp");
  return o;
}

ScenarioConfig scenario_from_json(const json& j, const std::string& where) {
  check_keys(j, {"schema", "kind", "name", "merge", "lanes", "route", "goal", "ego", "agents", "time_budget",
                 "speed_limit"},
             where);
  check_schema(j, kScenarioSchema, where);
  ScenarioConfig c;
  read(j, "kind", c.kind, where);
  if (c.kind == "dense_merge") {
    if (j.contains("merge")) {
      const json& m = j["merge"];
      const std::string w = where + ".merge";
      check_keys(m, {"lane_length", "lane_width", "agent_count", "gap_min", "gap_max", "speed_min", "speed_max",
                     "ego_start", "ego_speed", "blocker_distance", "time_budget"},
                 w);
      auto& p = c.merge;
      read(m, "lane_length", p.lane_length, w);
      read(m, "lane_width", p.lane_width, w);
      read(m, "agent_count", p.agent_count, w);
      read(m, "gap_min", p.gap_min, w);
      read(m, "gap_max", p.gap_max, w);
      read(m, "speed_min", p.speed_min, w);
      read(m, "speed_max", p.speed_max, w);
      read(m, "ego_start", p.ego_start, w);
      read(m, "ego_speed", p.ego_speed, w);
      read(m, "blocker_distance", p.blocker_distance, w);
      read(m, "time_budget", p.time_budget, w);
    }
    make_dense_merge(0, c.merge);  // validates the parameters
  } else if (c.kind == "fixed") {
    Scenario s;
    try {
      read(j, "name", s.name, where);
      s.lanes = lanes_from(j.at("lanes"));
      s.route = Polyline(points_from(j.at("route")));
      s.goal = goal_from(j.at("goal"));
      const json& ego = j.at("ego");
      s.ego_init = state_from(ego.at("state"));
      if (ego.contains("box")) s.ego_box = box_from(ego["box"]);
      if (j.contains("agents")) {
        for (const auto& a : j["agents"]) s.agents.push_back(agent_spec_from(a));
      }
      read(j, "time_budget", s.time_budget, where);
      read(j, "speed_limit", s.speed_limit, where);
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
    s.validate();
    c.fixed = std::move(s);
  } else if (c.kind != "empty_road" && c.kind != "boxed_in") {
    throw ConfigError(where + ": unknown scenario kind '" + c.kind + "'");
  }
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (scenarios.empty()) throw ConfigError("config lists no scenarios");
  if (episodes == 0) throw ConfigError("episodes must be at least 1");
  if (workers == 0) throw ConfigError("workers must be at least 1");
  weights.validate();
  sim.validate();
  optimizer.lbp.validate();
  lambdas.validate();
  if (!(optimizer.step_size > 0.0)) throw ConfigError("optimizer step size must be positive");
  if (!(optimizer.near_epsilon > 0.0)) throw ConfigError("near epsilon must be positive");
  if (fit.stride == 0) throw ConfigError("fit stride must be positive");
  if (distill.splits == 0 || distill.scenes < 2) throw ConfigError("distill needs at least 2 scenes and 1 split");
  if (!(distill.heldout_fraction > 0.0 && distill.heldout_fraction < 1.0)) {
    throw ConfigError("distill heldout_fraction must be in (0, 1)");
  }
}

RunConfig default_config() {
  RunConfig c;
  c.scenarios.push_back(ScenarioConfig{});
  return c;
}

ScenarioConfig parse_scenario(std::string_view text) { return scenario_from_json(parse_json(text, "scenario"), "scenario"); }

ScenarioConfig load_scenario(const fs::path& path) {
  const std::string where = path.string();
  return scenario_from_json(parse_json(read_file(path), where), where);
}

std::string scenario_to_json(const Scenario& s) {
  json agents = json::array();
  for (std::size_t i = 0; i < s.agents.size(); ++i) agents.push_back(agent_spec_json(s.agents[i], i));
  json j = {{"schema", kScenarioSchema},
            {"kind", "fixed"},
            {"name", s.name},
            {"lanes", lanes_json(s.lanes)},
            {"route", points_json(s.route.vertices())},
            {"goal", goal_json(s.goal)},
            {"ego", {{"state", state_json(s.ego_init)}, {"box", box_json(s.ego_box)}}},
            {"agents", agents},
            {"time_budget", s.time_budget},
            {"speed_limit", s.speed_limit}};
  return j.dump(2) + "\n";
}

RunConfig parse_config(std::string_view text, const fs::path& base) {
  const std::string where = "config";
  const json j = parse_json(text, where);
  check_keys(j, {"schema", "scenario", "scenarios", "mode", "seed", "episodes", "workers", "weights", "sampler",
                 "lbp", "safety", "sim", "optimizer", "lambdas", "fit", "distill", "out"},
             where);
  check_schema(j, kConfigSchema, where);
  RunConfig c;

  auto scenario_entry = [&](const json& e) {
    if (e.is_string()) return load_scenario(base / e.get<std::string>());
    return scenario_from_json(e, "config.scenario");
  };
  if (j.contains("scenario")) c.scenarios.push_back(scenario_entry(j["scenario"]));
  if (j.contains("scenarios")) {
    for (const auto& e : j["scenarios"]) c.scenarios.push_back(scenario_entry(e));
  }
  if (c.scenarios.empty()) c.scenarios.push_back(ScenarioConfig{});

  if (j.contains("mode")) {
    const std::string m = j["mode"].get<std::string>();
    if (m != "both") c.mode = planning_mode_from_string(m);
  }
  read(j, "seed", c.seed, where);
  read(j, "episodes", c.episodes, where);
  read(j, "workers", c.workers, where);
  if (j.contains("weights")) {
    c.weights_path = base / j["weights"].get<std::string>();
    c.weights = load_weights(c.weights_path);
  }
  if (j.contains("safety")) {
    check_keys(j["safety"], {"collision_weight", "margin"}, "safety");
    read(j["safety"], "collision_weight", c.weights.safety.collision_weight, "safety");
    read(j["safety"], "margin", c.weights.safety.margin, "safety");
  }
  if (j.contains("sampler")) c.sim.sampler = sampler_from(j["sampler"], c.sim.sampler);
  if (j.contains("lbp")) c.sim.lbp = lbp_from(j["lbp"], c.sim.lbp);
  c.optimizer.lbp = c.sim.lbp;
  if (j.contains("sim")) {
    const json& s = j["sim"];
    check_keys(s, {"agent_substeps", "agent_radius", "agent_cap", "history_ticks", "prediction_threshold",
                   "max_predictions_per_agent", "barrier_offset"},
               "sim");
    read(s, "agent_substeps", c.sim.agent_substeps, "sim");
    read(s, "agent_radius", c.sim.agent_radius, "sim");
    read(s, "agent_cap", c.sim.agent_cap, "sim");
    read(s, "history_ticks", c.sim.history_ticks, "sim");
    read(s, "prediction_threshold", c.sim.prediction_threshold, "sim");
    read(s, "max_predictions_per_agent", c.sim.max_predictions_per_agent, "sim");
    read(s, "barrier_offset", c.sim.barrier_offset, "sim");
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    check_keys(o, {"steps", "step_size", "halve_on_increase", "max_halvings", "plateau_tolerance", "near_epsilon",
                   "standardize"},
               "optimizer");
    read(o, "steps", c.optimizer.steps, "optimizer");
    read(o, "step_size", c.optimizer.step_size, "optimizer");
    read(o, "halve_on_increase", c.optimizer.halve_on_increase, "optimizer");
    read(o, "max_halvings", c.optimizer.max_halvings, "optimizer");
    read(o, "plateau_tolerance", c.optimizer.plateau_tolerance, "optimizer");
    read(o, "near_epsilon", c.optimizer.near_epsilon, "optimizer");
    read(o, "standardize", c.optimizer.standardize, "optimizer");
  }
  if (j.contains("lambdas")) {
    const json& l = j["lambdas"];
    check_keys(l, {"object", "planning", "distill", "distill_object", "distill_planning", "distill_feature"},
               "lambdas");
    read(l, "object", c.lambdas.object, "lambdas");
    read(l, "planning", c.lambdas.planning, "lambdas");
    read(l, "distill", c.lambdas.distill, "lambdas");
    read(l, "distill_object", c.lambdas.distill_object, "lambdas");
    read(l, "distill_planning", c.lambdas.distill_planning, "lambdas");
    read(l, "distill_feature", c.lambdas.distill_feature, "lambdas");
  }
  if (j.contains("fit")) {
    const json& f = j["fit"];
    check_keys(f, {"traces", "stride", "gradient_check", "gradient_step"}, "fit");
    if (f.contains("traces")) {
      for (const auto& t : f["traces"]) c.fit.traces.push_back(base / t.get<std::string>());
    }
    read(f, "stride", c.fit.stride, "fit");
    read(f, "gradient_check", c.fit.gradient_check, "fit");
    read(f, "gradient_step", c.fit.gradient_step, "fit");
  }
  if (j.contains("distill")) {
    const json& d = j["distill"];
    check_keys(d, {"corpus_seed", "scenes", "splits", "heldout_fraction"}, "distill");
    read(d, "corpus_seed", c.distill.corpus_seed, "distill");
    read(d, "scenes", c.distill.scenes, "distill");
    read(d, "splits", c.distill.splits, "distill");
    read(d, "heldout_fraction", c.distill.heldout_fraction, "distill");
  }
  if (j.contains("out")) c.out = base / j["out"].get<std::string>();
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_config(text, path.parent_path().empty() ? fs::path(".") : path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Weights

namespace {
constexpr const char* kCollisionKey = "collision_weight";
constexpr const char* kMarginKey = "safety_margin";
}  // namespace

EnergyWeights read_weights(std::istream& in) {
  std::vector<std::optional<double>> values(kPrivilegedFeatureCount);
  EnergyWeights w;
  bool schema_seen = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string name, value, extra;
    if (!(ls >> name)) continue;
    if (!(ls >> value) || (ls >> extra)) {
      throw ConfigError("weights line " + std::to_string(line_no) + ": expected 'name value'");
    }
    if (name == "schema") {
      if (value != kWeightsSchema) throw ConfigError("weights: unsupported schema '" + value + "'");
      schema_seen = true;
      continue;
    }
    double v;
    try {
      std::size_t used = 0;
      v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ConfigError("weights line " + std::to_string(line_no) + ": '" + value + "' is not a number");
    }
    if (!std::isfinite(v)) throw ConfigError("weights line " + std::to_string(line_no) + ": non-finite value");
    if (name == kCollisionKey) {
      w.safety.collision_weight = v;
    } else if (name == kMarginKey) {
      w.safety.margin = v;
    } else if (const auto idx = feature_index(name)) {
      values[*idx] = v;
    } else {
      throw ConfigError("weights line " + std::to_string(line_no) + ": unknown coefficient '" + name + "'");
    }
  }
  if (!schema_seen) throw ConfigError("weights: missing 'schema " + std::string(kWeightsSchema) + "' line");
  const bool privileged = values[kBaseFeatureCount].has_value() || values[kBaseFeatureCount + 1].has_value();
  const std::size_t n = privileged ? kPrivilegedFeatureCount : kBaseFeatureCount;
  for (std::size_t f = 0; f < n; ++f) {
    if (!values[f]) throw ConfigError("weights: missing coefficient '" + std::string(feature_name(f)) + "'");
    w.w.push_back(*values[f]);
  }
  w.validate();
  return w;
}

EnergyWeights load_weights(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open weights file '" + path.string() + "'");
  try {
    return read_weights(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_weights(std::ostream& out, const EnergyWeights& w) {
  w.validate();
  char buf[64];
  out << "schema " << kWeightsSchema << "\n";
  for (std::size_t f = 0; f < w.feature_count(); ++f) {
    std::snprintf(buf, sizeof buf, "%.17g", w.w[f]);
    out << feature_name(f) << " " << buf << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.17g", w.safety.collision_weight);
  out << kCollisionKey << " " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", w.safety.margin);
  out << kMarginKey << " " << buf << "\n";
}

void save_weights(const fs::path& path, const EnergyWeights& w) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write weights file '" + path.string() + "'");
  write_weights(out, w);
}

// ---------------------------------------------------------------------------
// Traces

void write_trace(std::ostream& out, const EpisodeTrace& t) {
  json agents = json::array();
  for (std::size_t i = 0; i < t.agents.size(); ++i) agents.push_back(agent_spec_json(t.agents[i], i));
  const json header = {{"schema", kTraceSchema},
                       {"record", "header"},
                       {"scenario", t.scenario},
                       {"seed", t.seed},
                       {"mode", to_string(t.mode)},
                       {"dt", t.dt},
                       {"speed_limit", t.speed_limit},
                       {"time_budget", t.time_budget},
                       {"lanes", lanes_json(t.lanes)},
                       {"route", points_json(t.route.vertices())},
                       {"goal", goal_json(t.goal)},
                       {"ego_box", box_json(t.ego_box)},
                       {"agents", agents}};
  out << header.dump() << "\n";
  for (const auto& r : t.ticks) {
    json ag = json::array();
    for (const auto& a : r.agents) {
      json s = state_json(a.state);
      ag.push_back({{"id", a.id}, {"x", s["x"]}, {"y", s["y"]}, {"heading", s["heading"]}, {"speed", s["speed"]}});
    }
    json costs = json::array();
    for (double c : r.costs) costs.push_back(num(c));
    json preds = json::array();
    for (const auto& p : r.predictions) {
      json top = json::array();
      for (const auto& [k, prob] : p.top) top.push_back(json::array({k, prob}));
      json paths = json::array();
      for (const auto& path : p.paths) paths.push_back(points_json(path));
      preds.push_back({{"agent", p.agent_id}, {"top", top}, {"paths", paths}});
    }
    const json rec = {{"record", "tick"},
                      {"tick", r.tick},
                      {"time", r.time},
                      {"ego", state_json(r.ego)},
                      {"agents", ag},
                      {"chosen", r.chosen ? json(*r.chosen) : json(nullptr)},
                      {"costs", costs},
                      {"plan", points_json(r.plan)},
                      {"predictions", preds},
                      {"on_route", r.on_route},
                      {"event", to_string(r.event)}};
    out << rec.dump() << "\n";
  }
  const json outcome = {{"record", "outcome"},
                        {"outcome", to_string(t.outcome)},
                        {"success", t.success()},
                        {"ticks", t.ticks.size()},
                        {"route_fraction", t.route_fraction()}};
  out << outcome.dump() << "\n";
}

std::vector<EpisodeTrace> read_traces(std::istream& in) {
  std::vector<EpisodeTrace> out;
  std::string line;
  std::size_t line_no = 0;
  bool open = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "trace line " + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      const std::string kind = j.at("record").get<std::string>();
      if (kind == "header") {
        if (open) throw ConfigError(where + ": header inside an unfinished episode");
        check_schema(j, kTraceSchema, where);
        if (!j.contains("schema")) throw ConfigError(where + ": header without schema");
        EpisodeTrace t;
        t.scenario = j.at("scenario").get<std::string>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.mode = planning_mode_from_string(j.at("mode").get<std::string>());
        t.dt = j.at("dt").get<double>();
        t.speed_limit = j.at("speed_limit").get<double>();
        t.time_budget = j.at("time_budget").get<double>();
        t.lanes = lanes_from(j.at("lanes"));
        t.route = Polyline(points_from(j.at("route")));
        t.goal = goal_from(j.at("goal"));
        t.ego_box = box_from(j.at("ego_box"));
        for (const auto& a : j.at("agents")) t.agents.push_back(agent_spec_from(a));
        out.push_back(std::move(t));
        open = true;
      } else if (kind == "tick") {
        if (!open) throw ConfigError(where + ": tick record without a header");
        EpisodeTrace& t = out.back();
        TickRecord r;
        r.tick = j.at("tick").get<std::size_t>();
        if (!t.ticks.empty() && r.tick <= t.ticks.back().tick) throw ConfigError(where + ": ticks must increase");
        r.time = j.at("time").get<double>();
        r.ego = state_from(j.at("ego"));
        for (const auto& a : j.at("agents")) {
          const std::size_t id = a.at("id").get<std::size_t>();
          if (id >= t.agents.size()) throw ConfigError(where + ": unknown agent id");
          r.agents.push_back({id, state_from(a)});
        }
        if (!j.at("chosen").is_null()) r.chosen = j["chosen"].get<std::size_t>();
        for (const auto& c : j.at("costs")) r.costs.push_back(as_num(c));
        r.plan = points_from(j.at("plan"));
        for (const auto& p : j.at("predictions")) {
          PredictionSummary ps;
          ps.agent_id = p.at("agent").get<std::size_t>();
          for (const auto& e : p.at("top")) ps.top.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<double>());
          for (const auto& path : p.at("paths")) ps.paths.push_back(points_from(path));
          r.predictions.push_back(std::move(ps));
        }
        r.on_route = j.at("on_route").get<bool>();
        r.event = event_from_string(j.at("event").get<std::string>());
        t.ticks.push_back(std::move(r));
      } else if (kind == "outcome") {
        if (!open) throw ConfigError(where + ": outcome record without a header");
        out.back().outcome = event_from_string(j.at("outcome").get<std::string>());
        open = false;
      } else {
        throw ConfigError(where + ": unknown record type '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  if (open) throw ConfigError("trace ends inside an episode (no outcome record)");
  return out;
}

std::vector<EpisodeTrace> load_traces(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace '" + path.string() + "'");
  try {
    return read_traces(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// MRF fixtures

PairwiseMRF parse_mrf(std::string_view text) {
  const json j = parse_json(text, "mrf");
  check_keys(j, {"schema", "n_states", "log_unary", "edges", "note"}, "mrf");
  check_schema(j, kMrfSchema, "mrf");
  try {
    const auto& unary = j.at("log_unary");
    const std::size_t k = j.at("n_states").get<std::size_t>();
    PairwiseMRF mrf(unary.size(), k);
    for (std::size_t i = 0; i < unary.size(); ++i) {
      if (unary[i].size() != k) throw ShapeError("mrf: unary row " + std::to_string(i) + " has wrong length");
      for (std::size_t s = 0; s < k; ++s) mrf.unary(i, s) = unary[i][s].get<double>();
    }
    if (j.contains("edges")) {
      for (const auto& e : j["edges"]) {
        std::vector<double> table;
        for (const auto& row : e.at("log_potential")) {
          for (const auto& v : row) table.push_back(v.get<double>());
        }
        mrf.add_edge(e.at("i").get<std::size_t>(), e.at("j").get<std::size_t>(), std::move(table));
      }
    }
    mrf.validate();
    return mrf;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mrf: ") + e.what());
  }
}

PairwiseMRF load_mrf(const fs::path& path) {
  try {
    return parse_mrf(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string mrf_to_json(const PairwiseMRF& mrf) {
  json unary = json::array();
  for (std::size_t i = 0; i < mrf.n_nodes; ++i) {
    json row = json::array();
    for (std::size_t s = 0; s < mrf.n_states; ++s) row.push_back(mrf.unary(i, s));
    unary.push_back(row);
  }
  json edges = json::array();
  for (const auto& e : mrf.edges) {
    json table = json::array();
    for (std::size_t a = 0; a < mrf.n_states; ++a) {
      json row = json::array();
      for (std::size_t b = 0; b < mrf.n_states; ++b) row.push_back(e.log_potential[a * mrf.n_states + b]);
      table.push_back(row);
    }
    edges.push_back({{"i", e.i}, {"j", e.j}, {"log_potential", table}});
  }
  const json j = {{"schema", kMrfSchema}, {"n_states", mrf.n_states}, {"log_unary", unary}, {"edges", edges}};
  return j.dump(2) + "\n";
}

void write_marginal_table(std::ostream& out, const PairwiseMRF& mrf, const LbpOptions& opts, double max_states) {
  const ConditionalMarginals lbp = lbp_marginals(mrf, opts);
  std::optional<ConditionalMarginals> exact;
  try {
    exact = enumerate_exact(mrf, max_states);
  } catch (const CapacityError&) {
  }
  char buf[160];
  out << "# schema " << kMrfSchema << " marginals\n";
  out << "nodes " << mrf.n_nodes << "  states " << mrf.n_states << "  edges " << mrf.edges.size() << "\n";
  out << "lbp " << (lbp.converged ? "converged" : "not converged") << " after " << lbp.iterations
      << " iterations\n";
  if (!exact) {
    out << "exact enumeration skipped: " << mrf.n_states << "^" << mrf.n_nodes << " joint states exceed the cap\n";
    out << "node  state  lbp\n";
    for (std::size_t i = 0; i < mrf.n_nodes; ++i) {
      for (std::size_t s = 0; s < mrf.n_states; ++s) {
        std::snprintf(buf, sizeof buf, "%4zu  %5zu  %.12f\n", i, s, lbp(i, s));
        out << buf;
      }
    }
    return;
  }
  const auto tv = total_variation(lbp, *exact);
  out << "node  state  lbp             exact\n";
  for (std::size_t i = 0; i < mrf.n_nodes; ++i) {
    for (std::size_t s = 0; s < mrf.n_states; ++s) {
      std::snprintf(buf, sizeof buf, "%4zu  %5zu  %.12f  %.12f\n", i, s, lbp(i, s), (*exact)(i, s));
      out << buf;
    }
  }
  out << "node  tv\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < tv.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%4zu  %.3e\n", i, tv[i]);
    out << buf;
    worst = std::max(worst, tv[i]);
  }
  std::snprintf(buf, sizeof buf, "max_tv %.3e\n", worst);
  out << buf;
}

// ---------------------------------------------------------------------------
// Reports

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << "# schema " << kEvalSchema << "\n";
  out << "mode,SR,RL,collisions,timeouts,mean_planning_ms\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%zu,%zu,%.3f\n", std::string(to_string(r.mode)).c_str(),
                  r.metrics.success_rate, r.metrics.right_lane_rate, r.metrics.collisions, r.metrics.timeouts,
                  r.metrics.mean_cycle_seconds * 1e3);
    out << buf;
  }
}

void write_eval_table(std::ostream& out, const std::vector<EvalRow>& rows) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %10s %9s %8s %9s %12s\n", "mode", "SR(%)", "RL(%)", "episodes",
                "collision", "timeout", "off_road", "plan ms/cyc");
  out << buf;
  for (const auto& r : rows) {
    const Metrics& m = r.metrics;
    std::snprintf(buf, sizeof buf, "%-16s %8.2f %8.2f %10zu %9zu %8zu %9zu %12.3f\n",
                  std::string(to_string(r.mode)).c_str(), 100.0 * m.success_rate, 100.0 * m.right_lane_rate,
                  m.episodes, m.collisions, m.timeouts, m.off_road, m.mean_cycle_seconds * 1e3);
    out << buf;
  }
}

void write_loss_curve(std::ostream& out, const std::vector<double>& losses) {
  out << "# schema " << kLossCurveSchema << "\n";
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g\n", i, losses[i]);
    out << buf;
  }
}

}  // namespace interplan
