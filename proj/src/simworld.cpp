#include "interplan/simworld.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <string>
#include <thread>

#include "interplan/errors.hpp"

namespace interplan {

namespace {

// Position along a lane, extrapolated past both ends along the end segments.
struct LaneCoord {
  double s = 0.0;
  double offset = 0.0;  // signed, positive left
};

LaneCoord lane_coord(const Polyline& line, Vec2 p) {
  const auto proj = line.project(p);
  LaneCoord c{proj.arclength, proj.signed_offset};
  const Vec2 dir{std::cos(proj.heading), std::sin(proj.heading)};
  const Vec2 rel = p - proj.point;
  if (proj.arclength >= line.length() - 1e-9 || proj.arclength <= 1e-9) {
    c.s += dot(rel, dir);
    c.offset = cross(dir, rel);
  }
  return c;
}

bool front_in_corridor(const Lane& lane, const KinematicState& s, const BoundingBox& box) {
  const OrientedBox ob(s.position(), s.heading, box);
  const auto corners = ob.corners();
  const double half = 0.5 * lane.width;
  if (std::abs(lane_coord(lane.centerline, s.position()).offset) < half) return true;
  // corners 0 and 3 are the front pair
  return std::abs(lane_coord(lane.centerline, corners[0]).offset) < half ||
         std::abs(lane_coord(lane.centerline, corners[3]).offset) < half;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Polyline straight(double x0, double x1, double y) { return Polyline({{x0, y}, {x1, y}}); }

bool exited(const Lane& lane, const KinematicState& s) {
  return lane_coord(lane.centerline, s.position()).s > lane.centerline.length();
}

}  // namespace

double scripted_acceleration(const KinematicState& state, const BoundingBox& box, const AgentBehavior& b,
                             const Lane& lane, std::span<const Neighbor> neighbors) {
  const double v = state.speed;
  const double s_self = lane_coord(lane.centerline, state.position()).s;
  const double lane_heading = lane.centerline.heading_at(std::clamp(s_self, 0.0, lane.centerline.length()));

  double gap = std::numeric_limits<double>::infinity();
  double lead_speed = 0.0;
  for (const auto& n : neighbors) {
    const double s_other = lane_coord(lane.centerline, n.state.position()).s;
    if (s_other <= s_self) continue;
    const bool counts = (n.is_ego && b.yields_to_merging)
                            ? front_in_corridor(lane, n.state, n.box)
                            : std::abs(lane_coord(lane.centerline, n.state.position()).offset) < 0.5 * lane.width;
    if (!counts) continue;
    const double g = s_other - s_self - 0.5 * (box.length + n.box.length);
    if (g < gap) {
      gap = g;
      lead_speed = std::max(0.0, n.state.speed * std::cos(wrap_angle(n.state.heading - lane_heading)));
    }
  }

  double a = b.max_accel * (1.0 - std::pow(v / std::max(b.desired_speed, 1e-3), 4));
  if (std::isfinite(gap)) {
    if (gap <= 0.1) return -b.max_decel;
    const double dv = v - lead_speed;
    const double s_star =
        b.standstill_gap + std::max(0.0, v * b.time_headway + v * dv / (2.0 * std::sqrt(b.max_accel * b.comfort_decel)));
    a -= b.max_accel * (s_star / gap) * (s_star / gap);
  }
  return std::clamp(a, -b.max_decel, b.max_accel);
}

KinematicState step_scripted_agent(const KinematicState& state, const BoundingBox& box, const AgentBehavior& b,
                                   const Lane& lane, std::span<const Neighbor> neighbors, double dt) {
  const double a = scripted_acceleration(state, box, b, lane, neighbors);
  const double v0 = state.speed;
  double v1 = v0 + a * dt;
  double ds;
  if (v1 < 0.0) {
    ds = a < 0.0 ? v0 * v0 / (-2.0 * a) : 0.0;
    v1 = 0.0;
  } else {
    ds = 0.5 * (v0 + v1) * dt;
  }
  const double s = lane_coord(lane.centerline, state.position()).s + ds;
  const double clamped = std::clamp(s, 0.0, lane.centerline.length());
  const double heading = lane.centerline.heading_at(clamped);
  Vec2 p = lane.centerline.point_at(clamped);
  p = p + Vec2{std::cos(heading), std::sin(heading)} * (s - clamped);
  return {p.x, p.y, heading, v1};
}

// ---------------------------------------------------------------------------
// Scenarios

void Scenario::validate() const {
  if (lanes.empty()) throw ConfigError("scenario '" + name + "' has no lanes");
  if (route.empty()) throw ConfigError("scenario '" + name + "' has no route");
  if (!(time_budget > 0.0)) throw ConfigError("scenario time budget must be positive");
  if (!(goal.radius > 0.0)) throw ConfigError("goal radius must be positive");
  for (const auto& a : agents) {
    if (a.lane >= lanes.size()) throw ConfigError("scenario agent refers to a missing lane");
  }
}

double Scenario::route_half_width() const {
  double best = std::numeric_limits<double>::infinity(), width = lanes.empty() ? 3.5 : lanes.front().width;
  const Vec2 mid = route.point_at(0.5 * route.length());
  for (const auto& l : lanes) {
    const double d = l.centerline.project(mid).distance;
    if (d < best) {
      best = d;
      width = l.width;
    }
  }
  return 0.5 * width;
}

Scenario make_dense_merge(std::uint64_t seed, const DenseMergeParams& p) {
  if (p.agent_count == 0 || p.gap_min > p.gap_max || p.speed_min > p.speed_max || p.lane_length <= 20.0) {
    throw ConfigError("invalid dense merge parameters");
  }
  std::mt19937_64 rng(seed);
  Scenario sc;
  sc.name = "dense_merge";
  sc.seed = seed;
  sc.lanes = {{straight(0.0, p.lane_length, 0.0), p.lane_width},
              {straight(0.0, p.lane_length, p.lane_width), p.lane_width}};
  sc.route = sc.lanes[1].centerline;
  sc.goal = {{p.lane_length - 10.0, p.lane_width}, 5.0};
  sc.ego_init = {p.ego_start, 0.0, 0.0, p.ego_speed};
  sc.time_budget = p.time_budget;

  AgentSpec blocker;
  blocker.init = {p.ego_start + p.blocker_distance, 0.0, 0.0, 0.0};
  blocker.lane = 0;
  blocker.parked = true;
  sc.agents.push_back(blocker);

  // Platoon in the target lane, starting somewhat behind the ego.
  double x = p.ego_start - uniform(rng, 15.0, 30.0);
  for (std::size_t i = 0; i < p.agent_count; ++i) {
    AgentSpec a;
    const double v = uniform(rng, p.speed_min, p.speed_max);
    a.init = {x, p.lane_width, 0.0, v};
    a.behavior.desired_speed = v;
    a.lane = 1;
    sc.agents.push_back(a);
    x += a.box.length + uniform(rng, p.gap_min, p.gap_max);
  }
  return sc;
}

Scenario make_empty_road(std::uint64_t seed) {
  Scenario sc;
  sc.name = "empty_road";
  sc.seed = seed;
  sc.lanes = {{straight(0.0, 150.0, 0.0), 3.5}, {straight(0.0, 150.0, 3.5), 3.5}};
  sc.route = sc.lanes[1].centerline;
  sc.goal = {{140.0, 3.5}, 5.0};
  sc.ego_init = {10.0, 3.5, 0.0, 4.0};
  sc.time_budget = 30.0;
  return sc;
}

Scenario make_boxed_in(std::uint64_t seed) {
  Scenario sc;
  sc.name = "boxed_in";
  sc.seed = seed;
  sc.lanes = {{straight(0.0, 80.0, 0.0), 3.5}, {straight(0.0, 80.0, 3.5), 3.5}};
  sc.route = sc.lanes[1].centerline;
  sc.goal = {{70.0, 3.5}, 5.0};
  sc.ego_init = {10.0, 0.0, 0.0, 0.0};
  sc.time_budget = 8.0;
  for (double x : {4.0, 16.0}) {
    AgentSpec a;
    a.init = {x, 0.0, 0.0, 0.0};
    a.parked = true;
    sc.agents.push_back(a);
  }
  for (double x : {4.0, 10.0, 16.0}) {
    AgentSpec a;
    a.init = {x, 3.5, 0.0, 0.0};
    a.lane = 1;
    a.parked = true;
    sc.agents.push_back(a);
  }
  return sc;
}

Scenario ScenarioConfig::instantiate(std::uint64_t s) const {
  if (kind == "dense_merge") return make_dense_merge(s, merge);
  if (kind == "empty_road") return make_empty_road(s);
  if (kind == "boxed_in") return make_boxed_in(s);
  if (kind == "fixed") {
    if (!fixed) throw ConfigError("fixed scenario config without a scenario");
    Scenario sc = *fixed;
    sc.seed = s;
    return sc;
  }
  throw ConfigError("unknown scenario kind '" + kind + "'");
}

void SimOptions::validate() const {
  sampler.validate();
  lbp.validate();
  if (agent_substeps == 0) throw ConfigError("agent substeps must be positive");
  if (history_ticks == 0) throw ConfigError("history length must be positive");
  if (!(agent_radius > 0.0)) throw ConfigError("agent radius must be positive");
  if (prediction_threshold < 0.0 || prediction_threshold > 1.0) {
    throw ConfigError("prediction threshold must be in [0, 1]");
  }
}

std::string_view to_string(Event e) {
  switch (e) {
    case Event::none: return "none";
    case Event::collision: return "collision";
    case Event::goal_reached: return "goal_reached";
    case Event::off_road: return "off_road";
    case Event::timeout: return "timeout";
    case Event::planning_failure: return "planning_failure";
  }
  return "none";
}

Event event_from_string(std::string_view name) {
  for (Event e : {Event::none, Event::collision, Event::goal_reached, Event::off_road, Event::timeout,
                  Event::planning_failure}) {
    if (to_string(e) == name) return e;
  }
  throw ConfigError("unknown event '" + std::string(name) + "'");
}

double EpisodeTrace::route_fraction() const {
  if (ticks.empty()) return 0.0;
  std::size_t on = 0;
  for (const auto& t : ticks) on += t.on_route ? 1 : 0;
  return static_cast<double>(on) / static_cast<double>(ticks.size());
}

// ---------------------------------------------------------------------------
// Observation

namespace {

struct World {
  const std::vector<Lane>& lanes;
  const Polyline& route;
  const std::vector<AgentSpec>& agents;
  double speed_limit;
};

std::vector<KinematicState> tail(std::span<const KinematicState> h, std::size_t n) {
  const std::size_t from = h.size() > n ? h.size() - n : 0;
  return {h.begin() + static_cast<std::ptrdiff_t>(from), h.end()};
}

void add_road_edges(const std::vector<Lane>& lanes, Vec2 ego, const SimOptions& opts,
                    std::vector<StaticObstacle>& out) {
  constexpr double kPiece = 5.0, kThickness = 0.5;
  const BoundingBox box{kPiece, kThickness};
  for (std::size_t li = 0; li < lanes.size(); ++li) {
    const Polyline& line = lanes[li].centerline;
    const double lateral = 0.5 * lanes[li].width + opts.barrier_offset + 0.5 * kThickness;
    for (double s = 0.5 * kPiece; s < line.length(); s += kPiece) {
      const Vec2 c = line.point_at(s);
      if (distance(c, ego) > opts.agent_radius + kPiece) continue;
      const double h = line.heading_at(s);
      const Vec2 normal{-std::sin(h), std::cos(h)};
      for (double side : {1.0, -1.0}) {
        const Vec2 p = c + normal * (side * lateral);
        bool inside_other = false;
        for (std::size_t lj = 0; lj < lanes.size() && !inside_other; ++lj) {
          if (lj == li) continue;
          inside_other = lanes[lj].centerline.project(p).distance < 0.5 * lanes[lj].width + opts.barrier_offset;
        }
        if (!inside_other) out.push_back({{p.x, p.y, h, 0.0}, box});
      }
    }
  }
}

PlanningContext observe_world(const World& w, const KinematicState& ego,
                              std::span<const std::vector<KinematicState>> histories,
                              std::span<const KinematicState> ego_history, const SimOptions& opts,
                              std::vector<std::size_t>* agent_ids) {
  if (histories.size() != w.agents.size()) throw ShapeError("one history per scenario agent is required");
  PlanningContext ctx;
  ctx.ego.history = tail(ego_history, opts.history_ticks);
  if (ctx.ego.history.empty()) ctx.ego.history.push_back(ego);
  ctx.route = w.route;
  ctx.lanes = w.lanes;
  ctx.speed_limit = w.speed_limit;

  struct Cand {
    double d;
    std::size_t id;
  };
  std::vector<Cand> near;
  for (std::size_t i = 0; i < w.agents.size(); ++i) {
    const auto& cur = histories[i].back();
    const double d = distance(cur.position(), ego.position());
    if (d > opts.agent_radius) continue;
    if (w.agents[i].parked) {
      ctx.obstacles.push_back({cur, w.agents[i].box});
      continue;
    }
    if (exited(w.lanes[w.agents[i].lane], cur)) continue;
    near.push_back({d, i});
  }
  add_road_edges(w.lanes, ego.position(), opts, ctx.obstacles);
  std::stable_sort(near.begin(), near.end(), [](const Cand& a, const Cand& b) { return a.d < b.d; });
  if (near.size() > opts.agent_cap) near.resize(opts.agent_cap);
  std::sort(near.begin(), near.end(), [](const Cand& a, const Cand& b) { return a.id < b.id; });

  if (agent_ids) agent_ids->clear();
  for (const auto& c : near) {
    AgentObservation o;
    o.history = tail(histories[c.id], opts.history_ticks);
    o.box = w.agents[c.id].box;
    ctx.agents.push_back(std::move(o));
    if (agent_ids) agent_ids->push_back(c.id);
  }
  return ctx;
}

std::vector<CandidateSet> candidate_sets(const PlanningContext& ctx, const SamplerProfile& profile) {
  std::vector<CandidateSet> sets;
  sets.reserve(ctx.agent_count() + 1);
  for (std::size_t i = 0; i <= ctx.agent_count(); ++i) sets.push_back(sample_candidates(ctx.participant(i).current(), profile));
  return sets;
}

bool on_road(const std::vector<Lane>& lanes, Vec2 p) {
  for (const auto& l : lanes) {
    const auto c = lane_coord(l.centerline, p);
    if (std::abs(c.offset) <= 0.5 * l.width && c.s >= -1.0 && c.s <= l.centerline.length() + 1.0) return true;
  }
  return false;
}

KinematicState interpolate(const KinematicState& a, const KinematicState& b, double f) {
  return {a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f, wrap_angle(a.heading + wrap_angle(b.heading - a.heading) * f),
          a.speed + (b.speed - a.speed) * f};
}

bool ego_collides(const KinematicState& ego, const BoundingBox& ego_box, const std::vector<AgentSpec>& specs,
                  const std::vector<KinematicState>& states) {
  const OrientedBox e(ego.position(), ego.heading, ego_box);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (distance(ego.position(), states[i].position()) > ego_box.half_diagonal() + specs[i].box.half_diagonal()) {
      continue;
    }
    if (boxes_overlap(e, OrientedBox(states[i].position(), states[i].heading, specs[i].box))) return true;
  }
  return false;
}

}  // namespace

PlanningContext observe(const Scenario& scenario, const KinematicState& ego,
                        std::span<const std::vector<KinematicState>> histories,
                        std::span<const KinematicState> ego_history, const SimOptions& opts,
                        std::vector<std::size_t>* agent_ids) {
  const World w{scenario.lanes, scenario.route, scenario.agents, scenario.speed_limit};
  return observe_world(w, ego, histories, ego_history, opts, agent_ids);
}

// ---------------------------------------------------------------------------
// Episodes

EpisodeTrace run_episode(const Scenario& sc, const EnergyWeights& weights, PlanningMode mode,
                         const SimOptions& opts) {
  sc.validate();
  opts.validate();
  weights.validate();
  EpisodeTrace trace;
  trace.scenario = sc.name;
  trace.seed = sc.seed;
  trace.mode = mode;
  trace.dt = opts.replan_period();
  trace.speed_limit = sc.speed_limit;
  trace.time_budget = sc.time_budget;
  trace.lanes = sc.lanes;
  trace.route = sc.route;
  trace.goal = sc.goal;
  trace.ego_box = sc.ego_box;
  trace.agents = sc.agents;

  const double dt = opts.replan_period();
  const double half_width = sc.route_half_width();
  const World world{sc.lanes, sc.route, sc.agents, sc.speed_limit};

  KinematicState ego = sc.ego_init;
  std::vector<KinematicState> agents;
  for (const auto& a : sc.agents) agents.push_back(a.init);
  std::vector<std::vector<KinematicState>> histories(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) histories[i].push_back(agents[i]);
  std::vector<KinematicState> ego_history{ego};
  bool collided_between = false;

  for (std::size_t tick = 0;; ++tick) {
    TickRecord rec;
    rec.tick = tick;
    rec.time = static_cast<double>(tick) * dt;
    rec.ego = ego;
    for (std::size_t i = 0; i < agents.size(); ++i) rec.agents.push_back({i, agents[i]});
    rec.on_route = std::abs(lane_coord(sc.route, ego.position()).offset) < half_width;

    if (collided_between || ego_collides(ego, sc.ego_box, sc.agents, agents)) {
      rec.event = Event::collision;
    } else if (distance(ego.position(), sc.goal.center) <= sc.goal.radius) {
      rec.event = Event::goal_reached;
    } else if (!on_road(sc.lanes, ego.position())) {
      rec.event = Event::off_road;
    } else if (rec.time >= sc.time_budget - 1e-9) {
      rec.event = Event::timeout;
    }
    if (rec.event != Event::none) {
      trace.outcome = rec.event;
      trace.ticks.push_back(std::move(rec));
      break;
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> ids;
    PlanResult result;
    try {
      const PlanningContext ctx = observe_world(world, ego, histories, ego_history, opts, &ids);
      const auto sets = candidate_sets(ctx, opts.sampler);
      const EnergyTables tables = build_energy_tables(ctx, sets, weights);
      result = plan(tables, sets, mode, opts.lbp);

      for (std::size_t n = 0; n < ids.size(); ++n) {
        PredictionSummary ps;
        ps.agent_id = ids[n];
        const auto row = result.predictions.row(n);
        std::vector<std::size_t> order(row.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
        for (std::size_t r = 0; r < order.size() && r < opts.max_predictions_per_agent; ++r) {
          ps.top.emplace_back(order[r], row[order[r]]);
          if (row[order[r]] > opts.prediction_threshold) ps.paths.push_back(sets[n + 1][order[r]].positions());
        }
        rec.predictions.push_back(std::move(ps));
      }
    } catch (const PlanningError&) {
      rec.event = Event::planning_failure;
      trace.outcome = rec.event;
      trace.ticks.push_back(std::move(rec));
      break;
    }
    trace.cycle_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    rec.chosen = result.chosen_index;
    rec.costs = result.costs;
    rec.plan = result.chosen_trajectory.positions();
    trace.ticks.push_back(std::move(rec));

    // Advance: the ego executes the first step of its plan, agents react in substeps.
    const KinematicState ego_next = result.chosen_trajectory.size() > 1 ? result.chosen_trajectory[1] : ego;
    const double h = dt / static_cast<double>(opts.agent_substeps);
    for (std::size_t sub = 1; sub <= opts.agent_substeps; ++sub) {
      const KinematicState ego_mid = interpolate(ego, ego_next, static_cast<double>(sub - 1) / opts.agent_substeps);
      std::vector<Neighbor> scene;
      scene.reserve(agents.size() + 1);
      for (std::size_t i = 0; i < agents.size(); ++i) scene.push_back({agents[i], sc.agents[i].box, false});
      scene.push_back({ego_mid, sc.ego_box, true});
      std::vector<KinematicState> next = agents;
      for (std::size_t i = 0; i < agents.size(); ++i) {
        if (sc.agents[i].parked) continue;
        std::vector<Neighbor> others;
        others.reserve(scene.size() - 1);
        for (std::size_t j = 0; j < scene.size(); ++j) {
          if (j != i) others.push_back(scene[j]);
        }
        next[i] = step_scripted_agent(agents[i], sc.agents[i].box, sc.agents[i].behavior,
                                      sc.lanes[sc.agents[i].lane], others, h);
      }
      agents = std::move(next);
      const KinematicState ego_end = interpolate(ego, ego_next, static_cast<double>(sub) / opts.agent_substeps);
      if (sub < opts.agent_substeps && ego_collides(ego_end, sc.ego_box, sc.agents, agents)) collided_between = true;
    }
    ego = ego_next;
    ego_history.push_back(ego);
    for (std::size_t i = 0; i < agents.size(); ++i) histories[i].push_back(agents[i]);
  }
  return trace;
}

Metrics summarize(std::span<const EpisodeTrace> traces) {
  Metrics m;
  m.episodes = traces.size();
  std::size_t ticks = 0, on = 0, cycles = 0;
  double cycle_total = 0.0;
  for (const auto& t : traces) {
    switch (t.outcome) {
      case Event::goal_reached: ++m.successes; break;
      case Event::collision: ++m.collisions; break;
      case Event::timeout: ++m.timeouts; break;
      case Event::off_road: ++m.off_road; break;
      case Event::planning_failure: ++m.planning_failures; break;
      case Event::none: break;
    }
    for (const auto& r : t.ticks) on += r.on_route ? 1 : 0;
    ticks += t.ticks.size();
    for (double c : t.cycle_seconds) cycle_total += c;
    cycles += t.cycle_seconds.size();
  }
  if (m.episodes) m.success_rate = static_cast<double>(m.successes) / static_cast<double>(m.episodes);
  if (ticks) m.right_lane_rate = static_cast<double>(on) / static_cast<double>(ticks);
  if (cycles) m.mean_cycle_seconds = cycle_total / static_cast<double>(cycles);
  return m;
}

std::vector<EpisodeTrace> run_episodes(std::span<const ScenarioConfig> configs, const EnergyWeights& weights,
                                       PlanningMode mode, std::size_t episodes_per_scenario,
                                       const SimOptions& opts, std::size_t workers) {
  struct Job {
    const ScenarioConfig* config;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& c : configs) {
    for (std::size_t e = 0; e < episodes_per_scenario; ++e) jobs.push_back({&c, c.seed + e});
  }
  std::vector<EpisodeTrace> out(jobs.size());
  if (jobs.empty()) return out;
  workers = std::clamp<std::size_t>(workers, 1, jobs.size());

  std::size_t next = 0;
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t j;
      {
        std::lock_guard lock(mu);
        if (next >= jobs.size() || failure) return;
        j = next++;
      }
      try {
        out[j] = run_episode(jobs[j].config->instantiate(jobs[j].seed), weights, mode, opts);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

Metrics evaluate(std::span<const ScenarioConfig> configs, const EnergyWeights& weights, PlanningMode mode,
                 std::size_t episodes_per_scenario, const SimOptions& opts, std::size_t workers) {
  const auto traces = run_episodes(configs, weights, mode, episodes_per_scenario, opts, workers);
  return summarize(traces);
}

// ---------------------------------------------------------------------------
// Supervision scenes

std::vector<Scene> scenes_from_trace(const EpisodeTrace& trace, const SimOptions& opts, std::size_t stride) {
  if (stride == 0) throw ConfigError("scene stride must be positive");
  if (std::abs(trace.dt - opts.sampler.dt) > 1e-9) throw ConfigError("trace dt does not match the sampler dt");
  const std::size_t steps = opts.sampler.steps();
  const World w{trace.lanes, trace.route, trace.agents, trace.speed_limit};
  std::vector<Scene> scenes;
  for (std::size_t t = 0; t + steps < trace.ticks.size(); t += stride) {
    std::vector<std::vector<KinematicState>> histories(trace.agents.size());
    std::vector<KinematicState> ego_history;
    const std::size_t from = t + 1 > opts.history_ticks ? t + 1 - opts.history_ticks : 0;
    for (std::size_t h = from; h <= t; ++h) {
      ego_history.push_back(trace.ticks[h].ego);
      for (const auto& a : trace.ticks[h].agents) histories[a.id].push_back(a.state);
    }
    Scene scene;
    scene.id = trace.scenario + "/" + std::to_string(trace.seed) + "/" + std::to_string(t);
    std::vector<std::size_t> ids;
    scene.ctx = observe_world(w, trace.ticks[t].ego, histories, ego_history, opts, &ids);
    scene.sets = candidate_sets(scene.ctx, opts.sampler);

    auto future = [&](auto&& state_at) {
      std::vector<KinematicState> states;
      for (std::size_t s = 0; s <= steps; ++s) states.push_back(state_at(trace.ticks[t + s]));
      return Trajectory(std::move(states), trace.dt);
    };
    scene.ground_truth.push_back(future([](const TickRecord& r) { return r.ego; }));
    for (std::size_t id : ids) {
      scene.ground_truth.push_back(future([id](const TickRecord& r) { return r.agents[id].state; }));
    }
    if (targets_feasible(scene)) scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::vector<Scene> make_toy_corpus(std::uint64_t seed, std::size_t count, const SamplerProfile& profile) {
  profile.validate();
  std::mt19937_64 rng(seed);
  const double width = 3.5;
  const std::vector<Lane> lanes = {{straight(0.0, 300.0, 0.0), width}, {straight(0.0, 300.0, width), width}};
  const std::size_t steps = profile.steps();
  const std::size_t substeps = 5;
  const double h = profile.dt / static_cast<double>(substeps);

  std::vector<Scene> out;
  for (std::size_t n = 0; out.size() < count; ++n) {
    if (n >= 50 * count) throw DomainError("toy corpus: too many scenes with colliding targets");
    const std::size_t agent_count = 2 + static_cast<std::size_t>(rng() % 3);
    std::vector<AgentSpec> specs;
    AgentSpec ego;
    ego.init = {20.0, 0.0, 0.0, uniform(rng, 3.0, 8.0)};
    ego.behavior.desired_speed = uniform(rng, 2.0, 10.0);
    specs.push_back(ego);
    for (std::size_t i = 0; i < agent_count; ++i) {
      AgentSpec a;
      a.lane = rng() % 2;
      a.init = {uniform(rng, 0.0, 60.0), width * static_cast<double>(a.lane), 0.0, uniform(rng, 2.0, 9.0)};
      // Hidden intent: the desired speed is not observable from the current state.
      a.behavior.desired_speed = uniform(rng, 1.0, 11.0);
      a.behavior.max_accel = uniform(rng, 1.0, 3.0);
      specs.push_back(a);
    }
    // Drop agents that start overlapping another participant.
    std::vector<AgentSpec> kept{specs.front()};
    for (std::size_t i = 1; i < specs.size(); ++i) {
      bool clear = true;
      for (const auto& k : kept) {
        if (k.lane == specs[i].lane && std::abs(k.init.x - specs[i].init.x) < k.box.length + 2.0) clear = false;
      }
      if (clear) kept.push_back(specs[i]);
    }

    std::vector<KinematicState> cur;
    for (const auto& s : kept) cur.push_back(s.init);
    std::vector<std::vector<KinematicState>> rollout(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) rollout[i].push_back(cur[i]);
    for (std::size_t st = 0; st < steps; ++st) {
      for (std::size_t sub = 0; sub < substeps; ++sub) {
        std::vector<Neighbor> scene;
        for (std::size_t i = 0; i < kept.size(); ++i) scene.push_back({cur[i], kept[i].box, false});
        std::vector<KinematicState> next = cur;
        for (std::size_t i = 0; i < kept.size(); ++i) {
          std::vector<Neighbor> others;
          for (std::size_t j = 0; j < scene.size(); ++j) {
            if (j != i) others.push_back(scene[j]);
          }
          next[i] = step_scripted_agent(cur[i], kept[i].box, kept[i].behavior, lanes[kept[i].lane], others, h);
        }
        cur = std::move(next);
      }
      for (std::size_t i = 0; i < kept.size(); ++i) rollout[i].push_back(cur[i]);
    }

    Scene scene;
    scene.id = "toy/" + std::to_string(seed) + "/" + std::to_string(n);
    scene.ctx.ego.history = {kept[0].init};
    scene.ctx.ego.box = kept[0].box;
    for (std::size_t i = 1; i < kept.size(); ++i) {
      AgentObservation o;
      o.history = {kept[i].init};
      o.box = kept[i].box;
      scene.ctx.agents.push_back(std::move(o));
    }
    scene.ctx.route = lanes[0].centerline;
    scene.ctx.lanes = lanes;
    scene.ctx.speed_limit = 8.0;
    scene.sets = candidate_sets(scene.ctx, profile);
    for (auto& r : rollout) scene.ground_truth.emplace_back(std::move(r), profile.dt);
    attach_motion_hints(scene);
    if (targets_feasible(scene)) out.push_back(std::move(scene));
  }
  return out;
}

}  // namespace interplan
