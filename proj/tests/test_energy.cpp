#include <cmath>
#include <random>

#include "doctest.h"
#include "interplan/energy.hpp"
#include "interplan/errors.hpp"
#include "support.hpp"

using namespace interplan;
using namespace interplan::testing;

namespace {

// Gap between two boxes from points sampled along both outlines.
double sampled_gap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners(), cb = b.corners();
  double best = 1e300;
  const int n = 2000;
  for (int e = 0; e < 4; ++e) {
    for (int s = 0; s <= n; ++s) {
      const double t = static_cast<double>(s) / n;
      const Vec2 pa = ca[e] + (ca[(e + 1) % 4] - ca[e]) * t;
      const Vec2 pb = cb[e] + (cb[(e + 1) % 4] - cb[e]) * t;
      for (int f = 0; f < 4; ++f) {
        best = std::min(best, point_segment_distance(pa, cb[f], cb[(f + 1) % 4]));
        best = std::min(best, point_segment_distance(pb, ca[f], ca[(f + 1) % 4]));
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("features of a lane-centered constant-velocity straight") {
  PlanningContext ctx;
  ctx.ego.history = {{0, 0, 0, 6}};
  ctx.route = straight_road(0.0);
  ctx.lanes = {{straight_road(0.0), 3.5}};
  ctx.speed_limit = 8.0;
  const auto t = straight_line({0, 0}, 0.0, 6.0, 8);
  const auto phi = agent_features(t, 0, ctx, kBaseFeatureCount);
  const std::vector<double> expect{0, 2, 0, 0, 0, 24, 0};
  for (std::size_t f = 0; f < expect.size(); ++f) CHECK(phi[f] == doctest::Approx(expect[f]).epsilon(1e-12));

  CandidateSet set{{0, 0, 0, 6}, {t}, {Maneuver{}}};
  const std::vector<CandidateSet> sets{set};
  const auto w = EnergyWeights::defaults();
  double dot = 0.0;
  for (std::size_t f = 0; f < expect.size(); ++f) dot += w.w[f] * expect[f];
  CHECK(agent_energy(ctx, sets, w)(0, 0) == doctest::Approx(dot).epsilon(1e-12));
}

TEST_CASE("agent energy is linear in the weights") {
  std::mt19937_64 rng(3);
  const auto ctx = toy_context(rng, 2);
  const auto sets = sets_for(ctx, small_profile(5));
  EnergyWeights zero = EnergyWeights::defaults();
  std::fill(zero.w.begin(), zero.w.end(), 0.0);
  const auto zeros = agent_energy(ctx, sets, zero);
  for (double v : zeros.values()) CHECK(v == 0.0);

  EnergyWeights w1 = EnergyWeights::defaults(), w2 = EnergyWeights::defaults(), mix = w1;
  for (double& v : w2.w) v = uniform(rng, -2, 2);
  for (std::size_t f = 0; f < mix.w.size(); ++f) mix.w[f] = 2.0 * w1.w[f] - 0.5 * w2.w[f];
  const auto a = agent_energy(ctx, sets, w1), b = agent_energy(ctx, sets, w2), m = agent_energy(ctx, sets, mix);
  for (std::size_t i = 0; i < m.values().size(); ++i) {
    CHECK(m.values()[i] == doctest::Approx(2.0 * a.values()[i] - 0.5 * b.values()[i]).epsilon(1e-12));
  }
  const std::vector<CandidateSet> missing(sets.begin(), sets.end() - 1);
  CHECK_THROWS_AS(agent_energy(ctx, missing, w1), ShapeError);
}

TEST_CASE("safety energy terms") {
  const BoundingBox car;
  const SafetyParams params;
  const auto a = straight_line({0, 0}, 0.0, 5.0, 8);
  SUBCASE("far apart") {
    const auto b = straight_line({0, 50}, 0.0, 5.0, 8);
    CHECK(safety_energy(a, car, b, car, speeds_of(a), params) == 0.0);
  }
  SUBCASE("identical trajectories collide") {
    CHECK(safety_energy(a, car, a, car, speeds_of(a), params) >= params.collision_weight);
  }
  SUBCASE("converging straights match per-step sampled gaps") {
    const auto b = straight_line({10, 4.5}, -0.1, 4.0, 8);
    const auto v = speeds_of(a);
    double expect = 0.0;
    bool overlap = false;
    for (std::size_t t = 0; t < a.size(); ++t) {
      const OrientedBox oa(a[t].position(), a[t].heading, car), ob(b[t].position(), b[t].heading, car);
      overlap = overlap || boxes_overlap(oa, ob);
      const double gap = sampled_gap(oa, ob);
      expect += v[t] * std::pow(std::max(0.0, 2.0 - gap), 2);
    }
    REQUIRE_FALSE(overlap);
    REQUIRE(expect > 0.0);
    // The sampled oracle resolves the outline to ~1e-3 m, so compare the
    // energy against the exact per-step gaps and the oracle separately.
    double exact = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
      const double gap = box_gap({a[t].position(), a[t].heading, car}, {b[t].position(), b[t].heading, car});
      CHECK(gap == doctest::Approx(sampled_gap({a[t].position(), a[t].heading, car},
                                               {b[t].position(), b[t].heading, car}))
                       .epsilon(1e-6));
      exact += v[t] * std::pow(std::max(0.0, 2.0 - gap), 2);
    }
    CHECK(std::abs(safety_energy(a, car, b, car, v, params) - exact) < 1e-9);
    CHECK(exact == doctest::Approx(expect).epsilon(1e-5));
  }
  SUBCASE("zero weight and margin vanish") {
    const SafetyParams none{0.0, 0.0};
    const auto b = straight_line({1, 2.5}, 0.0, 3.0, 8);
    CHECK(safety_energy(a, car, b, car, speeds_of(a), none) == 0.0);
    const auto c = straight_line({1, 0.5}, 0.0, 5.0, 8);  // overlapping
    CHECK(safety_energy(a, car, c, car, speeds_of(a), none) == 0.0);
  }
  SUBCASE("overlap pays the full margin, not the penetration depth") {
    const SafetyParams margin_only{0.0, 1.5};
    const auto c = straight_line({1, 0.5}, 0.0, 5.0, 8);
    double hand = 0.0;
    for (double v : speeds_of(a)) hand += v * 1.5 * 1.5;
    CHECK(safety_energy(a, car, c, car, speeds_of(a), margin_only) == doctest::Approx(hand).epsilon(1e-12));
  }
  SUBCASE("monotone in the gap") {
    double last = 1e300;
    for (double y = 2.0; y < 8.0; y += 0.25) {
      const auto b = straight_line({0, y}, 0.0, 5.0, 8);
      const double e = safety_energy(a, car, b, car, speeds_of(a), params);
      CHECK(e <= last);
      last = e;
    }
  }
  SUBCASE("symmetric with shared speeds") {
    const auto b = straight_line({3, 3}, -0.2, 6.0, 8);
    const auto v = speeds_of(a);
    CHECK(safety_energy(a, car, b, car, v, params) == doctest::Approx(safety_energy(b, car, a, car, v, params)));
  }
  SUBCASE("shape errors") {
    const auto b = straight_line({0, 10}, 0.0, 5.0, 4);
    CHECK_THROWS_AS(safety_energy(a, car, b, car, speeds_of(a), params), ShapeError);
  }
}

TEST_CASE("goal energy") {
  const Polyline route = straight_road(0.0);
  CHECK(goal_energy(straight_line({0, 0}, 0.0, 5, 8), route) == doctest::Approx(0.0));
  CHECK(goal_energy(straight_line({0, 1.5}, 0.0, 5, 8), route) == doctest::Approx(1.5));
  const auto arc = integrate_maneuver({0, 0, 0, 6}, {ManeuverFamily::arc, 0, 0.05, 0}, 0.5, 8, 4);
  double sum = 0.0;
  for (const auto& s : arc.states()) {
    double best = 1e300;
    for (int i = 0; i <= 10000; ++i) {
      const double x = -50.0 + 250.0 * i / 10000.0;
      best = std::min(best, std::hypot(s.x - x, s.y));
    }
    sum += best;
  }
  CHECK(std::abs(goal_energy(arc, route) - sum / 9.0) < 1e-3);
}

TEST_CASE("joint energy recomposes term by term") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    PlanningContext ctx = toy_context(rng, 2);
    // pull agents close so that pair terms are active
    ctx.agents[0].history = {{uniform(rng, 3, 8), uniform(rng, 0, 3.5), uniform(rng, -0.3, 0.3), 4}};
    ctx.obstacles.push_back({{uniform(rng, 10, 20), 3.5, 0, 0}, BoundingBox{}});
    const auto sets = sets_for(ctx, small_profile(3));
    const auto w = EnergyWeights::defaults();
    const auto tables = build_energy_tables(ctx, sets, w);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) {
        for (std::size_t c = 0; c < 3; ++c) {
          const std::vector<std::size_t> as{a, b, c};
          const Trajectory* tr[3] = {&sets[0][a], &sets[1][b], &sets[2][c]};
          double manual = goal_energy(*tr[0], ctx.route);
          for (std::size_t i = 0; i < 3; ++i) {
            const auto phi = agent_features(*tr[i], i, ctx, kBaseFeatureCount);
            for (std::size_t f = 0; f < phi.size(); ++f) manual += w.w[f] * phi[f];
            const auto& o = ctx.obstacles[0];
            const Trajectory still(std::vector<KinematicState>(9, {o.pose.x, o.pose.y, 0, 0}), 0.5);
            manual += safety_energy(*tr[i], ctx.participant(i).box, still, o.box, speeds_of(*tr[i]), w.safety);
          }
          for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = i + 1; j < 3; ++j) {
              manual += safety_energy(*tr[i], ctx.participant(i).box, *tr[j], ctx.participant(j).box,
                                      speeds_of(*tr[i]), w.safety);
            }
          }
          CHECK(std::abs(joint_energy(as, ctx, sets, w) - manual) <= 1e-12 * std::max(1.0, std::abs(manual)));
          CHECK(std::abs(joint_energy(as, tables) - manual) <= 1e-12 * std::max(1.0, std::abs(manual)));
        }
      }
    }
  }
}

TEST_CASE("joint energy without other agents") {
  std::mt19937_64 rng(1);
  const auto ctx = toy_context(rng, 0);
  const auto sets = sets_for(ctx, small_profile(4));
  const auto w = EnergyWeights::defaults();
  const auto m = agent_energy(ctx, sets, w);
  for (std::size_t c = 0; c < 4; ++c) {
    const std::vector<std::size_t> as{c};
    CHECK(joint_energy(as, ctx, sets, w) == doctest::Approx(m(c, 0) + goal_energy(sets[0][c], ctx.route)));
  }
  const std::vector<std::size_t> bad{9};
  CHECK_THROWS_AS(joint_energy(bad, ctx, sets, w), std::out_of_range);
}

TEST_CASE("joint energy is invariant under relabeling agents") {
  std::mt19937_64 rng(12);
  PlanningContext ctx = toy_context(rng, 2);
  // One agent close to the ego, one far ahead in the other lane.
  ctx.agents[0].history = {{6, 0.5, 0.05, 5}};
  ctx.agents[1].history = {{60, 3.5, 0.0, 6}};
  const auto sets = sets_for(ctx, small_profile(4));
  PlanningContext swapped = ctx;
  std::swap(swapped.agents[0], swapped.agents[1]);
  const std::vector<CandidateSet> swapped_sets{sets[0], sets[2], sets[1]};
  const auto w = EnergyWeights::defaults();
  for (std::size_t e = 0; e < 4; ++e) {
    for (std::size_t a = 0; a < 4; ++a) {
      for (std::size_t b = 0; b < 4; ++b) {
        const std::vector<std::size_t> x{e, a, b}, y{e, b, a};
        CHECK(joint_energy(x, ctx, sets, w) == doctest::Approx(joint_energy(y, swapped, swapped_sets, w)));
      }
    }
  }
}

TEST_CASE("energy tables drop only exactly-zero pair tables") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const auto ctx = toy_context(rng, 4);
    const auto sets = sets_for(ctx, small_profile(6));
    const auto w = EnergyWeights::defaults();
    const auto t = build_energy_tables(ctx, sets, w);
    for (std::size_t i = 1; i < 5; ++i) {
      for (std::size_t j = i + 1; j < 5; ++j) {
        const EnergyTables::PairTable* kept = nullptr;
        for (const auto& p : t.agent_pairs) {
          if (p.i == i && p.j == j) kept = &p;
        }
        for (std::size_t a = 0; a < 6; ++a) {
          for (std::size_t b = 0; b < 6; ++b) {
            const double e = safety_energy(sets[i][a], ctx.participant(i).box, sets[j][b],
                                           ctx.participant(j).box, speeds_of(sets[i][a]), w.safety);
            CHECK(e == (kept ? kept->values[a * 6 + b] : 0.0));
          }
        }
      }
    }
  }
}

TEST_CASE("weights validation") {
  EnergyWeights w = EnergyWeights::defaults();
  w.w.pop_back();
  CHECK_THROWS_AS(w.validate(), ShapeError);
  w = EnergyWeights::defaults();
  w.w[0] = std::nan("");
  CHECK_THROWS_AS(w.validate(), NumericError);
  CHECK(EnergyWeights::privileged_defaults().privileged());
  CHECK(feature_name(7) == "hint_speed");
  CHECK(feature_index("curvature") == std::optional<std::size_t>(4));
}
