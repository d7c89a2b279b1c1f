#include <doctest.h>

#include <cmath>
#include <numbers>

#include "formation/error.hpp"
#include "formation/metrics.hpp"
#include "formation/simulator.hpp"
#include "support/synthetic.hpp"

using namespace formation;

namespace {

const ContextModels& chain_models() {
  static const ContextModels cm = [] {
    PipelineConfig cfg;
    cfg.n_hidden = 8;
    cfg.train.max_epochs = 120;
    return train_context(testsupport::chain_dataset(300, 21), testsupport::chain_graph(), cfg, "Play");
  }();
  return cm;
}

ModelBundle bundle_of(std::initializer_list<std::string> contexts) {
  ModelBundle b;
  for (const auto& c : contexts) {
    b.contexts[c] = chain_models();
    b.contexts[c].context = c;
  }
  return b;
}

ContextSet single(const std::string& c = "Play") { return {{c}, c, {}}; }

double angle_deg(Point2 a, Point2 b) {
  const double c = (a.x * b.x + a.y * b.y) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

ScenarioTrace path_trace(const std::vector<Point2>& path) {
  ScenarioTrace t;
  t.agents = {"a"};
  t.initial_positions = {path.front()};
  for (std::size_t i = 1; i < path.size(); ++i) {
    CycleRecord r;
    r.cycle = i - 1;
    r.positions = {path[i]};
    r.targets = {path[i]};
    r.context = "x";
    t.cycles.push_back(r);
  }
  return t;
}

}  // namespace

TEST_CASE("identical seeds give identical traces") {
  ScenarioConfig cfg;
  cfg.cycles = 120;
  cfg.ball_velocity = {2.0, 1.0};
  cfg.noise = 0.15;
  cfg.chase = true;
  cfg.seed = 1;
  const auto a = run_scenario(bundle_of({"Play"}), single(), cfg);
  const auto b = run_scenario(bundle_of({"Play"}), single(), cfg);
  CHECK(a == b);
  cfg.seed = 2;
  CHECK_FALSE(run_scenario(bundle_of({"Play"}), single(), cfg) == a);
}

TEST_CASE("every displacement respects the speed cap") {
  ScenarioConfig cfg;
  cfg.cycles = 200;
  cfg.ball_velocity = {3.0, -1.5};
  cfg.noise = 0.3;
  cfg.chase = true;
  cfg.initial_positions = {{"L", {-40, 20}}, {"F", {30, -20}}};
  const auto t = run_scenario(bundle_of({"Play"}), single(), cfg);
  REQUIRE(t.cycles.size() == 200);
  std::vector<Point2> prev = t.initial_positions;
  CHECK(prev[0] == Point2{30, -20});  // agents are sorted: F, L
  for (const auto& r : t.cycles) {
    for (std::size_t i = 0; i < prev.size(); ++i) CHECK(distance(prev[i], r.positions[i]) <= 0.5 + 1e-9);
    prev = r.positions;
  }
}

TEST_CASE("static ball: agents settle on their targets") {
  ScenarioConfig cfg;
  cfg.ball_start = {10, 5};
  cfg.initial_positions = {{"L", {-52.5, -34}}, {"F", {52.5, 34}}};
  const double diagonal = std::hypot(105.0, 68.0);
  cfg.cycles = static_cast<std::size_t>(std::ceil(diagonal / 0.5)) + 1;
  const auto t = run_scenario(bundle_of({"Play"}), single(), cfg);
  const auto& last = t.cycles.back();
  const auto& before = t.cycles[t.cycles.size() - 2];
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(last.positions[i] == last.targets[i]);
    CHECK(distance(last.positions[i], before.positions[i]) == 0.0);
  }
}

TEST_CASE("ball speed decays geometrically until it stops") {
  ScenarioConfig cfg;
  cfg.cycles = 150;
  cfg.ball_velocity = {2.0, 0.0};
  const auto t = run_scenario(bundle_of({"Play"}), single(), cfg);
  Point2 prev = cfg.ball_start;
  double prev_speed = -1.0;
  bool stopped = false;
  for (const auto& r : t.cycles) {
    const double speed = distance(prev, r.ball);
    if (prev_speed > 0.0) {
      if (speed > 0.0) {
        CHECK_FALSE(stopped);
        CHECK(speed == doctest::Approx(prev_speed * 0.94).epsilon(1e-9));
      } else {
        stopped = true;
        CHECK(prev_speed * 0.94 < 0.01);
      }
    }
    prev_speed = speed;
    prev = r.ball;
    CHECK(r.perceived_ball == r.ball);
  }
  CHECK(stopped);
}

TEST_CASE("the chaser is the agent nearest the perceived ball") {
  ScenarioConfig cfg;
  cfg.cycles = 100;
  cfg.ball_velocity = {-2.0, 1.0};
  cfg.noise = 0.5;
  cfg.chase = true;
  cfg.seed = 4;
  cfg.initial_positions = {{"L", {0, 0}}, {"F", {0, 0}}};
  const auto t = run_scenario(bundle_of({"Play"}), single(), cfg);
  std::vector<Point2> prev = t.initial_positions;
  for (const auto& r : t.cycles) {
    REQUIRE(r.chaser.has_value());
    std::size_t best = 0;
    for (std::size_t i = 1; i < prev.size(); ++i) {
      if (distance(prev[i], r.perceived_ball) < distance(prev[best], r.perceived_ball)) best = i;
    }
    CHECK(*r.chaser == best);
    prev = r.positions;
  }
  CHECK(*t.cycles.front().chaser == 0);  // tie at the start goes to the first id
}

TEST_CASE("the active context selects the models") {
  ModelBundle b = bundle_of({"Attack", "Defense"});
  for (auto& [id, a] : b.contexts.at("Defense").agents) {
    a.model = MlpModel::zeros(a.model.spec);
    a.model.b2 << -40.0, 0.0;
  }
  const ContextSet cs{{"Attack", "Defense"},
                      "Attack",
                      {{"Attack", "Defense", 1, Predicate::threshold(Predicate::Op::Lt, "ball_x", -10.0), false}}};
  ScenarioConfig cfg;
  cfg.cycles = 60;
  cfg.ball_start = {0, 0};
  cfg.ball_velocity = {-2.0, 0.0};
  const auto t = run_scenario(b, cs, cfg);
  CHECK(t.cycles.front().context == "Attack");
  CHECK(t.cycles.back().context == "Defense");
  CHECK(t.cycles.back().targets[0] == Point2{-40.0, 0.0});

  CHECK_THROWS_AS(run_scenario(bundle_of({"Attack"}), cs, cfg), NotFoundError);
  ScenarioConfig bad = cfg;
  bad.max_speed = 0.0;
  CHECK_THROWS_AS(run_scenario(b, cs, bad), InvariantError);
  bad = cfg;
  bad.noise = -1.0;
  CHECK_THROWS_AS(run_scenario(b, cs, bad), InvariantError);
}

TEST_CASE("straight line and square paths") {
  std::vector<Point2> line;
  for (int i = 0; i < 10; ++i) line.push_back({0.3 * i, 0.1 * i});
  const auto s = smoothness(path_trace(line));
  CHECK(s.angle_mean == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(s.angle_samples == 8);

  const std::vector<Point2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}, {1, 0}};
  const auto q = smoothness(path_trace(square));
  CHECK(q.angle_mean == doctest::Approx(90.0));
  CHECK(q.angle_stddev == doctest::Approx(0.0));
  CHECK(q.distance_mean == doctest::Approx(1.0));
}

TEST_CASE("smoothness matches a direct loop on random walks") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point2> path{{0, 0}};
    for (int i = 0; i < 60; ++i) {
      // some zero and tiny moves exercise the filter
      const double r = rng.uniform();
      const Point2 step = r < 0.1 ? Point2{} : r < 0.15 ? Point2{1e-8, 0} : Point2{rng.normal(), rng.normal()};
      path.push_back(path.back() + step);
    }
    std::vector<double> angles, dists;
    for (std::size_t i = 1; i < path.size(); ++i) dists.push_back(distance(path[i], path[i - 1]));
    for (std::size_t i = 2; i < path.size(); ++i) {
      const Point2 a = path[i - 1] - path[i - 2], b = path[i] - path[i - 1];
      if (a.norm() > 1e-6 && b.norm() > 1e-6) angles.push_back(angle_deg(a, b));
    }
    double am = 0, dm = 0;
    for (double a : angles) am += a;
    for (double d : dists) dm += d;
    am /= angles.size();
    dm /= dists.size();
    double av = 0;
    for (double a : angles) av += (a - am) * (a - am);
    const auto s = smoothness(path_trace(path));
    CHECK(s.angle_samples == angles.size());
    CHECK(std::abs(s.angle_mean - am) < 1e-9);
    CHECK(std::abs(s.angle_stddev - std::sqrt(av / angles.size())) < 1e-9);
    CHECK(std::abs(s.distance_mean - dm) < 1e-9);
    CHECK(s.angle_mean_unfiltered >= 0.0);
    CHECK(s.angle_mean <= 180.0);
  }
}

TEST_CASE("perception noise roughens movement but not its length") {
  const ModelBundle b = bundle_of({"Play"});
  std::vector<ScenarioTrace> clean, noisy;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    ScenarioConfig cfg;
    cfg.cycles = 80;
    cfg.ball_velocity = {3.0, 1.0};
    cfg.seed = derive_seed(7, rep);
    clean.push_back(run_scenario(b, single(), cfg));
    cfg.noise = 0.15;
    noisy.push_back(run_scenario(b, single(), cfg));
  }
  const auto c = smoothness(clean);
  const auto n = smoothness(noisy);
  CHECK(n.angle_mean > c.angle_mean);
  CHECK(std::abs(n.distance_mean - c.distance_mean) < 0.1 * c.distance_mean);
}

TEST_CASE("robustness sweep") {
  const ContextModels& cm = chain_models();
  const Dataset d = testsupport::chain_dataset(300, 21);
  const std::vector<double> levels{0.0, 0.15, 0.3};
  const auto table = robustness_sweep(cm, d, cm.split.test, levels, 3, 4);
  REQUIRE(table.size() == 3);
  const auto plain = evaluate_composed(cm, d, cm.split.test);
  CHECK(table[0].mean_error == plain.overall.mean);
  CHECK(table[0].error_stddev == plain.overall.stddev);
  CHECK(table[2].mean_error > table[0].mean_error);
  const auto again = robustness_sweep(cm, d, cm.split.test, levels, 3, 4);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again[i].mean_error == table[i].mean_error);
  const auto variance = robustness_sweep(cm, d, cm.split.test, std::vector<double>{0.09}, 3, 4, true);
  const auto stddev = robustness_sweep(cm, d, cm.split.test, std::vector<double>{0.3}, 3, 4);
  CHECK(variance[0].mean_error == doctest::Approx(stddev[0].mean_error).epsilon(1e-9));
  CHECK_THROWS_AS(robustness_sweep(cm, d, cm.split.test, std::vector<double>{}, 0), InvariantError);
}

TEST_CASE("observed datasets") {
  const auto policy = attraction_policy(default_homes());
  CHECK(policy.agents.size() == 11);
  const auto sampler = uniform_ball_sampler(FieldConfig{}, 1.0);
  const Dataset a = observe_policy(policy, sampler, 50, 9);
  const Dataset b = observe_policy(policy, sampler, 50, 9);
  CHECK(dataset_to_canonical(a) == dataset_to_canonical(b));
  CHECK(a.feature_rows == std::vector<std::string>{"ball_x", "ball_y"});
  for (const auto& s : a.snapshots) {
    CHECK(std::abs(s.features[0]) <= 51.5);
    // a7: home (-10, 0), attraction 0.5
    CHECK(distance(s.targets[6], Point2{-10, 0} + 0.5 * (Point2{s.features[0], s.features[1]} - Point2{-10, 0})) < 1e-12);
  }
  testsupport::TempDir dir("obs");
  save_dataset(a, dir / "o.json");
  CHECK(dataset_to_canonical(load_dataset(dir / "o.json")) == dataset_to_canonical(a));

  const ReferencePolicy broken{{"a"}, [](Point2) { return std::vector<Point2>{{std::nan(""), 0}}; }};
  CHECK_THROWS_AS(observe_policy(broken, sampler, 3, 0), InvariantError);
  const ReferencePolicy short_policy{{"a", "b"}, [](Point2) { return std::vector<Point2>{{0, 0}}; }};
  CHECK_THROWS_AS(observe_policy(short_policy, sampler, 3, 0), InvariantError);
  CHECK_THROWS_AS(observe_policy(policy, sampler, 0, 0), InvariantError);
}

TEST_CASE("a constant policy is learned exactly") {
  const auto policy = constant_policy({"a", "b"}, {{-30, 5}, {12, -8}});
  const Dataset d = observe_policy(policy, uniform_ball_sampler(FieldConfig{}), 100, 2);
  for (const auto& s : d.snapshots) CHECK(s.targets[1] == Point2{12, -8});
  DependencyGraph g;
  g.nodes = {{"ball", NodeKind::Feature, {"ball_x", "ball_y"}},
             {"a", NodeKind::Agent, {"a_x", "a_y"}},
             {"b", NodeKind::Agent, {"b_x", "b_y"}}};
  g.edges = {{"ball", "a"}, {"a", "b"}};
  PipelineConfig cfg;
  cfg.n_hidden = 4;
  cfg.train.max_epochs = 50;
  const ContextModels cm = train_context(d, g, cfg);
  CHECK(evaluate_composed(cm, d, cm.split.test).overall.mean < 1e-3);
}

TEST_CASE("trace output formats") {
  ScenarioConfig cfg;
  cfg.cycles = 5;
  cfg.ball_velocity = {1.0, 0.0};
  cfg.chase = true;
  const auto t = run_scenario(bundle_of({"Play"}), single(), cfg);
  const std::string csv = trace_to_csv(t);
  CHECK(csv.rfind("cycle,ball_x,ball_y,perceived_x,perceived_y,F_x,F_y,F_target_x,F_target_y,L_x,L_y,L_target_x,L_target_y,context,chaser\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(trace_from_json(trace_to_json(t)) == t);
  const std::string svg = trace_to_svg(t);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  const Dataset d = testsupport::chain_dataset(20, 1);
  CHECK(ball_positions_svg(d, split_dataset(d, {}, 0)).find("<circle") != std::string::npos);
}
