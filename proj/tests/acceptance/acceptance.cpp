// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "formation/assignment.hpp"
#include "formation/context.hpp"
#include "formation/depgraph.hpp"
#include "formation/error.hpp"
#include "formation/metrics.hpp"
#include "formation/mlp.hpp"
#include "formation/pipeline.hpp"
#include "formation/project.hpp"
#include "formation/simulator.hpp"
#include "support/brute_force.hpp"
#include "support/random_graphs.hpp"
#include "support/synthetic.hpp"

using namespace formation;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void info(const std::string& s) { std::printf("INFO %s\n", s.c_str()); }

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

Outcome hungarian() {
  Rng rng(101);
  std::vector<WeightMatrix> ms;
  for (int t = 0; t < 200; ++t) {
    WeightMatrix w(6, 8);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 8; ++j) w.at(i, j) = rng.uniform(-100.0, 100.0);
    ms.push_back(w);
  }
  const auto t0 = Clock::now();
  std::vector<Assignment> got;
  for (const auto& w : ms) got.push_back(solve_assignment(w));
  const double solve_s = seconds_since(t0);
  int mismatches = 0;
  for (std::size_t t = 0; t < ms.size(); ++t) {
    if (got[t].total != testsupport::brute_force_assignment(ms[t]).best) ++mismatches;
  }
  const double total_s = seconds_since(t0);
  return {mismatches == 0 && total_s < 5.0,
          fmt("200 6x8 matrices, %d mismatches vs brute force, solver %.4f s, with brute force %.2f s (limit 5 s)",
              mismatches, solve_s, total_s)};
}

Outcome metric_bound() {
  Rng rng(102);
  int bound_violations = 0, oracle_misses = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.index(60);
    const double scale = std::pow(10.0, rng.uniform(-3, 2));
    std::vector<Point2> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = {rng.uniform(-52.5, 52.5), rng.uniform(-34, 34)};
      b[i] = a[i] + Point2{rng.normal(0, scale), rng.normal(0, scale)};
    }
    double sum = 0, sq = 0, mx = 0;
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = a[i].x - b[i].x, dy = a[i].y - b[i].y;
      dist[i] = std::sqrt(dx * dx + dy * dy);
      sum += dist[i];
      sq += dx * dx + dy * dy;
      mx = std::max(mx, dist[i]);
    }
    const double mean = sum / static_cast<double>(n);
    double var = 0;
    for (double d : dist) var += (d - mean) * (d - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    const double e = metric_E(a, b), sse = metric_SSE(a, b);
    if (!(e <= std::sqrt(sse / static_cast<double>(n)))) ++bound_violations;
    if (!close_rel(e, mean, 1e-12) || !close_rel(sse, sq, 1e-12) || !close_rel(metric_max_error(a, b), mx, 1e-12) ||
        !close_rel(metric_error_stddev(a, b), sd, 1e-12)) {
      ++oracle_misses;
    }
  }
  return {bound_violations == 0 && oracle_misses == 0,
          fmt("1000 sets, %d violations of E <= sqrt(SSE/N), %d oracle mismatches at 1e-12", bound_violations,
              oracle_misses)};
}

MlpModel random_model(Rng& rng, const MlpSpec& spec) {
  MlpModel m = MlpModel::zeros(spec);
  Eigen::VectorXd theta(static_cast<Eigen::Index>(parameter_count(spec)));
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = rng.uniform(-1.5, 1.5);
  set_parameters(m, theta);
  for (std::size_t d = 0; d < spec.n_in; ++d) {
    m.input_norm.center(d) = rng.uniform(-10, 10);
    m.input_norm.half_range(d) = rng.uniform(1, 20);
  }
  for (std::size_t d = 0; d < spec.n_out; ++d) {
    m.output_norm.center(d) = rng.uniform(-10, 10);
    m.output_norm.half_range(d) = rng.uniform(1, 20);
  }
  return m;
}

Outcome lm_correctness() {
  Rng rng(103);
  double worst_fd = 0.0;
  for (int t = 0; t < 50; ++t) {
    const MlpSpec spec{1 + rng.index(3), 1 + rng.index(4), 1 + rng.index(3)};
    MlpModel m = random_model(rng, spec);
    Eigen::MatrixXd x(4, static_cast<Eigen::Index>(spec.n_in));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(-20, 20);
    const Eigen::MatrixXd j = jacobian(m, x);
    const Eigen::VectorXd theta = get_parameters(m);
    const double h = 1e-5;
    for (Eigen::Index p = 0; p < theta.size(); ++p) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp(p) += h;
      tm(p) -= h;
      set_parameters(m, tp);
      const Eigen::MatrixXd yp = predict(m, x);
      set_parameters(m, tm);
      const Eigen::MatrixXd ym = predict(m, x);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(spec.n_out); ++k) {
          const double fd = (yp(i, k) - ym(i, k)) / (2 * h);
          const double an = j(i * static_cast<Eigen::Index>(spec.n_out) + k, p);
          worst_fd = std::max(worst_fd, std::abs(fd - an) / std::max(1.0, std::abs(an)));
        }
      }
    }
  }

  double worst_ne = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index rows = 40, cols = 1 + static_cast<Eigen::Index>(rng.index(8));
    Eigen::MatrixXd j(rows, cols);
    Eigen::VectorXd e(rows);
    for (Eigen::Index i = 0; i < j.size(); ++i) j(i) = rng.normal();
    for (Eigen::Index i = 0; i < rows; ++i) e(i) = rng.normal();
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd normal = jtj.llt().solve(j.transpose() * e);
    worst_ne = std::max(worst_ne, (lm_step(j, e, 1e-14) - normal).cwiseAbs().maxCoeff());
  }

  int sse_increases = 0;
  std::size_t epochs = 0;
  for (int t = 0; t < 5; ++t) {
    Eigen::MatrixXd x(150, 2), y(150, 2);
    for (Eigen::Index i = 0; i < 150; ++i) {
      x(i, 0) = rng.uniform(-50, 50);
      x(i, 1) = rng.uniform(-30, 30);
      y(i, 0) = std::sin(x(i, 0) / 10) * 8 + rng.normal(0, 0.3);
      y(i, 1) = x(i, 0) * x(i, 1) / 100;
    }
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(t);
    const auto [m, r] = train_mlp({2, 10, 2}, x, y, split_indices(150, {}, t), cfg);
    epochs += r.train_sse.size();
    for (std::size_t i = 1; i < r.train_sse.size(); ++i) sse_increases += r.train_sse[i] > r.train_sse[i - 1];
  }
  return {worst_fd <= 1e-4 && worst_ne <= 1e-6 && sse_increases == 0,
          fmt("Jacobian vs central differences %.2e (limit 1e-4), mu->0 step vs normal equations %.2e (limit 1e-6), "
              "%d SSE increases over %zu accepted epochs",
              worst_fd, worst_ne, sse_increases, epochs)};
}

PipelineConfig full_config(std::uint64_t seed = 0) {
  PipelineConfig cfg;
  cfg.n_hidden = 36;
  cfg.seed = seed;
  return cfg;
}

Outcome pipeline_fidelity() {
  const Dataset d = testsupport::chain_dataset(800, 1);
  const auto t0 = Clock::now();
  const ContextModels cm = train_context(d, testsupport::chain_graph(), full_config());
  const double secs = seconds_since(t0);
  const double el = cm.agents.at("L").composed_test.mean, ef = cm.agents.at("F").composed_test.mean;
  const bool split_ok = cm.split.train.size() == 560 && cm.split.val.size() == 80 && cm.split.test.size() == 160;
  bool fidelity = el < 0.1 && ef < 0.1 && secs < 60.0 && split_ok;

  std::vector<double> sweep;
  std::string row;
  for (std::size_t h : {4, 8, 16, 36}) {
    PipelineConfig cfg = full_config();
    cfg.n_hidden = h;
    const ContextModels m = train_context(d, testsupport::chain_graph(), cfg);
    sweep.push_back(evaluate_composed(m, d, m.split.test).overall.mean);
    row += fmt(" h=%zu:%.4f", h, sweep.back());
  }
  bool plateau = true;
  for (std::size_t i = 1; i < sweep.size(); ++i) plateau = plateau && sweep[i] <= sweep[i - 1] + 0.01;
  return {fidelity && plateau,
          fmt("800 snapshots, 36 hidden, split %zu/%zu/%zu: E(L)=%.4f E(F)=%.4f (limit 0.1) in %.1f s (limit 60); "
              "sweep%s, non-increasing within 0.01 m: %s",
              cm.split.train.size(), cm.split.val.size(), cm.split.test.size(), el, ef, secs, row.c_str(),
              plateau ? "yes" : "no")};
}

Outcome propagation_ablation() {
  int wins = 0;
  double sum_with = 0.0, sum_without = 0.0;
  std::string row;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset d = testsupport::chain_dataset(800, seed);
    PipelineConfig with = full_config(seed);
    with.hidden_overrides["L"] = 1;
    PipelineConfig without = with;
    without.propagate_estimates = false;
    const double a = train_context(d, testsupport::chain_graph(), with).agents.at("F").composed_test.mean;
    const double b = train_context(d, testsupport::chain_graph(), without).agents.at("F").composed_test.mean;
    wins += a <= b;
    sum_with += a;
    sum_without += b;
    row += fmt(" %.3f/%.3f", a, b);
  }
  info(fmt("propagation ablation mean over seeds: with %.4f, without %.4f", sum_with / 10, sum_without / 10));
  return {wins == 10, fmt("crippled leader (1 hidden unit), follower E with/without propagation:%s; %d/10 seeds with <= without",
                          row.c_str(), wins)};
}

ContextModels observed_team(double* secs) {
  const Dataset d = observe_policy(attraction_policy(default_homes()), uniform_ball_sampler(FieldConfig{}), 1000, 7);
  const auto t0 = Clock::now();
  ContextModels cm = train_context(d, team_graph(), full_config(7));
  *secs = seconds_since(t0);
  return cm;
}

Outcome learning_from_observation(const ContextModels& cm, double secs) {
  const Dataset d = observe_policy(attraction_policy(default_homes()), uniform_ball_sampler(FieldConfig{}), 1000, 7);
  const auto ev = evaluate_composed(cm, d, cm.split.test);
  double worst = 0.0;
  std::string worst_id;
  for (const auto& [id, s] : ev.per_agent) {
    if (s.mean > worst) {
      worst = s.mean;
      worst_id = id;
    }
  }
  return {ev.overall.mean < 0.05 && secs < 120.0,
          fmt("11 agents, 1000 observed samples: test E=%.4f (limit 0.05), worst agent %s %.4f, trained in %.1f s "
              "(limit 120)",
              ev.overall.mean, worst_id.c_str(), worst, secs)};
}

Outcome simulator_physics(const ContextModels& cm) {
  ModelBundle b;
  b.contexts["Play"] = cm;
  b.contexts["Play"].context = "Play";
  const ContextSet cs{{"Play"}, "Play", {}};

  bool deterministic = true;
  double max_step = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ScenarioConfig cfg;
    cfg.cycles = 300;
    cfg.ball_velocity = {2.5, -1.0};
    cfg.noise = 0.3;
    cfg.chase = true;
    cfg.seed = seed;
    cfg.initial_positions = {{"a1", {50, 30}}, {"a10", {-50, -30}}};
    const ScenarioTrace t = run_scenario(b, cs, cfg);
    deterministic = deterministic && t == run_scenario(b, cs, cfg);
    std::vector<Point2> prev = t.initial_positions;
    for (const auto& r : t.cycles) {
      for (std::size_t i = 0; i < prev.size(); ++i) max_step = std::max(max_step, distance(prev[i], r.positions[i]));
      prev = r.positions;
    }
  }

  ScenarioConfig still;
  still.ball_start = {-20, 12};
  for (const auto& id : cm.order) still.initial_positions[id] = {52.5, -34};
  still.cycles = static_cast<std::size_t>(std::ceil(std::hypot(105.0, 68.0) / 0.5)) + 2;
  const ScenarioTrace t = run_scenario(b, cs, still);
  double last_move = 0.0;
  const auto& last = t.cycles.back().positions;
  const auto& before = t.cycles[t.cycles.size() - 2].positions;
  for (std::size_t i = 0; i < last.size(); ++i) last_move += distance(last[i], before[i]);

  return {deterministic && max_step <= 0.5 + 1e-9 && last_move == 0.0,
          fmt("identical traces for identical seeds: %s; largest displacement %.6f m/cycle (limit 0.5); "
              "static ball: total movement %.3g m in cycle %zu",
              deterministic ? "yes" : "no", max_step, last_move, t.cycles.size())};
}

std::vector<RobustnessRow> sweep_for(const Dataset& d, std::uint64_t seed) {
  const ContextModels cm = train_context(d, testsupport::chain_graph(), full_config(seed));
  const std::vector<double> levels{0.0, 0.15, 0.3, 0.45, 0.6};
  return robustness_sweep(cm, d, cm.split.test, levels, seed, 20);
}

Outcome noise_robustness() {
  const auto rows = sweep_for(testsupport::noisy_chain_dataset(800, 11), 11);
  bool monotone = true;
  std::string row;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) monotone = monotone && rows[i].mean_error >= rows[i - 1].mean_error;
    row += fmt(" %.2f:%.4f", rows[i].noise, rows[i].mean_error);
  }
  const double ratio = rows.back().mean_error / rows.front().mean_error;

  const auto plain = sweep_for(testsupport::chain_dataset(800, 11), 11);
  info(fmt("noise robustness on the noise-free chain: E(0)=%.4f E(0.6)=%.4f ratio %.2f", plain.front().mean_error,
           plain.back().mean_error, plain.back().mean_error / plain.front().mean_error));

  return {monotone && ratio <= 1.25,
          fmt("demonstration chain with 0.5 m placement noise, 20 noise draws per level, E by stddev:%s; "
              "non-decreasing: %s; E(0.6)/E(0)=%.3f (limit 1.25)",
              row.c_str(), monotone ? "yes" : "no", ratio)};
}

Outcome graph_laws() {
  Rng rng(104);
  int order_violations = 0, missed_cycles = 0, injected = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto dag = testsupport::random_dag(rng, 12);
    if (!validate_graph(dag.graph).empty()) {
      ++order_violations;
      continue;
    }
    const auto order = training_order(dag.graph);
    const auto reach = testsupport::reachability(dag);
    auto pos = [&](const std::string& id) { return std::find(order.begin(), order.end(), id) - order.begin(); };
    for (std::size_t i = 0; i < dag.ids.size(); ++i)
      for (std::size_t j = 0; j < dag.ids.size(); ++j)
        if (reach[i][j] && dag.ids[i][0] == 'n' && pos(dag.ids[i]) >= pos(dag.ids[j])) ++order_violations;
    for (std::size_t i = 0; i < dag.ids.size(); ++i) {
      for (std::size_t j = 0; j < dag.ids.size(); ++j) {
        if (!reach[j][i] || dag.ids[j][0] != 'n') continue;
        DependencyGraph cyclic = dag.graph;
        cyclic.edges.push_back({dag.ids[i], dag.ids[j]});
        ++injected;
        const auto ds = validate_graph(cyclic);
        if (std::none_of(ds.begin(), ds.end(), [](const Diagnostic& d) { return d.code == "cycle"; })) ++missed_cycles;
      }
    }
  }
  return {order_violations == 0 && missed_cycles == 0 && injected > 0,
          fmt("1000 random DAGs up to 12 nodes: %d order violations; %d of %d injected cycles missed", order_violations,
              missed_cycles, injected)};
}

Outcome context_engine() {
  const ContextSet cs = load_context_set(std::string(FORMATION_SOURCE_DIR) + "/data/soccer_contexts.json");
  auto walk = [&](std::uint64_t seed, int& invalid) {
    Rng rng(seed);
    std::vector<ContextId> path;
    ContextId active = cs.initial;
    for (int i = 0; i < 10000; ++i) {
      const FeatureMap f{{"ball_x", rng.uniform(-60, 60)}, {"ball_y", rng.uniform(-40, 40)}};
      active = step_context(cs, active, f);
      invalid += std::count(cs.contexts.begin(), cs.contexts.end(), active) != 1;
      path.push_back(active);
    }
    return path;
  };
  int invalid = 0;
  const auto a = walk(105, invalid);
  const auto b = walk(105, invalid);
  std::set<ContextId> visited(a.begin(), a.end());

  const ContextSet quiet{{"Only"}, "Only", {}};
  Rng rng(106);
  ContextId q = quiet.initial;
  bool quiescent = true;
  for (int i = 0; i < 10000; ++i) {
    q = step_context(quiet, q, {{"ball_x", rng.uniform(-60, 60)}});
    quiescent = quiescent && q == "Only";
  }
  return {invalid == 0 && a == b && quiescent,
          fmt("10000 random steps: %d steps without exactly one active context, %zu of %zu contexts visited, "
              "replay identical: %s, empty rule set quiescent: %s",
              invalid, visited.size(), cs.contexts.size(), a == b ? "yes" : "no", quiescent ? "yes" : "no")};
}

Outcome pso_sanity() {
  int found = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PsoConfig cfg;
    cfg.bounds = {{-5, 5}, {-5, 5}};
    cfg.iterations = 100;
    cfg.seed = seed;
    const PsoResult r = pso_maximize(
        [](std::span<const double> x) {
          double s = 0.0;
          for (double v : x) s -= (v - 1.0) * (v - 1.0);
          return s;
        },
        cfg);
    double err = 0.0;
    for (double v : r.best) err = std::max(err, std::abs(v - 1.0));
    worst = std::max(worst, err);
    found += err <= 0.05;
  }
  return {found == 10, fmt("2-D sphere, 100 iterations: %d/10 seeds within 0.05 of the optimum (worst %.2e)", found, worst)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  };

  report("hungarian-optimality", hungarian);
  report("metric-bound", metric_bound);
  report("lm-correctness", lm_correctness);
  report("pipeline-fidelity", pipeline_fidelity);
  report("propagation-ablation", propagation_ablation);

  double lfo_secs = 0.0;
  std::optional<ContextModels> team;
  try {
    team = observed_team(&lfo_secs);
  } catch (const std::exception& e) {
    info(std::string("observed team training threw: ") + e.what());
  }
  report("learning-from-observation", [&] {
    if (!team) return Outcome{false, "training failed"};
    return learning_from_observation(*team, lfo_secs);
  });
  report("simulator-physics", [&] {
    if (!team) return Outcome{false, "no trained team"};
    return simulator_physics(*team);
  });

  report("noise-robustness", noise_robustness);
  report("graph-laws", graph_laws);
  report("context-engine", context_engine);
  report("pso-sanity", pso_sanity);

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
