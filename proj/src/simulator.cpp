#include "formation/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

#include "formation/error.hpp"
#include "formation/features.hpp"
#include "formation/metrics.hpp"

namespace formation {

void validate_scenario_config(const ScenarioConfig& c) {
  if (c.cycles == 0) throw InvariantError("scenario needs at least one cycle");
  if (!(c.max_speed > 0.0)) throw InvariantError("max speed must be positive");
  if (!(c.noise >= 0.0)) throw InvariantError("noise must be non-negative");
  if (!(c.ball_decay >= 0.0 && c.ball_decay <= 1.0)) throw InvariantError("ball decay must lie in [0, 1]");
  if (!(c.ball_stop_speed >= 0.0)) throw InvariantError("ball stop speed must be non-negative");
  if (!c.ball_start.finite() || !c.ball_velocity.finite()) throw InvariantError("ball state must be finite");
}

namespace {

Point2 step_toward(Point2 from, Point2 goal, double max_speed) {
  const Point2 d = goal - from;
  const double len = d.norm();
  if (len <= max_speed) return goal;
  return from + (max_speed / len) * d;
}

std::vector<std::string> feature_names(const ModelBundle& models, const ContextSet& cs) {
  std::set<std::string> names = cs.referenced_features();
  for (const auto& [_, cm] : models.contexts) {
    for (const auto& r : cm.required_features()) names.insert(r);
  }
  return {names.begin(), names.end()};
}

}  // namespace

ScenarioTrace run_scenario(const ModelBundle& models, const ContextSet& cs, const ScenarioConfig& cfg) {
  validate_scenario_config(cfg);
  validate_context_set(cs);
  for (const auto& c : cs.contexts) {
    if (!models.contexts.count(c)) throw NotFoundError("no models for context '" + c + "'");
  }
  ScenarioTrace trace;
  {
    const auto& first = models.contexts.at(cs.initial);
    for (const auto& [id, _] : first.agents) trace.agents.push_back(id);
    for (const auto& c : cs.contexts) {
      std::vector<NodeId> ids;
      for (const auto& [id, _] : models.contexts.at(c).agents) ids.push_back(id);
      if (ids != trace.agents) throw InvariantError("context '" + c + "' models a different agent set");
    }
  }
  const std::size_t n = trace.agents.size();
  const std::vector<std::string> schema = feature_names(models, cs);
  const ExtractorRegistry registry;
  const double sigma = cfg.noise_is_variance ? std::sqrt(cfg.noise) : cfg.noise;
  Rng rng(cfg.seed);
  History history(cfg.history_window);

  auto targets_for = [&](const ContextId& ctx, const FeatureMap& f) {
    const auto pred = predict_all(models.contexts.at(ctx), f);
    std::vector<Point2> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = pred.at(trace.agents[i]);
    return out;
  };

  Point2 ball = cfg.ball_start;
  Point2 velocity = cfg.ball_velocity;
  ContextId active = cs.initial;

  {
    History initial(cfg.history_window);
    initial.push({-1, {{"ball_x", ball.x}, {"ball_y", ball.y}}});
    const auto start_targets = targets_for(active, registry.extract(initial, schema).as_map());
    for (std::size_t i = 0; i < n; ++i) {
      auto it = cfg.initial_positions.find(trace.agents[i]);
      trace.initial_positions.push_back(it != cfg.initial_positions.end() ? it->second : start_targets[i]);
    }
  }
  std::vector<Point2> positions = trace.initial_positions;

  for (std::size_t c = 0; c < cfg.cycles; ++c) {
    CycleRecord rec;
    rec.cycle = c;
    ball = ball + velocity;
    velocity = cfg.ball_decay * velocity;
    if (velocity.norm() < cfg.ball_stop_speed) velocity = {};
    rec.ball = ball;

    Point2 seen = ball;
    if (sigma > 0.0) {
      seen.x += rng.normal(0.0, sigma);
      seen.y += rng.normal(0.0, sigma);
    }
    rec.perceived_ball = seen;

    history.push({static_cast<std::int64_t>(c), {{"ball_x", seen.x}, {"ball_y", seen.y}}});
    const FeatureMap features = registry.extract(history, schema).as_map();
    active = step_context(cs, active, features);
    rec.context = active;
    rec.targets = targets_for(active, features);

    if (cfg.chase) {
      std::size_t best = 0;
      double best_d = distance(positions[0], seen);
      for (std::size_t i = 1; i < n; ++i) {
        const double d = distance(positions[i], seen);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      rec.chaser = best;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 goal = (rec.chaser && *rec.chaser == i) ? ball : rec.targets[i];
      positions[i] = step_toward(positions[i], goal, cfg.max_speed);
    }
    rec.positions = positions;
    trace.cycles.push_back(std::move(rec));
  }
  return trace;
}

namespace {

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double stddev() const {
    if (n == 0) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - m * m));
  }
};

double angle_between(Point2 a, Point2 b) {
  const double cross = a.x * b.y - a.y * b.x;
  const double dot = a.x * b.x + a.y * b.y;
  return std::atan2(std::abs(cross), dot) * 180.0 / std::numbers::pi;
}

}  // namespace

SmoothnessReport smoothness(std::span<const ScenarioTrace> traces) {
  constexpr double kMinMove = 1e-6;
  Moments angle, angle_all, dist, team;
  for (const auto& t : traces) {
    const std::size_t n = t.agents.size();
    std::vector<Point2> prev_pos = t.initial_positions;
    std::vector<std::optional<Point2>> prev_move(n);
    for (const auto& rec : t.cycles) {
      double team_sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Point2 move = rec.positions[i] - prev_pos[i];
        const double len = move.norm();
        dist.add(len);
        team_sum += len;
        if (prev_move[i]) {
          const double prev_len = prev_move[i]->norm();
          if (len > 0.0 && prev_len > 0.0) {
            const double a = angle_between(*prev_move[i], move);
            angle_all.add(a);
            if (len > kMinMove && prev_len > kMinMove) angle.add(a);
          }
        }
        prev_move[i] = move;
      }
      team.add(team_sum);
      prev_pos = rec.positions;
    }
  }
  SmoothnessReport r;
  r.angle_mean = angle.mean();
  r.angle_stddev = angle.stddev();
  r.angle_samples = angle.n;
  r.angle_mean_unfiltered = angle_all.mean();
  r.angle_stddev_unfiltered = angle_all.stddev();
  r.distance_mean = dist.mean();
  r.distance_stddev = dist.stddev();
  r.team_distance_mean = team.mean();
  r.team_distance_stddev = team.stddev();
  return r;
}

SmoothnessReport smoothness(const ScenarioTrace& trace) {
  return smoothness(std::span<const ScenarioTrace>(&trace, 1));
}

std::vector<RobustnessRow> robustness_sweep(const ContextModels& cm, const Dataset& d,
                                            std::span<const std::size_t> columns,
                                            std::span<const double> noise_levels,
                                            std::uint64_t seed, std::size_t repetitions,
                                            bool noise_is_variance) {
  if (noise_levels.empty()) throw InvariantError("robustness sweep needs at least one noise level");
  if (columns.empty()) throw InvariantError("robustness sweep needs at least one column");
  if (repetitions == 0) throw InvariantError("robustness sweep needs at least one repetition");
  const DataMatrix m = matrix_view(d);
  const auto inputs = cm.required_features();

  std::vector<RobustnessRow> table;
  for (std::size_t level = 0; level < noise_levels.size(); ++level) {
    const double value = noise_levels[level];
    if (!(value >= 0.0)) throw InvariantError("noise levels must be non-negative");
    const double sigma = noise_is_variance ? std::sqrt(value) : value;
    if (sigma == 0.0) {
      const auto ev = evaluate_composed(cm, d, columns);
      table.push_back({value, ev.overall.mean, ev.overall.stddev});
      continue;
    }
    std::vector<Point2> targets, preds;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      Rng rng(derive_seed(derive_seed(seed, level), rep));
      for (std::size_t c : columns) {
        FeatureMap f = snapshot_features(d, c);
        for (const auto& name : inputs) f.at(name) += rng.normal(0.0, sigma);
        const auto pred = predict_all(cm, f);
        for (const auto& id : cm.order) {
          const auto& rows = cm.agents.at(id).output_rows;
          targets.push_back({m.at(m.row_index(rows[0]), c), m.at(m.row_index(rows[1]), c)});
          preds.push_back(pred.at(id));
        }
      }
    }
    table.push_back({value, metric_E(targets, preds), metric_error_stddev(targets, preds)});
  }
  return table;
}

ReferencePolicy attraction_policy(std::vector<HomePosition> homes) {
  ReferencePolicy p;
  for (const auto& h : homes) p.agents.push_back(h.agent);
  p.targets = [homes = std::move(homes)](Point2 ball) {
    std::vector<Point2> out;
    out.reserve(homes.size());
    for (const auto& h : homes) out.push_back(h.home + h.attraction * (ball - h.home));
    return out;
  };
  return p;
}

ReferencePolicy constant_policy(std::vector<std::string> agents, std::vector<Point2> targets) {
  if (agents.size() != targets.size()) throw InvariantError("constant policy needs one target per agent");
  ReferencePolicy p;
  p.agents = std::move(agents);
  p.targets = [targets = std::move(targets)](Point2) { return targets; };
  return p;
}

std::vector<HomePosition> default_homes() {
  return {
      {"a1", {-48.0, 0.0}, 0.10},
      {"a2", {-30.0, -22.0}, 0.40},
      {"a3", {-32.0, -8.0}, 0.40},
      {"a4", {-32.0, 8.0}, 0.40},
      {"a5", {-30.0, 22.0}, 0.40},
      {"a6", {-12.0, -15.0}, 0.50},
      {"a7", {-10.0, 0.0}, 0.50},
      {"a8", {-12.0, 15.0}, 0.50},
      {"a9", {8.0, -18.0}, 0.60},
      {"a10", {10.0, 0.0}, 0.60},
      {"a11", {8.0, 18.0}, 0.60},
  };
}

BallSampler uniform_ball_sampler(const FieldConfig& field, double margin) {
  const double hx = field.length / 2.0 - margin;
  const double hy = field.width / 2.0 - margin;
  if (!(hx > 0.0 && hy > 0.0)) throw InvariantError("sampler margin leaves no field area");
  return [hx, hy](Rng& rng) { return Point2{rng.uniform(-hx, hx), rng.uniform(-hy, hy)}; };
}

Dataset observe_policy(const ReferencePolicy& policy, const BallSampler& sampler, std::size_t n,
                       std::uint64_t seed, const FieldConfig& field) {
  if (n == 0) throw InvariantError("observation needs at least one sample");
  Dataset d;
  d.field = field;
  d.feature_rows = {"ball_x", "ball_y"};
  d.agent_rows = policy.agents;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 ball = sampler(rng);
    auto targets = policy.targets(ball);
    if (targets.size() != policy.agents.size()) {
      throw InvariantError("policy returned " + std::to_string(targets.size()) + " targets for " +
                           std::to_string(policy.agents.size()) + " agents");
    }
    for (const auto& t : targets) {
      if (!t.finite()) throw InvariantError("policy returned a non-finite target at sample " + std::to_string(i));
    }
    d.snapshots.push_back({{ball.x, ball.y}, std::move(targets)});
  }
  validate_dataset(d);
  return d;
}

std::string trace_to_csv(const ScenarioTrace& t) {
  std::string out = "cycle,ball_x,ball_y,perceived_x,perceived_y";
  for (const auto& id : t.agents) out += "," + id + "_x," + id + "_y," + id + "_target_x," + id + "_target_y";
  out += ",context,chaser\n";
  char buf[64];
  for (const auto& r : t.cycles) {
    out += std::to_string(r.cycle);
    for (double v : {r.ball.x, r.ball.y, r.perceived_ball.x, r.perceived_ball.y}) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out += buf;
    }
    for (std::size_t i = 0; i < t.agents.size(); ++i) {
      for (double v : {r.positions[i].x, r.positions[i].y, r.targets[i].x, r.targets[i].y}) {
        std::snprintf(buf, sizeof buf, ",%.6f", v);
        out += buf;
      }
    }
    out += "," + r.context + ",";
    if (r.chaser) out += t.agents[*r.chaser];
    out += '\n';
  }
  return out;
}

namespace {

Json point_json(Point2 p) { return Json::array({p.x, p.y}); }
Point2 point_from(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

Json points_json(const std::vector<Point2>& ps) {
  Json a = Json::array();
  for (const auto& p : ps) a.push_back(point_json(p));
  return a;
}

std::vector<Point2> points_from(const Json& j) {
  std::vector<Point2> out;
  for (const auto& p : j) out.push_back(point_from(p));
  return out;
}

}  // namespace

Json trace_to_json(const ScenarioTrace& t) {
  Json cycles = Json::array();
  for (const auto& r : t.cycles) {
    cycles.push_back({{"cycle", r.cycle},
                      {"ball", point_json(r.ball)},
                      {"perceived_ball", point_json(r.perceived_ball)},
                      {"context", r.context},
                      {"targets", points_json(r.targets)},
                      {"positions", points_json(r.positions)},
                      {"chaser", r.chaser ? Json(t.agents[*r.chaser]) : Json(nullptr)}});
  }
  return {{"agents", t.agents}, {"initial_positions", points_json(t.initial_positions)}, {"cycles", std::move(cycles)}};
}

ScenarioTrace trace_from_json(const Json& j) {
  try {
    ScenarioTrace t;
    t.agents = j.at("agents").get<std::vector<NodeId>>();
    t.initial_positions = points_from(j.at("initial_positions"));
    for (const auto& c : j.at("cycles")) {
      CycleRecord r;
      r.cycle = c.at("cycle").get<std::size_t>();
      r.ball = point_from(c.at("ball"));
      r.perceived_ball = point_from(c.at("perceived_ball"));
      r.context = c.at("context").get<std::string>();
      r.targets = points_from(c.at("targets"));
      r.positions = points_from(c.at("positions"));
      if (!c.at("chaser").is_null()) {
        const auto id = c.at("chaser").get<std::string>();
        auto it = std::find(t.agents.begin(), t.agents.end(), id);
        if (it == t.agents.end()) throw ParseError("trace: unknown chaser '" + id + "'");
        r.chaser = static_cast<std::size_t>(it - t.agents.begin());
      }
      t.cycles.push_back(std::move(r));
    }
    return t;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("trace: ") + e.what());
  }
}

namespace {

class SvgField {
 public:
  SvgField(const FieldConfig& f, double px_per_m = 8.0) : field_(f), s_(px_per_m) {
    char buf[512];
    const double w = f.length * s_ + 2 * kPad;
    const double h = f.width * s_ + 2 * kPad;
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n"
                  "<rect x=\"0\" y=\"0\" width=\"%.0f\" height=\"%.0f\" fill=\"#3a7d44\"/>\n"
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"white\"/>\n"
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"white\"/>\n",
                  w, h, w, h, kPad, kPad, f.length * s_, f.width * s_, w / 2, kPad, w / 2, h - kPad);
    out_ << buf;
  }

  double px(double x) const { return kPad + (x + field_.length / 2) * s_; }
  double py(double y) const { return kPad + (field_.width / 2 - y) * s_; }

  void polyline(const std::vector<Point2>& pts, const char* color, double width) {
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << "\" points=\"";
    char buf[64];
    for (const auto& p : pts) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(p.x), py(p.y));
      out_ << buf;
    }
    out_ << "\"/>\n";
  }

  void circle(Point2 p, double r, const char* color) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"%.1f\" fill=\"%s\"/>\n", px(p.x), py(p.y), r, color);
    out_ << buf;
  }

  void label(Point2 p, const std::string& text) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" fill=\"white\">", px(p.x) + 5, py(p.y) - 5);
    out_ << buf << text << "</text>\n";
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  static constexpr double kPad = 20.0;
  FieldConfig field_;
  double s_;
  std::ostringstream out_;
};

}  // namespace

std::string trace_to_svg(const ScenarioTrace& t, const FieldConfig& field) {
  static const char* palette[] = {"#ffd166", "#ef476f", "#06d6a0", "#118ab2", "#f78c6b", "#c77dff",
                                  "#e9ff70", "#ff70a6", "#70d6ff", "#ff9770", "#b8f2e6"};
  SvgField svg(field);
  std::vector<Point2> ball;
  for (const auto& r : t.cycles) ball.push_back(r.ball);
  svg.polyline(ball, "white", 2.0);
  for (std::size_t i = 0; i < t.agents.size(); ++i) {
    std::vector<Point2> path{t.initial_positions[i]};
    for (const auto& r : t.cycles) path.push_back(r.positions[i]);
    const char* color = palette[i % std::size(palette)];
    svg.polyline(path, color, 1.5);
    svg.circle(path.back(), 4.0, color);
    svg.label(path.back(), t.agents[i]);
  }
  if (!ball.empty()) svg.circle(ball.back(), 3.0, "white");
  return svg.finish();
}

std::string ball_positions_svg(const Dataset& d, const DataSplit& split) {
  SvgField svg(d.field);
  auto ball_of = [&](std::size_t c) {
    const Snapshot& s = d.snapshots.at(c);
    return Point2{s.features.at(0), s.features.size() > 1 ? s.features[1] : 0.0};
  };
  for (std::size_t c : split.train) svg.circle(ball_of(c), 2.0, "#118ab2");
  for (std::size_t c : split.test) svg.circle(ball_of(c), 2.0, "#ef476f");
  return svg.finish();
}

}  // namespace formation
