#include "formation/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "formation/error.hpp"
#include "formation/random.hpp"

namespace formation {

WeightMatrix::WeightMatrix(std::size_t n_agents, std::size_t k_positions, double fill)
    : n_(n_agents), k_(k_positions), w_(n_agents * k_positions, fill) {}

WeightMatrix WeightMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t k = rows.empty() ? 0 : rows.front().size();
  WeightMatrix w(rows.size(), k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != k) throw InvariantError("weight matrix rows differ in length");
    for (std::size_t j = 0; j < k; ++j) w.at(i, j) = rows[i][j];
  }
  return w;
}

namespace {

void check_matrix(const WeightMatrix& w) {
  if (w.n_agents() == 0) throw InvariantError("weight matrix has no agents");
  if (w.k_positions() < w.n_agents()) {
    throw InvariantError("need at least as many positions (" + std::to_string(w.k_positions()) +
                         ") as agents (" + std::to_string(w.n_agents()) + ")");
  }
  for (std::size_t i = 0; i < w.n_agents(); ++i)
    for (std::size_t j = 0; j < w.k_positions(); ++j)
      if (!std::isfinite(w.at(i, j))) {
        throw InvariantError("non-finite weight at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
}

// Shortest-augmenting-path Hungarian on cost = -weight over the given agent
// rows and position columns (rows.size() <= cols.size()). Unmatched columns
// behave like zero-weight dummy agents. Returns the column chosen per row.
std::vector<std::size_t> hungarian(const WeightMatrix& w, const std::vector<std::size_t>& rows,
                                   const std::vector<std::size_t>& cols, double* total) {
  const std::size_t n = rows.size();
  const std::size_t m = cols.size();
  std::vector<std::size_t> match(n);
  if (n == 0) {
    *total = 0.0;
    return match;
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  auto cost = [&](std::size_t i, std::size_t j) { return -w.at(rows[i - 1], cols[j - 1]); };

  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double sum = 0.0;
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) {
      match[p[j] - 1] = j - 1;
    }
  }
  for (std::size_t i = 0; i < n; ++i) sum += w.at(rows[i], cols[match[i]]);
  *total = sum;
  return match;
}

}  // namespace

double optimal_total(const WeightMatrix& w) {
  check_matrix(w);
  std::vector<std::size_t> rows(w.n_agents()), cols(w.k_positions());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
  double total = 0.0;
  hungarian(w, rows, cols, &total);
  return total;
}

Assignment solve_assignment(const WeightMatrix& w) {
  check_matrix(w);
  const std::size_t n = w.n_agents();
  const std::size_t k = w.k_positions();
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) scale = std::max(scale, std::abs(w.at(i, j)));
  const double tol = 1e-9 * scale * static_cast<double>(n);

  std::vector<std::size_t> free_cols(k);
  for (std::size_t j = 0; j < k; ++j) free_cols[j] = j;
  std::vector<std::size_t> rest(n);
  for (std::size_t i = 0; i < n; ++i) rest[i] = i;
  double remaining = 0.0;
  hungarian(w, rest, free_cols, &remaining);

  // Fix agents one at a time to the smallest position index that still
  // admits an optimal completion.
  Assignment a;
  a.pairs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rest.erase(rest.begin());
    bool fixed = false;
    for (std::size_t c = 0; c < free_cols.size() && !fixed; ++c) {
      std::vector<std::size_t> cols = free_cols;
      cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(c));
      double sub = 0.0;
      hungarian(w, rest, cols, &sub);
      const double with_choice = w.at(i, free_cols[c]) + sub;
      if (with_choice >= remaining - tol) {
        a.pairs[i] = free_cols[c];
        remaining = sub;
        free_cols = std::move(cols);
        fixed = true;
      }
    }
    if (!fixed) throw InvariantError("assignment tie-break failed to find an optimal completion");
  }
  for (std::size_t i = 0; i < n; ++i) a.total += w.at(i, a.pairs[i]);
  return a;
}

FactorRegistry::FactorRegistry() {
  factors_["agent_distance"] = [](const AgentState& a, const CandidatePosition& p, const Environment&) {
    return -distance(a.position, p.position);
  };
  factors_["goal_distance"] = [](const AgentState&, const CandidatePosition& p, const Environment& e) {
    if (!e.goal) throw InvariantError("factor goal_distance needs a goal position");
    return -distance(p.position, *e.goal);
  };
  factors_["ball_distance"] = [](const AgentState&, const CandidatePosition& p, const Environment& e) {
    if (!e.ball) throw InvariantError("factor ball_distance needs a ball position");
    return -distance(p.position, *e.ball);
  };
  factors_["priority"] = [](const AgentState&, const CandidatePosition& p, const Environment&) {
    return p.priority;
  };
}

void FactorRegistry::register_factor(const std::string& name, WeightFactor f) {
  if (!factors_.emplace(name, std::move(f)).second) {
    throw InvariantError("factor '" + name + "' already registered");
  }
}

bool FactorRegistry::contains(const std::string& name) const {
  return factors_.count(name) > 0 || name.rfind("agent.", 0) == 0;
}

WeightFactor FactorRegistry::get(const std::string& name) const {
  auto it = factors_.find(name);
  if (it != factors_.end()) return it->second;
  if (name.rfind("agent.", 0) == 0) {
    return [key = name.substr(6)](const AgentState& a, const CandidatePosition&, const Environment&) {
      auto v = a.aux.find(key);
      if (v == a.aux.end()) throw InvariantError("agent '" + a.id + "' lacks factor input '" + key + "'");
      return v->second;
    };
  }
  throw NotFoundError("unknown weight factor '" + name + "'");
}

std::vector<double> LinearWeightModel::coefficients() const {
  std::vector<double> c;
  for (const auto& t : terms) c.push_back(t.second);
  return c;
}

LinearWeightModel LinearWeightModel::with_coefficients(std::span<const double> c) const {
  if (c.size() != terms.size()) throw InvariantError("coefficient count mismatch");
  LinearWeightModel out = *this;
  for (std::size_t i = 0; i < c.size(); ++i) out.terms[i].second = c[i];
  return out;
}

Json weight_model_to_json(const LinearWeightModel& m) {
  Json terms = Json::array();
  for (const auto& [f, c] : m.terms) terms.push_back({{"factor", f}, {"coefficient", c}});
  return {{"terms", std::move(terms)}};
}

LinearWeightModel weight_model_from_json(const Json& j) {
  LinearWeightModel m;
  try {
    for (const auto& t : j.at("terms")) {
      const double c = t.at("coefficient").get<double>();
      if (!std::isfinite(c)) throw InvariantError("non-finite coefficient");
      m.terms.emplace_back(t.at("factor").get<std::string>(), c);
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("weight model: ") + e.what());
  }
  return m;
}

WeightMatrix build_weights(std::span<const AgentState> agents,
                           std::span<const CandidatePosition> positions,
                           const LinearWeightModel& model, const Environment& env,
                           const FactorRegistry& registry) {
  if (agents.empty() || positions.empty()) throw InvariantError("need at least one agent and one position");
  if (positions.size() < agents.size()) throw InvariantError("need at least as many positions as agents");
  std::vector<WeightFactor> factors;
  for (const auto& [name, coef] : model.terms) {
    if (!std::isfinite(coef)) throw InvariantError("non-finite coefficient for '" + name + "'");
    factors.push_back(registry.get(name));
  }
  WeightMatrix w(agents.size(), positions.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    for (std::size_t j = 0; j < positions.size(); ++j) {
      double sum = 0.0;
      for (std::size_t t = 0; t < factors.size(); ++t) {
        sum += model.terms[t].second * factors[t](agents[i], positions[j], env);
      }
      w.at(i, j) = sum;
    }
  }
  return w;
}

PsoResult pso_maximize(const Fitness& fitness, const PsoConfig& cfg) {
  const std::size_t dims = cfg.bounds.size();
  if (dims == 0) throw InvariantError("PSO needs at least one bounded coordinate");
  if (cfg.swarm_size == 0) throw InvariantError("PSO swarm size must be positive");
  for (const auto& [lo, hi] : cfg.bounds) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) throw InvariantError("PSO bounds must be finite with lo <= hi");
  }
  Rng rng(cfg.seed);
  auto score = [&](const std::vector<double>& x) {
    const double f = fitness(x);
    if (!std::isfinite(f)) throw InvariantError("fitness returned a non-finite value");
    return f;
  };

  struct Particle {
    std::vector<double> x, v, best;
    double best_f;
  };
  std::vector<Particle> swarm(cfg.swarm_size);
  PsoResult r;
  for (auto& p : swarm) {
    p.x.resize(dims);
    p.v.assign(dims, 0.0);
    for (std::size_t d = 0; d < dims; ++d) p.x[d] = rng.uniform(cfg.bounds[d].first, cfg.bounds[d].second);
    p.best = p.x;
    p.best_f = score(p.x);
  }
  std::size_t gbest = 0;
  for (std::size_t i = 1; i < swarm.size(); ++i) {
    if (swarm[i].best_f > swarm[gbest].best_f) gbest = i;
  }
  r.best = swarm[gbest].best;
  r.best_fitness = swarm[gbest].best_f;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (auto& p : swarm) {
      for (std::size_t d = 0; d < dims; ++d) {
        const auto [lo, hi] = cfg.bounds[d];
        const double vmax = hi - lo;
        const double r1 = rng.uniform();
        const double r2 = rng.uniform();
        double v = cfg.inertia * p.v[d] + cfg.cognitive * r1 * (p.best[d] - p.x[d]) +
                   cfg.social * r2 * (r.best[d] - p.x[d]);
        v = std::clamp(v, -vmax, vmax);
        p.v[d] = v;
        p.x[d] = std::clamp(p.x[d] + v, lo, hi);
      }
      const double f = score(p.x);
      if (f > p.best_f) {
        p.best_f = f;
        p.best = p.x;
      }
    }
    for (const auto& p : swarm) {
      if (p.best_f > r.best_fitness) {
        r.best_fitness = p.best_f;
        r.best = p.best;
      }
    }
    r.history.push_back(r.best_fitness);
  }
  return r;
}

LinearWeightModel pso_tune(const LinearWeightModel& model_template,
                           const std::function<double(const LinearWeightModel&)>& fitness,
                           const PsoConfig& cfg) {
  if (cfg.bounds.size() != model_template.terms.size()) {
    throw InvariantError("PSO needs one bound per weight-model term");
  }
  const auto result = pso_maximize(
      [&](std::span<const double> c) { return fitness(model_template.with_coefficients(c)); }, cfg);
  return model_template.with_coefficients(result.best);
}

std::vector<MarkingScene> generate_marking_scenes(std::size_t count, std::size_t n_agents,
                                                  std::size_t n_opponents, std::uint64_t seed,
                                                  const FieldConfig& field) {
  if (n_opponents < n_agents) throw InvariantError("need at least as many opponents as agents");
  Rng rng(seed);
  const double hx = field.length / 2.0;
  const double hy = field.width / 2.0;
  const Point2 goal{-hx, 0.0};  // own goal, defended while marking
  std::vector<MarkingScene> scenes;
  for (std::size_t s = 0; s < count; ++s) {
    MarkingScene sc;
    sc.env.goal = goal;
    sc.env.ball = Point2{rng.uniform(-hx, hx * 0.3), rng.uniform(-hy, hy)};
    for (std::size_t i = 0; i < n_agents; ++i) {
      sc.agents.push_back({"a" + std::to_string(i + 2),
                           {rng.uniform(-hx, hx * 0.2), rng.uniform(-hy, hy)},
                           {}});
    }
    for (std::size_t j = 0; j < n_opponents; ++j) {
      const Point2 p{rng.uniform(-hx, hx * 0.3), rng.uniform(-hy, hy)};
      // danger grows toward our goal and toward the ball
      const double danger = 1.0 - distance(p, goal) / field.length +
                            0.5 * (1.0 - distance(p, *sc.env.ball) / field.length);
      sc.opponents.push_back({"o" + std::to_string(j + 1), p, danger});
    }
    scenes.push_back(std::move(sc));
  }
  return scenes;
}

double marking_score(const LinearWeightModel& model, std::span<const MarkingScene> scenes) {
  if (scenes.empty()) throw InvariantError("marking score needs at least one scene");
  constexpr double speed = 0.5;
  double total = 0.0;
  for (const auto& sc : scenes) {
    const WeightMatrix w = build_weights(sc.agents, sc.opponents, model, sc.env);
    const Assignment a = solve_assignment(w);
    std::size_t danger = 0;
    for (std::size_t j = 1; j < sc.opponents.size(); ++j) {
      if (sc.opponents[j].priority > sc.opponents[danger].priority) danger = j;
    }
    double travel = 0.0;
    // an unmarked most-dangerous opponent costs a full field length
    double danger_time = sc.env.goal ? 105.0 / speed : 0.0;
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
      const double t = distance(sc.agents[i].position, sc.opponents[a.pairs[i]].position) / speed;
      travel += t;
      if (a.pairs[i] == danger) danger_time = t;
    }
    total += danger_time + travel / static_cast<double>(a.pairs.size());
  }
  return -total / static_cast<double>(scenes.size());
}

namespace {

Point2 point_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("expected a point [x, y]");
  Point2 p{j.at(0).get<double>(), j.at(1).get<double>()};
  if (!p.finite()) throw InvariantError("non-finite point");
  return p;
}

Json point_to_json(Point2 p) { return Json::array({p.x, p.y}); }

}  // namespace

AssignmentScene assignment_scene_from_json(const Json& j) {
  AssignmentScene s;
  try {
    for (const auto& a : j.at("agents")) {
      AgentState st{a.at("id").get<std::string>(), point_from_json(a.at("position")), {}};
      if (a.contains("aux")) st.aux = a.at("aux").get<std::map<std::string, double>>();
      s.agents.push_back(std::move(st));
    }
    for (const auto& c : j.at("candidates")) {
      s.candidates.push_back({c.at("id").get<std::string>(), point_from_json(c.at("position")),
                              c.value("priority", 0.0)});
    }
    if (j.contains("ball") && !j.at("ball").is_null()) s.env.ball = point_from_json(j.at("ball"));
    if (j.contains("goal") && !j.at("goal").is_null()) s.env.goal = point_from_json(j.at("goal"));
    s.model = weight_model_from_json(j.at("model"));
  } catch (const Json::exception& e) {
    throw ParseError(std::string("assignment scene: ") + e.what());
  }
  return s;
}

Json assignment_scene_to_json(const AssignmentScene& s) {
  Json agents = Json::array();
  for (const auto& a : s.agents) {
    Json aj = {{"id", a.id}, {"position", point_to_json(a.position)}};
    if (!a.aux.empty()) aj["aux"] = a.aux;
    agents.push_back(std::move(aj));
  }
  Json candidates = Json::array();
  for (const auto& c : s.candidates) {
    candidates.push_back({{"id", c.id}, {"position", point_to_json(c.position)}, {"priority", c.priority}});
  }
  Json j = {{"agents", std::move(agents)}, {"candidates", std::move(candidates)}, {"model", weight_model_to_json(s.model)}};
  if (s.env.ball) j["ball"] = point_to_json(*s.env.ball);
  if (s.env.goal) j["goal"] = point_to_json(*s.env.goal);
  return j;
}

Json solve_scene(const AssignmentScene& s, const FactorRegistry& registry) {
  const WeightMatrix w = build_weights(s.agents, s.candidates, s.model, s.env, registry);
  const Assignment a = solve_assignment(w);
  Json pairs = Json::array();
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    pairs.push_back({{"agent", s.agents[i].id},
                     {"candidate", s.candidates[a.pairs[i]].id},
                     {"weight", w.at(i, a.pairs[i])}});
  }
  return {{"pairs", std::move(pairs)}, {"total", a.total}};
}

}  // namespace formation
