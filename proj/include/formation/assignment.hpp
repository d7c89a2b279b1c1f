#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "formation/geometry.hpp"
#include "formation/json_io.hpp"

namespace formation {

/// Agent x position scores; higher is better.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  WeightMatrix(std::size_t n_agents, std::size_t k_positions, double fill = 0.0);
  static WeightMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t n_agents() const { return n_; }
  std::size_t k_positions() const { return k_; }
  double& at(std::size_t agent, std::size_t pos) { return w_[agent * k_ + pos]; }
  double at(std::size_t agent, std::size_t pos) const { return w_[agent * k_ + pos]; }

 private:
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::vector<double> w_;
};

struct Assignment {
  /// pairs[agent] = position index; injective.
  std::vector<std::size_t> pairs;
  double total = 0.0;
};

/// Maximum-weight injective matching of agents to positions (k >= n).
/// Among optimal matchings the lexicographically smallest `pairs` vector is
/// returned, so identical matrices give identical answers on every agent.
/// Throws InvariantError for k < n, an empty matrix, or non-finite weights.
Assignment solve_assignment(const WeightMatrix& w);

/// Optimal total only (Hungarian, no tie-break pass).
double optimal_total(const WeightMatrix& w);

struct AgentState {
  std::string id;
  Point2 position;
  /// Extra per-agent inputs, readable by factors named "agent.<key>".
  std::map<std::string, double> aux;
};

struct CandidatePosition {
  std::string id;
  Point2 position;
  double priority = 0.0;
};

struct Environment {
  std::optional<Point2> ball;
  std::optional<Point2> goal;
};

using WeightFactor =
    std::function<double(const AgentState&, const CandidatePosition&, const Environment&)>;

/// Named weight factors. Built-ins, all oriented so larger is better:
///   agent_distance  -|agent - position|
///   goal_distance   -|position - goal|
///   ball_distance   -|position - ball|
///   priority        position priority
/// Names of the form "agent.<key>" read AgentState::aux[key].
class FactorRegistry {
 public:
  FactorRegistry();
  void register_factor(const std::string& name, WeightFactor f);
  /// Throws NotFoundError for an unknown factor.
  WeightFactor get(const std::string& name) const;
  bool contains(const std::string& name) const;

 private:
  std::map<std::string, WeightFactor> factors_;
};

struct LinearWeightModel {
  std::vector<std::pair<std::string, double>> terms;  // (factor, coefficient)

  std::vector<double> coefficients() const;
  LinearWeightModel with_coefficients(std::span<const double> c) const;
};

Json weight_model_to_json(const LinearWeightModel& m);
LinearWeightModel weight_model_from_json(const Json& j);

/// w[i][j] = sum_f coef_f * factor_f(agent_i, position_j, env). Throws
/// InvariantError when a factor lacks its input (e.g. no goal given).
WeightMatrix build_weights(std::span<const AgentState> agents,
                           std::span<const CandidatePosition> positions,
                           const LinearWeightModel& model, const Environment& env,
                           const FactorRegistry& registry = FactorRegistry{});

struct PsoConfig {
  std::size_t swarm_size = 20;
  double inertia = 0.72;
  double cognitive = 1.49;
  double social = 1.49;
  std::size_t iterations = 100;
  std::vector<std::pair<double, double>> bounds;  // per coordinate
  std::uint64_t seed = 0;
};

struct PsoResult {
  std::vector<double> best;
  double best_fitness = 0.0;
  std::vector<double> history;  // global best fitness after each iteration
};

using Fitness = std::function<double(std::span<const double>)>;

/// Global-best PSO maximizing `fitness`. Particles start uniform in the
/// bounds with zero velocity; velocities are clamped to the bound width and
/// positions to the bounds. Throws InvariantError on non-finite fitness.
PsoResult pso_maximize(const Fitness& fitness, const PsoConfig& cfg);

/// Tunes the template's coefficients (cfg.bounds has one entry per term).
LinearWeightModel pso_tune(const LinearWeightModel& model_template,
                           const std::function<double(const LinearWeightModel&)>& fitness,
                           const PsoConfig& cfg);

/// Input of one assignment solve, as read by the CLI and the service:
/// {"agents":[{"id","position":[x,y],"aux":{...}}],
///  "candidates":[{"id","position":[x,y],"priority"}],
///  "ball":[x,y], "goal":[x,y], "model":{"terms":[...]}}.
struct AssignmentScene {
  std::vector<AgentState> agents;
  std::vector<CandidatePosition> candidates;
  Environment env;
  LinearWeightModel model;
};

AssignmentScene assignment_scene_from_json(const Json& j);
Json assignment_scene_to_json(const AssignmentScene& s);

/// {"pairs":[{"agent","candidate","weight"}],"total"}.
Json solve_scene(const AssignmentScene& s, const FactorRegistry& registry = FactorRegistry{});

/// Scripted marking scene: agents pick opponents to mark.
struct MarkingScene {
  std::vector<AgentState> agents;
  std::vector<CandidatePosition> opponents;
  Environment env;
};

std::vector<MarkingScene> generate_marking_scenes(std::size_t count, std::size_t n_agents,
                                                  std::size_t n_opponents, std::uint64_t seed,
                                                  const FieldConfig& field = {});

/// Score of a weight model over scenes (higher is better): minus the mean of
/// (cycles until the most dangerous opponent is reached + mean cycles for all
/// agents to reach their marks), agents moving 0.5 m per cycle.
double marking_score(const LinearWeightModel& model, std::span<const MarkingScene> scenes);

}  // namespace formation
