#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "formation/context.hpp"
#include "formation/features.hpp"
#include "formation/geometry.hpp"
#include "formation/pipeline.hpp"
#include "formation/random.hpp"

namespace formation {

struct ScenarioConfig {
  std::size_t cycles = 200;
  Point2 ball_start;
  Point2 ball_velocity;
  double ball_decay = 0.94;
  double ball_stop_speed = 0.01;  // m/cycle
  double max_speed = 0.5;         // m/cycle
  bool chase = false;
  /// Perception noise on the ball, per axis. Read as a standard deviation in
  /// meters unless noise_is_variance is set.
  double noise = 0.0;
  bool noise_is_variance = false;
  std::uint64_t seed = 0;
  /// Starting positions; agents missing here start on their initial targets.
  std::map<NodeId, Point2> initial_positions;
  std::size_t history_window = History::kDefaultWindow;
};

void validate_scenario_config(const ScenarioConfig& cfg);

struct CycleRecord {
  std::size_t cycle = 0;
  Point2 ball;
  Point2 perceived_ball;
  ContextId context;
  std::vector<Point2> targets;    // per agent, trace agent order
  std::vector<Point2> positions;  // after this cycle's move
  std::optional<std::size_t> chaser;

  friend bool operator==(const CycleRecord&, const CycleRecord&) = default;
};

struct ScenarioTrace {
  std::vector<NodeId> agents;  // sorted ids
  std::vector<Point2> initial_positions;
  std::vector<CycleRecord> cycles;

  friend bool operator==(const ScenarioTrace&, const ScenarioTrace&) = default;
};

/// Per cycle: the ball advances and decays, perception adds seeded Gaussian
/// noise, the context steps, predict_all yields targets, and each agent moves
/// at most max_speed toward its goal point (the chaser, nearest the perceived
/// ball, heads for the true ball). Throws NotFoundError when a context has no
/// models.
ScenarioTrace run_scenario(const ModelBundle& models, const ContextSet& cs, const ScenarioConfig& cfg);

struct SmoothnessReport {
  /// Direction change between consecutive moves longer than 1e-6 m.
  double angle_mean = 0.0;
  double angle_stddev = 0.0;
  std::size_t angle_samples = 0;
  /// Same, counting every pair of non-zero moves.
  double angle_mean_unfiltered = 0.0;
  double angle_stddev_unfiltered = 0.0;
  /// Distance moved per agent per cycle.
  double distance_mean = 0.0;
  double distance_stddev = 0.0;
  /// Distance moved by the whole team per cycle.
  double team_distance_mean = 0.0;
  double team_distance_stddev = 0.0;
};

SmoothnessReport smoothness(const ScenarioTrace& trace);
/// Pools the samples of several traces.
SmoothnessReport smoothness(std::span<const ScenarioTrace> traces);

struct RobustnessRow {
  double noise = 0.0;
  double mean_error = 0.0;    // E
  double error_stddev = 0.0;
};

/// For each noise level, perturbs every input feature row of the listed
/// columns with seeded Gaussian noise and compares predict_all with the
/// demonstrated targets. Noisy levels pool `repetitions` independent draws;
/// the zero level is evaluated once, exactly as evaluate_composed.
std::vector<RobustnessRow> robustness_sweep(const ContextModels& cm, const Dataset& d,
                                            std::span<const std::size_t> columns,
                                            std::span<const double> noise_levels,
                                            std::uint64_t seed, std::size_t repetitions = 1,
                                            bool noise_is_variance = false);

/// A positioning policy driven by the ball position.
struct ReferencePolicy {
  std::vector<std::string> agents;
  std::function<std::vector<Point2>(Point2 ball)> targets;
};

struct HomePosition {
  std::string agent;
  Point2 home;
  double attraction = 0.0;  // weight toward the ball, in [0, 1]
};

/// target = home + attraction * (ball - home), per agent.
ReferencePolicy attraction_policy(std::vector<HomePosition> homes);

/// Same target for every ball position.
ReferencePolicy constant_policy(std::vector<std::string> agents, std::vector<Point2> targets);

/// An 11-agent 4-3-3 home layout: goalie a1, defenders a2-a5, midfielders
/// a6-a8, attackers a9-a11.
std::vector<HomePosition> default_homes();

using BallSampler = std::function<Point2(Rng&)>;

/// Uniform over the field, shrunk by `margin` meters on every side.
BallSampler uniform_ball_sampler(const FieldConfig& field, double margin = 0.0);

/// Samples ball positions, queries the policy, and records a dataset with
/// feature rows ball_x, ball_y. Throws InvariantError if the policy returns
/// non-finite or wrongly sized targets.
Dataset observe_policy(const ReferencePolicy& policy, const BallSampler& sampler, std::size_t n,
                       std::uint64_t seed, const FieldConfig& field = {});

std::string trace_to_csv(const ScenarioTrace& t);
Json trace_to_json(const ScenarioTrace& t);
ScenarioTrace trace_from_json(const Json& j);

/// Field with the ball path and every agent's path.
std::string trace_to_svg(const ScenarioTrace& t, const FieldConfig& field = {});
/// Ball positions of training (blue) and test (red) snapshots.
std::string ball_positions_svg(const Dataset& d, const DataSplit& split);

}  // namespace formation
