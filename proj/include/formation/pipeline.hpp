#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "formation/context.hpp"
#include "formation/depgraph.hpp"
#include "formation/geometry.hpp"
#include "formation/mlp.hpp"

namespace formation {

struct PipelineConfig {
  /// Replace trained agents' rows in the working matrix with their estimates
  /// before dependents are trained.
  bool propagate_estimates = true;
  /// With propagation on, also overwrite test columns so dependents' test
  /// inputs are estimates, as they would be at execution time.
  bool propagate_test_columns = true;
  std::size_t n_hidden = 36;
  /// Per-agent hidden-unit overrides.
  std::map<NodeId, std::size_t> hidden_overrides;
  TrainConfig train;
  SplitFractions fractions;
  std::uint64_t split_seed = 0;
  /// Base seed; each agent's weights are seeded from (seed, agent id).
  std::uint64_t seed = 0;
  /// Agents within one dependency wave may train concurrently.
  std::size_t threads = 1;
};

struct AgentModel {
  std::vector<std::string> input_rows;
  std::vector<std::string> output_rows;
  MlpModel model;
  TrainReport report;
  /// Test error of the composed prediction (predict_all), leaders estimated.
  ErrorStats composed_test;
};

struct ContextModels {
  ContextId context;
  DependencyGraph graph;
  std::vector<NodeId> order;
  std::map<NodeId, AgentModel> agents;
  DataSplit split;
  bool propagate_estimates = true;
  bool propagate_test_columns = true;

  /// Feature rows that must be supplied to predict_all.
  std::vector<std::string> required_features() const;
};

/// Trains one model per agent node in training order. Targets always come
/// from the demonstrated rows; only input rows are overwritten by estimates.
/// Throws InvariantError listing diagnostics when the graph does not
/// validate against the dataset.
ContextModels train_context(const Dataset& d, const DependencyGraph& g, const PipelineConfig& cfg,
                            const ContextId& context = "default");
ContextModels train_context(const Dataset& d, const DependencyGraph& g, const DataSplit& split,
                            const PipelineConfig& cfg, const ContextId& context = "default");

/// Evaluates agents in training order, feeding each prediction into its
/// dependents. Throws NotFoundError for a missing feature row.
std::map<NodeId, Point2> predict_all(const ContextModels& cm, const FeatureMap& features);

FeatureMap snapshot_features(const Dataset& d, std::size_t column);

struct CompositeEvaluation {
  std::map<NodeId, ErrorStats> per_agent;
  /// Pooled over every (agent, snapshot) pair.
  ErrorStats overall;
};

/// predict_all on the listed columns, compared with demonstrated targets.
CompositeEvaluation evaluate_composed(const ContextModels& cm, const Dataset& d,
                                      std::span<const std::size_t> columns);

/// Models for every context, keyed by context id.
struct ModelBundle {
  std::map<ContextId, ContextModels> contexts;
};

Json context_models_to_json(const ContextModels& cm);
ContextModels context_models_from_json(const Json& j);

Json bundle_to_json(const ModelBundle& b);
ModelBundle bundle_from_json(const Json& j);
/// Canonical bundle text (weights with 17 significant digits).
std::string bundle_to_canonical(const ModelBundle& b);
ModelBundle load_bundle(const std::filesystem::path& path);
void save_bundle(const ModelBundle& b, const std::filesystem::path& path);

/// Per-agent summary: E, stddev, max error, epochs, stop reason.
Json training_summary(const ModelBundle& b);

}  // namespace formation
