#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "formation/geometry.hpp"
#include "formation/json_io.hpp"

namespace formation {

using NodeId = std::string;

enum class NodeKind { Feature, Agent };

struct GraphNode {
  NodeId id;
  NodeKind kind = NodeKind::Feature;
  /// Dataset rows owned by the node: >= 1 for a feature, exactly {x, y} for an agent.
  std::vector<std::string> rows;
};

/// Modular scheme. Edges point from a source (feature or leader) to the agent
/// that reads it.
struct DependencyGraph {
  std::vector<GraphNode> nodes;
  std::vector<std::pair<NodeId, NodeId>> edges;

  const GraphNode* find(const NodeId& id) const;
  std::vector<NodeId> agent_ids() const;
  /// Sources of `id`, ordered by their position in `nodes`.
  std::vector<NodeId> in_neighbors(const NodeId& id) const;
};

struct Diagnostic {
  std::string code;
  std::string message;
  std::vector<std::string> subjects;
};

/// Empty iff every graph invariant holds. With a dataset, also checks that
/// node rows exist and that agent nodes own an agent's coordinate rows.
std::vector<Diagnostic> validate_graph(const DependencyGraph& g, const Dataset* d = nullptr);

/// Layered topological sort over all nodes: each wave holds the nodes whose
/// sources all lie in earlier waves, sorted by id. Agents in one wave never
/// depend on each other. Throws InvariantError on a cycle.
std::vector<std::vector<NodeId>> dependency_waves(const DependencyGraph& g);

/// Agent nodes in training order (the agent part of dependency_waves,
/// flattened).
std::vector<NodeId> training_order(const DependencyGraph& g);

/// True if `order` is a permutation of the agent nodes and every agent comes
/// after each agent it transitively depends on.
bool respects_dependencies(const DependencyGraph& g, const std::vector<NodeId>& order);

/// Concatenated rows of the agent's sources. Throws NotFoundError for an
/// unknown node and InvariantError for a non-agent or input-less node.
std::vector<std::string> inputs_of(const DependencyGraph& g, const NodeId& agent);

DependencyGraph graph_from_json(const Json& j);
Json graph_to_json(const DependencyGraph& g);
DependencyGraph load_graph(const std::filesystem::path& path);

}  // namespace formation
