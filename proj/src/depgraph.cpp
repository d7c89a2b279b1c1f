#include "formation/depgraph.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "formation/error.hpp"

namespace formation {

const GraphNode* DependencyGraph::find(const NodeId& id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

std::vector<NodeId> DependencyGraph::agent_ids() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes) {
    if (n.kind == NodeKind::Agent) out.push_back(n.id);
  }
  return out;
}

std::vector<NodeId> DependencyGraph::in_neighbors(const NodeId& id) const {
  std::set<NodeId> sources;
  for (const auto& [from, to] : edges) {
    if (to == id) sources.insert(from);
  }
  std::vector<NodeId> out;
  for (const auto& n : nodes) {
    if (sources.count(n.id)) out.push_back(n.id);
  }
  return out;
}

namespace {

// Strongly connected components that contain a cycle (size > 1 or a self-edge).
std::vector<std::vector<NodeId>> cyclic_components(const DependencyGraph& g) {
  std::map<NodeId, std::vector<NodeId>> adj;
  for (const auto& n : g.nodes) adj[n.id];
  for (const auto& [from, to] : g.edges) {
    if (adj.count(from) && adj.count(to)) adj[from].push_back(to);
  }
  std::map<NodeId, int> index, low;
  std::set<NodeId> on_stack;
  std::vector<NodeId> stack;
  std::vector<std::vector<NodeId>> out;
  int counter = 0;

  std::function<void(const NodeId&)> strongconnect = [&](const NodeId& v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    for (const auto& w : adj[v]) {
      if (!index.count(w)) {
        strongconnect(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack.count(w)) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<NodeId> comp;
      NodeId w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        comp.push_back(w);
      } while (w != v);
      const bool self_edge =
          std::find(adj[v].begin(), adj[v].end(), v) != adj[v].end();
      if (comp.size() > 1 || self_edge) {
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
      }
    }
  };
  for (const auto& [id, _] : adj) {
    if (!index.count(id)) strongconnect(id);
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += sep;
    s += parts[i];
  }
  return s;
}

}  // namespace

std::vector<Diagnostic> validate_graph(const DependencyGraph& g, const Dataset* d) {
  std::vector<Diagnostic> diags;
  std::set<NodeId> ids;
  for (const auto& n : g.nodes) {
    if (n.id.empty()) diags.push_back({"empty_id", "node with empty id", {}});
    if (!ids.insert(n.id).second) {
      diags.push_back({"duplicate_node", "node '" + n.id + "' declared twice", {n.id}});
    }
    if (n.kind == NodeKind::Agent && n.rows.size() != 2) {
      diags.push_back({"agent_rows", "agent node '" + n.id + "' must own exactly 2 rows", {n.id}});
    }
    if (n.kind == NodeKind::Feature && n.rows.empty()) {
      diags.push_back({"feature_rows", "feature node '" + n.id + "' owns no rows", {n.id}});
    }
  }

  std::set<std::pair<NodeId, NodeId>> seen_edges;
  for (const auto& [from, to] : g.edges) {
    const std::string name = from + "->" + to;
    if (!seen_edges.insert({from, to}).second) {
      diags.push_back({"duplicate_edge", "edge " + name + " declared twice", {from, to}});
    }
    const GraphNode* src = g.find(from);
    const GraphNode* dst = g.find(to);
    if (!src || !dst) {
      diags.push_back({"unknown_node", "edge " + name + " references an undeclared node", {from, to}});
      continue;
    }
    if (dst->kind == NodeKind::Feature) {
      diags.push_back({"edge_into_feature", "edge " + name + " points into feature node '" + to + "'", {from, to}});
    }
  }

  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::Agent && g.in_neighbors(n.id).empty()) {
      diags.push_back({"agent_without_inputs", "agent node '" + n.id + "' has no sources", {n.id}});
    }
  }

  for (auto& comp : cyclic_components(g)) {
    diags.push_back({"cycle", "dependency cycle among " + join(comp, ", "), comp});
  }

  if (d != nullptr) {
    const DataMatrix m = matrix_view(*d);
    std::set<std::string> agent_rows;
    for (const auto& a : d->agent_rows) {
      const auto rows = agent_coordinate_rows(a);
      agent_rows.insert(rows[0] + "|" + rows[1]);
    }
    for (const auto& n : g.nodes) {
      for (const auto& r : n.rows) {
        if (!m.find_row(r)) {
          diags.push_back({"missing_row", "node '" + n.id + "' references row '" + r + "' absent from the dataset", {n.id}});
        }
      }
      if (n.kind == NodeKind::Agent && n.rows.size() == 2 &&
          !agent_rows.count(n.rows[0] + "|" + n.rows[1])) {
        diags.push_back({"agent_rows", "agent node '" + n.id + "' rows are not an agent's (x,y) rows", {n.id}});
      }
    }
  }
  return diags;
}

std::vector<std::vector<NodeId>> dependency_waves(const DependencyGraph& g) {
  std::map<NodeId, int> indegree;
  std::map<NodeId, std::vector<NodeId>> out_edges;
  for (const auto& n : g.nodes) indegree[n.id] = 0;
  for (const auto& [from, to] : g.edges) {
    if (!indegree.count(from) || !indegree.count(to)) {
      throw InvariantError("edge " + from + "->" + to + " references an undeclared node");
    }
    ++indegree[to];
    out_edges[from].push_back(to);
  }
  std::vector<std::vector<NodeId>> waves;
  std::vector<NodeId> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.push_back(id);  // std::map iteration is already sorted
  }
  std::size_t placed = 0;
  while (!ready.empty()) {
    std::sort(ready.begin(), ready.end());
    std::vector<NodeId> next;
    for (const auto& id : ready) {
      for (const auto& to : out_edges[id]) {
        if (--indegree[to] == 0) next.push_back(to);
      }
    }
    placed += ready.size();
    waves.push_back(std::move(ready));
    ready = std::move(next);
  }
  if (placed != indegree.size()) throw InvariantError("dependency graph contains a cycle");
  return waves;
}

std::vector<NodeId> training_order(const DependencyGraph& g) {
  std::vector<NodeId> order;
  for (const auto& wave : dependency_waves(g)) {
    for (const auto& id : wave) {
      const GraphNode* n = g.find(id);
      if (n && n->kind == NodeKind::Agent) order.push_back(id);
    }
  }
  return order;
}

bool respects_dependencies(const DependencyGraph& g, const std::vector<NodeId>& order) {
  auto agents = g.agent_ids();
  std::vector<NodeId> sorted_order = order;
  std::sort(agents.begin(), agents.end());
  std::sort(sorted_order.begin(), sorted_order.end());
  if (agents != sorted_order) return false;
  std::map<NodeId, std::size_t> position;
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i;
  // Direct agent->agent edges suffice: transitive constraints follow by chaining.
  for (const auto& [from, to] : g.edges) {
    if (position.count(from) && position.count(to) && position[from] >= position[to]) {
      return false;
    }
  }
  return true;
}

std::vector<std::string> inputs_of(const DependencyGraph& g, const NodeId& agent) {
  const GraphNode* n = g.find(agent);
  if (!n) throw NotFoundError("unknown node '" + agent + "'");
  if (n->kind != NodeKind::Agent) throw InvariantError("node '" + agent + "' is not an agent");
  std::vector<std::string> rows;
  for (const auto& src : g.in_neighbors(agent)) {
    for (const auto& r : g.find(src)->rows) rows.push_back(r);
  }
  if (rows.empty()) throw InvariantError("agent node '" + agent + "' has no inputs");
  return rows;
}

DependencyGraph graph_from_json(const Json& j) {
  DependencyGraph g;
  try {
    for (const auto& nj : j.at("nodes")) {
      GraphNode n;
      n.id = nj.at("id").get<std::string>();
      const auto kind = nj.at("kind").get<std::string>();
      if (kind == "feature") {
        n.kind = NodeKind::Feature;
      } else if (kind == "agent") {
        n.kind = NodeKind::Agent;
      } else {
        throw ParseError("node '" + n.id + "': unknown kind '" + kind + "'");
      }
      n.rows = nj.at("rows").get<std::vector<std::string>>();
      g.nodes.push_back(std::move(n));
    }
    for (const auto& ej : j.at("edges")) {
      if (!ej.is_array() || ej.size() != 2) throw ParseError("edge must be [source, dependent]");
      g.edges.emplace_back(ej[0].get<std::string>(), ej[1].get<std::string>());
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("graph: ") + e.what());
  }
  return g;
}

Json graph_to_json(const DependencyGraph& g) {
  Json nodes = Json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back({{"id", n.id},
                     {"kind", n.kind == NodeKind::Agent ? "agent" : "feature"},
                     {"rows", n.rows}});
  }
  Json edges = Json::array();
  for (const auto& [from, to] : g.edges) edges.push_back({from, to});
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

DependencyGraph load_graph(const std::filesystem::path& path) {
  return graph_from_json(read_json_file(path));
}

}  // namespace formation
