#include "formation/pipeline.hpp"

#include <algorithm>
#include <future>
#include <set>

#include "formation/error.hpp"
#include "formation/random.hpp"

namespace formation {

std::vector<std::string> ContextModels::required_features() const {
  std::set<NodeId> used;
  for (const auto& [from, to] : graph.edges) used.insert(from);
  std::vector<std::string> rows;
  for (const auto& n : graph.nodes) {
    if (n.kind == NodeKind::Feature && used.count(n.id)) {
      rows.insert(rows.end(), n.rows.begin(), n.rows.end());
    }
  }
  return rows;
}

namespace {

struct TrainedAgent {
  NodeId id;
  AgentModel agent;
};

Eigen::MatrixXd gather_rows(const DataMatrix& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.cols()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = m.at(rows[k], c);
    }
  }
  return out;
}

std::vector<std::size_t> row_indices(const DataMatrix& m, const std::vector<std::string>& names) {
  std::vector<std::size_t> out;
  for (const auto& n : names) out.push_back(m.row_index(n));
  return out;
}

TrainedAgent train_agent(const DependencyGraph& g, const NodeId& id, const DataMatrix& working,
                         const DataMatrix& original, const DataSplit& split,
                         const PipelineConfig& cfg) {
  TrainedAgent t;
  t.id = id;
  t.agent.input_rows = inputs_of(g, id);
  t.agent.output_rows = g.find(id)->rows;
  const Eigen::MatrixXd x = gather_rows(working, row_indices(working, t.agent.input_rows));
  const Eigen::MatrixXd y = gather_rows(original, row_indices(original, t.agent.output_rows));

  MlpSpec spec;
  spec.n_in = t.agent.input_rows.size();
  spec.n_out = 2;
  auto ov = cfg.hidden_overrides.find(id);
  spec.n_hidden = ov != cfg.hidden_overrides.end() ? ov->second : cfg.n_hidden;
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, id);
  try {
    auto [model, report] = train_mlp(spec, x, y, split, tc);
    t.agent.model = std::move(model);
    t.agent.report = std::move(report);
  } catch (const TrainError& e) {
    throw TrainError("agent '" + id + "': " + e.what());
  }
  return t;
}

}  // namespace

ContextModels train_context(const Dataset& d, const DependencyGraph& g, const PipelineConfig& cfg,
                            const ContextId& context) {
  return train_context(d, g, split_dataset(d, cfg.fractions, cfg.split_seed), cfg, context);
}

ContextModels train_context(const Dataset& d, const DependencyGraph& g, const DataSplit& split,
                            const PipelineConfig& cfg, const ContextId& context) {
  validate_dataset(d);
  if (auto diags = validate_graph(g, &d); !diags.empty()) {
    std::string msg = "graph for context '" + context + "' is invalid:";
    for (const auto& diag : diags) msg += " [" + diag.code + "] " + diag.message + ";";
    throw InvariantError(msg);
  }

  ContextModels cm;
  cm.context = context;
  cm.graph = g;
  cm.order = training_order(g);
  cm.split = split;
  cm.propagate_estimates = cfg.propagate_estimates;
  cm.propagate_test_columns = cfg.propagate_test_columns;

  const DataMatrix original = matrix_view(d);
  DataMatrix working = original;

  std::vector<std::size_t> overwrite_cols = split.train;
  overwrite_cols.insert(overwrite_cols.end(), split.val.begin(), split.val.end());
  if (cfg.propagate_test_columns) {
    overwrite_cols.insert(overwrite_cols.end(), split.test.begin(), split.test.end());
  }

  std::set<NodeId> trained;
  for (const auto& wave : dependency_waves(g)) {
    std::vector<NodeId> agents;
    for (const auto& id : wave) {
      if (g.find(id)->kind == NodeKind::Agent) agents.push_back(id);
    }
    for (const auto& id : agents) {
      for (const auto& src : g.in_neighbors(id)) {
        if (g.find(src)->kind == NodeKind::Agent && !trained.count(src)) {
          throw InvariantError("agent '" + id + "' scheduled before its source '" + src + "'");
        }
      }
    }

    std::vector<TrainedAgent> results;
    if (cfg.threads > 1 && agents.size() > 1) {
      for (std::size_t start = 0; start < agents.size(); start += cfg.threads) {
        std::vector<std::future<TrainedAgent>> jobs;
        const std::size_t end = std::min(agents.size(), start + cfg.threads);
        for (std::size_t i = start; i < end; ++i) {
          jobs.push_back(std::async(std::launch::async, [&, id = agents[i]] {
            return train_agent(g, id, working, original, split, cfg);
          }));
        }
        for (auto& j : jobs) results.push_back(j.get());
      }
    } else {
      for (const auto& id : agents) results.push_back(train_agent(g, id, working, original, split, cfg));
    }

    for (auto& t : results) {
      if (cfg.propagate_estimates) {
        const auto in_rows = row_indices(working, t.agent.input_rows);
        const auto out_rows = row_indices(working, t.agent.output_rows);
        std::vector<double> input(in_rows.size());
        for (std::size_t c : overwrite_cols) {
          for (std::size_t k = 0; k < in_rows.size(); ++k) input[k] = working.at(in_rows[k], c);
          const Point2 p = forward(t.agent.model, input);
          working.at(out_rows[0], c) = p.x;
          working.at(out_rows[1], c) = p.y;
        }
      }
      trained.insert(t.id);
      cm.agents.emplace(t.id, std::move(t.agent));
    }
  }

  if (!split.test.empty()) {
    const auto eval = evaluate_composed(cm, d, split.test);
    for (auto& [id, stats] : eval.per_agent) cm.agents.at(id).composed_test = stats;
  }
  return cm;
}

std::map<NodeId, Point2> predict_all(const ContextModels& cm, const FeatureMap& features) {
  std::map<std::string, double> values;
  for (const auto& row : cm.required_features()) {
    auto it = features.find(row);
    if (it == features.end()) throw NotFoundError("missing feature row '" + row + "'");
    values[row] = it->second;
  }
  std::map<NodeId, Point2> out;
  std::vector<double> input;
  for (const auto& id : cm.order) {
    const AgentModel& a = cm.agents.at(id);
    input.clear();
    for (const auto& r : a.input_rows) {
      auto it = values.find(r);
      if (it == values.end()) throw NotFoundError("missing input row '" + r + "' for agent '" + id + "'");
      input.push_back(it->second);
    }
    const Point2 p = forward(a.model, input);
    values[a.output_rows[0]] = p.x;
    values[a.output_rows[1]] = p.y;
    out[id] = p;
  }
  return out;
}

FeatureMap snapshot_features(const Dataset& d, std::size_t column) {
  FeatureMap f;
  const Snapshot& s = d.snapshots.at(column);
  for (std::size_t i = 0; i < d.feature_rows.size(); ++i) f[d.feature_rows[i]] = s.features[i];
  return f;
}

CompositeEvaluation evaluate_composed(const ContextModels& cm, const Dataset& d,
                                      std::span<const std::size_t> columns) {
  const DataMatrix m = matrix_view(d);
  std::map<NodeId, std::vector<Point2>> targets, preds;
  std::vector<Point2> all_t, all_p;
  for (std::size_t c : columns) {
    const auto pred = predict_all(cm, snapshot_features(d, c));
    for (const auto& id : cm.order) {
      const AgentModel& a = cm.agents.at(id);
      const Point2 t{m.at(m.row_index(a.output_rows[0]), c), m.at(m.row_index(a.output_rows[1]), c)};
      targets[id].push_back(t);
      preds[id].push_back(pred.at(id));
      all_t.push_back(t);
      all_p.push_back(pred.at(id));
    }
  }
  CompositeEvaluation ev;
  for (const auto& id : cm.order) ev.per_agent[id] = error_stats(targets[id], preds[id]);
  ev.overall = error_stats(all_t, all_p);
  return ev;
}

Json context_models_to_json(const ContextModels& cm) {
  Json agents = Json::object();
  for (const auto& [id, a] : cm.agents) {
    agents[id] = {{"input_rows", a.input_rows},
                  {"output_rows", a.output_rows},
                  {"model", model_to_json(a.model)},
                  {"report", train_report_to_json(a.report)},
                  {"composed_test", error_stats_to_json(a.composed_test)}};
  }
  return {{"context", cm.context},
          {"graph", graph_to_json(cm.graph)},
          {"order", cm.order},
          {"split", split_to_json(cm.split)},
          {"propagate_estimates", cm.propagate_estimates},
          {"propagate_test_columns", cm.propagate_test_columns},
          {"agents", std::move(agents)}};
}

ContextModels context_models_from_json(const Json& j) {
  try {
    ContextModels cm;
    cm.context = j.at("context").get<std::string>();
    cm.graph = graph_from_json(j.at("graph"));
    cm.order = j.at("order").get<std::vector<NodeId>>();
    cm.split = split_from_json(j.at("split"));
    cm.propagate_estimates = j.at("propagate_estimates").get<bool>();
    cm.propagate_test_columns = j.at("propagate_test_columns").get<bool>();
    for (auto it = j.at("agents").begin(); it != j.at("agents").end(); ++it) {
      AgentModel a;
      a.input_rows = it.value().at("input_rows").get<std::vector<std::string>>();
      a.output_rows = it.value().at("output_rows").get<std::vector<std::string>>();
      a.model = model_from_json(it.value().at("model"));
      a.report = train_report_from_json(it.value().at("report"));
      a.composed_test = error_stats_from_json(it.value().at("composed_test"));
      if (a.model.spec.n_in != a.input_rows.size() || a.output_rows.size() != 2) {
        throw InvariantError("agent '" + it.key() + "': model shape does not match its rows");
      }
      cm.agents.emplace(it.key(), std::move(a));
    }
    auto agents = cm.graph.agent_ids();
    if (agents.size() != cm.agents.size() || !respects_dependencies(cm.graph, cm.order)) {
      throw InvariantError("context '" + cm.context + "': models do not match the graph's agent nodes");
    }
    for (const auto& id : agents) {
      if (!cm.agents.count(id)) throw InvariantError("context '" + cm.context + "': no model for agent '" + id + "'");
    }
    return cm;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("context models: ") + e.what());
  }
}

Json bundle_to_json(const ModelBundle& b) {
  Json contexts = Json::object();
  for (const auto& [id, cm] : b.contexts) contexts[id] = context_models_to_json(cm);
  return {{"schema_version", 1}, {"contexts", std::move(contexts)}};
}

ModelBundle bundle_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("contexts")) throw ParseError("model bundle: missing 'contexts'");
  if (j.value("schema_version", 0) != 1) throw ParseError("model bundle: unsupported schema_version");
  ModelBundle b;
  for (auto it = j.at("contexts").begin(); it != j.at("contexts").end(); ++it) {
    b.contexts.emplace(it.key(), context_models_from_json(it.value()));
  }
  return b;
}

std::string bundle_to_canonical(const ModelBundle& b) {
  return to_canonical_json(bundle_to_json(b), FloatStyle::Precise17);
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  return bundle_from_json(read_json_file(path));
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& path) {
  write_text_file(path, bundle_to_canonical(b));
}

Json training_summary(const ModelBundle& b) {
  Json out = Json::object();
  for (const auto& [ctx, cm] : b.contexts) {
    Json agents = Json::object();
    for (const auto& id : cm.order) {
      const AgentModel& a = cm.agents.at(id);
      agents[id] = {{"E", a.composed_test.mean},
                    {"stddev", a.composed_test.stddev},
                    {"max_error", a.composed_test.max},
                    {"working_copy_test", error_stats_to_json(a.report.test)},
                    {"epochs", a.report.epochs_run},
                    {"stop_reason", to_string(a.report.stop_reason)},
                    {"n_hidden", a.model.spec.n_hidden},
                    {"inputs", a.input_rows}};
    }
    out[ctx] = {{"order", cm.order},
                {"propagate_estimates", cm.propagate_estimates},
                {"propagate_test_columns", cm.propagate_test_columns},
                {"test_columns", cm.split.test.size()},
                {"agents", std::move(agents)}};
  }
  return out;
}

}  // namespace formation
