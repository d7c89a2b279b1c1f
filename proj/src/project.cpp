#include "formation/project.hpp"

#include <algorithm>

#include "formation/error.hpp"
#include "formation/simulator.hpp"

namespace formation {

namespace fs = std::filesystem;

fs::path ProjectBundle::resolve(const fs::path& p) const { return p.is_absolute() ? p : root / p; }

fs::path ProjectBundle::dataset_path(const ContextId& context) const {
  auto it = datasets.find(context);
  return resolve(it != datasets.end() ? it->second : dataset);
}

namespace {

fs::path manifest_of(const fs::path& path) {
  return fs::is_directory(path) ? path / "project.json" : path;
}

std::map<ContextId, fs::path> path_map(const Json& j, const char* key) {
  std::map<ContextId, fs::path> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_object()) throw ParseError(std::string("project: '") + key + "' must be an object");
  for (const auto& [k, v] : j.at(key).items()) out[k] = v.get<std::string>();
  return out;
}

Json path_map_json(const std::map<ContextId, fs::path>& m) {
  Json j = Json::object();
  for (const auto& [k, v] : m) j[k] = v.generic_string();
  return j;
}

}  // namespace

ProjectBundle project_from_json(const Json& j, const fs::path& root) {
  try {
    ProjectBundle p;
    p.root = root;
    p.schema_version = j.at("schema_version").get<int>();
    if (p.schema_version != kProjectSchemaVersion) {
      throw ParseError("project: unsupported schema version " + std::to_string(p.schema_version));
    }
    p.name = j.value("name", std::string{});
    p.dataset = j.at("dataset").get<std::string>();
    p.datasets = path_map(j, "datasets");
    if (j.contains("contexts")) p.contexts = fs::path(j.at("contexts").get<std::string>());
    p.graphs = path_map(j, "graphs");
    if (p.graphs.empty()) throw ParseError("project: at least one graph is required");
    p.models = j.value("models", std::string("models.json"));
    p.report = j.value("report", std::string("report.json"));
    p.traces = j.value("traces", std::string("traces"));
    if (j.contains("training")) {
      const Json& t = j.at("training");
      p.training.n_hidden = t.value("n_hidden", p.training.n_hidden);
      p.training.max_epochs = t.value("max_epochs", p.training.max_epochs);
      p.training.seed = t.value("seed", p.training.seed);
      p.training.split_seed = t.value("split_seed", p.training.split_seed);
      p.training.propagate_estimates = t.value("propagate_estimates", p.training.propagate_estimates);
      p.training.threads = t.value("threads", p.training.threads);
    }
    return p;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("project: ") + e.what());
  }
}

Json project_to_json(const ProjectBundle& p) {
  Json j = {{"schema_version", p.schema_version},
            {"name", p.name},
            {"dataset", p.dataset.generic_string()},
            {"graphs", path_map_json(p.graphs)},
            {"models", p.models.generic_string()},
            {"report", p.report.generic_string()},
            {"traces", p.traces.generic_string()},
            {"training",
             {{"n_hidden", p.training.n_hidden},
              {"max_epochs", p.training.max_epochs},
              {"seed", p.training.seed},
              {"split_seed", p.training.split_seed},
              {"propagate_estimates", p.training.propagate_estimates},
              {"threads", p.training.threads}}}};
  if (!p.datasets.empty()) j["datasets"] = path_map_json(p.datasets);
  if (p.contexts) j["contexts"] = p.contexts->generic_string();
  return j;
}

ProjectBundle load_project(const fs::path& path) {
  const fs::path manifest = manifest_of(path);
  return project_from_json(read_json_file(manifest), manifest.parent_path());
}

void save_project(const ProjectBundle& p) {
  write_text_file(p.manifest_path(), project_to_json(p).dump(2) + "\n");
}

ContextSet project_contexts(const ProjectBundle& p) {
  if (p.contexts) return load_context_set(p.resolve(*p.contexts));
  ContextSet cs;
  for (const auto& [ctx, _] : p.graphs) cs.contexts.push_back(ctx);
  cs.initial = cs.contexts.front();
  return cs;
}

Dataset project_dataset(const ProjectBundle& p, const ContextId& context) {
  return load_dataset(p.dataset_path(context));
}

DependencyGraph project_graph(const ProjectBundle& p, const ContextId& context) {
  auto it = p.graphs.find(context);
  if (it == p.graphs.end()) throw NotFoundError("no graph for context '" + context + "'");
  return load_graph(p.resolve(it->second));
}

PipelineConfig pipeline_config(const TrainingOptions& t) {
  PipelineConfig cfg;
  cfg.n_hidden = t.n_hidden;
  cfg.train.max_epochs = t.max_epochs;
  cfg.seed = t.seed;
  cfg.train.seed = t.seed;
  cfg.split_seed = t.split_seed;
  cfg.propagate_estimates = t.propagate_estimates;
  cfg.threads = t.threads;
  return cfg;
}

int ProjectReport::exit_code() const {
  if (diagnostics.empty()) return 0;
  for (const auto& d : diagnostics) {
    if (d.code == "io_error") return 2;
  }
  return 1;
}

Json ProjectReport::to_json() const {
  Json arr = Json::array();
  for (const auto& d : diagnostics) {
    arr.push_back({{"code", d.code}, {"message", d.message}, {"subjects", d.subjects}});
  }
  return {{"clean", diagnostics.empty()}, {"diagnostics", std::move(arr)}};
}

namespace {

// Whether a feature name resolves against the dataset's feature rows under the
// extractor naming rules.
bool feature_resolvable(const std::string& name, const std::vector<std::string>& rows) {
  auto has = [&](const std::string& r) { return std::find(rows.begin(), rows.end(), r) != rows.end(); };
  auto ends_with = [&](const std::string& suffix) {
    return name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (has(name)) return true;
  if (ends_with("_vx")) return has(name.substr(0, name.size() - 3) + "_x");
  if (ends_with("_vy")) return has(name.substr(0, name.size() - 3) + "_y");
  if (ends_with("_avg")) return has(name.substr(0, name.size() - 4));
  return false;
}

template <typename F>
auto guarded(ProjectReport& r, const std::string& what, const std::string& subject, F&& load)
    -> std::optional<decltype(load())> {
  try {
    return load();
  } catch (const NotFoundError& e) {
    r.diagnostics.push_back({"io_error", what + ": " + e.what(), {subject}});
  } catch (const Error& e) {
    r.diagnostics.push_back({what, e.what(), {subject}});
  } catch (const std::exception& e) {
    r.diagnostics.push_back({what, e.what(), {subject}});
  }
  return std::nullopt;
}

}  // namespace

ProjectReport validate_project(const fs::path& path) {
  ProjectReport r;
  auto project = guarded(r, "manifest", manifest_of(path).string(), [&] { return load_project(path); });
  if (!project) return r;
  const ProjectBundle& p = *project;

  auto cs = guarded(r, "contexts", p.contexts ? p.contexts->generic_string() : "", [&] {
    ContextSet s = project_contexts(p);
    validate_context_set(s);
    return s;
  });
  if (!cs) return r;

  for (const auto& [ctx, _] : p.graphs) {
    if (!cs->contains(ctx)) r.diagnostics.push_back({"unknown_context", "graph for undeclared context '" + ctx + "'", {ctx}});
  }
  for (const auto& [ctx, _] : p.datasets) {
    if (!cs->contains(ctx)) r.diagnostics.push_back({"unknown_context", "dataset for undeclared context '" + ctx + "'", {ctx}});
  }

  std::map<fs::path, std::optional<Dataset>> datasets;
  for (const auto& ctx : cs->contexts) {
    const fs::path dpath = p.dataset_path(ctx);
    if (!datasets.count(dpath)) {
      datasets[dpath] = guarded(r, "dataset", dpath.string(), [&] { return load_dataset(dpath); });
    }
    const auto& d = datasets.at(dpath);
    if (d) {
      for (const auto& f : cs->referenced_features()) {
        if (!feature_resolvable(f, d->feature_rows)) {
          r.diagnostics.push_back({"unknown_feature", "rule feature '" + f + "' cannot be derived from the dataset of context '" + ctx + "'", {ctx, f}});
        }
      }
    }
    if (!p.graphs.count(ctx)) {
      r.diagnostics.push_back({"missing_graph", "context '" + ctx + "' has no graph", {ctx}});
      continue;
    }
    auto g = guarded(r, "graph", p.graphs.at(ctx).generic_string(), [&] { return project_graph(p, ctx); });
    if (!g) continue;
    for (auto diag : validate_graph(*g, d ? &*d : nullptr)) {
      diag.subjects.insert(diag.subjects.begin(), ctx);
      r.diagnostics.push_back(std::move(diag));
    }
  }
  return r;
}

ModelBundle train_project(const ProjectBundle& p, const PipelineConfig& cfg, const std::vector<ContextId>& only) {
  const ContextSet cs = project_contexts(p);
  for (const auto& c : only) {
    if (!cs.contains(c)) throw NotFoundError("unknown context '" + c + "'");
  }
  ModelBundle bundle;
  for (const auto& ctx : cs.contexts) {
    if (!only.empty() && std::find(only.begin(), only.end(), ctx) == only.end()) continue;
    bundle.contexts[ctx] = train_context(project_dataset(p, ctx), project_graph(p, ctx), cfg, ctx);
  }
  return bundle;
}

DependencyGraph team_graph() {
  DependencyGraph g;
  g.nodes.push_back({"ball", NodeKind::Feature, {"ball_x", "ball_y"}});
  for (int i = 1; i <= 11; ++i) {
    const std::string id = "a" + std::to_string(i);
    g.nodes.push_back({id, NodeKind::Agent, agent_coordinate_rows(id)});
  }
  g.edges = {{"ball", "a1"}, {"ball", "a4"}, {"ball", "a7"}, {"ball", "a10"},
             {"a4", "a2"},   {"a4", "a3"},   {"a4", "a5"},   {"a7", "a6"},
             {"a7", "a8"},   {"a10", "a9"},  {"a10", "a11"}};
  return g;
}

ProjectBundle write_demo_project(const fs::path& dir, std::size_t samples, std::uint64_t seed) {
  ProjectBundle p;
  p.root = dir;
  p.name = "demo";
  p.dataset = "data/defense.json";
  p.datasets = {{"Attack", "data/attack.json"}, {"Defense", "data/defense.json"}};
  p.contexts = fs::path("contexts.json");
  p.graphs = {{"Attack", "graphs/team.json"}, {"Defense", "graphs/team.json"}};

  ContextSet cs;
  cs.contexts = {"Defense", "Attack"};
  cs.initial = "Defense";
  cs.rules.push_back({"Defense", "Attack", 1, Predicate::threshold(Predicate::Op::Gt, "ball_x", 10.0), false});
  cs.rules.push_back({"Attack", "Defense", 1, Predicate::threshold(Predicate::Op::Lt, "ball_x", -10.0), false});

  std::vector<HomePosition> defense = default_homes();
  std::vector<HomePosition> attack = defense;
  for (auto& h : attack) {
    if (h.agent != "a1") h.home.x += 15.0;
  }
  const BallSampler sampler = uniform_ball_sampler(FieldConfig{});
  const Dataset dd = observe_policy(attraction_policy(defense), sampler, samples, derive_seed(seed, "Defense"));
  const Dataset ad = observe_policy(attraction_policy(attack), sampler, samples, derive_seed(seed, "Attack"));

  save_dataset(dd, p.resolve("data/defense.json"));
  save_dataset(ad, p.resolve("data/attack.json"));
  write_text_file(p.resolve("contexts.json"), context_set_to_json(cs).dump(2) + "\n");
  write_text_file(p.resolve("graphs/team.json"), graph_to_json(team_graph()).dump(2) + "\n");
  fs::create_directories(p.resolve(p.traces));
  save_project(p);
  return p;
}

}  // namespace formation
