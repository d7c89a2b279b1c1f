#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "formation/context.hpp"
#include "formation/depgraph.hpp"
#include "formation/geometry.hpp"
#include "formation/json_io.hpp"
#include "formation/pipeline.hpp"

namespace formation {

inline constexpr int kProjectSchemaVersion = 1;

/// Training options stored in the manifest; CLI flags override them.
struct TrainingOptions {
  std::size_t n_hidden = 36;
  std::size_t max_epochs = 300;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  bool propagate_estimates = true;
  std::size_t threads = 1;
};

/// A project directory described by project.json. Paths are stored as written
/// in the manifest, relative to the manifest's directory.
struct ProjectBundle {
  std::filesystem::path root;
  int schema_version = kProjectSchemaVersion;
  std::string name;
  std::filesystem::path dataset;
  /// Per-context dataset overrides.
  std::map<ContextId, std::filesystem::path> datasets;
  /// Optional; without it the project has one context per graph and no rules.
  std::optional<std::filesystem::path> contexts;
  std::map<ContextId, std::filesystem::path> graphs;
  std::filesystem::path models = "models.json";
  std::filesystem::path report = "report.json";
  std::filesystem::path traces = "traces";
  TrainingOptions training;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path manifest_path() const { return root / "project.json"; }
  std::filesystem::path dataset_path(const ContextId& context) const;
};

/// `path` may name the manifest or its directory. Throws NotFoundError when
/// the manifest is missing and ParseError for a malformed or unsupported one.
ProjectBundle load_project(const std::filesystem::path& path);
ProjectBundle project_from_json(const Json& j, const std::filesystem::path& root);
Json project_to_json(const ProjectBundle& p);
void save_project(const ProjectBundle& p);

ContextSet project_contexts(const ProjectBundle& p);
Dataset project_dataset(const ProjectBundle& p, const ContextId& context);
DependencyGraph project_graph(const ProjectBundle& p, const ContextId& context);
PipelineConfig pipeline_config(const TrainingOptions& t);

struct ProjectReport {
  std::vector<Diagnostic> diagnostics;

  /// 0 when clean, 2 when any file could not be read, 1 otherwise.
  int exit_code() const;
  Json to_json() const;
};

/// Dataset, graph and context validation over the whole project. Never
/// throws; problems are returned as diagnostics.
ProjectReport validate_project(const std::filesystem::path& path);

/// Trains the listed contexts (all when empty) in context-set order.
ModelBundle train_project(const ProjectBundle& p, const PipelineConfig& cfg,
                          const std::vector<ContextId>& only = {});

/// Writes an 11-agent project with Attack and Defense contexts whose
/// demonstrations come from the attraction baseline.
ProjectBundle write_demo_project(const std::filesystem::path& dir, std::size_t samples,
                                 std::uint64_t seed);

/// Four groups (goalie, defenders, midfielders, attackers); each leader is
/// fed by the ball, followers by their group leader.
DependencyGraph team_graph();

}  // namespace formation
