#include "formation/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

#include "formation/assignment.hpp"
#include "formation/error.hpp"
#include "formation/project.hpp"
#include "formation/service.hpp"
#include "formation/simulator.hpp"

namespace formation::cli {

namespace fs = std::filesystem;

namespace {

Point2 to_point(const std::vector<double>& v) { return {v.at(0), v.at(1)}; }

struct TrainFlags {
  std::vector<std::string> contexts;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> threads;
  bool no_propagate = false;
};

PipelineConfig effective_config(const ProjectBundle& p, const TrainFlags& f) {
  TrainingOptions t = p.training;
  if (f.seed) t.seed = *f.seed;
  if (f.hidden) t.n_hidden = *f.hidden;
  if (f.epochs) t.max_epochs = *f.epochs;
  if (f.threads) t.threads = *f.threads;
  if (f.no_propagate) t.propagate_estimates = false;
  return pipeline_config(t);
}

ModelBundle load_models(const ProjectBundle& p) {
  const fs::path path = p.resolve(p.models);
  if (!fs::exists(path)) throw NotFoundError("no trained models at " + path.string() + "; run train first");
  return load_bundle(path);
}

ContextId pick_context(const ProjectBundle& p, const std::string& flag) {
  const ContextSet cs = project_contexts(p);
  if (flag.empty()) return cs.initial;
  if (!cs.contains(flag)) throw NotFoundError("unknown context '" + flag + "'");
  return flag;
}

LinearWeightModel marking_template() {
  return {{{"agent_distance", 1.0}, {"goal_distance", 0.0}, {"ball_distance", 0.0}, {"priority", 0.0}}};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learned formation strategies: train, evaluate, simulate and serve"};
  app.require_subcommand(1);

  std::string project_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { seed = s; seed_given = true; },
                                            "Random seed");
  };

  // validate
  bool validate_json = false;
  auto* validate = app.add_subcommand("validate", "Check dataset, graphs and contexts of a project");
  validate->add_option("project", project_path, "Project directory or manifest")->required();
  validate->add_flag("--json", validate_json, "Print the report as JSON");
  add_seed(validate);

  // train
  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train every agent model of the project");
  train->add_option("project", project_path)->required();
  train->add_option("--context", tf.contexts, "Train only these contexts");
  train->add_option("--hidden", tf.hidden, "Hidden units per agent model");
  train->add_option("--epochs", tf.epochs, "Maximum LM epochs");
  train->add_option("--threads", tf.threads, "Agents trained concurrently within a wave");
  train->add_flag("--no-propagate", tf.no_propagate, "Train followers on demonstrated leader positions");
  add_seed(train);

  // eval
  std::string eval_context;
  std::string eval_split = "test";
  std::vector<double> eval_noise;
  std::size_t eval_reps = 20;
  bool eval_variance = false;
  auto* eval = app.add_subcommand("eval", "Evaluate trained models on a stored split");
  eval->add_option("project", project_path)->required();
  eval->add_option("--context", eval_context);
  eval->add_option("--split", eval_split)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--noise", eval_noise, "Robustness sweep over these noise levels")->delimiter(',');
  eval->add_option("--reps", eval_reps, "Noise draws per level");
  eval->add_flag("--variance", eval_variance, "Read noise levels as variances");
  add_seed(eval);

  // simulate
  ScenarioConfig sim;
  std::string trace_csv, trace_svg, trace_json, run_name;
  std::vector<double> ball_start{0.0, 0.0}, ball_velocity{0.0, 0.0};
  auto* simulate = app.add_subcommand("simulate", "Run a moving-ball scenario with trained models");
  simulate->add_option("project", project_path)->required();
  simulate->add_option("--cycles", sim.cycles);
  simulate->add_option("--noise", sim.noise, "Ball perception noise (stddev, meters)");
  simulate->add_flag("--variance", sim.noise_is_variance, "Read --noise as a variance");
  simulate->add_flag("--chase", sim.chase, "Nearest agent chases the ball");
  simulate->add_option("--ball", ball_start, "Ball start x y")->expected(2);
  simulate->add_option("--velocity", ball_velocity, "Ball initial velocity vx vy")->expected(2);
  simulate->add_option("--max-speed", sim.max_speed);
  simulate->add_option("--trace", trace_csv, "Write the trace as CSV");
  simulate->add_option("--svg", trace_svg, "Write the trace as SVG");
  simulate->add_option("--json", trace_json, "Write the trace as JSON");
  simulate->add_option("--run", run_name, "Also store the trace as <traces>/<run>.json");
  add_seed(simulate);

  // assign
  std::string scene_path;
  auto* assign = app.add_subcommand("assign", "Solve one position assignment scene");
  assign->add_option("scene", scene_path, "Scene JSON")->required()->check(CLI::ExistingFile);
  add_seed(assign);

  // pso
  std::string fitness = "sphere";
  std::string pso_template, pso_out;
  PsoConfig pso_cfg;
  std::size_t dims = 2, scenes = 50;
  auto* pso = app.add_subcommand("pso", "Tune weight coefficients with particle swarm optimization");
  pso->add_option("--fitness", fitness)->check(CLI::IsMember({"sphere", "marking"}));
  pso->add_option("--dims", dims, "Dimensions of the sphere fitness");
  pso->add_option("--scenes", scenes, "Marking scenes in the fitness");
  pso->add_option("--template", pso_template, "Weight model JSON with optional \"bounds\"");
  pso->add_option("--iterations", pso_cfg.iterations);
  pso->add_option("--swarm", pso_cfg.swarm_size);
  pso->add_option("--out", pso_out, "Write the tuned coefficients JSON");
  add_seed(pso);

  // observe
  std::string observe_out;
  std::size_t samples = 1000;
  double margin = 0.0;
  auto* observe = app.add_subcommand("observe", "Record a dataset from the attraction baseline policy");
  observe->add_option("--out", observe_out)->required();
  observe->add_option("--samples", samples);
  observe->add_option("--margin", margin, "Keep sampled balls this far inside the field");
  add_seed(observe);

  // init-demo
  std::string demo_dir;
  std::size_t demo_samples = 600;
  auto* init = app.add_subcommand("init-demo", "Write an 11-agent demo project");
  init->add_option("dir", demo_dir)->required();
  init->add_option("--samples", demo_samples);
  add_seed(init);

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the JSON API for the annotation tool");
  serve->add_option("project", project_path)->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  add_seed(serve);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*validate) {
      const ProjectReport r = validate_project(project_path);
      if (validate_json) {
        out << r.to_json().dump(2) << "\n";
      } else {
        for (const auto& d : r.diagnostics) {
          out << d.code << ": " << d.message << "\n";
        }
        if (r.diagnostics.empty()) out << "ok\n";
      }
      return r.exit_code();
    }

    if (*train) {
      const ProjectBundle p = load_project(project_path);
      if (seed_given) tf.seed = seed;
      const PipelineConfig cfg = effective_config(p, tf);
      ModelBundle trained = train_project(p, cfg, tf.contexts);
      ModelBundle merged;
      const fs::path models_path = p.resolve(p.models);
      if (!tf.contexts.empty() && fs::exists(models_path)) merged = load_bundle(models_path);
      for (auto& [ctx, cm] : trained.contexts) merged.contexts[ctx] = std::move(cm);
      save_bundle(merged, models_path);
      const Json summary = training_summary(merged);
      write_text_file(p.resolve(p.report), summary.dump(2) + "\n");
      out << summary.dump(2) << "\n";
      return 0;
    }

    if (*eval) {
      const ProjectBundle p = load_project(project_path);
      const ContextId ctx = pick_context(p, eval_context);
      const ModelBundle models = load_models(p);
      auto it = models.contexts.find(ctx);
      if (it == models.contexts.end()) throw NotFoundError("context '" + ctx + "' has no trained models");
      const ContextModels& cm = it->second;
      const Dataset d = project_dataset(p, ctx);
      const auto& cols = eval_split == "train" ? cm.split.train : eval_split == "val" ? cm.split.val : cm.split.test;
      if (cols.empty()) throw InvariantError("split '" + eval_split + "' is empty");
      const CompositeEvaluation ev = evaluate_composed(cm, d, cols);
      Json agents = Json::object();
      for (const auto& [id, s] : ev.per_agent) agents[id] = error_stats_to_json(s);
      Json result = {{"context", ctx}, {"split", eval_split}, {"overall", error_stats_to_json(ev.overall)},
                     {"agents", std::move(agents)}};
      if (!eval_noise.empty()) {
        Json table = Json::array();
        for (const auto& row : robustness_sweep(cm, d, cols, eval_noise, seed, eval_reps, eval_variance)) {
          table.push_back({{"noise", row.noise}, {"E", row.mean_error}, {"stddev", row.error_stddev}});
        }
        result["robustness"] = std::move(table);
      }
      out << result.dump(2) << "\n";
      return 0;
    }

    if (*simulate) {
      const ProjectBundle p = load_project(project_path);
      const ModelBundle models = load_models(p);
      sim.seed = seed;
      sim.ball_start = to_point(ball_start);
      sim.ball_velocity = to_point(ball_velocity);
      const ScenarioTrace trace = run_scenario(models, project_contexts(p), sim);
      if (!trace_csv.empty()) write_text_file(trace_csv, trace_to_csv(trace));
      if (!trace_svg.empty()) write_text_file(trace_svg, trace_to_svg(trace, project_dataset(p, project_contexts(p).initial).field));
      const std::string json = to_canonical_json(trace_to_json(trace), FloatStyle::Fixed6);
      if (!trace_json.empty()) write_text_file(trace_json, json);
      if (!run_name.empty()) write_text_file(p.resolve(p.traces) / (run_name + ".json"), json);
      const SmoothnessReport s = smoothness(trace);
      out << Json{{"cycles", trace.cycles.size()},
                  {"angle_mean", s.angle_mean},
                  {"angle_stddev", s.angle_stddev},
                  {"angle_samples", s.angle_samples},
                  {"distance_mean", s.distance_mean},
                  {"distance_stddev", s.distance_stddev}}
                 .dump(2)
          << "\n";
      return 0;
    }

    if (*assign) {
      out << solve_scene(assignment_scene_from_json(read_json_file(scene_path))).dump(2) << "\n";
      return 0;
    }

    if (*pso) {
      pso_cfg.seed = seed;
      Json result;
      if (fitness == "sphere") {
        if (dims == 0) throw InvariantError("sphere fitness needs at least one dimension");
        pso_cfg.bounds.assign(dims, {-5.0, 5.0});
        const PsoResult r = pso_maximize(
            [](std::span<const double> x) {
              double s = 0.0;
              for (double v : x) s -= (v - 1.0) * (v - 1.0);
              return s;
            },
            pso_cfg);
        result = {{"best", r.best}, {"fitness", r.best_fitness}};
      } else {
        LinearWeightModel tmpl = marking_template();
        pso_cfg.bounds = {{0.0, 2.0}, {0.0, 2.0}, {0.0, 2.0}, {0.0, 100.0}};
        if (!pso_template.empty()) {
          const Json j = read_json_file(pso_template);
          tmpl = weight_model_from_json(j);
          if (j.contains("bounds")) {
            pso_cfg.bounds = j.at("bounds").get<std::vector<std::pair<double, double>>>();
          } else {
            pso_cfg.bounds.assign(tmpl.terms.size(), {-10.0, 10.0});
          }
        }
        const auto sc = generate_marking_scenes(scenes, 4, 6, derive_seed(seed, "scenes"));
        const LinearWeightModel tuned =
            pso_tune(tmpl, [&](const LinearWeightModel& m) { return marking_score(m, sc); }, pso_cfg);
        result = weight_model_to_json(tuned);
        result["fitness"] = marking_score(tuned, sc);
      }
      if (!pso_out.empty()) write_text_file(pso_out, result.dump(2) + "\n");
      out << result.dump(2) << "\n";
      return 0;
    }

    if (*observe) {
      const FieldConfig field;
      const Dataset d = observe_policy(attraction_policy(default_homes()), uniform_ball_sampler(field, margin),
                                       samples, seed, field);
      save_dataset(d, observe_out);
      out << "wrote " << d.snapshots.size() << " snapshots to " << observe_out << "\n";
      return 0;
    }

    if (*init) {
      const ProjectBundle p = write_demo_project(demo_dir, demo_samples, seed);
      out << "wrote " << p.manifest_path().string() << "\n";
      return 0;
    }

    if (*serve) {
      const ProjectReport r = validate_project(project_path);
      if (r.exit_code() != 0) {
        out << r.to_json().dump(2) << "\n";
        return r.exit_code();
      }
      ProjectBundle p = load_project(project_path);
      PipelineConfig cfg = pipeline_config(p.training);
      if (seed_given) {
        cfg.seed = seed;
        cfg.train.seed = seed;
      }
      Service service(std::move(p), cfg);
      const int bound = service.bind(host, port);
      if (bound < 0) throw Error("io_error", "cannot bind " + host + ":" + std::to_string(port));
      out << "listening on http://" << host << ":" << bound << std::endl;
      return service.listen_after_bind() ? 0 : 1;
    }
  } catch (const Error& e) {
    err << api_error(e.code(), e.what()).dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << api_error("internal", e.what()).dump() << "\n";
    return 1;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace formation::cli
