#include "formation/service.hpp"

#include <charconv>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <regex>
#include <thread>

#include <httplib.h>

#include "formation/assignment.hpp"
#include "formation/error.hpp"

namespace formation {

namespace fs = std::filesystem;

Json api_error(const std::string& code, const std::string& message, const Json& detail) {
  return {{"code", code}, {"message", message}, {"detail", detail}};
}

int status_for_code(const std::string& code) {
  if (code == "bad_request") return 400;
  if (code == "not_found") return 404;
  if (code == "conflict") return 409;
  if (code == "invariant_violation") return 422;
  return 500;
}

namespace {

class ApiFailure : public Error {
 public:
  ApiFailure(std::string code, const std::string& message, int status)
      : Error(std::move(code), message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

[[noreturn]] void conflict(const std::string& message) { throw ApiFailure("conflict", message, 409); }

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t end = path.find('/', start);
    const std::string part = path.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!part.empty()) parts.push_back(part);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return parts;
}

double parse_number(const std::string& name, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ParseError("query parameter '" + name + "' is not a number");
  }
  return v;
}

std::size_t parse_index(const std::string& text) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw ParseError("bad snapshot index '" + text + "'");
  return v;
}

Json parse_body(const std::string& body) {
  try {
    return Json::parse(body);
  } catch (const Json::exception& e) {
    throw ParseError(std::string("request body: ") + e.what());
  }
}

struct Job {
  std::size_t id = 0;
  ContextId context;
  std::string state = "queued";
  Json error = nullptr;
  Json summary = nullptr;
};

}  // namespace

struct Service::Impl {
  ProjectBundle project;
  PipelineConfig config;
  ContextSet contexts;

  std::mutex mu;
  std::condition_variable cv;
  std::map<fs::path, Dataset> datasets;
  ModelBundle models;
  std::vector<Job> jobs;
  std::deque<std::size_t> queue;
  bool running = false;
  bool stopping = false;
  std::thread worker;

  httplib::Server server;

  Impl(ProjectBundle p, PipelineConfig cfg) : project(std::move(p)), config(std::move(cfg)) {
    contexts = project_contexts(project);
    validate_context_set(contexts);
    const fs::path models_path = project.resolve(project.models);
    if (fs::exists(models_path)) models = load_bundle(models_path);
    worker = std::thread([this] { work(); });
  }

  ~Impl() {
    {
      std::lock_guard lock(mu);
      stopping = true;
    }
    cv.notify_all();
    server.stop();
    if (worker.joinable()) worker.join();
  }

  bool busy() const { return running || !queue.empty(); }

  ContextId context_param(const ApiRequest& req) const {
    auto it = req.query.find("context");
    if (it == req.query.end() || it->second.empty()) return contexts.initial;
    if (!contexts.contains(it->second)) throw NotFoundError("unknown context '" + it->second + "'");
    return it->second;
  }

  // Requires mu held.
  Dataset& dataset_for(const ContextId& ctx) {
    const fs::path path = project.dataset_path(ctx);
    auto it = datasets.find(path);
    if (it == datasets.end()) it = datasets.emplace(path, load_dataset(path)).first;
    return it->second;
  }

  // Requires mu held. Validates and persists before replacing the cached copy.
  void commit(const ContextId& ctx, Dataset next) {
    validate_dataset(next);
    const fs::path path = project.dataset_path(ctx);
    save_dataset(next, path);
    datasets[path] = std::move(next);
  }

  Snapshot snapshot_from_body(const Dataset& d, const Json& body) {
    Json probe = dataset_to_json(d);
    probe["snapshots"] = Json::array({body});
    return dataset_from_json(probe).snapshots.front();
  }

  void work() {
    for (;;) {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return stopping || !queue.empty(); });
      if (stopping) return;
      const std::size_t id = queue.front();
      queue.pop_front();
      running = true;
      jobs[id].state = "running";
      const ContextId ctx = jobs[id].context;
      const ProjectBundle project_copy = project;
      lock.unlock();

      std::optional<ContextModels> trained;
      Json error = nullptr;
      try {
        Dataset d;
        {
          std::lock_guard g(mu);
          d = dataset_for(ctx);
        }
        trained = train_context(d, project_graph(project_copy, ctx), config, ctx);
      } catch (const Error& e) {
        error = api_error(e.code(), e.what());
      } catch (const std::exception& e) {
        error = api_error("training_failed", e.what());
      }

      lock.lock();
      if (trained) {
        models.contexts[ctx] = std::move(*trained);
        try {
          save_bundle(models, project.resolve(project.models));
          write_text_file(project.resolve(project.report), training_summary(models).dump(2) + "\n");
          ModelBundle one;
          one.contexts[ctx] = models.contexts.at(ctx);
          jobs[id].summary = training_summary(one);
          jobs[id].state = "done";
        } catch (const Error& e) {
          jobs[id].state = "failed";
          jobs[id].error = api_error(e.code(), e.what());
        }
      } else {
        jobs[id].state = "failed";
        jobs[id].error = error;
      }
      running = false;
      lock.unlock();
      cv.notify_all();
    }
  }

  Json job_json(const Job& j) const {
    return {{"id", j.id}, {"context", j.context}, {"state", j.state}, {"error", j.error}, {"summary", j.summary}};
  }

  ApiResponse route(const ApiRequest& req) {
    const auto parts = split_path(req.path);
    if (parts.size() < 2 || parts[0] != "api") throw NotFoundError("no route for " + req.path);
    const std::string& top = parts[1];
    const std::string& m = req.method;

    if (top == "project" && parts.size() == 2 && m == "GET") {
      std::lock_guard lock(mu);
      Json trained = Json::array();
      for (const auto& [ctx, _] : models.contexts) trained.push_back(ctx);
      return {200, {{"manifest", project_to_json(project)}, {"contexts", contexts.contexts}, {"trained", trained}}};
    }
    if (top == "contexts" && parts.size() == 2 && m == "GET") {
      return {200, context_set_to_json(contexts)};
    }
    if (top == "dataset") return dataset_route(req, parts);
    if (top == "train") return train_route(req, parts);
    if (top == "predict" && parts.size() == 2 && m == "GET") return predict(req);
    if (top == "assign" && parts.size() == 2 && m == "POST") {
      return {200, solve_scene(assignment_scene_from_json(parse_body(req.body)))};
    }
    if (top == "trace" && parts.size() == 3 && m == "GET") return trace(parts[2]);
    throw NotFoundError("no route for " + m + " " + req.path);
  }

  ApiResponse dataset_route(const ApiRequest& req, const std::vector<std::string>& parts) {
    const ContextId ctx = context_param(req);
    const std::string& m = req.method;
    std::lock_guard lock(mu);
    if (parts.size() == 2 && m == "GET") return {200, dataset_to_json(dataset_for(ctx))};
    if (m != "GET" && busy()) conflict("dataset is being read by a training job");

    if (parts.size() == 2 && m == "PUT") {
      commit(ctx, dataset_from_json(parse_body(req.body)));
      return {200, dataset_to_json(dataset_for(ctx))};
    }
    if (parts.size() >= 3 && parts[2] == "snapshots") {
      Dataset next = dataset_for(ctx);
      if (parts.size() == 3 && m == "POST") {
        next.snapshots.push_back(snapshot_from_body(next, parse_body(req.body)));
        const std::size_t index = next.snapshots.size() - 1;
        commit(ctx, std::move(next));
        return {201, {{"index", index}, {"count", index + 1}}};
      }
      if (parts.size() == 4 && (m == "PUT" || m == "DELETE")) {
        const std::size_t i = parse_index(parts[3]);
        if (i >= next.snapshots.size()) throw NotFoundError("no snapshot " + parts[3]);
        if (m == "PUT") {
          next.snapshots[i] = snapshot_from_body(next, parse_body(req.body));
        } else {
          next.snapshots.erase(next.snapshots.begin() + static_cast<std::ptrdiff_t>(i));
        }
        const std::size_t count = next.snapshots.size();
        commit(ctx, std::move(next));
        return {200, {{"index", i}, {"count", count}}};
      }
    }
    throw NotFoundError("no route for " + m + " " + req.path);
  }

  ApiResponse train_route(const ApiRequest& req, const std::vector<std::string>& parts) {
    if (parts.size() == 3 && parts[2] == "status" && req.method == "GET") {
      std::lock_guard lock(mu);
      Json list = Json::array();
      for (const auto& j : jobs) list.push_back(job_json(j));
      return {200, {{"busy", busy()}, {"jobs", std::move(list)}}};
    }
    if (parts.size() == 2 && req.method == "POST") {
      std::vector<ContextId> targets;
      auto it = req.query.find("context");
      if (it != req.query.end() && !it->second.empty()) {
        targets.push_back(context_param(req));
      } else {
        targets = contexts.contexts;
      }
      for (const auto& ctx : targets) {
        if (!project.graphs.count(ctx)) throw NotFoundError("no graph for context '" + ctx + "'");
      }
      Json ids = Json::array();
      {
        std::lock_guard lock(mu);
        for (const auto& ctx : targets) {
          Job j;
          j.id = jobs.size();
          j.context = ctx;
          jobs.push_back(j);
          queue.push_back(j.id);
          ids.push_back(j.id);
        }
      }
      cv.notify_all();
      return {202, {{"jobs", std::move(ids)}}};
    }
    throw NotFoundError("no route for " + req.method + " " + req.path);
  }

  ApiResponse predict(const ApiRequest& req) {
    const ContextId ctx = context_param(req);
    FeatureMap features;
    for (const auto& [k, v] : req.query) {
      if (k != "context") features[k] = parse_number(k, v);
    }
    std::lock_guard lock(mu);
    auto it = models.contexts.find(ctx);
    if (it == models.contexts.end()) throw NotFoundError("context '" + ctx + "' has no trained models");
    Json targets = Json::object();
    for (const auto& [id, p] : predict_all(it->second, features)) targets[id] = Json::array({p.x, p.y});
    return {200, {{"context", ctx}, {"targets", std::move(targets)}}};
  }

  ApiResponse trace(const std::string& run) {
    static const std::regex valid("[A-Za-z0-9_-][A-Za-z0-9_.-]*");
    if (!std::regex_match(run, valid)) throw ParseError("bad run name '" + run + "'");
    return {200, read_json_file(project.resolve(project.traces) / (run + ".json"))};
  }
};

Service::Service(ProjectBundle project) : Service(project, pipeline_config(project.training)) {}

Service::Service(ProjectBundle project, PipelineConfig train_config)
    : impl_(std::make_unique<Impl>(std::move(project), std::move(train_config))) {
  impl_->server.set_payload_max_length(64u << 20);
  auto adapter = [this](const httplib::Request& hr, httplib::Response& res) {
    ApiRequest req{hr.method, hr.path, {}, hr.body};
    for (const auto& [k, v] : hr.params) req.query[k] = v;
    const ApiResponse out = handle(req);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  impl_->server.Get(".*", adapter);
  impl_->server.Post(".*", adapter);
  impl_->server.Put(".*", adapter);
  impl_->server.Delete(".*", adapter);
}

Service::~Service() = default;

ApiResponse Service::handle(const ApiRequest& req) {
  try {
    return impl_->route(req);
  } catch (const ApiFailure& e) {
    return {e.status(), api_error(e.code(), e.what())};
  } catch (const Error& e) {
    return {status_for_code(e.code()), api_error(e.code(), e.what())};
  } catch (const Json::exception& e) {
    return {400, api_error("bad_request", e.what())};
  } catch (const std::exception& e) {
    return {500, api_error("internal", e.what())};
  }
}

void Service::wait_idle() {
  std::unique_lock lock(impl_->mu);
  impl_->cv.wait(lock, [&] { return !impl_->busy(); });
}

int Service::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool Service::listen_after_bind() { return impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

}  // namespace formation
