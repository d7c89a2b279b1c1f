#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "formation/json_io.hpp"
#include "formation/pipeline.hpp"
#include "formation/project.hpp"

namespace formation {

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  Json body;
};

/// {"code", "message", "detail"}.
Json api_error(const std::string& code, const std::string& message, const Json& detail = nullptr);
int status_for_code(const std::string& code);

/// The JSON API over one project directory. Dataset edits are serialized and
/// persisted before the response is sent; training jobs run FIFO on a worker
/// thread, and dataset edits are refused with code "conflict" while a job is
/// queued or running.
class Service {
 public:
  explicit Service(ProjectBundle project);
  Service(ProjectBundle project, PipelineConfig train_config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ApiResponse handle(const ApiRequest& req);

  /// Blocks until the training queue is empty.
  void wait_idle();

  /// Binds host:port (0 picks a free port) and returns the bound port, or -1.
  int bind(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the bound socket until stop().
  bool listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace formation
