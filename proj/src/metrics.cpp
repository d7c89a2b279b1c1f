#include "formation/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "formation/error.hpp"

namespace formation {
namespace {

void check_pairs(std::span<const Point2> t, std::span<const Point2> p) {
  if (t.size() != p.size()) {
    throw InvariantError("target/prediction length mismatch (" + std::to_string(t.size()) +
                         " vs " + std::to_string(p.size()) + ")");
  }
  if (t.empty()) throw InvariantError("metrics need at least one sample");
}

// sqrt of the same squared terms metric_SSE sums
double pair_distance(Point2 a, Point2 b) {
  const Point2 d = a - b;
  return std::sqrt(d.x * d.x + d.y * d.y);
}

}  // namespace

double metric_E(std::span<const Point2> targets, std::span<const Point2> predictions) {
  check_pairs(targets, predictions);
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) sum += pair_distance(targets[i], predictions[i]);
  return sum / static_cast<double>(targets.size());
}

double metric_SSE(std::span<const Point2> targets, std::span<const Point2> predictions) {
  check_pairs(targets, predictions);
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Point2 d = targets[i] - predictions[i];
    sum += d.x * d.x + d.y * d.y;
  }
  return sum;
}

double metric_max_error(std::span<const Point2> targets, std::span<const Point2> predictions) {
  check_pairs(targets, predictions);
  double worst = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    worst = std::max(worst, pair_distance(targets[i], predictions[i]));
  }
  return worst;
}

double metric_error_stddev(std::span<const Point2> targets, std::span<const Point2> predictions) {
  const double mean = metric_E(targets, predictions);
  double acc = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = pair_distance(targets[i], predictions[i]) - mean;
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(targets.size()));
}

ErrorStats error_stats(std::span<const Point2> targets, std::span<const Point2> predictions) {
  ErrorStats s;
  s.n = targets.size();
  s.mean = metric_E(targets, predictions);
  s.sse = metric_SSE(targets, predictions);
  s.max = metric_max_error(targets, predictions);
  s.stddev = metric_error_stddev(targets, predictions);
  return s;
}

Json error_stats_to_json(const ErrorStats& s) {
  return {{"n", s.n}, {"E", s.mean}, {"sse", s.sse}, {"max", s.max}, {"stddev", s.stddev}};
}

ErrorStats error_stats_from_json(const Json& j) {
  ErrorStats s;
  s.n = j.at("n").get<std::size_t>();
  s.mean = j.at("E").get<double>();
  s.sse = j.at("sse").get<double>();
  s.max = j.at("max").get<double>();
  s.stddev = j.at("stddev").get<double>();
  return s;
}

}  // namespace formation
