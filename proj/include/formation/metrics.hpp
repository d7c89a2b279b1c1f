#pragma once

#include <span>

#include "formation/geometry.hpp"

namespace formation {

// Each function throws InvariantError on a length mismatch or empty input.

/// Mean Euclidean distance between targets and predictions.
double metric_E(std::span<const Point2> targets, std::span<const Point2> predictions);

/// Sum over samples and coordinates of squared differences.
double metric_SSE(std::span<const Point2> targets, std::span<const Point2> predictions);

/// Largest per-pair Euclidean distance.
double metric_max_error(std::span<const Point2> targets, std::span<const Point2> predictions);

/// Population standard deviation of the per-pair distances.
double metric_error_stddev(std::span<const Point2> targets, std::span<const Point2> predictions);

struct ErrorStats {
  std::size_t n = 0;
  double mean = 0.0;  // metric_E
  double sse = 0.0;
  double max = 0.0;
  double stddev = 0.0;
};

ErrorStats error_stats(std::span<const Point2> targets, std::span<const Point2> predictions);

Json error_stats_to_json(const ErrorStats& s);
ErrorStats error_stats_from_json(const Json& j);

}  // namespace formation
