#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "formation/json_io.hpp"

namespace formation {

/// Field-frame position in meters. Center of the field is the origin and +x
/// points toward the opponent goal.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
  friend bool operator==(Point2 a, Point2 b) = default;

  double norm() const { return std::hypot(x, y); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double distance(Point2 a, Point2 b) { return (a - b).norm(); }

struct FieldConfig {
  double length = 105.0;
  double width = 68.0;
};

/// One demonstration: feature values (ordered like Dataset::feature_rows) and
/// one target per agent (ordered like Dataset::agent_rows).
struct Snapshot {
  std::vector<double> features;
  std::vector<Point2> targets;

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct Dataset {
  FieldConfig field;
  std::vector<std::string> feature_rows;
  std::vector<std::string> agent_rows;
  std::vector<Snapshot> snapshots;

  std::size_t columns() const { return snapshots.size(); }
};

/// Coordinate row names owned by an agent id: "<id>_x", "<id>_y".
std::vector<std::string> agent_coordinate_rows(const std::string& agent_id);

/// Row-major view of a dataset: one row per feature and per agent coordinate,
/// one column per snapshot.
class DataMatrix {
 public:
  DataMatrix() = default;
  DataMatrix(std::vector<std::string> row_names, std::size_t cols);

  std::size_t rows() const { return names_.size(); }
  std::size_t cols() const { return cols_; }
  const std::vector<std::string>& row_names() const { return names_; }

  /// Throws NotFoundError for an unknown row name.
  std::size_t row_index(const std::string& name) const;
  std::optional<std::size_t> find_row(const std::string& name) const;

  double& at(std::size_t row, std::size_t col) { return values_[row * cols_ + col]; }
  double at(std::size_t row, std::size_t col) const { return values_[row * cols_ + col]; }

 private:
  std::vector<std::string> names_;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

DataMatrix matrix_view(const Dataset& d);

/// Throws InvariantError naming the offending snapshot/row when a dataset
/// invariant does not hold.
void validate_dataset(const Dataset& d);

Dataset dataset_from_json(const Json& j);
Json dataset_to_json(const Dataset& d);

/// Canonical text: sorted keys, six-decimal floats. Byte-stable round trip.
std::string dataset_to_canonical(const Dataset& d);

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& d, const std::filesystem::path& path);

/// One CSV row per matrix row: name followed by one value per snapshot.
std::string dataset_to_csv(const Dataset& d);

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  SplitFractions fractions;
  std::uint64_t seed = 0;

  friend bool operator==(const DataSplit& a, const DataSplit& b) {
    return a.train == b.train && a.val == b.val && a.test == b.test && a.seed == b.seed;
  }
};

/// Seeded shuffle, then floor allocation of validation and test sizes with
/// the remainder going to training. Index lists are returned sorted.
DataSplit split_indices(std::size_t n, SplitFractions fractions, std::uint64_t seed);
DataSplit split_dataset(const Dataset& d, SplitFractions fractions, std::uint64_t seed);

/// Keeps val/test untouched and draws `count` training indices, for sweeps
/// over the number of training samples against a constant test set.
DataSplit subsample_train(const DataSplit& split, std::size_t count, std::uint64_t seed);

Json split_to_json(const DataSplit& s);
DataSplit split_from_json(const Json& j);

}  // namespace formation
