#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace formation {

/// Raw attribute values measured at one cycle. A nullopt value marks an
/// attribute that was not measurable at that cycle.
struct AttributeFrame {
  std::int64_t cycle = 0;
  std::map<std::string, std::optional<double>> values;
};

/// Bounded window of the most recent frames, oldest first.
class History {
 public:
  static constexpr std::size_t kDefaultWindow = 5;

  explicit History(std::size_t window = kDefaultWindow);

  /// Appends a frame, evicting the oldest once the window is full. Throws
  /// InvariantError unless cycles are strictly increasing.
  void push(AttributeFrame frame);

  const std::deque<AttributeFrame>& frames() const { return frames_; }
  std::size_t window() const { return window_; }
  bool empty() const { return frames_.empty(); }

  /// True if any frame in the window carries the attribute key.
  bool mentions(const std::string& attribute) const;

 private:
  std::size_t window_;
  std::deque<AttributeFrame> frames_;
};

struct FeatureVector {
  std::vector<std::string> schema;
  std::vector<double> values;

  /// Throws NotFoundError for a name outside the schema.
  double at(const std::string& name) const;
  std::map<std::string, double> as_map() const;
};

// Built-in extraction policies over one attribute. Each throws
// InvariantError when the attribute is unknown across the whole window.

/// Most recent known value (identity when the latest frame is known).
double hold_last(const History& h, const std::string& attribute);
/// Per-cycle finite difference between the two most recent known values;
/// 0 when only one known value exists in the window.
double finite_difference(const History& h, const std::string& attribute);
/// Mean of all known values in the window.
double moving_average(const History& h, const std::string& attribute);

using Extractor = std::function<double(const History&)>;

/// Maps feature names to extractors. Names not registered explicitly resolve
/// through the built-in naming rules:
///   <attr>          hold-last value of <attr>
///   <obj>_vx/_vy    finite-difference velocity of <obj>_x / <obj>_y
///   <attr>_avg      moving average of <attr> over the window
class ExtractorRegistry {
 public:
  /// Throws InvariantError if the name is already registered.
  void register_extractor(const std::string& name, Extractor def);

  bool is_registered(const std::string& name) const { return custom_.count(name) > 0; }

  /// Throws InvariantError on an empty history and NotFoundError for a
  /// feature whose source attribute never appears in the window.
  FeatureVector extract(const History& h, const std::vector<std::string>& schema) const;

  double extract_one(const History& h, const std::string& name) const;

 private:
  std::map<std::string, Extractor> custom_;
};

}  // namespace formation
