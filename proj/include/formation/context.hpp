#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "formation/json_io.hpp"

namespace formation {

using ContextId = std::string;
using FeatureMap = std::map<std::string, double>;

/// Threshold/region condition over named features, composable with
/// and/or/not. JSON form: {"op":"gt","feature":"ball_x","value":10},
/// {"op":"in","feature":"ball_y","lo":-5,"hi":5}, {"op":"and","args":[...]},
/// {"op":"not","arg":{...}}, {"op":"true"}.
class Predicate {
 public:
  enum class Op { Lt, Le, Gt, Ge, In, And, Or, Not, True };

  static Predicate threshold(Op op, std::string feature, double value);
  static Predicate in_range(std::string feature, double lo, double hi);
  static Predicate all_of(std::vector<Predicate> args);
  static Predicate any_of(std::vector<Predicate> args);
  static Predicate negate(Predicate arg);
  static Predicate always();

  /// Throws NotFoundError when a referenced feature is missing.
  bool eval(const FeatureMap& features) const;
  void collect_features(std::set<std::string>& out) const;

  Json to_json() const;
  /// Throws ParseError for unknown ops or malformed arguments.
  static Predicate from_json(const Json& j);

 private:
  Op op_ = Op::True;
  std::string feature_;
  double value_ = 0.0;
  double lo_ = 0.0;
  double hi_ = 0.0;
  std::vector<Predicate> args_;
};

struct TransitionRule {
  ContextId from;
  ContextId to;
  int priority = 0;
  Predicate when;
  bool self_loop = false;
};

struct ContextSet {
  std::vector<ContextId> contexts;
  ContextId initial;
  std::vector<TransitionRule> rules;

  bool contains(const ContextId& c) const;
  /// Every feature name any rule reads.
  std::set<std::string> referenced_features() const;
};

/// Throws InvariantError for a dangling reference, duplicate context, or an
/// undeclared self-loop.
void validate_context_set(const ContextSet& cs);

/// Fires at most one rule: among rules leaving `active` whose predicate holds,
/// the highest priority wins and ties go to declaration order. Returns
/// `active` unchanged when nothing fires.
ContextId step_context(const ContextSet& cs, const ContextId& active, const FeatureMap& features);

ContextSet context_set_from_json(const Json& j);
Json context_set_to_json(const ContextSet& cs);
ContextSet load_context_set(const std::filesystem::path& path);

}  // namespace formation
