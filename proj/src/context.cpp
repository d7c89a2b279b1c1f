#include "formation/context.hpp"

#include <algorithm>

#include "formation/error.hpp"

namespace formation {

Predicate Predicate::threshold(Op op, std::string feature, double value) {
  Predicate p;
  p.op_ = op;
  p.feature_ = std::move(feature);
  p.value_ = value;
  return p;
}

Predicate Predicate::in_range(std::string feature, double lo, double hi) {
  Predicate p;
  p.op_ = Op::In;
  p.feature_ = std::move(feature);
  p.lo_ = lo;
  p.hi_ = hi;
  return p;
}

Predicate Predicate::all_of(std::vector<Predicate> args) {
  Predicate p;
  p.op_ = Op::And;
  p.args_ = std::move(args);
  return p;
}

Predicate Predicate::any_of(std::vector<Predicate> args) {
  Predicate p;
  p.op_ = Op::Or;
  p.args_ = std::move(args);
  return p;
}

Predicate Predicate::negate(Predicate arg) {
  Predicate p;
  p.op_ = Op::Not;
  p.args_.push_back(std::move(arg));
  return p;
}

Predicate Predicate::always() { return Predicate{}; }

bool Predicate::eval(const FeatureMap& features) const {
  auto value_of = [&]() {
    auto it = features.find(feature_);
    if (it == features.end()) {
      throw NotFoundError("predicate needs missing feature '" + feature_ + "'");
    }
    return it->second;
  };
  switch (op_) {
    case Op::Lt: return value_of() < value_;
    case Op::Le: return value_of() <= value_;
    case Op::Gt: return value_of() > value_;
    case Op::Ge: return value_of() >= value_;
    case Op::In: {
      const double v = value_of();
      return v >= lo_ && v <= hi_;
    }
    case Op::And:
      return std::all_of(args_.begin(), args_.end(), [&](const Predicate& a) { return a.eval(features); });
    case Op::Or:
      return std::any_of(args_.begin(), args_.end(), [&](const Predicate& a) { return a.eval(features); });
    case Op::Not: return !args_.front().eval(features);
    case Op::True: return true;
  }
  return false;
}

void Predicate::collect_features(std::set<std::string>& out) const {
  if (!feature_.empty()) out.insert(feature_);
  for (const auto& a : args_) a.collect_features(out);
}

namespace {

const std::map<std::string, Predicate::Op>& threshold_ops() {
  static const std::map<std::string, Predicate::Op> ops = {
      {"lt", Predicate::Op::Lt}, {"le", Predicate::Op::Le},
      {"gt", Predicate::Op::Gt}, {"ge", Predicate::Op::Ge}};
  return ops;
}

}  // namespace

Json Predicate::to_json() const {
  for (const auto& [name, op] : threshold_ops()) {
    if (op == op_) return {{"op", name}, {"feature", feature_}, {"value", value_}};
  }
  switch (op_) {
    case Op::In: return {{"op", "in"}, {"feature", feature_}, {"lo", lo_}, {"hi", hi_}};
    case Op::And:
    case Op::Or: {
      Json args = Json::array();
      for (const auto& a : args_) args.push_back(a.to_json());
      return {{"op", op_ == Op::And ? "and" : "or"}, {"args", std::move(args)}};
    }
    case Op::Not: return {{"op", "not"}, {"arg", args_.front().to_json()}};
    default: return {{"op", "true"}};
  }
}

Predicate Predicate::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("op") || !j.at("op").is_string()) {
    throw ParseError("predicate: expected an object with a string 'op'");
  }
  const std::string op = j.at("op").get<std::string>();
  auto feature = [&]() {
    if (!j.contains("feature") || !j.at("feature").is_string()) {
      throw ParseError("predicate '" + op + "': missing 'feature'");
    }
    return j.at("feature").get<std::string>();
  };
  auto num = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
      throw ParseError("predicate '" + op + "': missing numeric '" + key + "'");
    }
    return j.at(key).get<double>();
  };
  if (auto it = threshold_ops().find(op); it != threshold_ops().end()) {
    return threshold(it->second, feature(), num("value"));
  }
  if (op == "in") {
    const double lo = num("lo");
    const double hi = num("hi");
    if (lo > hi) throw ParseError("predicate 'in': lo > hi");
    return in_range(feature(), lo, hi);
  }
  if (op == "and" || op == "or") {
    if (!j.contains("args") || !j.at("args").is_array() || j.at("args").empty()) {
      throw ParseError("predicate '" + op + "': expected non-empty 'args'");
    }
    std::vector<Predicate> args;
    for (const auto& a : j.at("args")) args.push_back(from_json(a));
    return op == "and" ? all_of(std::move(args)) : any_of(std::move(args));
  }
  if (op == "not") {
    if (!j.contains("arg")) throw ParseError("predicate 'not': missing 'arg'");
    return negate(from_json(j.at("arg")));
  }
  if (op == "true") return always();
  throw ParseError("unknown predicate '" + op + "'");
}

bool ContextSet::contains(const ContextId& c) const {
  return std::find(contexts.begin(), contexts.end(), c) != contexts.end();
}

std::set<std::string> ContextSet::referenced_features() const {
  std::set<std::string> out;
  for (const auto& r : rules) r.when.collect_features(out);
  return out;
}

void validate_context_set(const ContextSet& cs) {
  if (cs.contexts.empty()) throw InvariantError("context set declares no contexts");
  std::set<ContextId> seen;
  for (const auto& c : cs.contexts) {
    if (c.empty()) throw InvariantError("empty context name");
    if (!seen.insert(c).second) throw InvariantError("duplicate context '" + c + "'");
  }
  if (!cs.contains(cs.initial)) {
    throw InvariantError("initial context '" + cs.initial + "' is not declared");
  }
  for (std::size_t i = 0; i < cs.rules.size(); ++i) {
    const auto& r = cs.rules[i];
    const std::string where = "rule " + std::to_string(i);
    if (!cs.contains(r.from)) throw InvariantError(where + " references undeclared context '" + r.from + "'");
    if (!cs.contains(r.to)) throw InvariantError(where + " references undeclared context '" + r.to + "'");
    if (r.from == r.to && !r.self_loop) {
      throw InvariantError(where + " is a self-loop on '" + r.from + "' without self_loop:true");
    }
  }
}

ContextId step_context(const ContextSet& cs, const ContextId& active, const FeatureMap& features) {
  if (!cs.contains(active)) throw InvariantError("active context '" + active + "' is not declared");
  const TransitionRule* best = nullptr;
  for (const auto& r : cs.rules) {
    if (r.from != active) continue;
    if (!r.when.eval(features)) continue;
    if (best == nullptr || r.priority > best->priority) best = &r;
  }
  return best ? best->to : active;
}

ContextSet context_set_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("context set: expected an object");
  ContextSet cs;
  try {
    cs.contexts = j.at("contexts").get<std::vector<ContextId>>();
    cs.initial = j.contains("initial") ? j.at("initial").get<ContextId>()
                                       : (cs.contexts.empty() ? ContextId{} : cs.contexts.front());
    if (j.contains("rules")) {
      for (const auto& rj : j.at("rules")) {
        TransitionRule r;
        r.from = rj.at("from").get<ContextId>();
        r.to = rj.at("to").get<ContextId>();
        r.priority = rj.value("priority", 0);
        r.self_loop = rj.value("self_loop", false);
        r.when = rj.contains("when") ? Predicate::from_json(rj.at("when")) : Predicate::always();
        cs.rules.push_back(std::move(r));
      }
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("context set: ") + e.what());
  }
  validate_context_set(cs);
  return cs;
}

Json context_set_to_json(const ContextSet& cs) {
  Json rules = Json::array();
  for (const auto& r : cs.rules) {
    Json rj = {{"from", r.from}, {"to", r.to}, {"priority", r.priority}, {"when", r.when.to_json()}};
    if (r.self_loop) rj["self_loop"] = true;
    rules.push_back(std::move(rj));
  }
  return {{"contexts", cs.contexts}, {"initial", cs.initial}, {"rules", std::move(rules)}};
}

ContextSet load_context_set(const std::filesystem::path& path) {
  return context_set_from_json(read_json_file(path));
}

}  // namespace formation
