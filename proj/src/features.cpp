#include "formation/features.hpp"

#include <cmath>

#include "formation/error.hpp"

namespace formation {

History::History(std::size_t window) : window_(window) {
  if (window_ == 0) throw InvariantError("history window must be at least 1");
}

void History::push(AttributeFrame frame) {
  if (!frames_.empty() && frame.cycle <= frames_.back().cycle) {
    throw InvariantError("history cycles must be strictly increasing");
  }
  frames_.push_back(std::move(frame));
  while (frames_.size() > window_) frames_.pop_front();
}

bool History::mentions(const std::string& attribute) const {
  for (const auto& f : frames_) {
    if (f.values.count(attribute)) return true;
  }
  return false;
}

double FeatureVector::at(const std::string& name) const {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i] == name) return values[i];
  }
  throw NotFoundError("feature '" + name + "' not in vector");
}

std::map<std::string, double> FeatureVector::as_map() const {
  std::map<std::string, double> m;
  for (std::size_t i = 0; i < schema.size(); ++i) m[schema[i]] = values[i];
  return m;
}

namespace {

struct KnownSample {
  std::int64_t cycle;
  double value;
};

// Known samples of an attribute, newest first.
std::vector<KnownSample> known_samples(const History& h, const std::string& attribute) {
  if (!h.mentions(attribute)) {
    throw NotFoundError("unknown feature source '" + attribute + "'");
  }
  std::vector<KnownSample> out;
  for (auto it = h.frames().rbegin(); it != h.frames().rend(); ++it) {
    auto v = it->values.find(attribute);
    if (v != it->values.end() && v->second && std::isfinite(*v->second)) {
      out.push_back({it->cycle, *v->second});
    }
  }
  if (out.empty()) {
    throw InvariantError("attribute '" + attribute + "' is unknown throughout the window");
  }
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() > suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

double hold_last(const History& h, const std::string& attribute) {
  return known_samples(h, attribute).front().value;
}

double finite_difference(const History& h, const std::string& attribute) {
  const auto s = known_samples(h, attribute);
  if (s.size() < 2) return 0.0;
  return (s[0].value - s[1].value) / static_cast<double>(s[0].cycle - s[1].cycle);
}

double moving_average(const History& h, const std::string& attribute) {
  const auto s = known_samples(h, attribute);
  double sum = 0.0;
  for (const auto& k : s) sum += k.value;
  return sum / static_cast<double>(s.size());
}

void ExtractorRegistry::register_extractor(const std::string& name, Extractor def) {
  if (name.empty()) throw InvariantError("extractor name must not be empty");
  if (!custom_.emplace(name, std::move(def)).second) {
    throw InvariantError("extractor '" + name + "' already registered");
  }
}

double ExtractorRegistry::extract_one(const History& h, const std::string& name) const {
  if (h.empty()) throw InvariantError("cannot extract features from an empty history");
  if (auto it = custom_.find(name); it != custom_.end()) return it->second(h);
  if (h.mentions(name)) return hold_last(h, name);
  if (ends_with(name, "_vx")) {
    return finite_difference(h, name.substr(0, name.size() - 3) + "_x");
  }
  if (ends_with(name, "_vy")) {
    return finite_difference(h, name.substr(0, name.size() - 3) + "_y");
  }
  if (ends_with(name, "_avg")) return moving_average(h, name.substr(0, name.size() - 4));
  throw NotFoundError("no extractor resolves feature '" + name + "'");
}

FeatureVector ExtractorRegistry::extract(const History& h,
                                         const std::vector<std::string>& schema) const {
  if (h.empty()) throw InvariantError("cannot extract features from an empty history");
  FeatureVector out;
  out.schema = schema;
  out.values.reserve(schema.size());
  for (const auto& name : schema) {
    const double v = extract_one(h, name);
    if (!std::isfinite(v)) throw InvariantError("extractor '" + name + "' produced non-finite value");
    out.values.push_back(v);
  }
  return out;
}

}  // namespace formation
