#include "formation/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "formation/error.hpp"
#include "formation/random.hpp"

namespace formation {

std::vector<std::string> agent_coordinate_rows(const std::string& agent_id) {
  return {agent_id + "_x", agent_id + "_y"};
}

DataMatrix::DataMatrix(std::vector<std::string> row_names, std::size_t cols)
    : names_(std::move(row_names)), cols_(cols), values_(names_.size() * cols, 0.0) {}

std::optional<std::size_t> DataMatrix::find_row(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t DataMatrix::row_index(const std::string& name) const {
  auto r = find_row(name);
  if (!r) throw NotFoundError("unknown data row '" + name + "'");
  return *r;
}

DataMatrix matrix_view(const Dataset& d) {
  std::vector<std::string> names = d.feature_rows;
  for (const auto& id : d.agent_rows) {
    for (auto& r : agent_coordinate_rows(id)) names.push_back(std::move(r));
  }
  DataMatrix m(std::move(names), d.columns());
  const std::size_t nf = d.feature_rows.size();
  for (std::size_t c = 0; c < d.columns(); ++c) {
    const Snapshot& s = d.snapshots[c];
    for (std::size_t f = 0; f < nf; ++f) m.at(f, c) = s.features[f];
    for (std::size_t a = 0; a < s.targets.size(); ++a) {
      m.at(nf + 2 * a, c) = s.targets[a].x;
      m.at(nf + 2 * a + 1, c) = s.targets[a].y;
    }
  }
  return m;
}

void validate_dataset(const Dataset& d) {
  if (!(d.field.length > 0.0) || !(d.field.width > 0.0)) {
    throw InvariantError("field length and width must be positive");
  }
  std::set<std::string> seen;
  for (const auto& f : d.feature_rows) {
    if (f.empty()) throw InvariantError("empty feature row name");
    if (!seen.insert(f).second) throw InvariantError("duplicate row name '" + f + "'");
  }
  std::set<std::string> agents;
  for (const auto& a : d.agent_rows) {
    if (a.empty()) throw InvariantError("empty agent id");
    if (!agents.insert(a).second) throw InvariantError("duplicate agent id '" + a + "'");
    for (const auto& r : agent_coordinate_rows(a)) {
      if (!seen.insert(r).second) {
        throw InvariantError("agent row '" + r + "' collides with another row name");
      }
    }
  }
  for (std::size_t i = 0; i < d.snapshots.size(); ++i) {
    const Snapshot& s = d.snapshots[i];
    if (s.features.size() != d.feature_rows.size()) {
      throw InvariantError("snapshot " + std::to_string(i) + " has " +
                           std::to_string(s.features.size()) + " features, header lists " +
                           std::to_string(d.feature_rows.size()));
    }
    if (s.targets.size() != d.agent_rows.size()) {
      throw InvariantError("snapshot " + std::to_string(i) + " has " +
                           std::to_string(s.targets.size()) + " targets, header lists " +
                           std::to_string(d.agent_rows.size()) + " agents");
    }
    for (std::size_t f = 0; f < s.features.size(); ++f) {
      if (!std::isfinite(s.features[f])) {
        throw InvariantError("non-finite value at row " + std::to_string(f) + ", snapshot " +
                             std::to_string(i));
      }
    }
    for (std::size_t a = 0; a < s.targets.size(); ++a) {
      if (!s.targets[a].finite()) {
        throw InvariantError("non-finite target for agent '" + d.agent_rows[a] +
                             "' at snapshot " + std::to_string(i));
      }
    }
  }
}

namespace {

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  return j.get<double>();
}

std::vector<std::string> string_list(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& item : j) {
    if (!item.is_string()) throw ParseError(where + ": expected an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

Dataset dataset_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("dataset: expected a JSON object");
  Dataset d;
  if (j.contains("field")) {
    const Json& f = j.at("field");
    if (!f.is_object()) throw ParseError("field: expected an object");
    if (f.contains("length")) d.field.length = number(f.at("length"), "field.length");
    if (f.contains("width")) d.field.width = number(f.at("width"), "field.width");
  }
  if (!j.contains("feature_rows") || !j.contains("agent_rows") || !j.contains("snapshots")) {
    throw ParseError("dataset: feature_rows, agent_rows and snapshots are required");
  }
  d.feature_rows = string_list(j.at("feature_rows"), "feature_rows");
  d.agent_rows = string_list(j.at("agent_rows"), "agent_rows");
  const Json& snaps = j.at("snapshots");
  if (!snaps.is_array()) throw ParseError("snapshots: expected an array");
  d.snapshots.reserve(snaps.size());
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    const std::string where = "snapshots[" + std::to_string(i) + "]";
    const Json& s = snaps[i];
    if (!s.is_object() || !s.contains("features") || !s.contains("targets") ||
        !s.at("features").is_array() || !s.at("targets").is_array()) {
      throw ParseError(where + ": expected {features:[...], targets:[[x,y],...]}");
    }
    Snapshot snap;
    for (const auto& v : s.at("features")) snap.features.push_back(number(v, where));
    for (const auto& t : s.at("targets")) {
      if (!t.is_array() || t.size() != 2) throw ParseError(where + ": target must be [x,y]");
      snap.targets.push_back({number(t[0], where), number(t[1], where)});
    }
    d.snapshots.push_back(std::move(snap));
  }
  validate_dataset(d);
  return d;
}

Json dataset_to_json(const Dataset& d) {
  Json j;
  j["field"] = {{"length", d.field.length}, {"width", d.field.width}};
  j["feature_rows"] = d.feature_rows;
  j["agent_rows"] = d.agent_rows;
  Json snaps = Json::array();
  for (const auto& s : d.snapshots) {
    Json targets = Json::array();
    for (const auto& t : s.targets) targets.push_back({t.x, t.y});
    Json features = Json::array();
    for (double f : s.features) features.push_back(f);
    snaps.push_back({{"features", std::move(features)}, {"targets", std::move(targets)}});
  }
  j["snapshots"] = std::move(snaps);
  return j;
}

std::string dataset_to_canonical(const Dataset& d) {
  return to_canonical_json(dataset_to_json(d), FloatStyle::Fixed6);
}

Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(read_json_file(path));
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  validate_dataset(d);
  write_text_file(path, dataset_to_canonical(d));
}

std::string dataset_to_csv(const Dataset& d) {
  const DataMatrix m = matrix_view(d);
  std::string out = "row";
  for (std::size_t c = 0; c < m.cols(); ++c) out += ",s" + std::to_string(c);
  out += '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out += m.row_names()[r];
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.6f", m.at(r, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

DataSplit split_indices(std::size_t n, SplitFractions fr, std::uint64_t seed) {
  if (!(fr.train > 0.0 && fr.val > 0.0 && fr.test > 0.0)) {
    throw InvariantError("split fractions must be positive");
  }
  if (std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9) {
    throw InvariantError("split fractions must sum to 1");
  }
  if (n < 3) throw InvariantError("dataset must contain at least 3 snapshots to split");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.index(i + 1)]);
  }
  // 1e-9 guards against products like 6.9999999999 from binary fractions
  const auto n_val = static_cast<std::size_t>(std::floor(n * fr.val + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * fr.test + 1e-9));
  const std::size_t n_train = n - n_val - n_test;

  DataSplit s;
  s.fractions = fr;
  s.seed = seed;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

DataSplit split_dataset(const Dataset& d, SplitFractions fractions, std::uint64_t seed) {
  return split_indices(d.columns(), fractions, seed);
}

DataSplit subsample_train(const DataSplit& split, std::size_t count, std::uint64_t seed) {
  if (count > split.train.size()) {
    throw InvariantError("requested more training samples than the split holds");
  }
  std::vector<std::size_t> pool = split.train;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
  }
  DataSplit out = split;
  out.train.assign(pool.begin(), pool.begin() + count);
  std::sort(out.train.begin(), out.train.end());
  return out;
}

Json split_to_json(const DataSplit& s) {
  return {{"train", s.train},
          {"val", s.val},
          {"test", s.test},
          {"seed", s.seed},
          {"fractions", {s.fractions.train, s.fractions.val, s.fractions.test}}};
}

DataSplit split_from_json(const Json& j) {
  try {
    DataSplit s;
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.val = j.at("val").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto fr = j.at("fractions").get<std::vector<double>>();
    if (fr.size() != 3) throw ParseError("split.fractions must have 3 entries");
    s.fractions = {fr[0], fr[1], fr[2]};
    return s;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("split: ") + e.what());
  }
}

}  // namespace formation
