#include <doctest.h>

#include <algorithm>
#include <set>

#include "formation/error.hpp"
#include "formation/geometry.hpp"
#include "support/synthetic.hpp"

using namespace formation;

namespace {

Dataset tiny() {
  Dataset d;
  d.feature_rows = {"ball_x", "ball_y"};
  d.agent_rows = {"a1"};
  d.snapshots.push_back({{1.0, 2.0}, {{3.0, 4.0}}});
  return d;
}

}  // namespace

TEST_CASE("smallest legal dataset file loads with one column") {
  testsupport::TempDir dir("geom");
  write_text_file(dir / "d.json",
                  R"({"field":{"length":105,"width":68},"feature_rows":["ball_x","ball_y"],)"
                  R"("agent_rows":["a1"],"snapshots":[{"features":[1,2],"targets":[[3,4]]}]})");
  const Dataset d = load_dataset(dir / "d.json");
  CHECK(d.columns() == 1);
  CHECK(d.field.length == 105.0);
  CHECK(d.snapshots[0].targets[0] == Point2{3.0, 4.0});
}

TEST_CASE("target count mismatch names the snapshot") {
  Dataset d = testsupport::chain_dataset(5, 1);
  d.snapshots[3].targets.pop_back();
  try {
    validate_dataset(d);
    FAIL("expected an invariant error");
  } catch (const InvariantError& e) {
    CHECK(std::string(e.what()).find("snapshot 3") != std::string::npos);
  }
}

TEST_CASE("dataset rejects non-finite values and duplicate names") {
  Dataset d = tiny();
  d.snapshots[0].features[1] = std::nan("");
  CHECK_THROWS_AS(validate_dataset(d), InvariantError);

  Dataset dup = tiny();
  dup.agent_rows = {"a1", "a1"};
  dup.snapshots[0].targets.push_back({0, 0});
  CHECK_THROWS_AS(validate_dataset(dup), InvariantError);

  Dataset clash = tiny();
  clash.feature_rows = {"a1_x", "ball_y"};
  CHECK_THROWS_AS(validate_dataset(clash), InvariantError);

  Dataset field = tiny();
  field.field.width = 0.0;
  CHECK_THROWS_AS(validate_dataset(field), InvariantError);
}

TEST_CASE("malformed JSON is a parse error") {
  CHECK_THROWS_AS(dataset_from_json(Json::parse(R"({"feature_rows":[]})")), ParseError);
  CHECK_THROWS_AS(dataset_from_json(Json::parse(R"([1,2,3])")), ParseError);
}

TEST_CASE("a 955-snapshot dataset has 955 columns and splits 669/95/191") {
  const Dataset d = testsupport::chain_dataset(955, 3);
  CHECK(matrix_view(d).cols() == 955);
  const DataSplit s = split_dataset(d, {}, 0);
  CHECK(s.train.size() == 669);
  CHECK(s.val.size() == 95);
  CHECK(s.test.size() == 191);
}

TEST_CASE("10 snapshots split 7/1/2 and splits are deterministic") {
  const DataSplit a = split_indices(10, {0.7, 0.1, 0.2}, 7);
  CHECK(a.train.size() == 7);
  CHECK(a.val.size() == 1);
  CHECK(a.test.size() == 2);
  CHECK(a == split_indices(10, {0.7, 0.1, 0.2}, 7));
}

TEST_CASE("split sizes follow floor allocation for every n") {
  // independent oracle: integer arithmetic on per-mille fractions
  for (std::size_t n = 3; n <= 400; ++n) {
    const DataSplit s = split_indices(n, {0.7, 0.1, 0.2}, n);
    CHECK(s.val.size() == n * 100 / 1000);
    CHECK(s.test.size() == n * 200 / 1000);
    CHECK(s.train.size() == n - n * 100 / 1000 - n * 200 / 1000);

    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == n);
    CHECK(*all.rbegin() == n - 1);
  }
}

TEST_CASE("split preconditions") {
  CHECK_THROWS_AS(split_indices(2, {}, 0), InvariantError);
  CHECK_THROWS_AS(split_indices(10, {0.7, 0.0, 0.3}, 0), InvariantError);
  CHECK_THROWS_AS(split_indices(10, {0.7, 0.1, 0.3}, 0), InvariantError);
}

TEST_CASE("subsampling keeps the test set fixed") {
  const DataSplit s = split_indices(100, {}, 5);
  const DataSplit sub = subsample_train(s, 20, 9);
  CHECK(sub.train.size() == 20);
  CHECK(sub.test == s.test);
  CHECK(sub.val == s.val);
  CHECK(std::includes(s.train.begin(), s.train.end(), sub.train.begin(), sub.train.end()));
  CHECK_THROWS_AS(subsample_train(s, 71, 0), InvariantError);
}

TEST_CASE("split JSON round trip") {
  const DataSplit s = split_indices(50, {}, 11);
  CHECK(split_from_json(split_to_json(s)) == s);
}

TEST_CASE("matrix view agrees with the snapshot records") {
  const Dataset d = testsupport::noisy_chain_dataset(40, 2);
  const DataMatrix m = matrix_view(d);
  REQUIRE(m.rows() == 6);
  for (std::size_t c = 0; c < d.columns(); ++c) {
    const Snapshot& s = d.snapshots[c];
    CHECK(m.at(m.row_index("ball_x"), c) == s.features[0]);
    CHECK(m.at(m.row_index("ball_y"), c) == s.features[1]);
    CHECK(m.at(m.row_index("L_x"), c) == s.targets[0].x);
    CHECK(m.at(m.row_index("L_y"), c) == s.targets[0].y);
    CHECK(m.at(m.row_index("F_x"), c) == s.targets[1].x);
    CHECK(m.at(m.row_index("F_y"), c) == s.targets[1].y);
  }
  CHECK_THROWS_AS(m.row_index("nope"), NotFoundError);
  CHECK_FALSE(m.find_row("nope").has_value());
}

TEST_CASE("canonical save/load round trip is byte-identical") {
  testsupport::TempDir dir("geom");
  const Dataset d = testsupport::noisy_chain_dataset(25, 4);
  save_dataset(d, dir / "a.json");
  const Dataset back = load_dataset(dir / "a.json");
  save_dataset(back, dir / "b.json");
  CHECK(read_text_file(dir / "a.json") == read_text_file(dir / "b.json"));

  // reordered keys and extra whitespace canonicalize to the same bytes
  const Json j = Json::parse(read_text_file(dir / "a.json"));
  write_text_file(dir / "c.json", j.dump(4));
  save_dataset(load_dataset(dir / "c.json"), dir / "d.json");
  CHECK(read_text_file(dir / "d.json") == read_text_file(dir / "a.json"));
}

TEST_CASE("canonical text uses six decimals and sorted keys") {
  const std::string text = dataset_to_canonical(tiny());
  CHECK(text ==
        "{\"agent_rows\":[\"a1\"],\"feature_rows\":[\"ball_x\",\"ball_y\"],"
        "\"field\":{\"length\":105.000000,\"width\":68.000000},"
        "\"snapshots\":[{\"features\":[1.000000,2.000000],\"targets\":[[3.000000,4.000000]]}]}\n");
}

TEST_CASE("CSV export has one line per matrix row") {
  const std::string csv = dataset_to_csv(tiny());
  CHECK(csv == "row,s0\nball_x,1.000000\nball_y,2.000000\na1_x,3.000000\na1_y,4.000000\n");
}

TEST_CASE("missing dataset file is not_found") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/formation/d.json"), NotFoundError);
}
