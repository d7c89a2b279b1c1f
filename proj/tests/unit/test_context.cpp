#include <doctest.h>

#include <algorithm>

#include "formation/context.hpp"
#include "formation/error.hpp"
#include "formation/random.hpp"
#include "support/synthetic.hpp"

using namespace formation;

namespace {

Predicate gt(const std::string& f, double v) { return Predicate::threshold(Predicate::Op::Gt, f, v); }
Predicate lt(const std::string& f, double v) { return Predicate::threshold(Predicate::Op::Lt, f, v); }

ContextSet soccer() { return load_context_set(std::string(FORMATION_SOURCE_DIR) + "/data/soccer_contexts.json"); }

}  // namespace

TEST_CASE("no rule fires leaves the context unchanged") {
  ContextSet cs{{"A", "B"}, "A", {{"A", "B", 1, gt("ball_x", 10.0), false}}};
  CHECK(step_context(cs, "A", {{"ball_x", 0.0}}) == "A");
}

TEST_CASE("highest priority wins, ties go to declaration order") {
  ContextSet cs{{"A", "B", "C", "D"}, "A",
                {{"A", "B", 1, gt("ball_x", 0.0), false},
                 {"A", "C", 5, gt("ball_x", 0.0), false},
                 {"A", "D", 5, gt("ball_x", 0.0), false}}};
  CHECK(step_context(cs, "A", {{"ball_x", 1.0}}) == "C");
}

TEST_CASE("soccer set: Attack to Defense when the ball is deep in our half") {
  const ContextSet cs = soccer();
  CHECK(cs.contexts.size() == 5);
  CHECK(cs.contains("Dead Balls"));
  CHECK(step_context(cs, "Attack", {{"ball_x", -20.0}, {"ball_y", 0.0}}) == "Defense");
  CHECK(step_context(cs, "Attack", {{"ball_x", 0.0}, {"ball_y", 40.0}}) == "Dead Balls");
}

TEST_CASE("at most one transition per step") {
  ContextSet cs{{"A", "B", "C"}, "A",
                {{"A", "B", 1, Predicate::always(), false}, {"B", "C", 1, Predicate::always(), false}}};
  CHECK(step_context(cs, "A", {}) == "B");
  CHECK(step_context(cs, "B", {}) == "C");
}

TEST_CASE("predicate operators") {
  const FeatureMap f{{"x", 2.0}, {"y", -1.0}};
  CHECK(gt("x", 1.0).eval(f));
  CHECK_FALSE(gt("x", 2.0).eval(f));
  CHECK(Predicate::threshold(Predicate::Op::Ge, "x", 2.0).eval(f));
  CHECK(Predicate::threshold(Predicate::Op::Le, "x", 2.0).eval(f));
  CHECK(Predicate::in_range("y", -1.0, 0.0).eval(f));
  CHECK_FALSE(Predicate::in_range("y", -0.5, 0.0).eval(f));
  CHECK(Predicate::all_of({gt("x", 1.0), lt("y", 0.0)}).eval(f));
  CHECK_FALSE(Predicate::all_of({gt("x", 1.0), gt("y", 0.0)}).eval(f));
  CHECK(Predicate::any_of({gt("x", 5.0), lt("y", 0.0)}).eval(f));
  CHECK(Predicate::negate(gt("x", 5.0)).eval(f));
  CHECK_THROWS_AS(gt("z", 0.0).eval(f), NotFoundError);
}

TEST_CASE("predicate JSON round trip") {
  const Predicate p = Predicate::any_of(
      {Predicate::all_of({gt("ball_x", 1.5), Predicate::in_range("ball_y", -3.0, 3.0)}), Predicate::negate(lt("ball_vx", 0.0))});
  const Json j = p.to_json();
  CHECK(Predicate::from_json(j).to_json() == j);
  CHECK_THROWS_AS(Predicate::from_json(Json::parse(R"({"op":"near","feature":"x"})")), ParseError);
}

TEST_CASE("loading rejects dangling references and bare self-loops") {
  CHECK_THROWS_AS(context_set_from_json(Json::parse(
                      R"({"contexts":["A"],"rules":[{"from":"A","to":"Z","priority":1,"when":{"op":"true"}}]})")),
                  InvariantError);
  CHECK_THROWS_AS(context_set_from_json(Json::parse(
                      R"({"contexts":["A"],"rules":[{"from":"A","to":"A","priority":1,"when":{"op":"true"}}]})")),
                  InvariantError);
  const ContextSet ok = context_set_from_json(Json::parse(
      R"({"contexts":["A"],"rules":[{"from":"A","to":"A","priority":1,"self_loop":true,"when":{"op":"true"}}]})"));
  CHECK(step_context(ok, "A", {}) == "A");
  CHECK_THROWS_AS(context_set_from_json(Json::parse(R"({"contexts":["A","A"]})")), InvariantError);
  CHECK_THROWS_AS(context_set_from_json(Json::parse(R"({"contexts":["A"],"initial":"B"})")), InvariantError);
}

TEST_CASE("one-context file is quiescent") {
  const ContextSet cs = context_set_from_json(Json::parse(R"({"contexts":["Normal"]})"));
  CHECK(cs.initial == "Normal");
  Rng rng(1);
  ContextId active = cs.initial;
  for (int i = 0; i < 1000; ++i) active = step_context(cs, active, {{"ball_x", rng.uniform(-60, 60)}});
  CHECK(active == "Normal");
}

TEST_CASE("context set JSON round trip") {
  const ContextSet cs = soccer();
  const Json j = context_set_to_json(cs);
  CHECK(context_set_to_json(context_set_from_json(j)) == j);
  CHECK(cs.referenced_features() == std::set<std::string>{"ball_x", "ball_y"});
}

TEST_CASE("randomized steps agree with a sorted-rule oracle") {
  const ContextSet cs = soccer();
  Rng rng(99);
  ContextId active = cs.initial;
  for (int i = 0; i < 2000; ++i) {
    const FeatureMap f{{"ball_x", rng.uniform(-60, 60)}, {"ball_y", rng.uniform(-40, 40)}};
    // oracle: stable sort of firing rules by descending priority
    std::vector<const TransitionRule*> firing;
    for (const auto& r : cs.rules) {
      if (r.from == active && r.when.eval(f)) firing.push_back(&r);
    }
    std::stable_sort(firing.begin(), firing.end(),
                     [](const TransitionRule* a, const TransitionRule* b) { return a->priority > b->priority; });
    const ContextId expected = firing.empty() ? active : firing.front()->to;
    const ContextId next = step_context(cs, active, f);
    CHECK(next == expected);
    CHECK(next == step_context(cs, active, f));
    active = next;
  }
}
