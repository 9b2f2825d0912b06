#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "tod/world.hpp"

using namespace tod;
using namespace tod::world;

TEST_CASE("build_world is deterministic") {
  World a = build_world(WorldConfig{});
  World b = build_world(WorldConfig{});
  REQUIRE(a.schemas.size() == b.schemas.size());
  for (std::size_t i = 0; i < a.databases.size(); ++i) {
    REQUIRE(a.databases[i].entities.size() == b.databases[i].entities.size());
    for (std::size_t j = 0; j < a.databases[i].entities.size(); ++j) {
      CHECK(a.databases[i].entities[j].name == b.databases[i].entities[j].name);
      CHECK(a.databases[i].entities[j].informable == b.databases[i].entities[j].informable);
      CHECK(a.databases[i].entities[j].requestable == b.databases[i].entities[j].requestable);
    }
  }
}

TEST_CASE("world respects configured sizes and canonical domain order") {
  WorldConfig cfg;
  cfg.domains = 2;
  cfg.entities_per_domain = 5;
  World w = build_world(cfg);
  REQUIRE(w.schemas.size() == 2);
  for (const Database& db : w.databases) CHECK(db.entities.size() == 5);
  for (std::size_t i = 1; i < w.schemas.size(); ++i)
    CHECK(w.schemas[i - 1].name < w.schemas[i].name);
  CHECK_THROWS_AS(build_world(WorldConfig{0, 5, 1}), ConfigError);
  CHECK_THROWS_AS(build_world(WorldConfig{3, 1, 1}), ConfigError);
}

TEST_CASE("entity names are unique within a domain") {
  const World& w = fixtures::shared_world();
  for (const Database& db : w.databases) {
    std::set<std::string> names;
    for (const Entity& e : db.entities) names.insert(e.name);
    CHECK(names.size() == db.entities.size());
  }
}

TEST_CASE("match_count honors dontcare and unknown slots") {
  const World& w = fixtures::shared_world();
  const Database& db = w.databases[0];
  CHECK(match_count(db, {}) == static_cast<int>(db.entities.size()));
  CHECK(match_count(db, {{"area", "dontcare"}}) == static_cast<int>(db.entities.size()));
  CHECK(match_count(db, {{"no_such_slot", "x"}}) == 0);

  const Entity& e = db.entities[3];
  std::map<std::string, std::string> exact = e.informable;
  CHECK(match_count(db, exact) >= 1);
}

TEST_CASE("top_match returns the first database entity that fits") {
  const World& w = fixtures::shared_world();
  const Database& db = w.databases[0];
  const Entity* top = top_match(db, {});
  REQUIRE(top != nullptr);
  CHECK(top->name == db.entities[0].name);
  CHECK(top_match(db, {{"area", "no_such_value"}}) == nullptr);
}

TEST_CASE("sampled goals are satisfiable and bounded") {
  const World& w = fixtures::shared_world();
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    UserGoal g = sample_goal(seed, w);
    REQUIRE(!g.empty());
    CHECK(g.domains.size() <= 2);
    CHECK(g.total_slots() <= 6);
    for (const auto& [domain, dg] : g.domains) {
      CHECK(!dg.constraints.empty());
      const Database* db = w.database(domain);
      REQUIRE(db != nullptr);
      CHECK(match_count(*db, dg.constraints) >= 1);
      if (dg.book) CHECK(w.schema(domain)->bookable);
      for (std::size_t i = 1; i < dg.requests.size(); ++i)
        CHECK(dg.requests[i - 1] < dg.requests[i]);
    }
  }
}

TEST_CASE("goal sampling is seed-deterministic") {
  const World& w = fixtures::shared_world();
  UserGoal a = sample_goal(99, w);
  UserGoal b = sample_goal(99, w);
  REQUIRE(a.domains.size() == b.domains.size());
  for (const auto& [domain, dg] : a.domains) {
    REQUIRE(b.domains.count(domain) == 1);
    CHECK(dg.constraints == b.domains.at(domain).constraints);
    CHECK(dg.requests == b.domains.at(domain).requests);
    CHECK(dg.book == b.domains.at(domain).book);
  }
}
