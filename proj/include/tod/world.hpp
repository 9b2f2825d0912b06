#pragma once
// Synthetic multi-domain world: domain schemas, entity databases, user goals.
// Everything is generated deterministically from integer seeds.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tod/common.hpp"

namespace tod::world {

struct SlotDef {
  std::string name;
  std::vector<std::string> values;  // closed set, single-token values
};

struct DomainSchema {
  std::string name;
  std::vector<SlotDef> informables;      // constraint slots (3-4 per domain)
  std::vector<std::string> requestables; // attribute slots users may ask for
  bool bookable = false;
};

struct Entity {
  std::string name;                                   // unique within domain, may be multi-word
  std::map<std::string, std::string> informable;      // slot -> value
  std::map<std::string, std::string> requestable;     // slot -> value (may be multi-word)
};

struct Database {
  std::string domain;
  std::vector<Entity> entities;
};

struct DomainGoal {
  std::map<std::string, std::string> constraints;  // slot -> value, satisfiable by >=1 entity
  std::vector<std::string> requests;               // sorted slot names
  bool book = false;

  bool operator==(const DomainGoal&) const = default;
};

// Goal over at most two domains; constrained + requested slots total at most six.
struct UserGoal {
  std::map<std::string, DomainGoal> domains;

  bool empty() const;
  int total_slots() const;  // constraints + requests across domains
};

struct WorldConfig {
  int domains = 3;              // uses the first N built-in domains
  int entities_per_domain = 20; // >= 3
  std::uint64_t seed = 7;
};

struct World {
  WorldConfig config;
  std::vector<DomainSchema> schemas;   // canonical (sorted) domain order
  std::vector<Database> databases;    // parallel to schemas

  const DomainSchema* schema(const std::string& domain) const;
  const Database* database(const std::string& domain) const;
};

// Deterministic construction; throws ConfigError on invalid counts.
World build_world(const WorldConfig& config);

// Count of entities matching every constraint. The value "dontcare" matches
// anything; a slot no entity carries matches nothing.
int match_count(const Database& db, const std::map<std::string, std::string>& constraints);

// First matching entity in database order, or nullptr.
const Entity* top_match(const Database& db, const std::map<std::string, std::string>& constraints);

// Seeded goal sampler. Guarantees every constrained domain has at least one
// matching entity by anchoring constraint values to a concrete entity.
UserGoal sample_goal(std::uint64_t seed, const World& world);

}  // namespace tod::world
