#include "tod/world.hpp"

#include <algorithm>
#include <set>

namespace tod::world {

namespace {

// Built-in domain inventory. Value sets are small and single-token so that
// word-level tokenization round-trips exactly.

DomainSchema hotel_schema() {
  DomainSchema s;
  s.name = "hotel";
  s.informables = {
      {"area", {"north", "south", "east", "west", "centre"}},
      {"price", {"cheap", "moderate", "expensive"}},
      {"stars", {"2", "3", "4", "5"}},
      {"type", {"guesthouse", "boutique", "lodge"}},
  };
  s.requestables = {"address", "phone", "postcode"};
  s.bookable = true;
  return s;
}

DomainSchema restaurant_schema() {
  DomainSchema s;
  s.name = "restaurant";
  s.informables = {
      {"area", {"north", "south", "east", "west", "centre"}},
      {"food", {"italian", "chinese", "indian", "british", "thai", "french"}},
      {"price", {"cheap", "moderate", "expensive"}},
  };
  s.requestables = {"address", "phone", "postcode"};
  s.bookable = true;
  return s;
}

DomainSchema attraction_schema() {
  DomainSchema s;
  s.name = "attraction";
  s.informables = {
      {"area", {"north", "south", "east", "west", "centre"}},
      {"price", {"free", "cheap", "expensive"}},
      {"type", {"museum", "park", "cinema", "theatre", "gallery"}},
  };
  s.requestables = {"address", "phone", "postcode"};
  s.bookable = false;
  return s;
}

const std::vector<std::string> kNameAdjectives = {
    "amber", "ivory",  "maple",    "cedar",  "willow", "harbor",
    "meadow", "summit", "crescent", "lantern", "marble", "velvet"};

std::vector<std::string> name_nouns(const std::string& domain) {
  if (domain == "hotel")
    return {"arms", "house", "inn", "court", "villa", "manor", "retreat", "haven"};
  if (domain == "restaurant")
    return {"kitchen", "table", "fork", "spoon", "pantry", "oven", "plate", "bistro"};
  return {"pavilion", "hall", "tower", "grounds", "commons", "archive", "observatory", "pier"};
}

const std::vector<std::string> kStreets = {"mill", "station", "bridge", "king",
                                           "queen", "market", "abbey", "chapel"};
const std::vector<std::string> kStreetSuffixes = {"road", "street", "lane", "way"};

std::string make_phone(int domain_index, int entity_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "01223-55%d-%04d", domain_index + 1, entity_index);
  return buf;
}

Database build_database(const DomainSchema& schema, int domain_index, int count,
                        std::uint64_t seed) {
  Database db;
  db.domain = schema.name;
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(domain_index), 0xdb));

  // Unique two-word names: sample adjective x noun pairs without replacement.
  std::vector<std::string> nouns = name_nouns(schema.name);
  std::vector<int> combos(kNameAdjectives.size() * nouns.size());
  for (std::size_t i = 0; i < combos.size(); ++i) combos[i] = static_cast<int>(i);
  rng.shuffle(combos);

  std::set<std::string> used_postcodes;
  for (int i = 0; i < count; ++i) {
    Entity e;
    int combo = combos[static_cast<std::size_t>(i)];
    e.name = kNameAdjectives[static_cast<std::size_t>(combo) / nouns.size()] + " " +
             nouns[static_cast<std::size_t>(combo) % nouns.size()];
    for (const SlotDef& slot : schema.informables) e.informable[slot.name] = rng.pick(slot.values);
    e.requestable["phone"] = make_phone(domain_index, i);
    e.requestable["address"] = std::to_string(1 + rng.uniform_int(40)) + " " +
                               rng.pick(kStreets) + " " + rng.pick(kStreetSuffixes);
    std::string postcode;
    do {
      postcode = "cb" + std::to_string(1 + rng.uniform_int(9)) +
                 std::string(1, static_cast<char>('a' + rng.uniform_int(26))) +
                 std::string(1, static_cast<char>('a' + rng.uniform_int(26)));
    } while (!used_postcodes.insert(postcode).second);
    e.requestable["postcode"] = postcode;
    db.entities.push_back(std::move(e));
  }
  return db;
}

}  // namespace

bool UserGoal::empty() const { return domains.empty(); }

int UserGoal::total_slots() const {
  int n = 0;
  for (const auto& [d, g] : domains)
    n += static_cast<int>(g.constraints.size() + g.requests.size());
  return n;
}

const DomainSchema* World::schema(const std::string& domain) const {
  for (const auto& s : schemas)
    if (s.name == domain) return &s;
  return nullptr;
}

const Database* World::database(const std::string& domain) const {
  for (const auto& d : databases)
    if (d.domain == domain) return &d;
  return nullptr;
}

World build_world(const WorldConfig& config) {
  if (config.domains < 1 || config.domains > 3)
    throw ConfigError("world.domains must be between 1 and 3, got " +
                      std::to_string(config.domains));
  if (config.entities_per_domain < 3)
    throw ConfigError("world.entities_per_domain must be >= 3, got " +
                      std::to_string(config.entities_per_domain));

  World w;
  w.config = config;
  std::vector<DomainSchema> all = {attraction_schema(), hotel_schema(), restaurant_schema()};
  // Pick N domains, then keep canonical (sorted) order. The built-in list is
  // already sorted; selection keeps hotel/restaurant first for small N since
  // those exercise booking.
  std::vector<DomainSchema> chosen;
  if (config.domains == 3) {
    chosen = all;
  } else if (config.domains == 2) {
    chosen = {all[1], all[2]};  // hotel, restaurant
  } else {
    chosen = {all[1]};  // hotel
  }
  std::sort(chosen.begin(), chosen.end(),
            [](const DomainSchema& a, const DomainSchema& b) { return a.name < b.name; });
  w.schemas = chosen;
  for (std::size_t i = 0; i < w.schemas.size(); ++i)
    w.databases.push_back(build_database(w.schemas[i], static_cast<int>(i),
                                         config.entities_per_domain, config.seed));
  return w;
}

int match_count(const Database& db, const std::map<std::string, std::string>& constraints) {
  int n = 0;
  for (const Entity& e : db.entities) {
    bool ok = true;
    for (const auto& [slot, value] : constraints) {
      if (value == "dontcare") continue;
      auto it = e.informable.find(slot);
      if (it == e.informable.end() || it->second != value) {
        ok = false;
        break;
      }
    }
    if (ok) ++n;
  }
  return n;
}

const Entity* top_match(const Database& db, const std::map<std::string, std::string>& constraints) {
  for (const Entity& e : db.entities) {
    bool ok = true;
    for (const auto& [slot, value] : constraints) {
      if (value == "dontcare") continue;
      auto it = e.informable.find(slot);
      if (it == e.informable.end() || it->second != value) {
        ok = false;
        break;
      }
    }
    if (ok) return &e;
  }
  return nullptr;
}

UserGoal sample_goal(std::uint64_t seed, const World& world) {
  Rng rng(derive_seed(seed, 0x60a1));
  UserGoal goal;

  int n_domains = 1 + rng.uniform_int(std::min<int>(2, static_cast<int>(world.schemas.size())));
  std::vector<int> order(world.schemas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  order.resize(static_cast<std::size_t>(n_domains));
  std::sort(order.begin(), order.end());  // canonical domain order

  for (int idx : order) {
    const DomainSchema& schema = world.schemas[static_cast<std::size_t>(idx)];
    const Database& db = world.databases[static_cast<std::size_t>(idx)];
    const Entity& anchor = db.entities[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(db.entities.size())))];

    DomainGoal dg;
    int n_con = 1 + rng.uniform_int(2);
    std::vector<std::string> con_slots;
    for (const SlotDef& s : schema.informables) con_slots.push_back(s.name);
    rng.shuffle(con_slots);
    for (int i = 0; i < n_con && i < static_cast<int>(con_slots.size()); ++i)
      dg.constraints[con_slots[static_cast<std::size_t>(i)]] =
          anchor.informable.at(con_slots[static_cast<std::size_t>(i)]);

    int n_req = 1 + rng.uniform_int(2);
    std::vector<std::string> req_slots = schema.requestables;
    rng.shuffle(req_slots);
    req_slots.resize(static_cast<std::size_t>(
        std::min<int>(n_req, static_cast<int>(req_slots.size()))));
    std::sort(req_slots.begin(), req_slots.end());
    dg.requests = req_slots;

    dg.book = schema.bookable && rng.uniform01() < 0.35;
    goal.domains[schema.name] = std::move(dg);
  }

  // Enforce the slot budget by trimming requests from the last domain first.
  const int kMaxSlots = 6;
  while (goal.total_slots() > kMaxSlots) {
    bool trimmed = false;
    for (auto it = goal.domains.rbegin(); it != goal.domains.rend(); ++it) {
      if (!it->second.requests.empty()) {
        it->second.requests.pop_back();
        trimmed = true;
        break;
      }
    }
    if (!trimmed) {
      for (auto it = goal.domains.rbegin(); it != goal.domains.rend(); ++it) {
        if (it->second.constraints.size() > 1) {
          it->second.constraints.erase(std::prev(it->second.constraints.end()));
          trimmed = true;
          break;
        }
      }
    }
    if (!trimmed) break;  // k domains with 1 constraint each always fits
  }
  return goal;
}

}  // namespace tod::world
