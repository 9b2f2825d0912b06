#pragma once
// Canonical dialog data model plus corpus construction, cleaning, and I/O.
//
// Serialization conventions (used verbatim in corpus files and model text):
//   act     "[hotel] [inform] area north stars 4"   (slots sorted by name)
//   belief  "[hotel] area north [restaurant] food thai"  (domains + slots sorted)
//   db      one bucket token out of [db_0] [db_1] [db_2] [db_3] [db_gt3]

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tod/common.hpp"
#include "tod/world.hpp"

namespace tod::corpus {

enum class Role { user, system };

struct ActFrame {
  std::string domain;  // schema domain or "general"
  std::string intent;  // inform, request, offer, offerbooked, book, nooffer, thank, bye, welcome
  std::vector<std::pair<std::string, std::string>> slots;  // (name, value); value may be empty

  void canonicalize();  // sort slots by name, drop duplicates
  std::string to_string() const;
  bool operator==(const ActFrame& o) const = default;

  // Role decides whether inform slots carry values (user informs do, system
  // informs list bare attribute names). Throws ParseError on malformed input.
  static ActFrame parse(const std::string& text, Role role);
};

struct BeliefState {
  // domain -> slot -> value; maps keep canonical (sorted) order.
  std::map<std::string, std::map<std::string, std::string>> domains;

  std::string to_string() const;
  bool empty() const { return domains.empty(); }
  bool operator==(const BeliefState& o) const = default;
  static BeliefState parse(const std::string& text);
};

// Match-count buckets: 0, 1, 2, 3, >3.
int db_bucket(int match_count);
std::string db_bucket_token_from_count(int match_count);
std::string db_bucket_token(int bucket);
int parse_db_bucket_token(const std::string& token);  // throws ParseError

struct DialogTurn {
  std::string goal_state;  // serialized remaining-goal snapshot before the user speaks
  ActFrame user_act;
  std::string user;  // lexical user utterance
  BeliefState belief;
  int db = 0;  // bucket index 0..4
  ActFrame system_act;
  std::string response;      // delexicalized system response
  std::string response_lex;  // lexical response (gold data; may be empty for predictions)
};

struct Dialog {
  std::string id;
  world::UserGoal goal;
  std::vector<DialogTurn> turns;
};

struct Corpus {
  std::map<std::string, Dialog> dialogs;
};

struct Splits {
  std::vector<std::string> train, dev, test;
};

// --- gold data generation ---------------------------------------------------

// Scripted gold dialog for one goal: convey constraints, receive an offer,
// ask the requested attributes, book if required, close. Surface text is
// sampled from template pools (>= 3 variants per act type).
Dialog script_gold_dialog(const world::UserGoal& goal, const world::World& world,
                          std::uint64_t seed);

Corpus generate_corpus(const world::World& world, int n_dialogs, std::uint64_t seed);

// Active-domain DB query convention shared by gold scripting, agents, and
// evaluation: first domain (canonical order) whose constraints changed from
// prev; otherwise the last domain present; empty belief yields count 0.
std::string active_domain(const BeliefState& prev, const BeliefState& cur);
int query_match_count(const world::World& world, const BeliefState& prev, const BeliefState& cur);

// --- cleaning ---------------------------------------------------------------

// Remove belief "name" entries whose value never occurred in user utterances
// up to and including the current turn, or in earlier system responses.
// Returns the number of removed entries.
int clean_belief_states(Corpus& corpus);

// Whole-token spelling fixes applied to user utterances and belief values.
// Returns the number of replaced tokens.
int normalize_spelling(Corpus& corpus, const std::map<std::string, std::string>& fixes);
const std::map<std::string, std::string>& default_spelling_fixes();

// Replace this entity's slot values in `text` by placeholders, longest value
// first. Returns the rewritten text and the number of placed placeholders.
std::pair<std::string, int> delexicalize(const std::string& text, const world::Entity& entity,
                                         const world::DomainSchema& schema);

// --- I/O ---------------------------------------------------------------------

std::string corpus_to_json(const Corpus& corpus);  // canonical (sorted keys, stable bytes)
Corpus corpus_from_json(const std::string& text);
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

// External interchange format: {dialog_id: {goal: {info/reqt/book}, log: [...]}}.
Corpus ingest_multiwoz_format(const std::string& path);
std::string export_multiwoz_format(const Corpus& corpus);

Splits split_corpus(const Corpus& corpus, std::uint64_t seed);  // 8/1/1 by dialog
void save_splits(const Splits& splits, const std::string& path);
Splits load_splits(const std::string& path);

}  // namespace tod::corpus
