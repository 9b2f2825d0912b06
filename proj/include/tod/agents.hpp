#pragma once

// The two generative agents. Each dialog turn is decoded segment by segment:
// marker tokens are forced, segment content is sampled from the model, and
// the db segment is spliced in from a database lookup rather than generated.
// Outputs carry per-token log-probabilities and sampled/forced flags so a
// policy-gradient step can be built from exactly the tokens the policy chose.

#include <map>
#include <string>
#include <vector>

#include "tod/codec.hpp"
#include "tod/common.hpp"
#include "tod/corpus.hpp"
#include "tod/lm.hpp"
#include "tod/world.hpp"

namespace tod::agents {

// --- user goal bookkeeping ---------------------------------------------------

// What the user still has to accomplish. Serialized per domain as
//   [hotel] [inform] area north stars 4 [request] phone [book]
// with empty sections omitted and empty domains dropped.
struct GoalState {
  std::map<std::string, world::DomainGoal> domains;

  bool empty() const { return domains.empty(); }
  std::string to_string() const;
  bool operator==(const GoalState& o) const = default;

  static GoalState from_goal(const world::UserGoal& goal);
  static GoalState parse(const std::string& text);  // throws ParseError
};

// Deterministic update: informed (slot, value) pairs leave the constraints,
// requested slots leave the request list, a book intent clears the booking
// flag, and exhausted domains drop out. Closing intents change nothing.
GoalState update_goal_state(const GoalState& state, const corpus::ActFrame& user_act);

// --- lexicalization ------------------------------------------------------------

struct LexResult {
  std::string text;
  bool complete = true;  // false when a placeholder had no value to take
};

// Fill placeholders from the top database match for the act's domain under
// the current belief ([choice] becomes the match count, [reference] a code
// derived from the entity name). Falls back to the last belief domain when
// the act carries none.
LexResult lexicalize(const std::string& response, const world::World& world,
                     const corpus::BeliefState& belief, const corpus::ActFrame& act);

std::string booking_reference(const std::string& entity_name);

// --- turn generation -------------------------------------------------------------

enum DsSegment { kDsBelief = 0, kDsDb = 1, kDsAct = 2, kDsResponse = 3 };
enum UsSegment { kUsAct = 0, kUsUtterance = 1 };

struct DecodeOptions {
  double temperature = 0.0;  // <= 0 is greedy
  Rng* rng = nullptr;        // required when temperature > 0
  int max_segment_tokens = 64;
};

struct DsTurn {
  corpus::BeliefState belief;  // parsed, or carried over when parsing failed
  bool belief_parse_ok = true;
  int db_bucket = 0;
  corpus::ActFrame act;  // empty frame when parsing failed
  bool act_parse_ok = true;
  std::string response;  // delexicalized
  bool truncated = false;

  // Realized target sequence (markers, content, spliced db) for RL training.
  std::vector<int> context_ids;
  std::vector<int> target_ids;
  std::vector<double> logprobs;        // 0 for forced tokens
  std::vector<unsigned char> sampled;  // 1 where the policy drew the token
  std::vector<int> segment_of;         // DsSegment per target token
};

struct UsTurn {
  corpus::ActFrame act;
  bool act_parse_ok = true;
  std::string utterance;
  bool truncated = false;

  std::vector<int> context_ids;
  std::vector<int> target_ids;
  std::vector<double> logprobs;
  std::vector<unsigned char> sampled;
  std::vector<int> segment_of;  // UsSegment per target token
};

// One system turn: belief -> db lookup -> act -> response. The db query pairs
// the previous belief with the freshly decoded one to pick the active domain.
DsTurn ds_step(const lm::Params& params, const codec::Vocab& vocab, const world::World& world,
               const corpus::BeliefState& prev_belief, const std::string& prev_response,
               const std::string& user_utterance, const DecodeOptions& opt);

// One user turn: act -> utterance, conditioned on the remaining goal.
UsTurn us_step(const lm::Params& params, const codec::Vocab& vocab, const GoalState& goal,
               const std::string& prev_response, const DecodeOptions& opt);

}  // namespace tod::agents
