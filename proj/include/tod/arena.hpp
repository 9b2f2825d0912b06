#pragma once

// Self-play: the user simulator and dialog system exchange turns until the
// goal is exhausted, both sides close, or the turn cap is reached. Agents are
// injected as callables so tests can drive episodes with scripted stubs.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tod/agents.hpp"
#include "tod/corpus.hpp"
#include "tod/world.hpp"

namespace tod::arena {

enum class Termination { goal_empty, mutual_closing, turn_limit };
std::string to_string(Termination t);

bool is_closing_intent(const std::string& intent);  // thank, bye, welcome

struct Exchange {
  std::string goal_state_before;  // serialized g_t
  agents::UsTurn us;
  agents::DsTurn ds;
};

struct Episode {
  world::UserGoal goal;
  std::vector<Exchange> exchanges;
  Termination termination = Termination::turn_limit;
};

using UsFn = std::function<agents::UsTurn(const agents::GoalState& goal,
                                          const std::string& prev_response, Rng* rng)>;
using DsFn = std::function<agents::DsTurn(const corpus::BeliefState& prev_belief,
                                          const std::string& prev_response,
                                          const std::string& user_utterance, Rng* rng)>;

UsFn make_us_policy(const lm::Params* params, const codec::Vocab* vocab, double temperature,
                    int max_segment_tokens = 64);
DsFn make_ds_policy(const lm::Params* params, const codec::Vocab* vocab,
                    const world::World* world, double temperature, int max_segment_tokens = 64);

// Checks run after each exchange, in order: goal empty, mutual closing, cap.
// max_turns caps the number of completed exchanges.
Episode run_episode(const UsFn& us, const DsFn& ds, const world::UserGoal& goal, Rng* rng,
                    int max_turns = 20);

// Episode i draws its own rng from derive_seed(seed, i), so the result is
// identical however the loop is scheduled.
std::vector<Episode> run_batch(const UsFn& us, const DsFn& ds,
                               const std::vector<world::UserGoal>& goals, std::uint64_t seed,
                               int max_turns = 20);

// View of an episode in corpus form (lexicalizes responses for transcripts).
corpus::Dialog episode_to_dialog(const Episode& episode, const world::World& world,
                                 const std::string& id);

}  // namespace tod::arena
