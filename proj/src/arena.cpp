#include "tod/arena.hpp"

namespace tod::arena {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::goal_empty: return "goal_empty";
    case Termination::mutual_closing: return "mutual_closing";
    case Termination::turn_limit: return "turn_limit";
  }
  return "unknown";
}

bool is_closing_intent(const std::string& intent) {
  return intent == "thank" || intent == "bye" || intent == "welcome";
}

UsFn make_us_policy(const lm::Params* params, const codec::Vocab* vocab, double temperature,
                    int max_segment_tokens) {
  return [params, vocab, temperature, max_segment_tokens](
             const agents::GoalState& goal, const std::string& prev_response, Rng* rng) {
    agents::DecodeOptions opt;
    opt.temperature = temperature;
    opt.rng = rng;
    opt.max_segment_tokens = max_segment_tokens;
    return agents::us_step(*params, *vocab, goal, prev_response, opt);
  };
}

DsFn make_ds_policy(const lm::Params* params, const codec::Vocab* vocab,
                    const world::World* world, double temperature, int max_segment_tokens) {
  return [params, vocab, world, temperature, max_segment_tokens](
             const corpus::BeliefState& prev_belief, const std::string& prev_response,
             const std::string& user_utterance, Rng* rng) {
    agents::DecodeOptions opt;
    opt.temperature = temperature;
    opt.rng = rng;
    opt.max_segment_tokens = max_segment_tokens;
    return agents::ds_step(*params, *vocab, *world, prev_belief, prev_response, user_utterance,
                           opt);
  };
}

Episode run_episode(const UsFn& us, const DsFn& ds, const world::UserGoal& goal, Rng* rng,
                    int max_turns) {
  if (max_turns < 1) throw ConfigError("episode needs max_turns >= 1");
  Episode ep;
  ep.goal = goal;
  agents::GoalState gs = agents::GoalState::from_goal(goal);
  corpus::BeliefState belief;
  std::string prev_response;

  for (int t = 0;; ++t) {
    Exchange ex;
    ex.goal_state_before = gs.to_string();
    ex.us = us(gs, prev_response, rng);
    ex.ds = ds(belief, prev_response, ex.us.utterance, rng);

    gs = agents::update_goal_state(gs, ex.us.act);
    belief = ex.ds.belief;
    prev_response = ex.ds.response;
    bool closing = is_closing_intent(ex.us.act.intent) && is_closing_intent(ex.ds.act.intent);
    ep.exchanges.push_back(std::move(ex));

    if (gs.empty()) {
      ep.termination = Termination::goal_empty;
      return ep;
    }
    if (closing) {
      ep.termination = Termination::mutual_closing;
      return ep;
    }
    if (t + 1 == max_turns) {
      ep.termination = Termination::turn_limit;
      return ep;
    }
  }
}

std::vector<Episode> run_batch(const UsFn& us, const DsFn& ds,
                               const std::vector<world::UserGoal>& goals, std::uint64_t seed,
                               int max_turns) {
  std::vector<Episode> episodes(goals.size());
  const int n = static_cast<int>(goals.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    episodes[static_cast<std::size_t>(i)] =
        run_episode(us, ds, goals[static_cast<std::size_t>(i)], &rng, max_turns);
  }
  return episodes;
}

corpus::Dialog episode_to_dialog(const Episode& episode, const world::World& world,
                                 const std::string& id) {
  corpus::Dialog dialog;
  dialog.id = id;
  dialog.goal = episode.goal;
  for (const Exchange& ex : episode.exchanges) {
    corpus::DialogTurn turn;
    turn.goal_state = ex.goal_state_before;
    turn.user_act = ex.us.act;
    turn.user = ex.us.utterance;
    turn.belief = ex.ds.belief;
    turn.db = ex.ds.db_bucket;
    turn.system_act = ex.ds.act;
    turn.response = ex.ds.response;
    turn.response_lex = agents::lexicalize(ex.ds.response, world, ex.ds.belief, ex.ds.act).text;
    dialog.turns.push_back(std::move(turn));
  }
  return dialog;
}

}  // namespace tod::arena
