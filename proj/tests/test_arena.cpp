#include <algorithm>

#include "doctest.h"
#include "fixtures.hpp"
#include "tod/arena.hpp"

using namespace tod;
using namespace tod::arena;

namespace {

// Scripted user: plays one goal item per turn (constraint, then request, then
// booking), and thanks once the goal is done.
agents::UsTurn scripted_us(const agents::GoalState& goal, const std::string&, Rng*) {
  agents::UsTurn turn;
  if (goal.empty()) {
    turn.act = {"general", "thank", {}};
    turn.utterance = "thank you , goodbye";
    return turn;
  }
  const auto& [domain, dg] = *goal.domains.begin();
  if (!dg.constraints.empty()) {
    const auto& [slot, value] = *dg.constraints.begin();
    turn.act = {domain, "inform", {{slot, value}}};
    turn.utterance = "i want " + value + " " + slot;
  } else if (!dg.requests.empty()) {
    turn.act = {domain, "request", {{dg.requests.front(), ""}}};
    turn.utterance = "what is the " + dg.requests.front();
  } else {
    turn.act = {domain, "book", {}};
    turn.utterance = "please book it";
  }
  return turn;
}

// Scripted system: echoes a welcome once the user closes, otherwise answers.
agents::DsTurn scripted_ds(const corpus::BeliefState& prev_belief, const std::string&,
                           const std::string& user, Rng*) {
  agents::DsTurn turn;
  turn.belief = prev_belief;
  if (user.find("thank") != std::string::npos) {
    turn.act = {"general", "welcome", {}};
    turn.response = "you are welcome";
  } else {
    turn.act = {"hotel", "inform", {{"area", ""}}};
    turn.response = "here you go";
  }
  return turn;
}

world::UserGoal small_goal() {
  world::UserGoal goal;
  goal.domains["hotel"].constraints = {{"area", "north"}, {"stars", "4"}};
  goal.domains["hotel"].requests = {"phone"};
  goal.domains["hotel"].book = true;
  return goal;
}

}  // namespace

TEST_CASE("closing intents are the fixed three") {
  CHECK(is_closing_intent("thank"));
  CHECK(is_closing_intent("bye"));
  CHECK(is_closing_intent("welcome"));
  CHECK_FALSE(is_closing_intent("inform"));
  CHECK_FALSE(is_closing_intent(""));
}

TEST_CASE("termination names round trip") {
  CHECK(to_string(Termination::goal_empty) == "goal_empty");
  CHECK(to_string(Termination::mutual_closing) == "mutual_closing");
  CHECK(to_string(Termination::turn_limit) == "turn_limit");
}

TEST_CASE("a cooperative pair empties the goal in one pass") {
  world::UserGoal goal = small_goal();
  Rng rng(1);
  Episode ep = run_episode(scripted_us, scripted_ds, goal, &rng);
  CHECK(ep.termination == Termination::goal_empty);
  // one exchange per goal item: 2 constraints + 1 request + 1 booking
  CHECK(ep.exchanges.size() == 4);
  CHECK(ep.exchanges.front().goal_state_before ==
        agents::GoalState::from_goal(goal).to_string());
  CHECK_FALSE(ep.exchanges.front().goal_state_before.empty());

  // goal snapshots shrink turn by turn
  agents::GoalState gs = agents::GoalState::from_goal(goal);
  for (const Exchange& ex : ep.exchanges) {
    CHECK(ex.goal_state_before == gs.to_string());
    gs = agents::update_goal_state(gs, ex.us.act);
  }
  CHECK(gs.empty());
}

TEST_CASE("mutual closing ends an episode with goal left over") {
  // user thanks immediately regardless of the goal; system answers welcome
  UsFn thanker = [](const agents::GoalState&, const std::string&, Rng*) {
    agents::UsTurn t;
    t.act = {"general", "thank", {}};
    t.utterance = "thanks anyway";
    return t;
  };
  Rng rng(2);
  Episode ep = run_episode(thanker, scripted_ds, small_goal(), &rng);
  CHECK(ep.termination == Termination::mutual_closing);
  CHECK(ep.exchanges.size() == 1);
}

TEST_CASE("one closing side alone does not end the episode") {
  // user closes every turn, system never does
  UsFn thanker = [](const agents::GoalState&, const std::string&, Rng*) {
    agents::UsTurn t;
    t.act = {"general", "thank", {}};
    t.utterance = "thanks";
    return t;
  };
  DsFn stubborn = [](const corpus::BeliefState& b, const std::string&, const std::string&, Rng*) {
    agents::DsTurn t;
    t.belief = b;
    t.act = {"hotel", "reqmore", {}};
    t.response = "anything else ?";
    return t;
  };
  Rng rng(3);
  Episode ep = run_episode(thanker, stubborn, small_goal(), &rng, 7);
  CHECK(ep.termination == Termination::turn_limit);
  CHECK(ep.exchanges.size() == 7);
}

TEST_CASE("the turn cap stops a stalemate") {
  UsFn stall = [](const agents::GoalState&, const std::string&, Rng*) {
    agents::UsTurn t;
    t.act = {"hotel", "inform", {{"area", "south"}}};  // never matches the goal
    t.utterance = "something in the south";
    return t;
  };
  Rng rng(4);
  Episode ep = run_episode(stall, scripted_ds, small_goal(), &rng, 5);
  CHECK(ep.termination == Termination::turn_limit);
  CHECK(ep.exchanges.size() == 5);
}

TEST_CASE("batches are deterministic and order-independent per episode") {
  const auto& world = fixtures::shared_world();
  std::vector<world::UserGoal> goals;
  for (int i = 0; i < 6; ++i) goals.push_back(world::sample_goal(derive_seed(50, static_cast<std::uint64_t>(i)), world));

  // model-backed policies over a tiny random-weight model
  const codec::Vocab& vocab = fixtures::shared_vocab();
  lm::Params params = lm::Params::init(fixtures::tiny_config(vocab.size()), 13);
  UsFn us = make_us_policy(&params, &vocab, 1.0, 10);
  DsFn ds = make_ds_policy(&params, &vocab, &world, 1.0, 10);

  std::vector<Episode> a = run_batch(us, ds, goals, 1234, 6);
  std::vector<Episode> b = run_batch(us, ds, goals, 1234, 6);
  REQUIRE(a.size() == goals.size());
  REQUIRE(b.size() == goals.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].exchanges.size() == b[i].exchanges.size());
    CHECK(a[i].termination == b[i].termination);
    for (std::size_t t = 0; t < a[i].exchanges.size(); ++t) {
      CHECK(a[i].exchanges[t].us.target_ids == b[i].exchanges[t].us.target_ids);
      CHECK(a[i].exchanges[t].ds.target_ids == b[i].exchanges[t].ds.target_ids);
      CHECK(a[i].exchanges[t].us.logprobs == b[i].exchanges[t].us.logprobs);
    }
  }

  // a single episode re-run with its derived seed reproduces the batch entry
  Rng solo(derive_seed(1234, std::uint64_t{2}));
  Episode ep = run_episode(us, ds, goals[2], &solo, 6);
  REQUIRE(ep.exchanges.size() == a[2].exchanges.size());
  for (std::size_t t = 0; t < ep.exchanges.size(); ++t)
    CHECK(ep.exchanges[t].us.target_ids == a[2].exchanges[t].us.target_ids);
}

TEST_CASE("episodes convert to corpus dialogs") {
  const auto& world = fixtures::shared_world();
  world::UserGoal goal = small_goal();
  Rng rng(5);
  Episode ep = run_episode(scripted_us, scripted_ds, goal, &rng);
  corpus::Dialog d = episode_to_dialog(ep, world, "ep0001");
  CHECK(d.id == "ep0001");
  CHECK(d.goal.domains.count("hotel") == 1);
  REQUIRE(d.turns.size() == ep.exchanges.size());
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    CHECK(d.turns[t].goal_state == ep.exchanges[t].goal_state_before);
    CHECK(d.turns[t].user == ep.exchanges[t].us.utterance);
    CHECK(d.turns[t].response == ep.exchanges[t].ds.response);
    CHECK(d.turns[t].user_act.to_string() == ep.exchanges[t].us.act.to_string());
  }
}
