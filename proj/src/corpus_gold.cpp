// Scripted gold dialogs. The script walks the user goal with the same
// update rule the live user simulator applies, so replaying the stored user
// acts through update_goal_state reproduces every stored goal-state snapshot
// and ends empty exactly at the closing turn.

#include <algorithm>
#include <cstdio>

#include "tod/agents.hpp"
#include "tod/corpus.hpp"

namespace tod::corpus {

namespace {

using Pool = std::vector<std::string>;

std::string spoken_slot(const std::string& slot) {
  if (slot == "phone") return "phone number";
  return slot;
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
  std::size_t at = 0;
  while ((at = text.find(from, at)) != std::string::npos) {
    text.replace(at, from.size(), to);
    at += to.size();
  }
  return text;
}

std::string slot_fragment(Rng& rng, const std::string& slot, const std::string& value) {
  static const std::map<std::string, Pool> kPools = {
      {"area", {"in the {v}", "located in the {v}", "in the {v} part of town"}},
      {"price", {"in the {v} price range", "with {v} pricing", "at a {v} price"}},
      {"stars", {"with {v} stars", "rated {v} stars"}},
      {"type", {"of the {v} type", "of the {v} kind"}},
      {"food", {"serving {v} food", "that serves {v} food"}},
  };
  auto it = kPools.find(slot);
  const Pool fallback = {"with {v} for the " + slot, "where the " + slot + " is {v}"};
  const Pool& pool = it != kPools.end() ? it->second : fallback;
  return replace_all(rng.pick(pool), "{v}", value);
}

std::string join_and(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += " and ";
    out += parts[i];
  }
  return out;
}

std::string user_inform_utterance(Rng& rng, const std::string& domain,
                                  const std::vector<std::pair<std::string, std::string>>& pairs,
                                  bool first_turn_of_domain, bool first_domain) {
  static const Pool kFirst = {
      "i am looking for a {d} {f}",
      "i need a {d} {f}",
      "can you find me a {d} {f}",
      "hello , i am looking for a {d} {f}",
  };
  static const Pool kAlso = {
      "i am also looking for a {d} {f}",
      "i also need a {d} {f}",
      "next , i would like a {d} {f}",
  };
  static const Pool kFollowUp = {
      "i would like it {f}",
      "it should be {f}",
      "make sure it is {f}",
  };
  std::vector<std::string> frags;
  for (const auto& [slot, value] : pairs) frags.push_back(slot_fragment(rng, slot, value));
  std::string f = join_and(frags);
  const Pool& pool = first_turn_of_domain ? (first_domain ? kFirst : kAlso) : kFollowUp;
  std::string text = replace_all(rng.pick(pool), "{d}", domain);
  return replace_all(text, "{f}", f);
}

std::string user_request_utterance(Rng& rng, const std::vector<std::string>& slots) {
  static const Pool kPool = {
      "what is the {l} ?",
      "can you tell me the {l} ?",
      "could i get the {l} ?",
      "please give me the {l}",
  };
  std::vector<std::string> spoken;
  for (const std::string& s : slots) spoken.push_back(spoken_slot(s));
  return replace_all(rng.pick(kPool), "{l}", join_and(spoken));
}

std::string user_book_utterance(Rng& rng) {
  static const Pool kPool = {
      "can you book it for me ?",
      "please book that for me",
      "i would like to book it",
  };
  return rng.pick(kPool);
}

std::string user_thank_utterance(Rng& rng) {
  static const Pool kPool = {
      "thank you , that is all",
      "thanks , that is everything",
      "thank you for your help , goodbye",
  };
  return rng.pick(kPool);
}

std::string system_request_response(Rng& rng, const std::string& slot) {
  static const Pool kPool = {
      "what {s} do you prefer ?",
      "do you have a {s} in mind ?",
      "which {s} would you like ?",
  };
  return replace_all(rng.pick(kPool), "{s}", spoken_slot(slot));
}

std::string system_offer_response(Rng& rng) {
  static const Pool kPool = {
      "we have [choice] options . how about [name] ?",
      "there are [choice] matches . i recommend [name] .",
      "[name] is a great fit . it is 1 of [choice] such places .",
  };
  return rng.pick(kPool);
}

std::string system_inform_response(Rng& rng, const std::vector<std::string>& slots) {
  static const Pool kOpeners = {"", "sure , ", "of course , "};
  std::vector<std::string> frags;
  for (const std::string& s : slots)
    frags.push_back("the " + spoken_slot(s) + " is [" + s + "]");
  return rng.pick(kOpeners) + join_and(frags) + " .";
}

std::string system_offerbooked_response(Rng& rng) {
  static const Pool kPool = {
      "booking done . your reference number is [reference] .",
      "all booked . the reference is [reference] .",
      "your booking succeeded . reference [reference] .",
  };
  return rng.pick(kPool);
}

std::string system_bye_response(Rng& rng) {
  static const Pool kPool = {
      "you are welcome . goodbye .",
      "glad to help . bye .",
      "have a great day . goodbye .",
  };
  return rng.pick(kPool);
}

}  // namespace

Dialog script_gold_dialog(const world::UserGoal& goal, const world::World& world,
                          std::uint64_t seed) {
  Rng rng(seed);
  Dialog dialog;
  dialog.goal = goal;

  agents::GoalState gs = agents::GoalState::from_goal(goal);
  BeliefState belief;
  std::vector<std::string> domain_order;
  for (const auto& [domain, dg] : gs.domains) domain_order.push_back(domain);

  auto push_turn = [&](const ActFrame& user_act, const std::string& user_text,
                       const BeliefState& prev_belief, const ActFrame& system_act,
                       const std::string& response) {
    DialogTurn turn;
    turn.goal_state = gs.to_string();
    turn.user_act = user_act;
    turn.user = user_text;
    gs = agents::update_goal_state(gs, user_act);
    turn.belief = belief;
    turn.db = db_bucket(query_match_count(world, prev_belief, belief));
    turn.system_act = system_act;
    turn.response = response;
    turn.response_lex = agents::lexicalize(response, world, belief, system_act).text;
    dialog.turns.push_back(std::move(turn));
  };

  for (std::size_t di = 0; di < domain_order.size(); ++di) {
    const std::string& domain = domain_order[di];
    bool first_turn_of_domain = true;

    // convey constraints, 1-2 per turn, in slot order
    while (true) {
      auto git = gs.domains.find(domain);
      if (git == gs.domains.end() || git->second.constraints.empty()) break;
      int remaining = static_cast<int>(git->second.constraints.size());
      int k = std::min(remaining, 1 + static_cast<int>(rng.uniform_int(2)));
      std::vector<std::pair<std::string, std::string>> pairs;
      for (const auto& [slot, value] : git->second.constraints) {
        if (static_cast<int>(pairs.size()) == k) break;
        pairs.emplace_back(slot, value);
      }

      ActFrame user_act{domain, "inform", pairs};
      user_act.canonicalize();
      std::string user_text =
          user_inform_utterance(rng, domain, pairs, first_turn_of_domain, di == 0);
      first_turn_of_domain = false;

      BeliefState prev_belief = belief;
      for (const auto& [slot, value] : pairs) belief.domains[domain][slot] = value;

      bool constraints_done = k == remaining;
      ActFrame system_act;
      std::string response;
      if (constraints_done) {
        system_act = ActFrame{domain, "offer", {{"name", ""}, {"choice", ""}}};
        response = system_offer_response(rng);
      } else {
        // ask for the next unconveyed slot, which is what the user informs next
        auto next = git->second.constraints.begin();
        std::advance(next, k);
        system_act = ActFrame{domain, "request", {{next->first, ""}}};
        response = system_request_response(rng, next->first);
      }
      system_act.canonicalize();
      push_turn(user_act, user_text, prev_belief, system_act, response);
    }

    // ask the requested attributes, 1-2 per turn
    while (true) {
      auto git = gs.domains.find(domain);
      if (git == gs.domains.end() || git->second.requests.empty()) break;
      int remaining = static_cast<int>(git->second.requests.size());
      int k = std::min(remaining, 1 + static_cast<int>(rng.uniform_int(2)));
      std::vector<std::string> slots(git->second.requests.begin(),
                                     git->second.requests.begin() + k);

      ActFrame user_act{domain, "request", {}};
      for (const std::string& s : slots) user_act.slots.emplace_back(s, "");
      user_act.canonicalize();
      std::string user_text = user_request_utterance(rng, slots);

      ActFrame system_act{domain, "inform", {}};
      for (const std::string& s : slots) system_act.slots.emplace_back(s, "");
      system_act.canonicalize();
      std::string response = system_inform_response(rng, slots);
      push_turn(user_act, user_text, belief, system_act, response);
    }

    // book when the goal asks for it
    if (auto git = gs.domains.find(domain); git != gs.domains.end() && git->second.book) {
      ActFrame user_act{domain, "book", {}};
      ActFrame system_act{domain, "offerbooked", {{"reference", ""}}};
      push_turn(user_act, user_book_utterance(rng), belief, system_act,
                system_offerbooked_response(rng));
    }
  }

  // closing exchange; the goal is already empty here
  ActFrame thank{"general", "thank", {}};
  ActFrame bye{"general", "bye", {}};
  push_turn(thank, user_thank_utterance(rng), belief, bye, system_bye_response(rng));

  return dialog;
}

Corpus generate_corpus(const world::World& world, int n_dialogs, std::uint64_t seed) {
  if (n_dialogs < 1) throw ConfigError("corpus needs at least one dialog");
  Corpus corpus;
  for (int i = 0; i < n_dialogs; ++i) {
    world::UserGoal goal = world::sample_goal(derive_seed(seed, 0x60a1, i), world);
    Dialog dialog = script_gold_dialog(goal, world, derive_seed(seed, 0xd1a1, i));
    char id[16];
    std::snprintf(id, sizeof(id), "syn%05d", i);
    dialog.id = id;
    corpus.dialogs.emplace(dialog.id, std::move(dialog));
  }
  return corpus;
}

}  // namespace tod::corpus
