#pragma once
// Independent recomputations used to cross-check the library: a BLEU scorer
// with its own counting structures, brute-force reward/return recomputation
// that replays each episode prefix from scratch, and a random episode
// builder that exercises the reward bookkeeping without any models.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tod/agents.hpp"
#include "tod/arena.hpp"
#include "tod/common.hpp"
#include "tod/corpus.hpp"
#include "tod/world.hpp"

namespace oracles {

// --- corpus BLEU, nested-map n-gram counts -----------------------------------

inline double bleu4(const std::vector<std::vector<std::string>>& cands,
                    const std::vector<std::vector<std::string>>& refs) {
  long long cand_len = 0, ref_len = 0;
  double log_sum = 0.0;
  for (int order = 1; order <= 4; ++order) {
    long long clipped = 0, total = 0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      std::map<std::vector<std::string>, int> cand_counts, ref_counts;
      const auto& c = cands[i];
      const auto& r = refs[i];
      for (std::size_t p = 0; p + order <= c.size(); ++p)
        ++cand_counts[std::vector<std::string>(c.begin() + p, c.begin() + p + order)];
      for (std::size_t p = 0; p + order <= r.size(); ++p)
        ++ref_counts[std::vector<std::string>(r.begin() + p, r.begin() + p + order)];
      for (const auto& [gram, n] : cand_counts) {
        total += n;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) clipped += std::min(n, it->second);
      }
    }
    if (clipped == 0) return 0.0;
    log_sum += 0.25 * std::log(static_cast<double>(clipped) / static_cast<double>(total));
  }
  for (std::size_t i = 0; i < cands.size(); ++i) {
    cand_len += static_cast<long long>(cands[i].size());
    ref_len += static_cast<long long>(refs[i].size());
  }
  if (cand_len == 0) return 0.0;
  double bp = cand_len < ref_len
                  ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                  : 1.0;
  return 100.0 * bp * std::exp(log_sum);
}

// --- rewards and returns -------------------------------------------------------

inline int goal_items(const tod::agents::GoalState& gs) {
  int n = 0;
  for (const auto& [d, dg] : gs.domains)
    n += static_cast<int>(dg.constraints.size() + dg.requests.size()) + (dg.book ? 1 : 0);
  return n;
}

inline bool has_word(const std::string& text, const std::string& word) {
  for (const std::string& w : tod::split_ws(text))
    if (w == word) return true;
  return false;
}

inline std::string frame_key(const tod::corpus::ActFrame& a) {
  std::vector<std::string> names;
  for (const auto& [n, v] : a.slots) names.push_back(n);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::string key = a.domain + "#" + a.intent;
  for (const std::string& n : names) key += "#" + n;
  return key;
}

// Recomputes both agents' synthetic rewards by replaying the episode prefix
// from scratch at every turn.
inline std::pair<std::vector<double>, std::vector<double>> synthetic_rewards(
    const tod::arena::Episode& ep) {
  using tod::agents::GoalState;
  const std::size_t T = ep.exchanges.size();
  std::vector<double> us(T), ds(T);

  int total_constraints = 0, total_book = 0, total_items = 0;
  std::set<std::string> requested;
  for (const auto& [d, dg] : ep.goal.domains) {
    total_constraints += static_cast<int>(dg.constraints.size());
    total_book += dg.book ? 1 : 0;
    total_items += static_cast<int>(dg.constraints.size() + dg.requests.size()) + (dg.book ? 1 : 0);
    for (const std::string& s : dg.requests) requested.insert(s);
  }
  if (total_items == 0) total_items = 1;

  for (std::size_t t = 0; t < T; ++t) {
    GoalState gs = GoalState::from_goal(ep.goal);
    for (std::size_t k = 0; k < t; ++k)
      gs = tod::agents::update_goal_state(gs, ep.exchanges[k].us.act);
    GoalState gs_after = tod::agents::update_goal_state(gs, ep.exchanges[t].us.act);
    int us_mentions = goal_items(gs) - goal_items(gs_after);

    std::set<std::string> fulfilled;
    bool reference = false;
    for (std::size_t k = 0; k <= t; ++k) {
      for (const std::string& s : requested)
        if (has_word(ep.exchanges[k].ds.response, "[" + s + "]")) fulfilled.insert(s);
      if (has_word(ep.exchanges[k].ds.response, "[reference]")) reference = true;
    }
    int ds_mentions = 0;
    for (const std::string& s : requested)
      if (has_word(ep.exchanges[t].ds.response, "[" + s + "]")) ++ds_mentions;

    int remaining = 0;
    for (const auto& [d, dg] : gs_after.domains)
      remaining += static_cast<int>(dg.constraints.size());
    double completion = (static_cast<double>(total_constraints - remaining) +
                         static_cast<double>(fulfilled.size()) +
                         static_cast<double>(reference ? total_book : 0)) /
                        total_items;

    bool us_rep = false, ds_rep = false;
    for (std::size_t k = 0; k < t; ++k) {
      if (frame_key(ep.exchanges[k].us.act) == frame_key(ep.exchanges[t].us.act)) us_rep = true;
      if (frame_key(ep.exchanges[k].ds.act) == frame_key(ep.exchanges[t].ds.act)) ds_rep = true;
    }
    us[t] = 0.1 * us_mentions - 0.5 * (us_rep ? 1.0 : 0.0) + completion;
    ds[t] = 0.1 * ds_mentions - 0.5 * (ds_rep ? 1.0 : 0.0) + completion;
  }
  return {us, ds};
}

inline std::vector<std::vector<double>> returns(const std::vector<int>& tokens_per_turn,
                                                const std::vector<double>& rewards,
                                                double gamma) {
  std::vector<std::vector<double>> out(tokens_per_turn.size());
  for (std::size_t t = 0; t < tokens_per_turn.size(); ++t)
    for (int i = 1; i <= tokens_per_turn[t]; ++i)
      out[t].push_back(std::pow(gamma, tokens_per_turn[t] - i) * rewards[t]);
  return out;
}

// --- random episodes ------------------------------------------------------------

// Builds an episode with plausible-but-random acts, responses, and beliefs:
// goal-directed moves mixed with noise, placeholders that sometimes answer
// goal requests, occasional repeats, booking references, and name offers.
inline tod::arena::Episode random_episode(tod::Rng& rng, const tod::world::World& world) {
  using tod::corpus::ActFrame;
  tod::arena::Episode ep;
  ep.goal = tod::world::sample_goal(rng.next_u64(), world);
  tod::agents::GoalState gs = tod::agents::GoalState::from_goal(ep.goal);
  tod::corpus::BeliefState belief;

  std::vector<std::string> req_pool;
  for (const auto& [d, dg] : ep.goal.domains)
    for (const std::string& s : dg.requests) req_pool.push_back(s);

  const int T = 1 + static_cast<int>(rng.uniform_int(7));
  for (int t = 0; t < T; ++t) {
    tod::arena::Exchange ex;
    ex.goal_state_before = gs.to_string();

    // user act: mostly goal-directed, sometimes noise or a closing act
    double u = rng.uniform01();
    if (u < 0.6 && !gs.empty()) {
      const auto& [domain, dg] = *gs.domains.begin();
      if (!dg.constraints.empty()) {
        auto it = dg.constraints.begin();
        ex.us.act = ActFrame{domain, "inform", {{it->first, it->second}}};
        belief.domains[domain][it->first] = it->second;
      } else if (!dg.requests.empty()) {
        ex.us.act = ActFrame{domain, "request", {{dg.requests.front(), ""}}};
      } else {
        ex.us.act = ActFrame{domain, "book", {}};
      }
    } else if (u < 0.8) {
      ex.us.act = ActFrame{"general", rng.uniform01() < 0.5 ? "thank" : "bye", {}};
    } else {
      const auto& schema = world.schemas[rng.uniform_int(world.schemas.size())];
      ex.us.act = ActFrame{schema.name, "inform", {{"area", "nowhere"}}};
    }
    ex.us.utterance = "filler utterance";
    gs = tod::agents::update_goal_state(gs, ex.us.act);

    // system act and response: answers, offers, or noise
    std::string response = "sure .";
    double s = rng.uniform01();
    if (s < 0.4 && !req_pool.empty()) {
      const std::string& slot = req_pool[rng.uniform_int(req_pool.size())];
      ex.ds.act = ActFrame{ep.goal.domains.begin()->first, "inform", {{slot, ""}}};
      response = "the " + slot + " is [" + slot + "] .";
    } else if (s < 0.55) {
      ex.ds.act = ActFrame{ep.goal.domains.begin()->first, "offerbooked", {{"reference", ""}}};
      response = "done . reference [reference] .";
    } else if (s < 0.7) {
      ex.ds.act = ActFrame{ep.goal.domains.begin()->first, "offer", {{"name", ""}}};
      response = "how about [name] ?";
    } else if (s < 0.85 && t > 0) {
      ex.ds.act = ep.exchanges[static_cast<std::size_t>(t - 1)].ds.act;  // deliberate repeat
      response = ep.exchanges[static_cast<std::size_t>(t - 1)].ds.response;
    } else {
      ex.ds.act = ActFrame{"general", "reqmore", {}};
      response = "anything else ?";
    }
    ex.ds.response = response;
    ex.ds.belief = belief;
    ex.ds.db_bucket = tod::corpus::db_bucket(tod::corpus::query_match_count(
        world, belief, belief));
    ep.exchanges.push_back(std::move(ex));
  }
  ep.termination = tod::arena::Termination::turn_limit;
  return ep;
}

}  // namespace oracles
