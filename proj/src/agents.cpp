#include "tod/agents.hpp"

#include <algorithm>
#include <cstdio>

namespace tod::agents {

namespace {

bool is_bracketed(const std::string& tok) {
  return tok.size() >= 2 && tok.front() == '[' && tok.back() == ']';
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

// --- goal state ------------------------------------------------------------------

std::string GoalState::to_string() const {
  std::vector<std::string> toks;
  for (const auto& [domain, dg] : domains) {
    toks.push_back("[" + domain + "]");
    if (!dg.constraints.empty()) {
      toks.push_back("[inform]");
      for (const auto& [slot, value] : dg.constraints) {
        toks.push_back(slot);
        toks.push_back(value);
      }
    }
    if (!dg.requests.empty()) {
      toks.push_back("[request]");
      for (const std::string& slot : dg.requests) toks.push_back(slot);
    }
    if (dg.book) toks.push_back("[book]");
  }
  return join(toks, " ");
}

GoalState GoalState::from_goal(const world::UserGoal& goal) {
  GoalState gs;
  for (const auto& [domain, dg] : goal.domains) {
    world::DomainGoal copy = dg;
    std::sort(copy.requests.begin(), copy.requests.end());
    copy.requests.erase(std::unique(copy.requests.begin(), copy.requests.end()),
                        copy.requests.end());
    if (copy.constraints.empty() && copy.requests.empty() && !copy.book) continue;
    gs.domains.emplace(domain, std::move(copy));
  }
  return gs;
}

GoalState GoalState::parse(const std::string& text) {
  GoalState gs;
  std::vector<std::string> toks = split_ws(text);
  world::DomainGoal* cur = nullptr;
  // section: 0 none, 1 inform, 2 request
  int section = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::string& tok = toks[i];
    if (is_bracketed(tok)) {
      std::string inner = tok.substr(1, tok.size() - 2);
      if (inner == "inform" || inner == "request" || inner == "book") {
        if (cur == nullptr) throw ParseError("goal state: section \"" + tok + "\" before any domain");
        if (inner == "book") {
          cur->book = true;
          section = 0;
        } else {
          section = inner == "inform" ? 1 : 2;
        }
      } else {
        if (inner.empty()) throw ParseError("goal state: empty domain token");
        auto [it, fresh] = gs.domains.emplace(inner, world::DomainGoal{});
        if (!fresh) throw ParseError("goal state: duplicate domain " + inner);
        cur = &it->second;
        section = 0;
      }
      continue;
    }
    if (cur == nullptr || section == 0)
      throw ParseError("goal state: stray token \"" + tok + "\"");
    if (section == 1) {
      if (i + 1 >= toks.size() || is_bracketed(toks[i + 1]))
        throw ParseError("goal state: constraint slot \"" + tok + "\" has no value");
      cur->constraints[tok] = toks[i + 1];
      ++i;
    } else {
      cur->requests.push_back(tok);
    }
  }
  for (auto& [domain, dg] : gs.domains) {
    std::sort(dg.requests.begin(), dg.requests.end());
    dg.requests.erase(std::unique(dg.requests.begin(), dg.requests.end()), dg.requests.end());
  }
  return gs;
}

GoalState update_goal_state(const GoalState& state, const corpus::ActFrame& user_act) {
  GoalState out = state;
  if (user_act.domain.empty() || user_act.domain == "general") return out;
  auto it = out.domains.find(user_act.domain);
  if (it == out.domains.end()) return out;
  world::DomainGoal& dg = it->second;
  if (user_act.intent == "inform") {
    for (const auto& [slot, value] : user_act.slots) {
      auto c = dg.constraints.find(slot);
      if (c != dg.constraints.end() && c->second == value) dg.constraints.erase(c);
    }
  } else if (user_act.intent == "request") {
    for (const auto& [slot, value] : user_act.slots) {
      (void)value;
      dg.requests.erase(std::remove(dg.requests.begin(), dg.requests.end(), slot),
                        dg.requests.end());
    }
  } else if (user_act.intent == "book") {
    dg.book = false;
  }
  if (dg.constraints.empty() && dg.requests.empty() && !dg.book) out.domains.erase(it);
  return out;
}

// --- lexicalization ----------------------------------------------------------------

std::string booking_reference(const std::string& entity_name) {
  std::uint64_t h = splitmix64(fnv1a(entity_name));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%06llx", static_cast<unsigned long long>(h & 0xffffffull));
  return std::string(buf);
}

LexResult lexicalize(const std::string& response, const world::World& world,
                     const corpus::BeliefState& belief, const corpus::ActFrame& act) {
  std::string domain = act.domain;
  if (domain.empty() || domain == "general" || world.database(domain) == nullptr) {
    domain.clear();
    for (const auto& [d, slots] : belief.domains)
      if (world.database(d) != nullptr) domain = d;  // last in canonical order
  }
  const world::Database* db = domain.empty() ? nullptr : world.database(domain);
  std::map<std::string, std::string> constraints;
  if (db != nullptr) {
    auto it = belief.domains.find(domain);
    if (it != belief.domains.end()) constraints = it->second;
  }
  const world::Entity* entity = db ? world::top_match(*db, constraints) : nullptr;
  int count = db ? world::match_count(*db, constraints) : 0;

  static const std::map<std::string, std::string> kInformableOf = {
      {"[area]", "area"}, {"[price]", "price"}, {"[type]", "type"}};
  static const std::map<std::string, std::string> kRequestableOf = {
      {"[address]", "address"}, {"[phone]", "phone"}, {"[postcode]", "postcode"}};

  LexResult res;
  std::vector<std::string> toks = split_ws(response);
  for (std::string& tok : toks) {
    if (!is_bracketed(tok)) continue;
    if (tok == "[choice]") {
      if (db) tok = std::to_string(count);
      else res.complete = false;
      continue;
    }
    if (tok == "[name]") {
      if (entity) tok = entity->name;
      else res.complete = false;
      continue;
    }
    if (tok == "[reference]") {
      if (entity) tok = booking_reference(entity->name);
      else res.complete = false;
      continue;
    }
    if (auto it = kInformableOf.find(tok); it != kInformableOf.end()) {
      bool filled = false;
      if (entity) {
        auto v = entity->informable.find(it->second);
        if (v != entity->informable.end()) {
          tok = v->second;
          filled = true;
        }
      }
      if (!filled) res.complete = false;
      continue;
    }
    if (auto it = kRequestableOf.find(tok); it != kRequestableOf.end()) {
      bool filled = false;
      if (entity) {
        auto v = entity->requestable.find(it->second);
        if (v != entity->requestable.end()) {
          tok = v->second;
          filled = true;
        }
      }
      if (!filled) res.complete = false;
      continue;
    }
    // other bracketed tokens (act markers in weird model output) pass through
  }
  res.text = join(toks, " ");
  return res;
}

// --- turn generation ----------------------------------------------------------------

namespace {

struct SegmentIo {
  lm::DecodeSession* session;
  const DecodeOptions* opt;
  std::vector<int>* target_ids;
  std::vector<double>* logprobs;
  std::vector<unsigned char>* sampled;
  std::vector<int>* segment_of;
  bool* truncated;

  bool push_forced(int id, int seg) {
    if (session->capacity_left() <= 0) {
      *truncated = true;
      return false;
    }
    session->feed(id);
    target_ids->push_back(id);
    logprobs->push_back(0.0);
    sampled->push_back(0);
    segment_of->push_back(seg);
    return true;
  }

  // Samples until `stop`; returns the content tokens (stop excluded) and
  // false when the segment ran out of room before producing the stop token.
  bool generate(int stop, int seg, std::vector<int>& content) {
    lm::DecodeResult r =
        session->generate({stop}, opt->max_segment_tokens, opt->temperature, opt->rng);
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
      target_ids->push_back(r.ids[i]);
      logprobs->push_back(r.logprobs[i]);
      sampled->push_back(1);
      segment_of->push_back(seg);
    }
    content = r.ids;
    if (!content.empty() && content.back() == stop) content.pop_back();
    if (r.truncated) {
      *truncated = true;
      return false;
    }
    return true;
  }
};

}  // namespace

DsTurn ds_step(const lm::Params& params, const codec::Vocab& vocab, const world::World& world,
               const corpus::BeliefState& prev_belief, const std::string& prev_response,
               const std::string& user_utterance, const DecodeOptions& opt) {
  codec::MarkerIds m = codec::MarkerIds::lookup(vocab);
  DsTurn out;
  out.belief = prev_belief;
  out.context_ids = codec::ds_context_ids(vocab, prev_belief, prev_response, user_utterance);

  if (static_cast<int>(out.context_ids.size()) + 8 > params.config.max_seq_len) {
    out.truncated = true;
    out.belief_parse_ok = false;
    out.act_parse_ok = false;
    out.db_bucket = corpus::db_bucket(corpus::query_match_count(world, prev_belief, out.belief));
    return out;
  }

  lm::DecodeSession session(params);
  session.feed(out.context_ids);
  SegmentIo io{&session,     &opt,         &out.target_ids, &out.logprobs,
               &out.sampled, &out.segment_of, &out.truncated};

  std::vector<int> content;
  bool ok = io.push_forced(m.sos_b, kDsBelief) && io.generate(m.eos_b, kDsBelief, content);
  if (ok) {
    try {
      out.belief = corpus::BeliefState::parse(codec::detokenize(vocab, content));
    } catch (const ParseError&) {
      out.belief = prev_belief;
      out.belief_parse_ok = false;
    }
  } else {
    out.belief_parse_ok = false;
  }

  out.db_bucket = corpus::db_bucket(corpus::query_match_count(world, prev_belief, out.belief));
  if (ok)
    ok = io.push_forced(m.sos_db, kDsDb) &&
         io.push_forced(vocab.id(corpus::db_bucket_token(out.db_bucket)), kDsDb) &&
         io.push_forced(m.eos_db, kDsDb);

  if (ok) ok = io.push_forced(m.sos_a, kDsAct) && io.generate(m.eos_a, kDsAct, content);
  if (ok) {
    try {
      out.act = corpus::ActFrame::parse(codec::detokenize(vocab, content), corpus::Role::system);
    } catch (const ParseError&) {
      out.act = corpus::ActFrame{};
      out.act_parse_ok = false;
    }
  } else {
    out.act_parse_ok = false;
  }

  if (ok && io.push_forced(m.sos_r, kDsResponse)) {
    io.generate(m.eos_r, kDsResponse, content);
    out.response = codec::detokenize(vocab, content);
  }
  return out;
}

UsTurn us_step(const lm::Params& params, const codec::Vocab& vocab, const GoalState& goal,
               const std::string& prev_response, const DecodeOptions& opt) {
  codec::MarkerIds m = codec::MarkerIds::lookup(vocab);
  UsTurn out;
  out.context_ids = codec::us_context_ids(vocab, prev_response, goal.to_string());

  if (static_cast<int>(out.context_ids.size()) + 6 > params.config.max_seq_len) {
    out.truncated = true;
    out.act_parse_ok = false;
    return out;
  }

  lm::DecodeSession session(params);
  session.feed(out.context_ids);
  SegmentIo io{&session,     &opt,         &out.target_ids, &out.logprobs,
               &out.sampled, &out.segment_of, &out.truncated};

  std::vector<int> content;
  bool ok = io.push_forced(m.sos_ua, kUsAct) && io.generate(m.eos_ua, kUsAct, content);
  if (ok) {
    try {
      out.act = corpus::ActFrame::parse(codec::detokenize(vocab, content), corpus::Role::user);
    } catch (const ParseError&) {
      out.act = corpus::ActFrame{};
      out.act_parse_ok = false;
    }
  } else {
    out.act_parse_ok = false;
  }

  if (ok && io.push_forced(m.sos_u, kUsUtterance)) {
    io.generate(m.eos_u, kUsUtterance, content);
    out.utterance = codec::detokenize(vocab, content);
  }
  return out;
}

}  // namespace tod::agents
