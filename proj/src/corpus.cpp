#include "tod/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tod::corpus {

using nlohmann::json;

namespace {

bool is_bracket_token(const std::string& t) {
  return t.size() >= 2 && t.front() == '[' && t.back() == ']';
}

std::string bracket(const std::string& s) { return "[" + s + "]"; }

std::string unbracket(const std::string& t) { return t.substr(1, t.size() - 2); }

// Intents whose user-side slots carry values.
bool intent_has_values(const std::string& intent, Role role) {
  return role == Role::user && intent == "inform";
}

}  // namespace

// --- ActFrame ----------------------------------------------------------------

void ActFrame::canonicalize() {
  std::sort(slots.begin(), slots.end());
  slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
}

std::string ActFrame::to_string() const {
  std::string out = bracket(domain) + " " + bracket(intent);
  for (const auto& [name, value] : slots) {
    out += " " + name;
    if (!value.empty()) out += " " + value;
  }
  return out;
}

ActFrame ActFrame::parse(const std::string& text, Role role) {
  std::vector<std::string> toks = split_ws(text);
  if (toks.size() < 2 || !is_bracket_token(toks[0]) || !is_bracket_token(toks[1]))
    throw ParseError("act must start with [domain] [intent]: \"" + text + "\"");
  ActFrame f;
  f.domain = unbracket(toks[0]);
  f.intent = unbracket(toks[1]);
  std::size_t i = 2;
  // Tokens after the first frame's slots would open another bracket; a single
  // frame per turn is the corpus convention, so that is malformed input.
  bool values = intent_has_values(f.intent, role);
  while (i < toks.size()) {
    if (is_bracket_token(toks[i]))
      throw ParseError("unexpected bracket token inside act slots: \"" + text + "\"");
    std::string name = toks[i++];
    std::string value;
    if (values) {
      if (i >= toks.size() || is_bracket_token(toks[i]))
        throw ParseError("inform slot \"" + name + "\" is missing a value: \"" + text + "\"");
      value = toks[i++];
    }
    f.slots.emplace_back(std::move(name), std::move(value));
  }
  f.canonicalize();
  return f;
}

// --- BeliefState ---------------------------------------------------------------

std::string BeliefState::to_string() const {
  std::vector<std::string> parts;
  for (const auto& [domain, slots] : domains) {
    parts.push_back(bracket(domain));
    for (const auto& [name, value] : slots) {
      parts.push_back(name);
      parts.push_back(value);
    }
  }
  return join(parts);
}

BeliefState BeliefState::parse(const std::string& text) {
  BeliefState b;
  std::vector<std::string> toks = split_ws(text);
  std::string domain;
  std::size_t i = 0;
  while (i < toks.size()) {
    if (is_bracket_token(toks[i])) {
      domain = unbracket(toks[i++]);
      b.domains[domain];  // domain may legitimately have no slots yet
      continue;
    }
    if (domain.empty()) throw ParseError("belief slot before any domain tag: \"" + text + "\"");
    if (i + 1 >= toks.size() || is_bracket_token(toks[i + 1]))
      throw ParseError("belief slot \"" + toks[i] + "\" is missing a value: \"" + text + "\"");
    b.domains[domain][toks[i]] = toks[i + 1];
    i += 2;
  }
  // Empty domains are dropped so serialization is canonical.
  for (auto it = b.domains.begin(); it != b.domains.end();)
    it = it->second.empty() ? b.domains.erase(it) : std::next(it);
  return b;
}

// --- DB buckets ----------------------------------------------------------------

int db_bucket(int match_count) {
  if (match_count < 0) throw NumericError("negative match count");
  return match_count > 3 ? 4 : match_count;
}

std::string db_bucket_token(int bucket) {
  switch (bucket) {
    case 0: return "[db_0]";
    case 1: return "[db_1]";
    case 2: return "[db_2]";
    case 3: return "[db_3]";
    case 4: return "[db_gt3]";
    default: throw NumericError("db bucket out of range: " + std::to_string(bucket));
  }
}

std::string db_bucket_token_from_count(int match_count) {
  return db_bucket_token(db_bucket(match_count));
}

int parse_db_bucket_token(const std::string& token) {
  for (int b = 0; b <= 4; ++b)
    if (db_bucket_token(b) == token) return b;
  throw ParseError("not a db bucket token: \"" + token + "\"");
}

// --- active-domain query convention ---------------------------------------------

std::string active_domain(const BeliefState& prev, const BeliefState& cur) {
  for (const auto& [domain, slots] : cur.domains) {
    auto it = prev.domains.find(domain);
    if (it == prev.domains.end() || it->second != slots) return domain;
  }
  if (!cur.domains.empty()) return cur.domains.rbegin()->first;
  return "";
}

int query_match_count(const world::World& world, const BeliefState& prev,
                      const BeliefState& cur) {
  std::string domain = active_domain(prev, cur);
  if (domain.empty()) return 0;
  const world::Database* db = world.database(domain);
  if (db == nullptr) return 0;  // hallucinated domain matches nothing
  auto it = cur.domains.find(domain);
  static const std::map<std::string, std::string> kEmpty;
  return world::match_count(*db, it == cur.domains.end() ? kEmpty : it->second);
}

// --- cleaning ---------------------------------------------------------------------

namespace {

bool contains_token_run(const std::vector<std::string>& hay, const std::vector<std::string>& run) {
  if (run.empty() || run.size() > hay.size()) return false;
  for (std::size_t i = 0; i + run.size() <= hay.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < run.size(); ++j)
      if (hay[i + j] != run[j]) {
        match = false;
        break;
      }
    if (match) return true;
  }
  return false;
}

}  // namespace

int clean_belief_states(Corpus& corpus) {
  int removed = 0;
  for (auto& [id, dialog] : corpus.dialogs) {
    std::vector<std::string> seen;  // token stream of utterances/responses so far
    for (std::size_t t = 0; t < dialog.turns.size(); ++t) {
      DialogTurn& turn = dialog.turns[t];
      std::vector<std::string> current = split_ws(turn.user);
      std::vector<std::string> visible = seen;
      visible.insert(visible.end(), current.begin(), current.end());
      for (auto& [domain, slots] : turn.belief.domains) {
        auto it = slots.find("name");
        if (it == slots.end()) continue;
        if (!contains_token_run(visible, split_ws(it->second))) {
          slots.erase(it);
          ++removed;
        }
      }
      for (auto it = turn.belief.domains.begin(); it != turn.belief.domains.end();)
        it = it->second.empty() ? turn.belief.domains.erase(it) : std::next(it);
      seen = std::move(visible);
      std::vector<std::string> resp = split_ws(turn.response);
      seen.insert(seen.end(), resp.begin(), resp.end());
    }
  }
  return removed;
}

int normalize_spelling(Corpus& corpus, const std::map<std::string, std::string>& fixes) {
  int replaced = 0;
  auto fix_text = [&](std::string& text) {
    std::vector<std::string> toks = split_ws(text);
    bool any = false;
    for (auto& t : toks) {
      auto it = fixes.find(t);
      if (it != fixes.end()) {
        t = it->second;
        ++replaced;
        any = true;
      }
    }
    if (any) text = join(toks);
  };
  for (auto& [id, dialog] : corpus.dialogs) {
    for (auto& turn : dialog.turns) {
      fix_text(turn.user);
      for (auto& [domain, slots] : turn.belief.domains)
        for (auto& [slot, value] : slots) {
          auto it = fixes.find(value);
          if (it != fixes.end()) {
            value = it->second;
            ++replaced;
          }
        }
    }
  }
  return replaced;
}

const std::map<std::string, std::string>& default_spelling_fixes() {
  static const std::map<std::string, std::string> fixes = {
      {"portugese", "portuguese"},
      {"restaurent", "restaurant"},
      {"adress", "address"},
  };
  return fixes;
}

// --- delexicalization -----------------------------------------------------------

std::pair<std::string, int> delexicalize(const std::string& text, const world::Entity& entity,
                                         const world::DomainSchema& schema) {
  // Slot values to replace, longest token run first so multi-word values win.
  static const std::map<std::string, std::string> kPlaceholders = {
      {"name", "[name]"},         {"address", "[address]"}, {"phone", "[phone]"},
      {"postcode", "[postcode]"}, {"area", "[area]"},       {"price", "[price]"},
      {"type", "[type]"}};
  std::vector<std::pair<std::vector<std::string>, std::string>> rules;
  auto add_rule = [&](const std::string& slot, const std::string& value) {
    auto it = kPlaceholders.find(slot);
    if (it == kPlaceholders.end() || value.empty()) return;
    rules.emplace_back(split_ws(value), it->second);
  };
  add_rule("name", entity.name);
  for (const auto& [slot, value] : entity.requestable) add_rule(slot, value);
  for (const auto& [slot, value] : entity.informable) add_rule(slot, value);
  std::stable_sort(rules.begin(), rules.end(), [](const auto& a, const auto& b) {
    return a.first.size() > b.first.size();
  });

  std::vector<std::string> toks = split_ws(text);
  std::vector<std::string> out;
  int placed = 0;
  std::size_t i = 0;
  while (i < toks.size()) {
    bool matched = false;
    for (const auto& [run, placeholder] : rules) {
      if (i + run.size() > toks.size()) continue;
      bool eq = true;
      for (std::size_t j = 0; j < run.size(); ++j)
        if (toks[i + j] != run[j]) {
          eq = false;
          break;
        }
      if (eq) {
        out.push_back(placeholder);
        i += run.size();
        ++placed;
        matched = true;
        break;
      }
    }
    if (!matched) out.push_back(toks[i++]);
  }
  return {join(out), placed};
}

// --- JSON I/O ---------------------------------------------------------------------

namespace {

json goal_to_json(const world::UserGoal& goal) {
  json j = json::object();
  for (const auto& [domain, dg] : goal.domains) {
    json d;
    d["constraints"] = dg.constraints;
    d["requests"] = dg.requests;
    d["book"] = dg.book;
    j[domain] = d;
  }
  return j;
}

world::UserGoal goal_from_json(const json& j) {
  world::UserGoal goal;
  for (auto it = j.begin(); it != j.end(); ++it) {
    world::DomainGoal dg;
    const json& d = it.value();
    if (d.contains("constraints"))
      for (auto c = d["constraints"].begin(); c != d["constraints"].end(); ++c)
        dg.constraints[c.key()] = c.value().get<std::string>();
    if (d.contains("requests"))
      for (const auto& r : d["requests"]) dg.requests.push_back(r.get<std::string>());
    std::sort(dg.requests.begin(), dg.requests.end());
    dg.book = d.value("book", false);
    goal.domains[it.key()] = std::move(dg);
  }
  return goal;
}

json turn_to_json(const DialogTurn& t) {
  json j;
  j["goal_state"] = t.goal_state;
  j["user_act"] = t.user_act.to_string();
  j["user"] = t.user;
  j["belief"] = t.belief.to_string();
  j["db"] = db_bucket_token(t.db);
  j["system_act"] = t.system_act.to_string();
  j["response"] = t.response;
  j["response_lex"] = t.response_lex;
  return j;
}

DialogTurn turn_from_json(const json& j) {
  DialogTurn t;
  t.goal_state = j.value("goal_state", "");
  t.user_act = ActFrame::parse(j.at("user_act").get<std::string>(), Role::user);
  t.user = j.at("user").get<std::string>();
  t.belief = BeliefState::parse(j.value("belief", ""));
  t.db = parse_db_bucket_token(j.at("db").get<std::string>());
  t.system_act = ActFrame::parse(j.at("system_act").get<std::string>(), Role::system);
  t.response = j.at("response").get<std::string>();
  t.response_lex = j.value("response_lex", "");
  return t;
}

}  // namespace

std::string corpus_to_json(const Corpus& corpus) {
  json root = json::object();
  for (const auto& [id, dialog] : corpus.dialogs) {
    json d;
    d["goal"] = goal_to_json(dialog.goal);
    json turns = json::array();
    for (const auto& t : dialog.turns) turns.push_back(turn_to_json(t));
    d["turns"] = turns;
    root[id] = d;
  }
  return root.dump(2) + "\n";
}

Corpus corpus_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("corpus json: ") + e.what());
  }
  Corpus corpus;
  for (auto it = root.begin(); it != root.end(); ++it) {
    Dialog d;
    d.id = it.key();
    try {
      d.goal = goal_from_json(it.value().at("goal"));
      for (const auto& tj : it.value().at("turns")) d.turns.push_back(turn_from_json(tj));
    } catch (const json::exception& e) {
      throw SchemaError("dialog " + d.id + ": " + e.what());
    }
    corpus.dialogs[d.id] = std::move(d);
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << corpus_to_json(corpus);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return corpus_from_json(ss.str());
}

// --- interchange format ---------------------------------------------------------

Corpus ingest_multiwoz_format(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("interchange json: ") + e.what());
  }
  if (!root.is_object()) throw SchemaError("top level must be an object of dialog_id -> dialog");

  Corpus corpus;
  for (auto it = root.begin(); it != root.end(); ++it) {
    const std::string& id = it.key();
    const json& dj = it.value();
    Dialog d;
    d.id = id;
    if (!dj.contains("goal") || !dj["goal"].is_object())
      throw SchemaError("dialog " + id + ": missing goal object");
    for (auto g = dj["goal"].begin(); g != dj["goal"].end(); ++g) {
      const json& gd = g.value();
      if (!gd.is_object()) throw SchemaError("dialog " + id + ": goal domain " + g.key());
      world::DomainGoal dg;
      if (gd.contains("info"))
        for (auto c = gd["info"].begin(); c != gd["info"].end(); ++c)
          dg.constraints[c.key()] = c.value().get<std::string>();
      if (gd.contains("reqt"))
        for (const auto& r : gd["reqt"]) dg.requests.push_back(r.get<std::string>());
      std::sort(dg.requests.begin(), dg.requests.end());
      if (gd.contains("book"))
        dg.book = gd["book"].is_boolean() ? gd["book"].get<bool>() : !gd["book"].empty();
      if (!dg.constraints.empty() || !dg.requests.empty() || dg.book)
        d.goal.domains[g.key()] = std::move(dg);
    }
    if (!dj.contains("log") || !dj["log"].is_array())
      throw SchemaError("dialog " + id + ": missing log array");
    int ti = 0;
    for (const auto& lj : dj["log"]) {
      DialogTurn t;
      auto need = [&](const char* key) -> const json& {
        if (!lj.contains(key))
          throw SchemaError("dialog " + id + " turn " + std::to_string(ti) +
                            ": missing field \"" + key + "\"");
        return lj[key];
      };
      t.user = need("user").get<std::string>();
      const json& meta = need("metadata");
      if (!meta.is_object())
        throw SchemaError("dialog " + id + " turn " + std::to_string(ti) +
                          ": metadata must be an object");
      for (auto m = meta.begin(); m != meta.end(); ++m) {
        const json& dom = m.value();
        const json& semi = dom.contains("semi") ? dom["semi"] : dom;
        for (auto s = semi.begin(); s != semi.end(); ++s) {
          std::string v = s.value().is_string() ? s.value().get<std::string>() : std::string();
          if (!v.empty() && v != "not mentioned" && v != "none")
            t.belief.domains[m.key()][s.key()] = v;
        }
      }
      try {
        t.system_act = ActFrame::parse(need("act").get<std::string>(), Role::system);
        if (lj.contains("user_act"))
          t.user_act = ActFrame::parse(lj["user_act"].get<std::string>(), Role::user);
      } catch (const ParseError& e) {
        throw SchemaError("dialog " + id + " turn " + std::to_string(ti) + ": " + e.what());
      }
      t.response = need("response").get<std::string>();
      if (lj.contains("response_lex")) t.response_lex = lj["response_lex"].get<std::string>();
      if (lj.contains("goal_state")) t.goal_state = lj["goal_state"].get<std::string>();
      if (lj.contains("db"))
        t.db = parse_db_bucket_token(lj["db"].get<std::string>());
      d.turns.push_back(std::move(t));
      ++ti;
    }
    corpus.dialogs[id] = std::move(d);
  }
  return corpus;
}

std::string export_multiwoz_format(const Corpus& corpus) {
  json root = json::object();
  for (const auto& [id, dialog] : corpus.dialogs) {
    json dj;
    json goal = json::object();
    for (const auto& [domain, dg] : dialog.goal.domains) {
      json gd;
      gd["info"] = dg.constraints;
      gd["reqt"] = dg.requests;
      gd["book"] = dg.book;
      goal[domain] = gd;
    }
    dj["goal"] = goal;
    json log = json::array();
    for (const auto& t : dialog.turns) {
      json lj;
      lj["user"] = t.user;
      json meta = json::object();
      for (const auto& [domain, slots] : t.belief.domains) {
        json semi;
        semi["semi"] = slots;
        meta[domain] = semi;
      }
      lj["metadata"] = meta;
      lj["act"] = t.system_act.to_string();
      lj["user_act"] = t.user_act.to_string();
      lj["response"] = t.response;
      lj["response_lex"] = t.response_lex;
      lj["goal_state"] = t.goal_state;
      lj["db"] = db_bucket_token(t.db);
      log.push_back(lj);
    }
    dj["log"] = log;
    root[id] = dj;
  }
  return root.dump(2) + "\n";
}

// --- splits -------------------------------------------------------------------

Splits split_corpus(const Corpus& corpus, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& [id, d] : corpus.dialogs) ids.push_back(id);
  Rng rng(derive_seed(seed, 0x5917));
  rng.shuffle(ids);
  std::size_t n = ids.size();
  std::size_t n_train = (n * 8) / 10;
  std::size_t n_dev = n / 10;
  Splits s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train)
      s.train.push_back(ids[i]);
    else if (i < n_train + n_dev)
      s.dev.push_back(ids[i]);
    else
      s.test.push_back(ids[i]);
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.dev.begin(), s.dev.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void save_splits(const Splits& splits, const std::string& path) {
  json j;
  j["train"] = splits.train;
  j["dev"] = splits.dev;
  j["test"] = splits.test;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

Splits load_splits(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("splits json: ") + e.what());
  }
  Splits s;
  for (const auto& v : j.at("train")) s.train.push_back(v.get<std::string>());
  for (const auto& v : j.at("dev")) s.dev.push_back(v.get<std::string>());
  for (const auto& v : j.at("test")) s.test.push_back(v.get<std::string>());
  return s;
}

}  // namespace tod::corpus
