#include "tod/codec.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"

namespace tod::codec {

using nlohmann::json;

const std::vector<std::string>& Vocab::specials() {
  static const std::vector<std::string> kSpecials = {
      "<sos_b>", "<eos_b>", "<sos_db>", "<eos_db>", "<sos_a>",  "<eos_a>",
      "<sos_r>", "<eos_r>", "<sos_u>",  "<eos_u>",  "<sos_ua>", "<eos_ua>",
      "<sos_g>", "<eos_g>", "[db_0]",   "[db_1]",   "[db_2]",   "[db_3]",
      "[db_gt3]"};
  return kSpecials;
}

namespace {

void scan_corpus(const corpus::Corpus& corpus, std::set<std::string>& words) {
  auto scan = [&](const std::string& text) {
    for (const std::string& w : split_ws(text)) words.insert(w);
  };
  for (const auto& [id, dialog] : corpus.dialogs) {
    for (const corpus::DialogTurn& turn : dialog.turns) {
      scan(turn.goal_state);
      scan(turn.user_act.to_string());
      scan(turn.user);
      scan(turn.belief.to_string());
      scan(turn.system_act.to_string());
      scan(turn.response);
    }
  }
}

}  // namespace

Vocab Vocab::from_word_set(std::set<std::string> words) {
  for (const std::string& s : specials()) words.erase(s);
  Vocab v;
  for (const std::string& s : specials()) {
    v.token_to_id_.emplace(s, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(s);
  }
  for (const std::string& w : words) {
    v.token_to_id_.emplace(w, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(w);
  }
  return v;
}

Vocab Vocab::build(const corpus::Corpus& corpus) {
  std::set<std::string> words;
  scan_corpus(corpus, words);
  return from_word_set(std::move(words));
}

Vocab Vocab::build(const corpus::Corpus& corpus, const world::World& world) {
  std::set<std::string> words;
  scan_corpus(corpus, words);
  // Goal states and acts over freshly sampled goals may name domains, slots,
  // and values a small corpus never exercised; fold the world's closed sets in
  // so online rollouts can always encode their contexts.
  for (const world::DomainSchema& schema : world.schemas) {
    words.insert("[" + schema.name + "]");
    for (const world::SlotDef& slot : schema.informables) {
      words.insert(slot.name);
      for (const std::string& v : slot.values)
        for (const std::string& w : split_ws(v)) words.insert(w);
    }
    for (const std::string& r : schema.requestables) words.insert(r);
  }
  words.insert("[general]");
  words.insert("dontcare");
  for (const char* intent : {"[inform]", "[request]", "[book]", "[thank]", "[bye]", "[offer]",
                             "[offerbooked]", "[nooffer]", "[reqmore]", "[welcome]"})
    words.insert(intent);
  return from_word_set(std::move(words));
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) throw SchemaError("token not in vocabulary: \"" + token + "\"");
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw ConfigError("token id out of range: " + std::to_string(id));
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

void Vocab::save(const std::string& path) const {
  json root;
  root["tokens"] = id_to_token_;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << root.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("vocabulary file: ") + e.what());
  }
  if (!root.contains("tokens") || !root["tokens"].is_array())
    throw SchemaError("vocabulary file lacks a tokens array");
  Vocab v;
  for (const auto& t : root["tokens"]) {
    std::string tok = t.get<std::string>();
    if (v.token_to_id_.count(tok)) throw SchemaError("duplicate vocabulary token: " + tok);
    v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(tok);
  }
  const auto& sp = specials();
  if (v.id_to_token_.size() < sp.size())
    throw SchemaError("vocabulary is missing marker tokens");
  for (std::size_t i = 0; i < sp.size(); ++i)
    if (v.id_to_token_[i] != sp[i])
      throw SchemaError("vocabulary marker tokens out of order at id " + std::to_string(i));
  return v;
}

MarkerIds MarkerIds::lookup(const Vocab& vocab) {
  MarkerIds m;
  m.sos_b = vocab.id("<sos_b>");
  m.eos_b = vocab.id("<eos_b>");
  m.sos_db = vocab.id("<sos_db>");
  m.eos_db = vocab.id("<eos_db>");
  m.sos_a = vocab.id("<sos_a>");
  m.eos_a = vocab.id("<eos_a>");
  m.sos_r = vocab.id("<sos_r>");
  m.eos_r = vocab.id("<eos_r>");
  m.sos_u = vocab.id("<sos_u>");
  m.eos_u = vocab.id("<eos_u>");
  m.sos_ua = vocab.id("<sos_ua>");
  m.eos_ua = vocab.id("<eos_ua>");
  m.sos_g = vocab.id("<sos_g>");
  m.eos_g = vocab.id("<eos_g>");
  return m;
}

std::vector<int> tokenize(const Vocab& vocab, const std::string& text) {
  std::vector<int> ids;
  for (const std::string& w : split_ws(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(const Vocab& vocab, const std::vector<int>& ids) {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (int id : ids) toks.push_back(vocab.token(id));
  return join(toks, " ");
}

namespace {

void append_bracketed(std::vector<int>& ids, int sos, const Vocab& vocab, const std::string& text,
                      int eos) {
  ids.push_back(sos);
  for (const std::string& w : split_ws(text)) ids.push_back(vocab.id(w));
  ids.push_back(eos);
}

const corpus::DialogTurn& checked_turn(const corpus::Dialog& dialog, int turn_index) {
  if (turn_index < 0 || turn_index >= static_cast<int>(dialog.turns.size()))
    throw ConfigError("turn index " + std::to_string(turn_index) + " out of range for dialog " +
                      dialog.id);
  return dialog.turns[static_cast<std::size_t>(turn_index)];
}

void push_segment(TrainingSample& s, const std::string& name, int begin) {
  s.segments.push_back({name, begin, static_cast<int>(s.ids.size())});
}

void finish_target_mask(TrainingSample& s) {
  s.loss_mask.assign(s.ids.size(), 0);
  for (std::size_t p = static_cast<std::size_t>(s.target_begin); p < s.ids.size(); ++p)
    s.loss_mask[p] = 1;
}

}  // namespace

std::vector<int> ds_context_ids(const Vocab& vocab, const corpus::BeliefState& prev_belief,
                                const std::string& prev_response,
                                const std::string& user_utterance) {
  MarkerIds m = MarkerIds::lookup(vocab);
  std::vector<int> ids;
  append_bracketed(ids, m.sos_b, vocab, prev_belief.to_string(), m.eos_b);
  append_bracketed(ids, m.sos_r, vocab, prev_response, m.eos_r);
  append_bracketed(ids, m.sos_u, vocab, user_utterance, m.eos_u);
  return ids;
}

std::vector<int> us_context_ids(const Vocab& vocab, const std::string& prev_response,
                                const std::string& goal_state) {
  MarkerIds m = MarkerIds::lookup(vocab);
  std::vector<int> ids;
  append_bracketed(ids, m.sos_r, vocab, prev_response, m.eos_r);
  append_bracketed(ids, m.sos_g, vocab, goal_state, m.eos_g);
  return ids;
}

TrainingSample assemble_ds_sga(const Vocab& vocab, const corpus::Dialog& dialog, int turn_index) {
  const corpus::DialogTurn& turn = checked_turn(dialog, turn_index);
  MarkerIds m = MarkerIds::lookup(vocab);
  corpus::BeliefState prev_belief;
  std::string prev_response;
  if (turn_index > 0) {
    const corpus::DialogTurn& prev = dialog.turns[static_cast<std::size_t>(turn_index - 1)];
    prev_belief = prev.belief;
    prev_response = prev.response;
  }

  TrainingSample s;
  append_bracketed(s.ids, m.sos_b, vocab, prev_belief.to_string(), m.eos_b);
  push_segment(s, "prev_belief", 0);
  int at = static_cast<int>(s.ids.size());
  append_bracketed(s.ids, m.sos_r, vocab, prev_response, m.eos_r);
  push_segment(s, "prev_response", at);
  at = static_cast<int>(s.ids.size());
  append_bracketed(s.ids, m.sos_u, vocab, turn.user, m.eos_u);
  push_segment(s, "user", at);

  s.target_begin = static_cast<int>(s.ids.size());
  at = s.target_begin;
  append_bracketed(s.ids, m.sos_b, vocab, turn.belief.to_string(), m.eos_b);
  push_segment(s, "belief", at);
  at = static_cast<int>(s.ids.size());
  s.ids.push_back(m.sos_db);
  s.ids.push_back(vocab.id(corpus::db_bucket_token(turn.db)));
  s.ids.push_back(m.eos_db);
  push_segment(s, "db", at);
  at = static_cast<int>(s.ids.size());
  append_bracketed(s.ids, m.sos_a, vocab, turn.system_act.to_string(), m.eos_a);
  push_segment(s, "act", at);
  at = static_cast<int>(s.ids.size());
  append_bracketed(s.ids, m.sos_r, vocab, turn.response, m.eos_r);
  push_segment(s, "response", at);

  finish_target_mask(s);
  return s;
}

TrainingSample assemble_us_sga(const Vocab& vocab, const corpus::Dialog& dialog, int turn_index) {
  const corpus::DialogTurn& turn = checked_turn(dialog, turn_index);
  MarkerIds m = MarkerIds::lookup(vocab);
  std::string prev_response;
  if (turn_index > 0)
    prev_response = dialog.turns[static_cast<std::size_t>(turn_index - 1)].response;

  TrainingSample s;
  append_bracketed(s.ids, m.sos_r, vocab, prev_response, m.eos_r);
  push_segment(s, "prev_response", 0);
  int at = static_cast<int>(s.ids.size());
  append_bracketed(s.ids, m.sos_g, vocab, turn.goal_state, m.eos_g);
  push_segment(s, "goal", at);

  s.target_begin = static_cast<int>(s.ids.size());
  at = s.target_begin;
  append_bracketed(s.ids, m.sos_ua, vocab, turn.user_act.to_string(), m.eos_ua);
  push_segment(s, "user_act", at);
  at = static_cast<int>(s.ids.size());
  append_bracketed(s.ids, m.sos_u, vocab, turn.user, m.eos_u);
  push_segment(s, "user", at);

  finish_target_mask(s);
  return s;
}

TrainingSample assemble_turn(const Vocab& vocab, const corpus::Dialog& dialog, int turn_index) {
  const corpus::DialogTurn& turn = checked_turn(dialog, turn_index);
  MarkerIds m = MarkerIds::lookup(vocab);

  TrainingSample s;
  for (int k = 0; k < turn_index; ++k) {
    const corpus::DialogTurn& past = dialog.turns[static_cast<std::size_t>(k)];
    append_bracketed(s.ids, m.sos_u, vocab, past.user, m.eos_u);
    append_bracketed(s.ids, m.sos_r, vocab, past.response, m.eos_r);
  }
  if (turn_index > 0) push_segment(s, "history", 0);
  int at = static_cast<int>(s.ids.size());
  append_bracketed(s.ids, m.sos_u, vocab, turn.user, m.eos_u);
  push_segment(s, "user", at);

  s.target_begin = static_cast<int>(s.ids.size());
  at = s.target_begin;
  append_bracketed(s.ids, m.sos_r, vocab, turn.response, m.eos_r);
  push_segment(s, "response", at);

  finish_target_mask(s);
  return s;
}

TrainingSample assemble_session(const Vocab& vocab, const corpus::Dialog& dialog, int turn_index) {
  const corpus::DialogTurn& turn = checked_turn(dialog, turn_index);
  MarkerIds m = MarkerIds::lookup(vocab);

  TrainingSample s;
  for (int k = 0; k < turn_index; ++k) {
    const corpus::DialogTurn& past = dialog.turns[static_cast<std::size_t>(k)];
    append_bracketed(s.ids, m.sos_u, vocab, past.user, m.eos_u);
    append_bracketed(s.ids, m.sos_b, vocab, past.belief.to_string(), m.eos_b);
    s.ids.push_back(m.sos_db);
    s.ids.push_back(vocab.id(corpus::db_bucket_token(past.db)));
    s.ids.push_back(m.eos_db);
    append_bracketed(s.ids, m.sos_a, vocab, past.system_act.to_string(), m.eos_a);
    append_bracketed(s.ids, m.sos_r, vocab, past.response, m.eos_r);
  }
  if (turn_index > 0) push_segment(s, "history", 0);
  int at = static_cast<int>(s.ids.size());
  append_bracketed(s.ids, m.sos_u, vocab, turn.user, m.eos_u);
  push_segment(s, "user", at);

  s.target_begin = static_cast<int>(s.ids.size());
  at = s.target_begin;
  append_bracketed(s.ids, m.sos_b, vocab, turn.belief.to_string(), m.eos_b);
  push_segment(s, "belief", at);
  at = static_cast<int>(s.ids.size());
  s.ids.push_back(m.sos_db);
  s.ids.push_back(vocab.id(corpus::db_bucket_token(turn.db)));
  s.ids.push_back(m.eos_db);
  push_segment(s, "db", at);
  at = static_cast<int>(s.ids.size());
  append_bracketed(s.ids, m.sos_a, vocab, turn.system_act.to_string(), m.eos_a);
  push_segment(s, "act", at);
  at = static_cast<int>(s.ids.size());
  append_bracketed(s.ids, m.sos_r, vocab, turn.response, m.eos_r);
  push_segment(s, "response", at);

  finish_target_mask(s);
  return s;
}

CodecKind parse_codec_kind(const std::string& name, const std::string& agent) {
  if (agent != "ds" && agent != "us")
    throw ConfigError("agent must be ds or us, got \"" + agent + "\"");
  if (name == "sga") return agent == "ds" ? CodecKind::sga_ds : CodecKind::sga_us;
  if (name == "turn" || name == "session") {
    if (agent != "ds")
      throw ConfigError("codec \"" + name + "\" models the system side only (agent ds)");
    return name == "turn" ? CodecKind::turn : CodecKind::session;
  }
  throw ConfigError("unknown codec \"" + name + "\" (expected sga, turn, or session)");
}

TrainingSample assemble(CodecKind kind, const Vocab& vocab, const corpus::Dialog& dialog,
                        int turn_index) {
  switch (kind) {
    case CodecKind::sga_ds:
      return assemble_ds_sga(vocab, dialog, turn_index);
    case CodecKind::sga_us:
      return assemble_us_sga(vocab, dialog, turn_index);
    case CodecKind::turn:
      return assemble_turn(vocab, dialog, turn_index);
    case CodecKind::session:
      return assemble_session(vocab, dialog, turn_index);
  }
  throw ConfigError("unknown codec kind");
}

}  // namespace tod::codec
