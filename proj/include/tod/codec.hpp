#pragma once

// Token vocabulary and sequence assembly. Dialog turns become flat token
// sequences in one of three layouts:
//   sga      per-turn windows with explicit belief/db/act segments, separate
//            layouts for the dialog system and the user simulator
//   turn     response-only windows over the full utterance history
//   session  full supervision over the whole dialog prefix
// Every layout brackets each field with <sos_x>/<eos_x> marker tokens so a
// decoder can be steered segment by segment.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "tod/common.hpp"
#include "tod/corpus.hpp"
#include "tod/world.hpp"

namespace tod::codec {

class Vocab {
 public:
  // Marker and db-bucket tokens, pinned order, always ids [0, specials().size()).
  static const std::vector<std::string>& specials();

  // Specials first, then every word observed in the corpus fields a codec can
  // emit (acts, beliefs, goal states, utterances, delexicalized responses),
  // sorted lexicographically.
  static Vocab build(const corpus::Corpus& corpus);

  // Same, plus the world's closed token sets (domains, slots, values,
  // intents), so contexts built from freshly sampled goals always encode.
  static Vocab build(const corpus::Corpus& corpus, const world::World& world);

  int id(const std::string& token) const;  // SchemaError on unknown token
  const std::string& token(int id) const;  // ConfigError when out of range
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  static Vocab from_word_set(std::set<std::string> words);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Marker-token ids resolved once per vocab.
struct MarkerIds {
  int sos_b, eos_b;
  int sos_db, eos_db;
  int sos_a, eos_a;
  int sos_r, eos_r;
  int sos_u, eos_u;
  int sos_ua, eos_ua;
  int sos_g, eos_g;
  static MarkerIds lookup(const Vocab& vocab);
};

std::vector<int> tokenize(const Vocab& vocab, const std::string& text);
std::string detokenize(const Vocab& vocab, const std::vector<int>& ids);

// Contiguous named region of an assembled sequence, [begin, end).
struct Segment {
  std::string name;
  int begin = 0;
  int end = 0;
};

struct TrainingSample {
  std::vector<int> ids;                  // context followed by target
  std::vector<unsigned char> loss_mask;  // true on every target position
  int target_begin = 0;
  std::vector<Segment> segments;         // partition of [0, ids.size())
};

// Context builders shared by training assembly and live generation.
std::vector<int> ds_context_ids(const Vocab& vocab, const corpus::BeliefState& prev_belief,
                                const std::string& prev_response,
                                const std::string& user_utterance);
std::vector<int> us_context_ids(const Vocab& vocab, const std::string& prev_response,
                                const std::string& goal_state);

// Dialog-system window:
//   <sos_b> b_{t-1} <eos_b> <sos_r> r_{t-1} <eos_r> <sos_u> u_t <eos_u>
//   <sos_b> b_t <eos_b> <sos_db> db_t <eos_db> <sos_a> a_t <eos_a> <sos_r> r_t <eos_r>
TrainingSample assemble_ds_sga(const Vocab& vocab, const corpus::Dialog& dialog, int turn_index);

// User-simulator window:
//   <sos_r> r_{t-1} <eos_r> <sos_g> g_t <eos_g>
//   <sos_ua> ua_t <eos_ua> <sos_u> u_t <eos_u>
TrainingSample assemble_us_sga(const Vocab& vocab, const corpus::Dialog& dialog, int turn_index);

// Response-only baseline over the utterance history:
//   [<sos_u> u_k <eos_u> <sos_r> r_k <eos_r>]* <sos_u> u_t <eos_u>  ->  <sos_r> r_t <eos_r>
TrainingSample assemble_turn(const Vocab& vocab, const corpus::Dialog& dialog, int turn_index);

// Fully supervised dialog prefix:
//   [<sos_u> u_k <eos_u> <sos_b> b_k ... <sos_r> r_k <eos_r>]* <sos_u> u_t <eos_u>
//   -> <sos_b> b_t <eos_b> <sos_db> db_t <eos_db> <sos_a> a_t <eos_a> <sos_r> r_t <eos_r>
TrainingSample assemble_session(const Vocab& vocab, const corpus::Dialog& dialog, int turn_index);

enum class CodecKind { sga_ds, sga_us, turn, session };
CodecKind parse_codec_kind(const std::string& name, const std::string& agent);
TrainingSample assemble(CodecKind kind, const Vocab& vocab, const corpus::Dialog& dialog,
                        int turn_index);

}  // namespace tod::codec
