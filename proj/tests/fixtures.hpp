#pragma once
// Shared test fixtures: one world, one small corpus, one vocabulary, and tiny
// model configurations. Built once per test binary.

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "tod/codec.hpp"
#include "tod/corpus.hpp"
#include "tod/lm.hpp"
#include "tod/world.hpp"

namespace fixtures {

inline const tod::world::World& shared_world() {
  static tod::world::World w = tod::world::build_world(tod::world::WorldConfig{});
  return w;
}

inline const tod::corpus::Corpus& shared_corpus() {
  static tod::corpus::Corpus c = tod::corpus::generate_corpus(shared_world(), 30, 11);
  return c;
}

inline const tod::codec::Vocab& shared_vocab() {
  static tod::codec::Vocab v = tod::codec::Vocab::build(shared_corpus(), shared_world());
  return v;
}

inline std::vector<std::string> dialog_ids(const tod::corpus::Corpus& c) {
  std::vector<std::string> ids;
  for (const auto& [id, d] : c.dialogs) ids.push_back(id);
  return ids;
}

inline tod::lm::ModelConfig tiny_config(int vocab_size, int layers = 2, int heads = 2,
                                        int dim = 16, int ff = 32, int max_seq = 160) {
  tod::lm::ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.n_layers = layers;
  mc.n_heads = heads;
  mc.d_model = dim;
  mc.d_ff = ff;
  mc.max_seq_len = max_seq;
  mc.validate();
  return mc;
}

// Zero-weight model wired so any opening marker is answered by its matching
// closer: each <sos_x> embedding occupies its own dimension pair, and the
// output projection maps that pair onto <eos_x>. Layer gains are zero, so the
// blocks pass the embedding straight through to the final norm. Every decoded
// segment is therefore empty and every dialog runs to the turn limit, which
// makes agent rollouts deterministic enough for structural tests.
inline tod::lm::Params closer_model(const tod::codec::Vocab& vocab) {
  tod::lm::Params p = tod::lm::Params::zeros_like(tiny_config(vocab.size()));
  std::fill(p.lnf_g.begin(), p.lnf_g.end(), 1.0);
  tod::codec::MarkerIds m = tod::codec::MarkerIds::lookup(vocab);
  std::size_t D = static_cast<std::size_t>(p.config.d_model);
  std::size_t V = static_cast<std::size_t>(p.config.vocab_size);
  std::size_t dim = 0;
  for (auto [sos, eos] : {std::pair{m.sos_b, m.eos_b}, std::pair{m.sos_a, m.eos_a},
                          std::pair{m.sos_r, m.eos_r}, std::pair{m.sos_ua, m.eos_ua},
                          std::pair{m.sos_u, m.eos_u}}) {
    p.wte[static_cast<std::size_t>(sos) * D + dim] = 1.0;
    p.wte[static_cast<std::size_t>(sos) * D + dim + 1] = -1.0;
    p.w_out[dim * V + static_cast<std::size_t>(eos)] = 3.0;
    p.w_out[(dim + 1) * V + static_cast<std::size_t>(eos)] = -3.0;
    dim += 2;
  }
  return p;
}

}  // namespace fixtures
