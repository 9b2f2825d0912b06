#include "tod/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "tod/agents.hpp"

namespace tod::eval {

namespace {

bool contains_token(const std::string& text, const std::string& token) {
  for (const std::string& w : split_ws(text))
    if (w == token) return true;
  return false;
}

std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j > 0) key += '\x1f';
      key += tokens[i + static_cast<std::size_t>(j)];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size())
    throw ConfigError("BLEU needs one reference per candidate");
  if (candidates.empty()) throw ConfigError("BLEU over an empty corpus");

  long long cand_len = 0, ref_len = 0;
  long long match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& ref = references[i];
    cand_len += static_cast<long long>(cand.size());
    ref_len += static_cast<long long>(ref.size());
    for (int n = 1; n <= 4; ++n) {
      auto cc = ngram_counts(cand, n);
      auto rc = ngram_counts(ref, n);
      for (const auto& [key, count] : cc) {
        total[n - 1] += count;
        auto it = rc.find(key);
        if (it != rc.end()) match[n - 1] += std::min(count, it->second);
      }
    }
  }

  double log_precision = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (match[n] == 0 || total[n] == 0) return 0.0;
    log_precision += 0.25 * std::log(static_cast<double>(match[n]) / total[n]);
  }
  double bp = 1.0;
  if (cand_len < ref_len && cand_len > 0)
    bp = std::exp(1.0 - static_cast<double>(ref_len) / cand_len);
  if (cand_len == 0) return 0.0;
  return 100.0 * bp * std::exp(log_precision);
}

double combined_score(double bleu, double inform, double success) {
  return bleu + 0.5 * (inform + success);
}

bool dialog_inform(const corpus::Dialog& dialog, const world::World& world) {
  for (const auto& [domain, dg] : dialog.goal.domains) {
    const world::Database* db = world.database(domain);
    if (db == nullptr) return false;
    const corpus::DialogTurn* offer_turn = nullptr;
    for (const corpus::DialogTurn& turn : dialog.turns)
      if (turn.system_act.domain == domain && contains_token(turn.response, "[name]"))
        offer_turn = &turn;
    if (offer_turn == nullptr) return false;
    std::map<std::string, std::string> constraints;
    if (auto it = offer_turn->belief.domains.find(domain); it != offer_turn->belief.domains.end())
      constraints = it->second;
    const world::Entity* entity = world::top_match(*db, constraints);
    if (entity == nullptr) return false;
    for (const auto& [slot, value] : dg.constraints) {
      if (value == "dontcare") continue;
      auto v = entity->informable.find(slot);
      if (v == entity->informable.end() || v->second != value) return false;
    }
  }
  return true;
}

bool dialog_success(const corpus::Dialog& dialog, const world::World& world) {
  if (!dialog_inform(dialog, world)) return false;
  for (const auto& [domain, dg] : dialog.goal.domains) {
    for (const std::string& slot : dg.requests) {
      std::string placeholder = "[" + slot + "]";
      bool found = false;
      for (const corpus::DialogTurn& turn : dialog.turns)
        if (contains_token(turn.response, placeholder)) {
          found = true;
          break;
        }
      if (!found) return false;
    }
  }
  return true;
}

bool episode_inform(const arena::Episode& episode, const world::World& world) {
  return dialog_inform(arena::episode_to_dialog(episode, world, "episode"), world);
}

bool episode_success(const arena::Episode& episode, const world::World& world) {
  return dialog_success(arena::episode_to_dialog(episode, world, "episode"), world);
}

OfflineMetrics evaluate_offline(const lm::Params& ds_params, const codec::Vocab& vocab,
                                const world::World& world, const corpus::Corpus& corpus,
                                const std::vector<std::string>& dialog_ids) {
  OfflineMetrics m;
  std::vector<std::vector<std::string>> cands, refs;
  int jga_hits = 0, inform_hits = 0, success_hits = 0;

  for (const std::string& id : dialog_ids) {
    auto it = corpus.dialogs.find(id);
    if (it == corpus.dialogs.end()) throw ConfigError("unknown dialog id " + id);
    const corpus::Dialog& gold = it->second;

    corpus::Dialog predicted;
    predicted.id = gold.id;
    predicted.goal = gold.goal;
    for (std::size_t t = 0; t < gold.turns.size(); ++t) {
      const corpus::DialogTurn& gt = gold.turns[t];
      corpus::BeliefState prev_belief;
      std::string prev_response;
      if (t > 0) {
        prev_belief = gold.turns[t - 1].belief;
        prev_response = gold.turns[t - 1].response;
      }
      agents::DecodeOptions opt;  // greedy
      agents::DsTurn out =
          agents::ds_step(ds_params, vocab, world, prev_belief, prev_response, gt.user, opt);

      corpus::DialogTurn pt;
      pt.goal_state = gt.goal_state;
      pt.user_act = gt.user_act;
      pt.user = gt.user;
      pt.belief = out.belief;
      pt.db = out.db_bucket;
      pt.system_act = out.act;
      pt.response = out.response;
      predicted.turns.push_back(std::move(pt));

      if (out.belief == gt.belief) ++jga_hits;
      cands.push_back(split_ws(out.response));
      refs.push_back(split_ws(gt.response));
      ++m.n_turns;
    }
    if (dialog_inform(predicted, world)) ++inform_hits;
    if (dialog_success(predicted, world)) ++success_hits;
    ++m.n_dialogs;
  }

  if (m.n_turns == 0) throw ConfigError("offline evaluation over zero turns");
  m.jga = 100.0 * jga_hits / m.n_turns;
  m.bleu = corpus_bleu(cands, refs);
  m.inform = 100.0 * inform_hits / m.n_dialogs;
  m.success = 100.0 * success_hits / m.n_dialogs;
  m.combined = combined_score(m.bleu, m.inform, m.success);
  return m;
}

OnlineMetrics evaluate_online(const std::vector<arena::Episode>& episodes,
                              const world::World& world) {
  if (episodes.empty()) throw ConfigError("online evaluation over zero episodes");
  OnlineMetrics m;
  long long turns = 0;
  int inform_hits = 0, success_hits = 0;
  for (const arena::Episode& ep : episodes) {
    corpus::Dialog view = arena::episode_to_dialog(ep, world, "episode");
    if (dialog_inform(view, world)) ++inform_hits;
    if (dialog_success(view, world)) ++success_hits;
    turns += static_cast<long long>(ep.exchanges.size());
    ++m.terminations[arena::to_string(ep.termination)];
  }
  m.n_episodes = static_cast<int>(episodes.size());
  m.inform = 100.0 * inform_hits / m.n_episodes;
  m.success = 100.0 * success_hits / m.n_episodes;
  m.avg_turns = static_cast<double>(turns) / m.n_episodes;
  return m;
}

double matched_pairs_test(const std::vector<double>& a, const std::vector<double>& b,
                          int n_resamples, std::uint64_t seed) {
  if (a.size() != b.size()) throw ConfigError("matched pairs need equal-length score lists");
  if (a.empty()) throw ConfigError("matched pairs need at least one pair");
  if (n_resamples < 1) throw ConfigError("need at least one resample");

  std::vector<double> diff(a.size());
  double observed = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff[i] = a[i] - b[i];
    observed += diff[i];
  }
  observed = std::abs(observed);

  Rng rng(derive_seed(seed, 0x51f7));
  int hits = 0;
  for (int r = 0; r < n_resamples; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i)
      sum += (rng.next_u64() & 1) ? diff[i] : -diff[i];
    if (std::abs(sum) >= observed) ++hits;
  }
  return static_cast<double>(hits) / n_resamples;
}

std::string act_signature(const corpus::ActFrame& act) {
  std::string sig = act.domain + "|" + act.intent;
  std::vector<std::string> names;
  for (const auto& [name, value] : act.slots) names.push_back(name);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  for (const std::string& n : names) sig += "|" + n;
  return sig;
}

std::set<std::string> corpus_act_signatures(const corpus::Corpus& corpus) {
  std::set<std::string> sigs;
  for (const auto& [id, dialog] : corpus.dialogs) {
    for (const corpus::DialogTurn& turn : dialog.turns) {
      sigs.insert(act_signature(turn.user_act));
      sigs.insert(act_signature(turn.system_act));
    }
  }
  return sigs;
}

int count_unseen_acts(const std::vector<corpus::ActFrame>& acts,
                      const std::set<std::string>& seen) {
  int unseen = 0;
  for (const corpus::ActFrame& act : acts)
    if (!seen.count(act_signature(act))) ++unseen;
  return unseen;
}

SeqStats sequence_stats(const codec::Vocab& vocab, const corpus::Corpus& corpus,
                        const std::vector<std::string>& dialog_ids, codec::CodecKind kind) {
  SeqStats s;
  double sum = 0.0, sumsq = 0.0;
  for (const std::string& id : dialog_ids) {
    auto it = corpus.dialogs.find(id);
    if (it == corpus.dialogs.end()) throw ConfigError("unknown dialog id " + id);
    for (std::size_t t = 0; t < it->second.turns.size(); ++t) {
      codec::TrainingSample sample =
          codec::assemble(kind, vocab, it->second, static_cast<int>(t));
      int len = static_cast<int>(sample.ids.size());
      sum += len;
      sumsq += static_cast<double>(len) * len;
      s.max = std::max(s.max, len);
      ++s.n;
    }
  }
  if (s.n == 0) throw ConfigError("sequence stats over zero samples");
  s.mean = sum / s.n;
  double var = sumsq / s.n - s.mean * s.mean;
  s.stddev = var > 0.0 ? std::sqrt(var) : 0.0;
  return s;
}

std::map<std::string, std::map<std::string, double>> attention_report(
    const lm::Params& params, const codec::Vocab& vocab, const corpus::Corpus& corpus,
    const std::vector<std::string>& dialog_ids, codec::CodecKind kind, int max_samples) {
  std::map<std::string, std::map<std::string, double>> sums;
  std::map<std::string, std::map<std::string, int>> counts;
  int taken = 0;
  for (const std::string& id : dialog_ids) {
    if (taken >= max_samples) break;
    auto it = corpus.dialogs.find(id);
    if (it == corpus.dialogs.end()) throw ConfigError("unknown dialog id " + id);
    for (std::size_t t = 0; t < it->second.turns.size() && taken < max_samples; ++t) {
      codec::TrainingSample sample =
          codec::assemble(kind, vocab, it->second, static_cast<int>(t));
      if (static_cast<int>(sample.ids.size()) > params.config.max_seq_len) continue;
      lm::ForwardTrace trace = lm::forward(params, sample.ids);
      std::vector<lm::Span> spans;
      for (const codec::Segment& seg : sample.segments)
        spans.push_back({seg.name, seg.begin, seg.end});
      auto summary = lm::attention_summary(trace, spans);
      for (const auto& [row, cols] : summary) {
        for (const auto& [col, value] : cols) {
          sums[row][col] += value;
          ++counts[row][col];
        }
      }
      ++taken;
    }
  }
  if (taken == 0) throw ConfigError("attention report over zero samples");
  std::map<std::string, std::map<std::string, double>> out;
  for (const auto& [row, cols] : sums)
    for (const auto& [col, value] : cols) out[row][col] = value / counts[row][col];
  return out;
}

}  // namespace tod::eval
