#pragma once

// Metrics and analysis: corpus BLEU, task success, joint goal accuracy,
// paired significance testing, act novelty, sequence-length and attention
// statistics. All rates are on a 0-100 scale.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tod/arena.hpp"
#include "tod/codec.hpp"
#include "tod/corpus.hpp"
#include "tod/lm.hpp"
#include "tod/world.hpp"

namespace tod::eval {

// Corpus BLEU-4: uniform weights, brevity penalty, no smoothing; zero when
// any n-gram order has no match.
double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references);

double combined_score(double bleu, double inform, double success);

// Entity offered for every constrained domain: the most recent turn of that
// domain's act carrying [name] must resolve (top database match under that
// turn's belief) to an entity satisfying the goal constraints.
bool dialog_inform(const corpus::Dialog& dialog, const world::World& world);
// Inform plus: every requested slot's placeholder appears in some response.
bool dialog_success(const corpus::Dialog& dialog, const world::World& world);

bool episode_inform(const arena::Episode& episode, const world::World& world);
bool episode_success(const arena::Episode& episode, const world::World& world);

struct OfflineMetrics {
  double jga = 0.0;
  double bleu = 0.0;
  double inform = 0.0;
  double success = 0.0;
  double combined = 0.0;
  int n_dialogs = 0;
  int n_turns = 0;
};

// Teacher-forced turn-by-turn prediction with greedy decoding: each turn sees
// the gold previous belief and response, predictions are scored against gold.
OfflineMetrics evaluate_offline(const lm::Params& ds_params, const codec::Vocab& vocab,
                                const world::World& world, const corpus::Corpus& corpus,
                                const std::vector<std::string>& dialog_ids);

struct OnlineMetrics {
  double success = 0.0;
  double inform = 0.0;
  double avg_turns = 0.0;
  std::map<std::string, int> terminations;
  int n_episodes = 0;
};

OnlineMetrics evaluate_online(const std::vector<arena::Episode>& episodes,
                              const world::World& world);

// Matched-pairs sign-flip permutation test on per-item score differences:
// p = fraction of resamples whose |flipped sum| >= |observed sum|.
double matched_pairs_test(const std::vector<double>& a, const std::vector<double>& b,
                          int n_resamples, std::uint64_t seed);

// Act novelty: frames keyed by (domain, intent, slot names).
std::string act_signature(const corpus::ActFrame& act);
std::set<std::string> corpus_act_signatures(const corpus::Corpus& corpus);
int count_unseen_acts(const std::vector<corpus::ActFrame>& acts,
                      const std::set<std::string>& seen);

struct SeqStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  int max = 0;
  int n = 0;
};

SeqStats sequence_stats(const codec::Vocab& vocab, const corpus::Corpus& corpus,
                        const std::vector<std::string>& dialog_ids, codec::CodecKind kind);

// Segment-to-segment attention mass averaged over up to max_samples windows.
std::map<std::string, std::map<std::string, double>> attention_report(
    const lm::Params& params, const codec::Vocab& vocab, const corpus::Corpus& corpus,
    const std::vector<std::string>& dialog_ids, codec::CodecKind kind, int max_samples);

}  // namespace tod::eval
