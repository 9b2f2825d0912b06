#pragma once

// Training: supervised pretraining and two-stage REINFORCE self-play.
// Stage one improves the user simulator against a frozen system, stage two
// improves the system against the frozen improved simulator. Every policy
// update is followed by one supervised update on gold data (1:1 alternation)
// to keep the language model anchored.

#include <cstdint>
#include <string>
#include <vector>

#include "tod/agents.hpp"
#include "tod/arena.hpp"
#include "tod/codec.hpp"
#include "tod/corpus.hpp"
#include "tod/eval.hpp"
#include "tod/lm.hpp"
#include "tod/world.hpp"

namespace tod::rl {

// --- supervised training --------------------------------------------------------

struct SlConfig {
  int epochs = 50;
  int batch_size = 16;
  double lr = 1e-4;  // peak; linear warmup then linear decay to zero
  double warmup_frac = 0.2;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  int patience = 4;  // epochs without dev improvement before stopping
  std::uint64_t seed = 1;
};

struct SlResult {
  lm::Params params;  // parameters at the best dev epoch
  std::vector<double> train_loss;  // per epoch
  std::vector<double> dev_loss;
  int best_epoch = -1;  // 0-based; -1 when dev never evaluated
  int steps = 0;
};

SlResult train_supervised(const lm::Params& init, const codec::Vocab& vocab,
                          const corpus::Corpus& corpus,
                          const std::vector<std::string>& train_ids,
                          const std::vector<std::string>& dev_ids, codec::CodecKind kind,
                          const SlConfig& config);

// Mean nll of a model over every turn window of the given dialogs.
double corpus_nll(const lm::Params& params, const codec::Vocab& vocab,
                  const corpus::Corpus& corpus, const std::vector<std::string>& dialog_ids,
                  codec::CodecKind kind);

// --- rewards and returns ----------------------------------------------------------

enum class RewardMode { success, synthetic, synthetic_sigmoid };
RewardMode parse_reward_mode(const std::string& name);
std::string to_string(RewardMode mode);

// Which decoded segments count as policy actions for the system agent.
enum class PolicyScheme { bar, a, ar };  // belief+act+response, act, act+response
PolicyScheme parse_policy_scheme(const std::string& name);
std::string to_string(PolicyScheme scheme);

struct EpisodeRewards {
  std::vector<double> us;  // one reward per exchange
  std::vector<double> ds;
};

// success: every turn gets 1 when the episode succeeded, else 0.
// synthetic: 0.1 * own task mentions - 0.5 * repeated act frame + the global
// completion proportion after the turn. synthetic_sigmoid: sigmoid of that.
EpisodeRewards compute_rewards(const arena::Episode& episode, const world::World& world,
                               RewardMode mode);

// U[t][i-1] = gamma^(n_t - i) * R_t for a turn with n_t policy tokens.
std::vector<std::vector<double>> compute_returns(const std::vector<int>& tokens_per_turn,
                                                 const std::vector<double>& rewards,
                                                 double gamma);

// REINFORCE batch items: context + realized target, with per-token returns on
// exactly the policy tokens (sampled positions within the scheme's segments).
lm::BatchItem ds_policy_item(const agents::DsTurn& turn, double reward, double gamma,
                             PolicyScheme scheme);
lm::BatchItem us_policy_item(const agents::UsTurn& turn, double reward, double gamma);

// Number of policy tokens the scheme selects in a turn.
int ds_policy_token_count(const agents::DsTurn& turn, PolicyScheme scheme);

// --- joint self-play training --------------------------------------------------------

enum class RlPhase { us, ds, joint };
RlPhase parse_rl_phase(const std::string& name);

struct RlConfig {
  int cycles = 20;  // per phase
  int episodes_per_cycle = 32;
  double lr = 2e-5;
  double gamma = 0.99;
  double temperature = 1.0;
  RewardMode reward = RewardMode::success;
  // Constant subtracted from every per-turn reward before it is discounted
  // into token weights. REINFORCE is invariant to it in expectation, but a
  // nonzero value lets all-positive reward modes suppress bad rollouts
  // instead of reinforcing everything. 0 keeps the plain estimator.
  double reward_baseline = 0.0;
  PolicyScheme scheme = PolicyScheme::bar;
  int sl_batch = 8;
  int max_turns = 20;
  int max_segment_tokens = 64;
  int eval_every = 2;   // cycles between dev evaluations
  int eval_goals = 64;  // dev goals per evaluation
  std::uint64_t seed = 1;
};

struct RlHistoryRow {
  std::string phase;  // "us" or "ds"
  int cycle = 0;
  double mean_us_reward = 0.0;
  double mean_ds_reward = 0.0;
  double policy_loss = 0.0;
  double sl_loss = 0.0;
  double dev_success = -1.0;  // -1 when this cycle had no evaluation
};

struct RlResult {
  lm::Params us;  // best-by-dev-success checkpoints
  lm::Params ds;
  double baseline_success = 0.0;  // the input pair, greedy, on dev goals
  double best_success = 0.0;
  std::vector<RlHistoryRow> history;
};

RlResult train_rl(RlPhase phase, const lm::Params& us_init, const lm::Params& ds_init,
                  const codec::Vocab& vocab, const world::World& world,
                  const corpus::Corpus& corpus, const std::vector<std::string>& train_ids,
                  const std::vector<world::UserGoal>& train_goals,
                  const std::vector<world::UserGoal>& dev_goals, const RlConfig& config);

}  // namespace tod::rl
