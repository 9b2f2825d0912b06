#include "tod/rl.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tod::rl {

namespace {

std::vector<codec::TrainingSample> assemble_all(const codec::Vocab& vocab,
                                                const corpus::Corpus& corpus,
                                                const std::vector<std::string>& dialog_ids,
                                                codec::CodecKind kind, int max_len) {
  std::vector<codec::TrainingSample> samples;
  for (const std::string& id : dialog_ids) {
    auto it = corpus.dialogs.find(id);
    if (it == corpus.dialogs.end()) throw ConfigError("unknown dialog id " + id);
    for (std::size_t t = 0; t < it->second.turns.size(); ++t) {
      codec::TrainingSample s = codec::assemble(kind, vocab, it->second, static_cast<int>(t));
      if (static_cast<int>(s.ids.size()) <= max_len) samples.push_back(std::move(s));
    }
  }
  if (samples.empty()) throw ConfigError("no usable training windows (all too long?)");
  return samples;
}

double mean_nll(const lm::Params& params, const std::vector<codec::TrainingSample>& samples) {
  double sum = 0.0;
  for (const codec::TrainingSample& s : samples) {
    lm::ForwardTrace tr = lm::forward(params, s.ids);
    sum += lm::nll_loss(tr, s.ids, s.loss_mask);
  }
  return sum / static_cast<double>(samples.size());
}

}  // namespace

double corpus_nll(const lm::Params& params, const codec::Vocab& vocab,
                  const corpus::Corpus& corpus, const std::vector<std::string>& dialog_ids,
                  codec::CodecKind kind) {
  return mean_nll(params,
                  assemble_all(vocab, corpus, dialog_ids, kind, params.config.max_seq_len));
}

SlResult train_supervised(const lm::Params& init, const codec::Vocab& vocab,
                          const corpus::Corpus& corpus,
                          const std::vector<std::string>& train_ids,
                          const std::vector<std::string>& dev_ids, codec::CodecKind kind,
                          const SlConfig& config) {
  if (config.epochs < 1 || config.batch_size < 1) throw ConfigError("bad SL schedule");
  const int max_len = init.config.max_seq_len;
  std::vector<codec::TrainingSample> train = assemble_all(vocab, corpus, train_ids, kind, max_len);
  std::vector<codec::TrainingSample> dev;
  if (!dev_ids.empty()) dev = assemble_all(vocab, corpus, dev_ids, kind, max_len);

  const int n = static_cast<int>(train.size());
  const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  lm::AdamWConfig ocfg;
  ocfg.lr = config.lr;
  ocfg.weight_decay = config.weight_decay;
  ocfg.grad_clip = config.grad_clip;
  ocfg.schedule = true;
  ocfg.total_steps = config.epochs * steps_per_epoch;
  ocfg.warmup_steps = std::max(1, static_cast<int>(std::lround(config.warmup_frac * ocfg.total_steps)));
  lm::AdamW opt(init.config, ocfg);

  SlResult result;
  lm::Params params = init;
  result.params = params;
  Rng shuffle_rng(derive_seed(config.seed, 0x51aa));
  double best_dev = 1e300;
  int stall = 0;

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      int end = std::min(n, start + config.batch_size);
      std::vector<lm::BatchItem> batch;
      batch.reserve(static_cast<std::size_t>(end - start));
      for (int i = start; i < end; ++i) {
        const codec::TrainingSample& s = train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        batch.push_back({s.ids, lm::sl_weights(s.loss_mask), nullptr});
      }
      lm::Params grads;
      epoch_loss += lm::loss_and_grad(params, batch, grads);
      opt.step(params, grads);
      ++batches;
    }
    result.train_loss.push_back(epoch_loss / batches);

    if (!dev.empty()) {
      double d = mean_nll(params, dev);
      result.dev_loss.push_back(d);
      if (d < best_dev - 1e-9) {
        best_dev = d;
        result.params = params;
        result.best_epoch = epoch;
        stall = 0;
      } else if (++stall >= config.patience) {
        break;
      }
    } else {
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  result.steps = opt.steps_taken();
  return result;
}

// --- rewards -------------------------------------------------------------------

RewardMode parse_reward_mode(const std::string& name) {
  if (name == "success") return RewardMode::success;
  if (name == "synthetic") return RewardMode::synthetic;
  if (name == "synthetic_sigmoid") return RewardMode::synthetic_sigmoid;
  throw ConfigError("unknown reward mode \"" + name +
                    "\" (expected success, synthetic, or synthetic_sigmoid)");
}

std::string to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::success: return "success";
    case RewardMode::synthetic: return "synthetic";
    case RewardMode::synthetic_sigmoid: return "synthetic_sigmoid";
  }
  return "unknown";
}

PolicyScheme parse_policy_scheme(const std::string& name) {
  if (name == "bar") return PolicyScheme::bar;
  if (name == "a") return PolicyScheme::a;
  if (name == "ar") return PolicyScheme::ar;
  throw ConfigError("unknown policy scheme \"" + name + "\" (expected bar, a, or ar)");
}

std::string to_string(PolicyScheme scheme) {
  switch (scheme) {
    case PolicyScheme::bar: return "bar";
    case PolicyScheme::a: return "a";
    case PolicyScheme::ar: return "ar";
  }
  return "unknown";
}

namespace {

int goal_state_size(const agents::GoalState& gs) {
  int size = 0;
  for (const auto& [domain, dg] : gs.domains) {
    size += static_cast<int>(dg.constraints.size());
    size += static_cast<int>(dg.requests.size());
    size += dg.book ? 1 : 0;
  }
  return size;
}

bool response_has_token(const std::string& response, const std::string& token) {
  for (const std::string& w : split_ws(response))
    if (w == token) return true;
  return false;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

EpisodeRewards compute_rewards(const arena::Episode& episode, const world::World& world,
                               RewardMode mode) {
  const std::size_t T = episode.exchanges.size();
  EpisodeRewards r;
  r.us.assign(T, 0.0);
  r.ds.assign(T, 0.0);

  if (mode == RewardMode::success) {
    double v = eval::episode_success(episode, world) ? 1.0 : 0.0;
    std::fill(r.us.begin(), r.us.end(), v);
    std::fill(r.ds.begin(), r.ds.end(), v);
    return r;
  }

  int total_constraints = 0, total_requests = 0, total_book = 0;
  std::set<std::string> requested;
  for (const auto& [domain, dg] : episode.goal.domains) {
    total_constraints += static_cast<int>(dg.constraints.size());
    total_requests += static_cast<int>(dg.requests.size());
    total_book += dg.book ? 1 : 0;
    for (const std::string& s : dg.requests) requested.insert(s);
  }
  int total_items = std::max(1, total_constraints + total_requests + total_book);

  agents::GoalState gs = agents::GoalState::from_goal(episode.goal);
  std::set<std::string> fulfilled;
  bool reference_seen = false;
  std::set<std::string> us_sigs, ds_sigs;

  for (std::size_t t = 0; t < T; ++t) {
    const arena::Exchange& ex = episode.exchanges[t];
    int before = goal_state_size(gs);
    agents::GoalState gs_next = agents::update_goal_state(gs, ex.us.act);
    int us_mentions = before - goal_state_size(gs_next);

    int ds_mentions = 0;
    for (const std::string& slot : requested) {
      if (response_has_token(ex.ds.response, "[" + slot + "]")) {
        ++ds_mentions;
        fulfilled.insert(slot);
      }
    }
    if (response_has_token(ex.ds.response, "[reference]")) reference_seen = true;

    int remaining_constraints = 0;
    for (const auto& [domain, dg] : gs_next.domains)
      remaining_constraints += static_cast<int>(dg.constraints.size());
    int satisfied = total_constraints - remaining_constraints;
    int resolved = reference_seen ? total_book : 0;
    double completion =
        static_cast<double>(satisfied + static_cast<int>(fulfilled.size()) + resolved) /
        total_items;

    std::string us_sig = eval::act_signature(ex.us.act);
    std::string ds_sig = eval::act_signature(ex.ds.act);
    double us_repeat = us_sigs.count(us_sig) ? 1.0 : 0.0;
    double ds_repeat = ds_sigs.count(ds_sig) ? 1.0 : 0.0;
    us_sigs.insert(us_sig);
    ds_sigs.insert(ds_sig);

    r.us[t] = 0.1 * us_mentions - 0.5 * us_repeat + completion;
    r.ds[t] = 0.1 * ds_mentions - 0.5 * ds_repeat + completion;
    gs = std::move(gs_next);
  }

  if (mode == RewardMode::synthetic_sigmoid) {
    for (double& v : r.us) v = sigmoid(v);
    for (double& v : r.ds) v = sigmoid(v);
  }
  return r;
}

std::vector<std::vector<double>> compute_returns(const std::vector<int>& tokens_per_turn,
                                                 const std::vector<double>& rewards,
                                                 double gamma) {
  if (tokens_per_turn.size() != rewards.size())
    throw ConfigError("returns need one reward per turn");
  if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("gamma must be in (0, 1]");
  std::vector<std::vector<double>> out(tokens_per_turn.size());
  for (std::size_t t = 0; t < tokens_per_turn.size(); ++t) {
    int n = tokens_per_turn[t];
    if (n < 0) throw ConfigError("negative token count");
    out[t].resize(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i)
      out[t][static_cast<std::size_t>(i - 1)] = std::pow(gamma, n - i) * rewards[t];
  }
  return out;
}

namespace {

bool scheme_includes(PolicyScheme scheme, int segment) {
  switch (scheme) {
    case PolicyScheme::bar:
      return segment == agents::kDsBelief || segment == agents::kDsAct ||
             segment == agents::kDsResponse;
    case PolicyScheme::a:
      return segment == agents::kDsAct;
    case PolicyScheme::ar:
      return segment == agents::kDsAct || segment == agents::kDsResponse;
  }
  return false;
}

template <typename Turn>
lm::BatchItem policy_item(const Turn& turn, const std::vector<std::size_t>& selected,
                          double reward, double gamma) {
  lm::BatchItem item;
  item.ids = turn.context_ids;
  item.ids.insert(item.ids.end(), turn.target_ids.begin(), turn.target_ids.end());
  item.weight.assign(item.ids.size(), 0.0);
  const std::size_t ctx = turn.context_ids.size();
  const int n = static_cast<int>(selected.size());
  for (int i = 1; i <= n; ++i)
    item.weight[ctx + selected[static_cast<std::size_t>(i - 1)]] =
        std::pow(gamma, n - i) * reward;
  return item;
}

}  // namespace

int ds_policy_token_count(const agents::DsTurn& turn, PolicyScheme scheme) {
  int n = 0;
  for (std::size_t j = 0; j < turn.target_ids.size(); ++j)
    if (turn.sampled[j] && scheme_includes(scheme, turn.segment_of[j])) ++n;
  return n;
}

lm::BatchItem ds_policy_item(const agents::DsTurn& turn, double reward, double gamma,
                             PolicyScheme scheme) {
  std::vector<std::size_t> selected;
  for (std::size_t j = 0; j < turn.target_ids.size(); ++j)
    if (turn.sampled[j] && scheme_includes(scheme, turn.segment_of[j])) selected.push_back(j);
  return policy_item(turn, selected, reward, gamma);
}

lm::BatchItem us_policy_item(const agents::UsTurn& turn, double reward, double gamma) {
  std::vector<std::size_t> selected;
  for (std::size_t j = 0; j < turn.target_ids.size(); ++j)
    if (turn.sampled[j]) selected.push_back(j);
  return policy_item(turn, selected, reward, gamma);
}

// --- joint training ---------------------------------------------------------------

RlPhase parse_rl_phase(const std::string& name) {
  if (name == "us") return RlPhase::us;
  if (name == "ds") return RlPhase::ds;
  if (name == "joint") return RlPhase::joint;
  throw ConfigError("unknown phase \"" + name + "\" (expected us, ds, or joint)");
}

namespace {

double dev_success(const lm::Params& us, const lm::Params& ds, const codec::Vocab& vocab,
                   const world::World& world, const std::vector<world::UserGoal>& dev_goals,
                   const RlConfig& cfg) {
  std::size_t n = std::min<std::size_t>(dev_goals.size(), static_cast<std::size_t>(cfg.eval_goals));
  if (n == 0) throw ConfigError("no dev goals for RL evaluation");
  std::vector<world::UserGoal> goals(dev_goals.begin(), dev_goals.begin() + static_cast<long>(n));
  auto usfn = arena::make_us_policy(&us, &vocab, 0.0, cfg.max_segment_tokens);
  auto dsfn = arena::make_ds_policy(&ds, &vocab, &world, 0.0, cfg.max_segment_tokens);
  auto episodes = arena::run_batch(usfn, dsfn, goals, derive_seed(cfg.seed, 0xde7e), cfg.max_turns);
  return eval::evaluate_online(episodes, world).success;
}

// Trains one side of the pair in place; snapshots the pair into result
// whenever dev success improves.
void run_phase(bool train_us_side, lm::Params& us, lm::Params& ds, const codec::Vocab& vocab,
               const world::World& world, const std::vector<codec::TrainingSample>& sl_pool,
               const std::vector<world::UserGoal>& train_goals,
               const std::vector<world::UserGoal>& dev_goals, const RlConfig& cfg,
               RlResult& result) {
  lm::Params& learner = train_us_side ? us : ds;
  lm::AdamWConfig ocfg;
  ocfg.lr = cfg.lr;
  lm::AdamW opt(learner.config, ocfg);
  const std::uint64_t phase_salt = train_us_side ? 0xa11 : 0xa22;
  Rng rng(derive_seed(cfg.seed, phase_salt));
  const std::string phase_name = train_us_side ? "us" : "ds";

  for (int cycle = 0; cycle < cfg.cycles; ++cycle) {
    std::vector<world::UserGoal> goals(static_cast<std::size_t>(cfg.episodes_per_cycle));
    for (auto& g : goals)
      g = train_goals[static_cast<std::size_t>(rng.uniform_int(train_goals.size()))];

    auto usfn = arena::make_us_policy(&us, &vocab, cfg.temperature, cfg.max_segment_tokens);
    auto dsfn = arena::make_ds_policy(&ds, &vocab, &world, cfg.temperature,
                                      cfg.max_segment_tokens);
    auto episodes = arena::run_batch(usfn, dsfn, goals,
                                     derive_seed(cfg.seed, phase_salt, cycle), cfg.max_turns);

    RlHistoryRow row;
    row.phase = phase_name;
    row.cycle = cycle;
    std::vector<lm::BatchItem> policy_batch;
    double us_sum = 0.0, ds_sum = 0.0;
    long long turns = 0;
    for (const arena::Episode& ep : episodes) {
      EpisodeRewards rewards = compute_rewards(ep, world, cfg.reward);
      for (std::size_t t = 0; t < ep.exchanges.size(); ++t) {
        us_sum += rewards.us[t];
        ds_sum += rewards.ds[t];
        ++turns;
        const arena::Exchange& ex = ep.exchanges[t];
        if (train_us_side) {
          if (!ex.us.target_ids.empty())
            policy_batch.push_back(
                us_policy_item(ex.us, rewards.us[t] - cfg.reward_baseline, cfg.gamma));
        } else {
          if (ds_policy_token_count(ex.ds, cfg.scheme) > 0)
            policy_batch.push_back(ds_policy_item(
                ex.ds, rewards.ds[t] - cfg.reward_baseline, cfg.gamma, cfg.scheme));
        }
      }
    }
    row.mean_us_reward = turns > 0 ? us_sum / turns : 0.0;
    row.mean_ds_reward = turns > 0 ? ds_sum / turns : 0.0;

    // A batch whose weights are all zero carries no gradient signal (every
    // reward was zero); stepping anyway would only apply weight decay.
    bool live = false;
    for (const lm::BatchItem& item : policy_batch) {
      for (double w : item.weight)
        if (w != 0.0) {
          live = true;
          break;
        }
      if (live) break;
    }
    if (live) {
      lm::Params grads;
      row.policy_loss = lm::loss_and_grad(learner, policy_batch, grads);
      opt.step(learner, grads);
    }

    // 1:1 supervised update on gold windows keeps the decoder on-language.
    std::vector<lm::BatchItem> sl_batch;
    for (int i = 0; i < cfg.sl_batch; ++i) {
      const codec::TrainingSample& s =
          sl_pool[static_cast<std::size_t>(rng.uniform_int(sl_pool.size()))];
      sl_batch.push_back({s.ids, lm::sl_weights(s.loss_mask), nullptr});
    }
    lm::Params grads;
    row.sl_loss = lm::loss_and_grad(learner, sl_batch, grads);
    opt.step(learner, grads);

    if ((cycle + 1) % cfg.eval_every == 0 || cycle + 1 == cfg.cycles) {
      row.dev_success = dev_success(us, ds, vocab, world, dev_goals, cfg);
      if (row.dev_success > result.best_success) {
        result.best_success = row.dev_success;
        result.us = us;
        result.ds = ds;
      }
    }
    result.history.push_back(std::move(row));
  }
}

}  // namespace

RlResult train_rl(RlPhase phase, const lm::Params& us_init, const lm::Params& ds_init,
                  const codec::Vocab& vocab, const world::World& world,
                  const corpus::Corpus& corpus, const std::vector<std::string>& train_ids,
                  const std::vector<world::UserGoal>& train_goals,
                  const std::vector<world::UserGoal>& dev_goals, const RlConfig& config) {
  if (config.cycles < 1 || config.episodes_per_cycle < 1)
    throw ConfigError("bad RL schedule");
  if (train_goals.empty()) throw ConfigError("no training goals");

  RlResult result;
  result.us = us_init;
  result.ds = ds_init;
  result.baseline_success = dev_success(us_init, ds_init, vocab, world, dev_goals, config);
  result.best_success = result.baseline_success;

  lm::Params us = us_init;
  lm::Params ds = ds_init;

  if (phase == RlPhase::us || phase == RlPhase::joint) {
    std::vector<codec::TrainingSample> sl_pool = assemble_all(
        vocab, corpus, train_ids, codec::CodecKind::sga_us, us.config.max_seq_len);
    run_phase(true, us, ds, vocab, world, sl_pool, train_goals, dev_goals, config, result);
    us = result.us;  // the second stage plays against the best simulator
  }
  if (phase == RlPhase::ds || phase == RlPhase::joint) {
    std::vector<codec::TrainingSample> sl_pool = assemble_all(
        vocab, corpus, train_ids, codec::CodecKind::sga_ds, ds.config.max_seq_len);
    run_phase(false, us, ds, vocab, world, sl_pool, train_goals, dev_goals, config, result);
  }
  return result;
}

}  // namespace tod::rl
