#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "tod/rl.hpp"

using namespace tod;
using namespace tod::rl;

TEST_CASE("reward and scheme names round trip") {
  for (auto m : {RewardMode::success, RewardMode::synthetic, RewardMode::synthetic_sigmoid})
    CHECK(parse_reward_mode(to_string(m)) == m);
  for (auto s : {PolicyScheme::bar, PolicyScheme::a, PolicyScheme::ar})
    CHECK(parse_policy_scheme(to_string(s)) == s);
  CHECK_THROWS_AS(parse_reward_mode("nope"), ConfigError);
  CHECK_THROWS_AS(parse_policy_scheme("nope"), ConfigError);
  CHECK(parse_rl_phase("joint") == RlPhase::joint);
  CHECK_THROWS_AS(parse_rl_phase("nope"), ConfigError);
}

TEST_CASE("returns decay geometrically within each turn") {
  // three policy tokens, reward R: gamma^2 R, gamma^1 R, gamma^0 R
  auto u = compute_returns({3}, {2.0}, 0.5);
  REQUIRE(u.size() == 1);
  REQUIRE(u[0].size() == 3);
  CHECK(u[0][0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(u[0][1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(u[0][2] == 2.0);

  // gamma 1 gives every token the full reward
  auto flat = compute_returns({4, 2}, {3.0, -1.0}, 1.0);
  for (double x : flat[0]) CHECK(x == 3.0);
  for (double x : flat[1]) CHECK(x == -1.0);

  // zero-token turns are legal and yield empty rows
  auto sparse = compute_returns({0, 1}, {5.0, 5.0}, 0.9);
  CHECK(sparse[0].empty());
  REQUIRE(sparse[1].size() == 1);
  CHECK(sparse[1][0] == 5.0);

  CHECK_THROWS_AS(compute_returns({1}, {1.0, 2.0}, 0.9), ConfigError);
  CHECK_THROWS_AS(compute_returns({-1}, {1.0}, 0.9), ConfigError);
  CHECK_THROWS_AS(compute_returns({1}, {1.0}, 0.0), ConfigError);
  CHECK_THROWS_AS(compute_returns({1}, {1.0}, 1.5), ConfigError);
}

TEST_CASE("returns match a brute-force recomputation") {
  Rng rng(83);
  for (double gamma : {0.5, 0.9, 0.99, 1.0}) {
    for (int rep = 0; rep < 50; ++rep) {
      int turns = 1 + static_cast<int>(rng.uniform_int(8));
      std::vector<int> counts;
      std::vector<double> rewards;
      for (int t = 0; t < turns; ++t) {
        counts.push_back(static_cast<int>(rng.uniform_int(12)));
        rewards.push_back(rng.uniform01() * 4.0 - 2.0);
      }
      auto got = compute_returns(counts, rewards, gamma);
      auto want = oracles::returns(counts, rewards, gamma);
      REQUIRE(got.size() == want.size());
      for (std::size_t t = 0; t < got.size(); ++t) {
        REQUIRE(got[t].size() == want[t].size());
        for (std::size_t i = 0; i < got[t].size(); ++i) CHECK(got[t][i] == want[t][i]);
      }
    }
  }
}

TEST_CASE("success rewards broadcast the episode outcome") {
  const auto& world = fixtures::shared_world();
  Rng rng(89);
  for (int rep = 0; rep < 50; ++rep) {
    arena::Episode ep = oracles::random_episode(rng, world);
    EpisodeRewards r = compute_rewards(ep, world, RewardMode::success);
    REQUIRE(r.us.size() == ep.exchanges.size());
    REQUIRE(r.ds.size() == ep.exchanges.size());
    double want = eval::episode_success(ep, world) ? 1.0 : 0.0;
    for (double x : r.us) CHECK(x == want);
    for (double x : r.ds) CHECK(x == want);
  }
}

TEST_CASE("synthetic rewards match an independent replay") {
  const auto& world = fixtures::shared_world();
  Rng rng(97);
  for (int rep = 0; rep < 80; ++rep) {
    arena::Episode ep = oracles::random_episode(rng, world);
    EpisodeRewards got = compute_rewards(ep, world, RewardMode::synthetic);
    auto [want_us, want_ds] = oracles::synthetic_rewards(ep);
    REQUIRE(got.us.size() == want_us.size());
    for (std::size_t t = 0; t < got.us.size(); ++t) {
      CHECK(got.us[t] == doctest::Approx(want_us[t]).epsilon(1e-12));
      CHECK(got.ds[t] == doctest::Approx(want_ds[t]).epsilon(1e-12));
    }

    EpisodeRewards sig = compute_rewards(ep, world, RewardMode::synthetic_sigmoid);
    for (std::size_t t = 0; t < got.us.size(); ++t) {
      CHECK(sig.us[t] == doctest::Approx(1.0 / (1.0 + std::exp(-got.us[t]))).epsilon(1e-12));
      CHECK(sig.ds[t] == doctest::Approx(1.0 / (1.0 + std::exp(-got.ds[t]))).epsilon(1e-12));
    }
  }
}

namespace {

// Build a ds turn by hand with known segments and sampled flags.
agents::DsTurn crafted_ds_turn() {
  agents::DsTurn turn;
  turn.context_ids = {8, 5, 9};
  // segments: belief 4 tokens, db 3, act 3, response 4
  turn.target_ids = {0, 21, 22, 1, 2, 14, 3, 4, 23, 5, 6, 24, 25, 7};
  turn.segment_of = {0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 3};
  turn.sampled = {0, 1, 1, 1, 0, 0, 0, 0, 1, 1, 0, 1, 1, 1};
  turn.logprobs.assign(turn.target_ids.size(), -1.0);
  for (std::size_t i = 0; i < turn.sampled.size(); ++i)
    if (!turn.sampled[i]) turn.logprobs[i] = 0.0;
  return turn;
}

}  // namespace

TEST_CASE("ds policy items place returns on exactly the scheme's tokens") {
  agents::DsTurn turn = crafted_ds_turn();
  double reward = 2.0, gamma = 0.5;

  SUBCASE("belief, act, and response tokens all count") {
    // sampled positions in segments {belief, act, response}: 1,2,3, 8,9, 11,12,13
    CHECK(ds_policy_token_count(turn, PolicyScheme::bar) == 8);
    lm::BatchItem item = ds_policy_item(turn, reward, gamma, PolicyScheme::bar);
    REQUIRE(item.ids.size() == turn.context_ids.size() + turn.target_ids.size());
    for (std::size_t i = 0; i < turn.context_ids.size(); ++i)
      CHECK(item.ids[i] == turn.context_ids[i]);
    REQUIRE(item.weight.size() == item.ids.size());
    // context carries no weight
    for (std::size_t i = 0; i < turn.context_ids.size(); ++i) CHECK(item.weight[i] == 0.0);
    std::vector<std::size_t> sel = {1, 2, 3, 8, 9, 11, 12, 13};
    int n = static_cast<int>(sel.size());
    for (std::size_t i = 0; i < turn.target_ids.size(); ++i) {
      std::size_t p = turn.context_ids.size() + i;
      auto it = std::find(sel.begin(), sel.end(), i);
      if (it == sel.end()) {
        CHECK(item.weight[p] == 0.0);
      } else {
        int rank = static_cast<int>(it - sel.begin()) + 1;  // 1-based among policy tokens
        CHECK(item.weight[p] ==
              doctest::Approx(std::pow(gamma, n - rank) * reward).epsilon(1e-12));
      }
    }
  }
  SUBCASE("the act-only scheme zeroes everything else") {
    CHECK(ds_policy_token_count(turn, PolicyScheme::a) == 2);
    lm::BatchItem item = ds_policy_item(turn, reward, gamma, PolicyScheme::a);
    for (std::size_t i = 0; i < turn.target_ids.size(); ++i) {
      std::size_t p = turn.context_ids.size() + i;
      if (i == 8)
        CHECK(item.weight[p] == doctest::Approx(gamma * reward).epsilon(1e-12));
      else if (i == 9)
        CHECK(item.weight[p] == reward);
      else
        CHECK(item.weight[p] == 0.0);
    }
  }
  SUBCASE("act plus response skips belief tokens") {
    CHECK(ds_policy_token_count(turn, PolicyScheme::ar) == 5);
    lm::BatchItem item = ds_policy_item(turn, reward, gamma, PolicyScheme::ar);
    for (std::size_t i : {std::size_t{1}, std::size_t{2}, std::size_t{3}})
      CHECK(item.weight[turn.context_ids.size() + i] == 0.0);
    CHECK(item.weight[turn.context_ids.size() + 13] == reward);
  }
  SUBCASE("db and forced tokens never carry weight in any scheme") {
    for (auto scheme : {PolicyScheme::bar, PolicyScheme::a, PolicyScheme::ar}) {
      lm::BatchItem item = ds_policy_item(turn, reward, gamma, scheme);
      for (std::size_t i : {std::size_t{4}, std::size_t{5}, std::size_t{6}})  // db block
        CHECK(item.weight[turn.context_ids.size() + i] == 0.0);
      for (std::size_t i = 0; i < turn.target_ids.size(); ++i)
        if (!turn.sampled[i]) CHECK(item.weight[turn.context_ids.size() + i] == 0.0);
    }
  }
}

TEST_CASE("us policy items weight every sampled token") {
  agents::UsTurn turn;
  turn.context_ids = {7, 7};
  turn.target_ids = {10, 30, 31, 11, 8, 32, 9};
  turn.segment_of = {0, 0, 0, 0, 1, 1, 1};
  turn.sampled = {0, 1, 1, 1, 0, 1, 1};
  turn.logprobs.assign(7, -0.5);

  lm::BatchItem item = us_policy_item(turn, 1.5, 0.5);
  REQUIRE(item.weight.size() == 9);
  CHECK(item.weight[0] == 0.0);
  CHECK(item.weight[1] == 0.0);
  // sampled ranks: positions 1,2,3,5,6 -> gamma^(5-rank)
  std::vector<std::size_t> sel = {1, 2, 3, 5, 6};
  for (std::size_t r = 0; r < sel.size(); ++r)
    CHECK(item.weight[2 + sel[r]] ==
          doctest::Approx(std::pow(0.5, sel.size() - 1 - r) * 1.5).epsilon(1e-12));
  CHECK(item.weight[2 + 0] == 0.0);
  CHECK(item.weight[2 + 4] == 0.0);
}

TEST_CASE("the reward baseline turns dead policy batches live") {
  const auto& world = fixtures::shared_world();
  const corpus::Corpus& corpus = fixtures::shared_corpus();
  const codec::Vocab& vocab = fixtures::shared_vocab();
  std::vector<std::string> ids = fixtures::dialog_ids(corpus);

  // Closer models run every dialog to the turn limit with nothing achieved,
  // so success rewards are all zero and the plain estimator has no signal.
  lm::Params us = fixtures::closer_model(vocab);
  lm::Params ds = fixtures::closer_model(vocab);
  std::vector<tod::world::UserGoal> goals;
  for (std::uint64_t i = 0; i < 4; ++i) goals.push_back(tod::world::sample_goal(1000 + i, world));

  RlConfig cfg;
  cfg.cycles = 1;
  cfg.episodes_per_cycle = 4;
  cfg.max_turns = 3;
  cfg.max_segment_tokens = 8;
  cfg.eval_every = 1;
  cfg.eval_goals = 2;
  cfg.temperature = 0.5;
  cfg.seed = 17;

  RlResult plain = train_rl(RlPhase::us, us, ds, vocab, world, corpus, ids, goals, goals, cfg);
  REQUIRE(plain.history.size() == 1);
  CHECK(plain.history[0].mean_us_reward == 0.0);
  CHECK(plain.history[0].policy_loss == 0.0);  // all weights zero, step skipped

  cfg.reward_baseline = 0.5;
  RlResult centered = train_rl(RlPhase::us, us, ds, vocab, world, corpus, ids, goals, goals, cfg);
  REQUIRE(centered.history.size() == 1);
  // History keeps the raw reward; the baseline only recenters token weights,
  // here onto failures, whose negative weights drive the loss below zero.
  CHECK(centered.history[0].mean_us_reward == 0.0);
  CHECK(centered.history[0].policy_loss < 0.0);
}

TEST_CASE("supervised training reduces the loss on a few dialogs") {
  const corpus::Corpus& corpus = fixtures::shared_corpus();
  const codec::Vocab& vocab = fixtures::shared_vocab();
  std::vector<std::string> ids = fixtures::dialog_ids(corpus);
  std::vector<std::string> train(ids.begin(), ids.begin() + 6);
  std::vector<std::string> dev(ids.begin() + 6, ids.begin() + 9);

  lm::Params init = lm::Params::init(fixtures::tiny_config(vocab.size()), 19);
  SlConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.lr = 3e-3;
  cfg.patience = 10;
  cfg.seed = 5;
  SlResult res = train_supervised(init, vocab, corpus, train, dev, codec::CodecKind::sga_ds, cfg);

  REQUIRE(res.train_loss.size() == 3);
  REQUIRE(res.dev_loss.size() == 3);
  CHECK(res.train_loss.back() < res.train_loss.front());
  CHECK(res.steps > 0);
  CHECK(res.best_epoch >= 0);

  // the returned parameters are the best dev snapshot
  double best = *std::min_element(res.dev_loss.begin(), res.dev_loss.end());
  CHECK(res.dev_loss[static_cast<std::size_t>(res.best_epoch)] == best);
  double nll = corpus_nll(res.params, vocab, corpus, dev, codec::CodecKind::sga_ds);
  CHECK(nll == doctest::Approx(best).epsilon(1e-12));

  // training twice with the same seed is bit-reproducible
  SlResult res2 = train_supervised(init, vocab, corpus, train, dev, codec::CodecKind::sga_ds, cfg);
  CHECK(lm::same_params(res.params, res2.params));
  CHECK(res.train_loss == res2.train_loss);
}

TEST_CASE("supervised training rejects an empty window set") {
  const corpus::Corpus& corpus = fixtures::shared_corpus();
  const codec::Vocab& vocab = fixtures::shared_vocab();
  lm::Params init = lm::Params::init(fixtures::tiny_config(vocab.size()), 19);
  SlConfig cfg;
  CHECK_THROWS_AS(
      train_supervised(init, vocab, corpus, {}, {}, codec::CodecKind::sga_ds, cfg),
      ConfigError);
}
