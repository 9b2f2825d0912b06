#include "tod/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include "tod/agents.hpp"
#include "tod/arena.hpp"
#include "tod/codec.hpp"
#include "tod/config.hpp"
#include "tod/corpus.hpp"
#include "tod/eval.hpp"
#include "tod/lm.hpp"
#include "tod/rl.hpp"
#include "tod/world.hpp"

namespace tod::cli {

namespace {

using config::ExperimentConfig;
using nlohmann::json;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::string seed_text;     // applied as a top-level override when set
  std::string threads_text;  // likewise

  ExperimentConfig resolve() const {
    std::vector<std::string> all = overrides;
    if (!seed_text.empty()) all.push_back("seed=" + seed_text);
    if (!threads_text.empty()) all.push_back("threads=" + threads_text);
    ExperimentConfig cfg = config::load_config(config_path, all);
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonOpts& opts, const std::string& default_out) {
  opts.out = default_out;
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.overrides, "config override section.key=value (repeatable)");
  cmd->add_option("--out", opts.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", opts.seed_text, "top-level seed override");
  cmd->add_option("--threads", opts.threads_text, "worker thread cap (0 = runtime default)");
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

world::World world_from(const ExperimentConfig& cfg) {
  world::WorldConfig wc;
  wc.domains = cfg.world.domains;
  wc.entities_per_domain = cfg.world.entities_per_domain;
  wc.seed = cfg.world.seed;
  return world::build_world(wc);
}

lm::ModelConfig model_from(const ExperimentConfig& cfg, int vocab_size) {
  lm::ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.n_layers = cfg.model.layers;
  mc.n_heads = cfg.model.heads;
  mc.d_model = cfg.model.dim;
  mc.d_ff = cfg.model.ff;
  mc.max_seq_len = cfg.model.max_seq;
  mc.dropout = cfg.model.dropout;
  mc.validate();
  return mc;
}

rl::SlConfig sl_from(const ExperimentConfig& cfg) {
  rl::SlConfig c;
  c.epochs = cfg.sl.epochs;
  c.batch_size = cfg.sl.batch;
  c.lr = cfg.sl.lr;
  c.warmup_frac = cfg.sl.warmup_frac;
  c.weight_decay = cfg.sl.weight_decay;
  c.grad_clip = cfg.sl.grad_clip;
  c.patience = cfg.sl.patience;
  c.seed = cfg.seed;
  return c;
}

rl::RlConfig rl_from(const ExperimentConfig& cfg) {
  rl::RlConfig c;
  c.cycles = cfg.rl.cycles;
  c.episodes_per_cycle = cfg.rl.episodes;
  c.lr = cfg.rl.lr;
  c.gamma = cfg.rl.gamma;
  c.temperature = cfg.rl.temperature;
  c.reward = rl::parse_reward_mode(cfg.rl.reward);
  c.reward_baseline = cfg.rl.reward_baseline;
  c.scheme = rl::parse_policy_scheme(cfg.rl.scheme);
  c.sl_batch = cfg.rl.sl_batch;
  c.max_turns = cfg.eval.max_turns;
  c.max_segment_tokens = cfg.eval.max_segment_tokens;
  c.eval_every = cfg.rl.eval_every;
  c.eval_goals = cfg.rl.eval_goals;
  c.seed = cfg.seed;
  return c;
}

std::vector<world::UserGoal> sample_goals(const world::World& world, int n, std::uint64_t seed,
                                          std::uint64_t salt) {
  std::vector<world::UserGoal> goals(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    goals[static_cast<std::size_t>(i)] = world::sample_goal(derive_seed(seed, salt, i), world);
  return goals;
}

std::vector<std::string> all_dialog_ids(const corpus::Corpus& c) {
  std::vector<std::string> ids;
  ids.reserve(c.dialogs.size());
  for (const auto& [id, d] : c.dialogs) ids.push_back(id);
  return ids;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// --- gen-world -----------------------------------------------------------------

int cmd_gen_world(const CommonOpts& opts) {
  ExperimentConfig cfg = opts.resolve();
  world::World world = world_from(cfg);
  std::filesystem::create_directories(opts.out);

  json j;
  j["config"] = {{"domains", cfg.world.domains},
                 {"entities_per_domain", cfg.world.entities_per_domain},
                 {"seed", cfg.world.seed}};
  for (const world::DomainSchema& s : world.schemas) {
    json sj;
    sj["bookable"] = s.bookable;
    for (const world::SlotDef& slot : s.informables)
      sj["informables"][slot.name] = slot.values;
    sj["requestables"] = s.requestables;
    const world::Database* db = world.database(s.name);
    json ents = json::array();
    for (const world::Entity& e : db->entities)
      ents.push_back({{"name", e.name},
                      {"informable", e.informable},
                      {"requestable", e.requestable}});
    sj["entities"] = std::move(ents);
    j["domains"][s.name] = std::move(sj);
  }
  write_text(opts.out + "/world.json", j.dump(2) + "\n");
  config::write_manifest(opts.out, "gen-world", {}, cfg);

  std::printf("gen-world: %d domains, %d entities each -> %s/world.json\n", cfg.world.domains,
              cfg.world.entities_per_domain, opts.out.c_str());
  return 0;
}

// --- gen-corpus ----------------------------------------------------------------

int cmd_gen_corpus(const CommonOpts& opts, int dialogs_flag) {
  ExperimentConfig cfg = opts.resolve();
  if (dialogs_flag > 0) cfg.corpus.dialogs = dialogs_flag;
  world::World world = world_from(cfg);

  corpus::Corpus corpus = corpus::generate_corpus(world, cfg.corpus.dialogs, cfg.corpus.seed);
  int respelled = corpus::normalize_spelling(corpus, corpus::default_spelling_fixes());
  int cleaned = corpus::clean_belief_states(corpus);
  corpus::Splits splits = corpus::split_corpus(corpus, cfg.corpus.seed);

  std::filesystem::create_directories(opts.out);
  corpus::save_corpus(corpus, opts.out + "/corpus.json");
  corpus::save_splits(splits, opts.out + "/splits.json");
  config::write_manifest(opts.out, "gen-corpus",
                         {{"dialogs", std::to_string(cfg.corpus.dialogs)}}, cfg);

  std::printf(
      "gen-corpus: %d dialogs (train %zu / dev %zu / test %zu), %d respelled, %d cleaned -> %s\n",
      cfg.corpus.dialogs, splits.train.size(), splits.dev.size(), splits.test.size(), respelled,
      cleaned, opts.out.c_str());
  return 0;
}

// --- train-sl ------------------------------------------------------------------

int cmd_train_sl(const CommonOpts& opts, const std::string& agent, const std::string& codec_name,
                 const std::string& corpus_path, const std::string& splits_path) {
  ExperimentConfig cfg = opts.resolve();
  world::World world = world_from(cfg);
  corpus::Corpus corpus = corpus::load_corpus(corpus_path);
  corpus::Splits splits = corpus::load_splits(splits_path);
  codec::CodecKind kind = codec::parse_codec_kind(codec_name, agent);

  codec::Vocab vocab = codec::Vocab::build(corpus, world);
  lm::ModelConfig mc = model_from(cfg, vocab.size());
  std::uint64_t init_salt = agent == "ds" ? 0xd5 : 0x05;
  lm::Params init = lm::Params::init(mc, derive_seed(cfg.seed, init_salt));

  rl::SlResult result = rl::train_supervised(init, vocab, corpus, splits.train, splits.dev, kind,
                                             sl_from(cfg));

  std::filesystem::create_directories(opts.out);
  vocab.save(opts.out + "/vocab.json");
  lm::save_checkpoint(result.params, opts.out + "/model.ckpt");

  std::string curves = "epoch,train_loss,dev_loss\n";
  for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
    char row[128];
    if (e < result.dev_loss.size())
      std::snprintf(row, sizeof row, "%zu,%.6f,%.6f\n", e, result.train_loss[e],
                    result.dev_loss[e]);
    else
      std::snprintf(row, sizeof row, "%zu,%.6f,\n", e, result.train_loss[e]);
    curves += row;
  }
  write_text(opts.out + "/curves.csv", curves);
  config::write_manifest(opts.out, "train-sl",
                         {{"agent", agent},
                          {"codec", codec_name},
                          {"corpus", corpus_path},
                          {"splits", splits_path}},
                         cfg);

  double best_dev = result.best_epoch >= 0 && !result.dev_loss.empty()
                        ? result.dev_loss[static_cast<std::size_t>(result.best_epoch)]
                        : -1.0;
  std::printf("train-sl %s/%s: %d steps, %zu epochs, best epoch %d (dev nll %.4f) -> %s\n",
              agent.c_str(), codec_name.c_str(), result.steps, result.train_loss.size(),
              result.best_epoch, best_dev, opts.out.c_str());
  return 0;
}

// --- train-rl ------------------------------------------------------------------

int cmd_train_rl(const CommonOpts& opts, const std::string& phase_name,
                 const std::string& us_path, const std::string& ds_path,
                 const std::string& vocab_path, const std::string& corpus_path,
                 const std::string& splits_path) {
  ExperimentConfig cfg = opts.resolve();
  world::World world = world_from(cfg);
  corpus::Corpus corpus = corpus::load_corpus(corpus_path);
  corpus::Splits splits = corpus::load_splits(splits_path);
  codec::Vocab vocab = codec::Vocab::load(vocab_path);
  lm::Params us = lm::load_checkpoint(us_path);
  lm::Params ds = lm::load_checkpoint(ds_path);
  rl::RlPhase phase = rl::parse_rl_phase(phase_name);

  std::vector<world::UserGoal> train_goals =
      sample_goals(world, cfg.rl.train_goals, cfg.seed, 0x6041);
  std::vector<world::UserGoal> dev_goals = sample_goals(world, cfg.rl.eval_goals, cfg.seed, 0x0deb);

  rl::RlResult result = rl::train_rl(phase, us, ds, vocab, world, corpus, splits.train,
                                     train_goals, dev_goals, rl_from(cfg));

  std::filesystem::create_directories(opts.out);
  lm::save_checkpoint(result.us, opts.out + "/us.ckpt");
  lm::save_checkpoint(result.ds, opts.out + "/ds.ckpt");

  std::string hist = "phase,cycle,mean_us_reward,mean_ds_reward,policy_loss,sl_loss,dev_success\n";
  for (const rl::RlHistoryRow& r : result.history) {
    char row[192];
    std::snprintf(row, sizeof row, "%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.phase.c_str(), r.cycle,
                  r.mean_us_reward, r.mean_ds_reward, r.policy_loss, r.sl_loss, r.dev_success);
    hist += row;
  }
  write_text(opts.out + "/history.csv", hist);

  json summary = {{"baseline_success", result.baseline_success},
                  {"best_success", result.best_success},
                  {"phase", phase_name},
                  {"cycles", cfg.rl.cycles},
                  {"episodes_per_cycle", cfg.rl.episodes},
                  {"reward", cfg.rl.reward},
                  {"reward_baseline", cfg.rl.reward_baseline},
                  {"scheme", cfg.rl.scheme}};
  write_text(opts.out + "/summary.json", summary.dump(2) + "\n");
  config::write_manifest(opts.out, "train-rl",
                         {{"phase", phase_name},
                          {"us", us_path},
                          {"ds", ds_path},
                          {"vocab", vocab_path},
                          {"corpus", corpus_path},
                          {"splits", splits_path}},
                         cfg);

  std::printf("train-rl %s: online success %.3f -> %.3f (%s reward, scheme %s) -> %s\n",
              phase_name.c_str(), result.baseline_success, result.best_success,
              cfg.rl.reward.c_str(), cfg.rl.scheme.c_str(), opts.out.c_str());
  return 0;
}

// --- interact ------------------------------------------------------------------

int cmd_interact(const CommonOpts& opts, int n_goals, const std::string& us_path,
                 const std::string& ds_path, const std::string& vocab_path, double temperature) {
  ExperimentConfig cfg = opts.resolve();
  world::World world = world_from(cfg);
  codec::Vocab vocab = codec::Vocab::load(vocab_path);
  lm::Params us = lm::load_checkpoint(us_path);
  lm::Params ds = lm::load_checkpoint(ds_path);

  std::vector<world::UserGoal> goals = sample_goals(world, n_goals, cfg.seed, 0x90a1);
  auto usfn = arena::make_us_policy(&us, &vocab, temperature, cfg.eval.max_segment_tokens);
  auto dsfn = arena::make_ds_policy(&ds, &vocab, &world, temperature,
                                    cfg.eval.max_segment_tokens);
  std::vector<arena::Episode> episodes =
      arena::run_batch(usfn, dsfn, goals, derive_seed(cfg.seed, 0x17ac), cfg.eval.max_turns);

  corpus::Corpus transcript;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "ep%05zu", i);
    corpus::Dialog d = arena::episode_to_dialog(episodes[i], world, id);
    transcript.dialogs[d.id] = std::move(d);
  }
  eval::OnlineMetrics metrics = eval::evaluate_online(episodes, world);

  std::filesystem::create_directories(opts.out);
  corpus::save_corpus(transcript, opts.out + "/episodes.json");
  json mj = {{"success", metrics.success},
             {"inform", metrics.inform},
             {"avg_turns", metrics.avg_turns},
             {"n_episodes", metrics.n_episodes},
             {"terminations", metrics.terminations}};
  write_text(opts.out + "/metrics.json", mj.dump(2) + "\n");
  config::write_manifest(opts.out, "interact",
                         {{"n_goals", std::to_string(n_goals)},
                          {"us", us_path},
                          {"ds", ds_path},
                          {"vocab", vocab_path}},
                         cfg);

  std::printf("interact: %d episodes, success %.3f, inform %.3f, avg turns %.2f -> %s\n",
              metrics.n_episodes, metrics.success, metrics.inform, metrics.avg_turns,
              opts.out.c_str());
  return 0;
}

// --- evaluate ------------------------------------------------------------------

int cmd_evaluate(const CommonOpts& opts, const std::string& mode, const std::string& us_path,
                 const std::string& ds_path, const std::string& vocab_path,
                 const std::string& corpus_path, const std::string& splits_path,
                 const std::string& split_name) {
  ExperimentConfig cfg = opts.resolve();
  world::World world = world_from(cfg);
  std::filesystem::create_directories(opts.out);

  json mj;
  std::string csv = "metric,value\n";
  auto add = [&](const std::string& k, double v) {
    mj[k] = v;
    char row[96];
    std::snprintf(row, sizeof row, "%s,%.6f\n", k.c_str(), v);
    csv += row;
  };

  if (mode == "offline") {
    if (ds_path.empty() || vocab_path.empty() || corpus_path.empty() || splits_path.empty())
      throw ConfigError("evaluate --mode offline needs --ds, --vocab, --corpus, --splits");
    corpus::Corpus corpus = corpus::load_corpus(corpus_path);
    corpus::Splits splits = corpus::load_splits(splits_path);
    codec::Vocab vocab = codec::Vocab::load(vocab_path);
    lm::Params ds = lm::load_checkpoint(ds_path);
    const std::vector<std::string>& ids = split_name == "train" ? splits.train
                                          : split_name == "dev" ? splits.dev
                                                                : splits.test;
    eval::OfflineMetrics m = eval::evaluate_offline(ds, vocab, world, corpus, ids);
    add("jga", m.jga);
    add("bleu", m.bleu);
    add("inform", m.inform);
    add("success", m.success);
    add("combined", m.combined);
    mj["n_dialogs"] = m.n_dialogs;
    mj["n_turns"] = m.n_turns;
    std::printf("evaluate offline (%s): jga %.3f bleu %.2f inform %.3f success %.3f combined %.2f\n",
                split_name.c_str(), m.jga, m.bleu, m.inform, m.success, m.combined);
  } else if (mode == "online") {
    if (us_path.empty() || ds_path.empty() || vocab_path.empty())
      throw ConfigError("evaluate --mode online needs --us, --ds, --vocab");
    codec::Vocab vocab = codec::Vocab::load(vocab_path);
    lm::Params us = lm::load_checkpoint(us_path);
    lm::Params ds = lm::load_checkpoint(ds_path);
    std::vector<world::UserGoal> goals = sample_goals(world, cfg.eval.goals, cfg.seed, 0xe7a1);
    auto usfn = arena::make_us_policy(&us, &vocab, 0.0, cfg.eval.max_segment_tokens);
    auto dsfn = arena::make_ds_policy(&ds, &vocab, &world, 0.0, cfg.eval.max_segment_tokens);
    std::vector<arena::Episode> episodes =
        arena::run_batch(usfn, dsfn, goals, derive_seed(cfg.seed, 0xe7a2), cfg.eval.max_turns);
    eval::OnlineMetrics m = eval::evaluate_online(episodes, world);
    add("success", m.success);
    add("inform", m.inform);
    add("avg_turns", m.avg_turns);
    mj["n_episodes"] = m.n_episodes;
    mj["terminations"] = m.terminations;
    std::printf("evaluate online: success %.3f inform %.3f avg turns %.2f over %d episodes\n",
                m.success, m.inform, m.avg_turns, m.n_episodes);
  } else {
    throw ConfigError("evaluate: unknown mode \"" + mode + "\" (offline or online)");
  }

  write_text(opts.out + "/metrics.json", mj.dump(2) + "\n");
  write_text(opts.out + "/metrics.csv", csv);
  config::write_manifest(opts.out, "evaluate",
                         {{"mode", mode},
                          {"split", split_name},
                          {"us", us_path},
                          {"ds", ds_path},
                          {"vocab", vocab_path},
                          {"corpus", corpus_path},
                          {"splits", splits_path}},
                         cfg);
  return 0;
}

// --- attn-stats ----------------------------------------------------------------

int cmd_attn_stats(const CommonOpts& opts, const std::string& model_path,
                   const std::string& vocab_path, const std::string& corpus_path,
                   const std::string& splits_path, const std::string& agent, int max_samples) {
  ExperimentConfig cfg = opts.resolve();
  corpus::Corpus corpus = corpus::load_corpus(corpus_path);
  corpus::Splits splits = corpus::load_splits(splits_path);
  codec::Vocab vocab = codec::Vocab::load(vocab_path);
  lm::Params params = lm::load_checkpoint(model_path);
  codec::CodecKind kind = codec::parse_codec_kind("sga", agent);

  auto report = eval::attention_report(params, vocab, corpus, splits.dev, kind, max_samples);

  std::filesystem::create_directories(opts.out);
  std::string csv = "from,to,mass\n";
  json j;
  for (const auto& [row, cols] : report) {
    for (const auto& [col, mass] : cols) {
      char line[128];
      std::snprintf(line, sizeof line, "%s,%s,%.6f\n", row.c_str(), col.c_str(), mass);
      csv += line;
      j[row][col] = mass;
    }
  }
  write_text(opts.out + "/attention.csv", csv);
  write_text(opts.out + "/attention.json", j.dump(2) + "\n");
  config::write_manifest(opts.out, "attn-stats",
                         {{"model", model_path},
                          {"vocab", vocab_path},
                          {"corpus", corpus_path},
                          {"splits", splits_path},
                          {"agent", agent},
                          {"samples", std::to_string(max_samples)}},
                         cfg);

  if (report.count("belief")) {
    const auto& b = report.at("belief");
    double near = (b.count("prev_belief") ? b.at("prev_belief") : 0.0) +
                  (b.count("user") ? b.at("user") : 0.0);
    double prev_r = b.count("prev_response") ? b.at("prev_response") : 0.0;
    std::printf("attn-stats: belief row mass on prev_belief+user %.4f vs prev_response %.4f\n",
                near, prev_r);
  }
  std::printf("attn-stats: %zu segment rows -> %s/attention.csv\n", report.size(),
              opts.out.c_str());
  return 0;
}

// --- bench ---------------------------------------------------------------------

int cmd_bench(const CommonOpts& opts, const std::string& corpus_path, int bench_dialogs) {
  ExperimentConfig cfg = opts.resolve();
  world::World world = world_from(cfg);
  corpus::Corpus corpus = corpus::load_corpus(corpus_path);
  codec::Vocab vocab = codec::Vocab::build(corpus, world);
  std::vector<std::string> ids = all_dialog_ids(corpus);

  std::vector<std::string> subset(
      ids.begin(), ids.begin() + std::min<std::size_t>(ids.size(),
                                                       static_cast<std::size_t>(bench_dialogs)));

  struct Mode {
    const char* label;
    codec::CodecKind kind;
  };
  const Mode modes[] = {{"sga", codec::CodecKind::sga_ds},
                        {"turn", codec::CodecKind::turn},
                        {"session", codec::CodecKind::session}};

  std::string csv = "mode,mean_len,std_len,max_len,windows,epoch_seconds\n";
  std::printf("%-8s %10s %10s %8s %8s %14s\n", "mode", "mean_len", "std_len", "max_len",
              "windows", "epoch_seconds");
  for (const Mode& m : modes) {
    eval::SeqStats stats = eval::sequence_stats(vocab, corpus, ids, m.kind);

    lm::ModelConfig mc = model_from(cfg, vocab.size());
    lm::Params params = lm::Params::init(mc, derive_seed(cfg.seed, 0xbe7c));
    rl::SlConfig sc = sl_from(cfg);
    sc.epochs = 1;
    double t0 = now_seconds();
    rl::train_supervised(params, vocab, corpus, subset, {}, m.kind, sc);
    double dt = now_seconds() - t0;

    char row[160];
    std::snprintf(row, sizeof row, "%s,%.2f,%.2f,%d,%d,%.3f\n", m.label, stats.mean,
                  stats.stddev, stats.max, stats.n, dt);
    csv += row;
    std::printf("%-8s %10.2f %10.2f %8d %8d %14.3f\n", m.label, stats.mean, stats.stddev,
                stats.max, stats.n, dt);
  }

  const int gen_n = 50;
  double t0 = now_seconds();
  corpus::generate_corpus(world, gen_n, derive_seed(cfg.seed, 0xbe7d));
  double per_dialog = (now_seconds() - t0) / gen_n;
  char row[96];
  std::snprintf(row, sizeof row, "generation,,,,%d,%.6f\n", gen_n, per_dialog);
  csv += row;
  std::printf("scripted generation: %.6f s/dialog\n", per_dialog);

  std::filesystem::create_directories(opts.out);
  write_text(opts.out + "/bench.csv", csv);
  config::write_manifest(opts.out, "bench",
                         {{"corpus", corpus_path},
                          {"bench_dialogs", std::to_string(bench_dialogs)}},
                         cfg);
  return 0;
}

// --- sig-test ------------------------------------------------------------------

std::vector<double> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<double> scores;
  std::string line;
  while (std::getline(in, line)) {
    std::string trimmed;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) trimmed += c;
    if (trimmed.empty()) continue;
    try {
      scores.push_back(std::stod(trimmed));
    } catch (const std::exception&) {
      throw ParseError(path + ": not a number: \"" + line + "\"");
    }
  }
  if (scores.empty()) throw ParseError(path + ": no scores");
  return scores;
}

int cmd_sig_test(const CommonOpts& opts, const std::string& a_path, const std::string& b_path,
                 const std::string& metric) {
  ExperimentConfig cfg = opts.resolve();
  std::vector<double> a = read_scores(a_path);
  std::vector<double> b = read_scores(b_path);
  double p = eval::matched_pairs_test(a, b, cfg.eval.sig_resamples, cfg.seed);

  std::filesystem::create_directories(opts.out);
  char row[256];
  std::snprintf(row, sizeof row, "pair,metric,p\n%s|%s,%s,%.6f\n", a_path.c_str(), b_path.c_str(),
                metric.c_str(), p);
  write_text(opts.out + "/sig.csv", row);
  config::write_manifest(opts.out, "sig-test",
                         {{"a", a_path}, {"b", b_path}, {"metric", metric}}, cfg);

  std::printf("sig-test %s: n=%zu p=%.6f\n", metric.c_str(), a.size(), p);
  return 0;
}

// --- report --------------------------------------------------------------------

void flatten(const json& j, const std::string& prefix, std::string& csv,
             const std::string& source) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), csv, source);
  } else if (j.is_number()) {
    char row[256];
    std::snprintf(row, sizeof row, "%s,%s,%.6f\n", source.c_str(), prefix.c_str(),
                  j.get<double>());
    csv += row;
  }
}

int cmd_report(const CommonOpts& opts, const std::vector<std::string>& inputs) {
  ExperimentConfig cfg = opts.resolve();
  json merged;
  std::string csv = "source,key,value\n";
  for (const std::string& path : inputs) {
    json j;
    try {
      j = json::parse(read_text(path));
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    merged[path] = j;
    flatten(j, "", csv, path);
  }
  std::filesystem::create_directories(opts.out);
  write_text(opts.out + "/report.json", merged.dump(2) + "\n");
  write_text(opts.out + "/report.csv", csv);
  config::write_manifest(opts.out, "report", {{"inputs", std::to_string(inputs.size())}}, cfg);
  std::printf("report: merged %zu inputs -> %s/report.json\n", inputs.size(), opts.out.c_str());
  return 0;
}

}  // namespace

int run_command(int argc, const char* const* argv) {
  CLI::App app{"synthetic task-oriented dialog lab"};
  app.require_subcommand(1);
  int exit_code = 0;

  CommonOpts gw_opts;
  CLI::App* gw = app.add_subcommand("gen-world", "build the synthetic world and dump it");
  add_common(gw, gw_opts, "runs/world");
  gw->callback([&] { exit_code = cmd_gen_world(gw_opts); });

  CommonOpts gc_opts;
  int gc_dialogs = 0;
  CLI::App* gc = app.add_subcommand("gen-corpus", "script a gold dialog corpus and split it");
  add_common(gc, gc_opts, "runs/corpus");
  gc->add_option("--dialogs", gc_dialogs, "dialog count (overrides config)");
  gc->callback([&] { exit_code = cmd_gen_corpus(gc_opts, gc_dialogs); });

  CommonOpts sl_opts;
  std::string sl_agent = "ds", sl_codec = "sga", sl_corpus, sl_splits;
  CLI::App* sl = app.add_subcommand("train-sl", "supervised training of one agent");
  add_common(sl, sl_opts, "runs/sl");
  sl->add_option("--agent", sl_agent, "ds or us")->check(CLI::IsMember({"ds", "us"}));
  sl->add_option("--codec", sl_codec, "sga, turn, or session")
      ->check(CLI::IsMember({"sga", "turn", "session"}));
  sl->add_option("--corpus", sl_corpus, "corpus JSON")->required();
  sl->add_option("--splits", sl_splits, "splits JSON")->required();
  sl->callback(
      [&] { exit_code = cmd_train_sl(sl_opts, sl_agent, sl_codec, sl_corpus, sl_splits); });

  CommonOpts rl_opts;
  std::string rl_phase = "joint", rl_us, rl_ds, rl_vocab, rl_corpus, rl_splits;
  CLI::App* rlc = app.add_subcommand("train-rl", "policy-gradient fine-tuning in self-play");
  add_common(rlc, rl_opts, "runs/rl");
  rlc->add_option("--phase", rl_phase, "us, ds, or joint")
      ->check(CLI::IsMember({"us", "ds", "joint"}));
  rlc->add_option("--us", rl_us, "user-simulator checkpoint")->required();
  rlc->add_option("--ds", rl_ds, "dialog-system checkpoint")->required();
  rlc->add_option("--vocab", rl_vocab, "vocabulary JSON")->required();
  rlc->add_option("--corpus", rl_corpus, "corpus JSON")->required();
  rlc->add_option("--splits", rl_splits, "splits JSON")->required();
  rlc->callback([&] {
    exit_code = cmd_train_rl(rl_opts, rl_phase, rl_us, rl_ds, rl_vocab, rl_corpus, rl_splits);
  });

  CommonOpts it_opts;
  int it_goals = 10;
  double it_temp = 0.0;
  std::string it_us, it_ds, it_vocab;
  CLI::App* it = app.add_subcommand("interact", "run self-play episodes and save transcripts");
  add_common(it, it_opts, "runs/interact");
  it->add_option("--n-goals", it_goals, "episode count");
  it->add_option("--temperature", it_temp, "sampling temperature (0 = greedy)");
  it->add_option("--us", it_us, "user-simulator checkpoint")->required();
  it->add_option("--ds", it_ds, "dialog-system checkpoint")->required();
  it->add_option("--vocab", it_vocab, "vocabulary JSON")->required();
  it->callback(
      [&] { exit_code = cmd_interact(it_opts, it_goals, it_us, it_ds, it_vocab, it_temp); });

  CommonOpts ev_opts;
  std::string ev_mode = "offline", ev_us, ev_ds, ev_vocab, ev_corpus, ev_splits,
              ev_split = "test";
  CLI::App* ev = app.add_subcommand("evaluate", "offline corpus metrics or online self-play");
  add_common(ev, ev_opts, "runs/eval");
  ev->add_option("--mode", ev_mode, "offline or online")
      ->check(CLI::IsMember({"offline", "online"}));
  ev->add_option("--us", ev_us, "user-simulator checkpoint (online)");
  ev->add_option("--ds", ev_ds, "dialog-system checkpoint");
  ev->add_option("--vocab", ev_vocab, "vocabulary JSON");
  ev->add_option("--corpus", ev_corpus, "corpus JSON (offline)");
  ev->add_option("--splits", ev_splits, "splits JSON (offline)");
  ev->add_option("--split", ev_split, "train, dev, or test")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  ev->callback([&] {
    exit_code =
        cmd_evaluate(ev_opts, ev_mode, ev_us, ev_ds, ev_vocab, ev_corpus, ev_splits, ev_split);
  });

  CommonOpts at_opts;
  std::string at_model, at_vocab, at_corpus, at_splits, at_agent = "ds";
  int at_samples = 64;
  CLI::App* at = app.add_subcommand("attn-stats", "segment-level attention mass report");
  add_common(at, at_opts, "runs/attn");
  at->add_option("--model", at_model, "checkpoint")->required();
  at->add_option("--vocab", at_vocab, "vocabulary JSON")->required();
  at->add_option("--corpus", at_corpus, "corpus JSON")->required();
  at->add_option("--splits", at_splits, "splits JSON")->required();
  at->add_option("--agent", at_agent, "ds or us")->check(CLI::IsMember({"ds", "us"}));
  at->add_option("--samples", at_samples, "max windows to average");
  at->callback([&] {
    exit_code =
        cmd_attn_stats(at_opts, at_model, at_vocab, at_corpus, at_splits, at_agent, at_samples);
  });

  CommonOpts be_opts;
  std::string be_corpus;
  int be_dialogs = 10;
  CLI::App* be = app.add_subcommand("bench", "sequence-length stats and timing per codec");
  add_common(be, be_opts, "runs/bench");
  be->add_option("--corpus", be_corpus, "corpus JSON")->required();
  be->add_option("--bench-dialogs", be_dialogs, "dialogs used for the timed epoch");
  be->callback([&] { exit_code = cmd_bench(be_opts, be_corpus, be_dialogs); });

  CommonOpts st_opts;
  std::string st_a, st_b, st_metric = "score";
  CLI::App* st = app.add_subcommand("sig-test", "matched-pairs permutation test on score files");
  add_common(st, st_opts, "runs/sig");
  st->add_option("--a", st_a, "scores file, one per line")->required();
  st->add_option("--b", st_b, "scores file, one per line")->required();
  st->add_option("--metric", st_metric, "label for the CSV row");
  st->callback([&] { exit_code = cmd_sig_test(st_opts, st_a, st_b, st_metric); });

  CommonOpts rp_opts;
  std::vector<std::string> rp_inputs;
  CLI::App* rp = app.add_subcommand("report", "merge metric JSON files into one report");
  add_common(rp, rp_opts, "runs/report");
  rp->add_option("inputs", rp_inputs, "metric JSON files")->required();
  rp->callback([&] { exit_code = cmd_report(rp_opts, rp_inputs); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return exit_code;
}

}  // namespace tod::cli
