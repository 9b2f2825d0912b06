#pragma once
// Experiment configuration: defaults, strict JSON loading, dotted-path
// overrides, and the per-run manifest every command writes.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tod/common.hpp"

namespace tod::config {

struct ExperimentConfig {
  struct WorldSection {
    int domains = 3;
    int entities_per_domain = 20;
    std::uint64_t seed = 7;
  };
  struct CorpusSection {
    int dialogs = 1000;
    std::uint64_t seed = 11;
  };
  struct ModelSection {
    int layers = 2;
    int heads = 4;
    int dim = 128;
    int ff = 512;
    int max_seq = 512;
    double dropout = 0.0;
  };
  struct SlSection {
    int epochs = 50;
    int batch = 16;
    double lr = 1e-4;
    double warmup_frac = 0.2;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    int patience = 4;
  };
  struct RlSection {
    int cycles = 100;
    int episodes = 128;
    double lr = 2e-5;
    double gamma = 0.99;
    double temperature = 1.0;
    std::string reward = "success";
    double reward_baseline = 0.0;
    std::string scheme = "bar";
    int sl_batch = 8;
    int eval_every = 2;
    int eval_goals = 200;
    int train_goals = 2000;
  };
  struct EvalSection {
    int max_turns = 20;
    int max_segment_tokens = 64;
    int goals = 200;
    int sig_resamples = 10000;
  };

  WorldSection world;
  CorpusSection corpus;
  ModelSection model;
  SlSection sl;
  RlSection rl;
  EvalSection eval;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 keeps the runtime default
};

// Canonical JSON snapshot (sorted keys, 2-space indent).
std::string config_to_json(const ExperimentConfig& config);

// Strict parse: every key must exist in the defaults with a compatible type.
ExperimentConfig config_from_json(const std::string& text);

// Loads `path` (or pure defaults when empty), then applies "section.key=value"
// overrides in order. Unknown path, unknown key, or type mismatch throws
// ConfigError.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides);

// Git-describe output when available, a fixed fallback tag otherwise.
std::string tool_version();

// Writes <dir>/manifest.json (command, version, args, full config snapshot),
// creating the directory if needed.
void write_manifest(const std::string& dir, const std::string& command,
                    const std::map<std::string, std::string>& args,
                    const ExperimentConfig& config);

}  // namespace tod::config
