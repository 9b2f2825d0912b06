#include "tod/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tod::config {

using nlohmann::json;

namespace {

json to_json_tree(const ExperimentConfig& c) {
  json j;
  j["world"] = {{"domains", c.world.domains},
                {"entities_per_domain", c.world.entities_per_domain},
                {"seed", c.world.seed}};
  j["corpus"] = {{"dialogs", c.corpus.dialogs}, {"seed", c.corpus.seed}};
  j["model"] = {{"layers", c.model.layers}, {"heads", c.model.heads},
                {"dim", c.model.dim},       {"ff", c.model.ff},
                {"max_seq", c.model.max_seq}, {"dropout", c.model.dropout}};
  j["sl"] = {{"epochs", c.sl.epochs},
             {"batch", c.sl.batch},
             {"lr", c.sl.lr},
             {"warmup_frac", c.sl.warmup_frac},
             {"weight_decay", c.sl.weight_decay},
             {"grad_clip", c.sl.grad_clip},
             {"patience", c.sl.patience}};
  j["rl"] = {{"cycles", c.rl.cycles},
             {"episodes", c.rl.episodes},
             {"lr", c.rl.lr},
             {"gamma", c.rl.gamma},
             {"temperature", c.rl.temperature},
             {"reward", c.rl.reward},
             {"reward_baseline", c.rl.reward_baseline},
             {"scheme", c.rl.scheme},
             {"sl_batch", c.rl.sl_batch},
             {"eval_every", c.rl.eval_every},
             {"eval_goals", c.rl.eval_goals},
             {"train_goals", c.rl.train_goals}};
  j["eval"] = {{"max_turns", c.eval.max_turns},
               {"max_segment_tokens", c.eval.max_segment_tokens},
               {"goals", c.eval.goals},
               {"sig_resamples", c.eval.sig_resamples}};
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

ExperimentConfig from_json_tree(const json& j) {
  ExperimentConfig c;
  try {
    const json& w = j.at("world");
    c.world.domains = w.at("domains").get<int>();
    c.world.entities_per_domain = w.at("entities_per_domain").get<int>();
    c.world.seed = w.at("seed").get<std::uint64_t>();
    const json& co = j.at("corpus");
    c.corpus.dialogs = co.at("dialogs").get<int>();
    c.corpus.seed = co.at("seed").get<std::uint64_t>();
    const json& m = j.at("model");
    c.model.layers = m.at("layers").get<int>();
    c.model.heads = m.at("heads").get<int>();
    c.model.dim = m.at("dim").get<int>();
    c.model.ff = m.at("ff").get<int>();
    c.model.max_seq = m.at("max_seq").get<int>();
    c.model.dropout = m.at("dropout").get<double>();
    const json& s = j.at("sl");
    c.sl.epochs = s.at("epochs").get<int>();
    c.sl.batch = s.at("batch").get<int>();
    c.sl.lr = s.at("lr").get<double>();
    c.sl.warmup_frac = s.at("warmup_frac").get<double>();
    c.sl.weight_decay = s.at("weight_decay").get<double>();
    c.sl.grad_clip = s.at("grad_clip").get<double>();
    c.sl.patience = s.at("patience").get<int>();
    const json& r = j.at("rl");
    c.rl.cycles = r.at("cycles").get<int>();
    c.rl.episodes = r.at("episodes").get<int>();
    c.rl.lr = r.at("lr").get<double>();
    c.rl.gamma = r.at("gamma").get<double>();
    c.rl.temperature = r.at("temperature").get<double>();
    c.rl.reward = r.at("reward").get<std::string>();
    c.rl.reward_baseline = r.at("reward_baseline").get<double>();
    c.rl.scheme = r.at("scheme").get<std::string>();
    c.rl.sl_batch = r.at("sl_batch").get<int>();
    c.rl.eval_every = r.at("eval_every").get<int>();
    c.rl.eval_goals = r.at("eval_goals").get<int>();
    c.rl.train_goals = r.at("train_goals").get<int>();
    const json& e = j.at("eval");
    c.eval.max_turns = e.at("max_turns").get<int>();
    c.eval.max_segment_tokens = e.at("max_segment_tokens").get<int>();
    c.eval.goals = e.at("goals").get<int>();
    c.eval.sig_resamples = e.at("sig_resamples").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.threads = j.at("threads").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

bool types_compatible(const json& base, const json& value) {
  if (base.is_number() && value.is_number()) return true;
  if (base.is_string() && value.is_string()) return true;
  if (base.is_boolean() && value.is_boolean()) return true;
  return false;
}

// Overlays `patch` onto `base`, refusing keys the defaults do not define.
void merge_strict(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object())
    throw ConfigError("config: " + (prefix.empty() ? std::string("top level") : prefix) +
                      " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key \"" + path + "\"");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), path);
    } else if (types_compatible(slot, it.value())) {
      slot = it.value();
    } else {
      throw ConfigError("config: wrong type for \"" + path + "\"");
    }
  }
}

void apply_override(json& base, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override \"" + assignment + "\" is not key=value");
  std::string path = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);

  json* node = &base;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->contains(key)) throw ConfigError("override: unknown key \"" + path + "\"");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("override: \"" + path + "\" is a section, not a value");

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings like reward=synthetic
  }
  if (value.is_object() || value.is_array())
    throw ConfigError("override: \"" + path + "\" needs a scalar value");
  if (!types_compatible(*node, value))
    throw ConfigError("override: wrong type for \"" + path + "\"");
  *node = value;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) {
  return to_json_tree(config).dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  json base = to_json_tree(ExperimentConfig{});
  merge_strict(base, patch, "");
  return from_json_tree(base);
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
  json base = to_json_tree(ExperimentConfig{});
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json patch;
    try {
      patch = json::parse(ss.str());
    } catch (const json::exception& e) {
      throw ParseError("config " + path + ": " + e.what());
    }
    merge_strict(base, patch, "");
  }
  for (const std::string& assignment : overrides) apply_override(base, assignment);
  return from_json_tree(base);
}

std::string tool_version() {
  if (FILE* pipe = ::popen("git describe --tags --always --dirty 2>/dev/null", "r")) {
    char buf[256];
    std::string line;
    while (std::fgets(buf, sizeof buf, pipe)) line += buf;
    int rc = ::pclose(pipe);
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    if (rc == 0 && !line.empty()) return line;
  }
  return "v0.1.0-untracked";
}

void write_manifest(const std::string& dir, const std::string& command,
                    const std::map<std::string, std::string>& args,
                    const ExperimentConfig& config) {
  std::filesystem::create_directories(dir);
  json j;
  j["command"] = command;
  j["version"] = tool_version();
  j["args"] = args;
  j["config"] = json::parse(config_to_json(config));
  std::string path = dir + "/manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace tod::config
