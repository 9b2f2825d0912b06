#pragma once
// Small decoder-only causal transformer with hand-derived gradients.
//
// Pre-norm blocks, learned absolute position embeddings, untied output
// projection, GELU feed-forward. Everything is double precision and
// deterministic: given the same seed and batch order, losses, gradients,
// and samples are bitwise reproducible regardless of thread count.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tod/common.hpp"

namespace tod::lm {

struct ModelConfig {
  int vocab_size = 0;
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int max_seq_len = 512;
  double dropout = 0.0;

  bool operator==(const ModelConfig&) const = default;
  void validate() const;  // throws ConfigError
};

struct LayerParams {
  std::vector<double> ln1_g, ln1_b;    // [D]
  std::vector<double> w_qkv, b_qkv;    // [D,3D], [3D]
  std::vector<double> w_o, b_o;        // [D,D], [D]
  std::vector<double> ln2_g, ln2_b;    // [D]
  std::vector<double> w_fc, b_fc;      // [D,F], [F]
  std::vector<double> w_proj, b_proj;  // [F,D], [D]
};

struct Params {
  ModelConfig config;
  std::vector<double> wte;  // [V,D]
  std::vector<double> wpe;  // [max_seq_len,D]
  std::vector<LayerParams> layers;
  std::vector<double> lnf_g, lnf_b;  // [D]
  std::vector<double> w_out;         // [D,V]

  static Params init(const ModelConfig& config, std::uint64_t seed);  // N(0, 0.02^2) weights
  static Params zeros_like(const ModelConfig& config);

  std::size_t n_params() const;

  // Visits every tensor in a fixed order; fn(name, vector<double>&).
  template <typename F>
  void for_each_tensor(F&& fn) {
    fn("wte", wte);
    fn("wpe", wpe);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      std::string p = "layer" + std::to_string(l) + ".";
      auto& L = layers[l];
      fn((p + "ln1_g").c_str(), L.ln1_g);
      fn((p + "ln1_b").c_str(), L.ln1_b);
      fn((p + "w_qkv").c_str(), L.w_qkv);
      fn((p + "b_qkv").c_str(), L.b_qkv);
      fn((p + "w_o").c_str(), L.w_o);
      fn((p + "b_o").c_str(), L.b_o);
      fn((p + "ln2_g").c_str(), L.ln2_g);
      fn((p + "ln2_b").c_str(), L.ln2_b);
      fn((p + "w_fc").c_str(), L.w_fc);
      fn((p + "b_fc").c_str(), L.b_fc);
      fn((p + "w_proj").c_str(), L.w_proj);
      fn((p + "b_proj").c_str(), L.b_proj);
    }
    fn("lnf_g", lnf_g);
    fn("lnf_b", lnf_b);
    fn("w_out", w_out);
  }
  template <typename F>
  void for_each_tensor(F&& fn) const {
    const_cast<Params*>(this)->for_each_tensor(
        [&](const char* name, std::vector<double>& v) { fn(name, std::as_const(v)); });
  }
};

bool same_params(const Params& a, const Params& b);  // bitwise equality

// ---------------------------------------------------------------------------
// Forward pass.

struct LayerCache {
  std::vector<double> x_in;        // [T,D] block input
  std::vector<double> ln1_normed;  // [T,D]
  std::vector<double> ln1_rstd;    // [T]
  std::vector<double> qkv;         // [T,3D]
  std::vector<double> att_concat;  // [T,D] heads concatenated, before w_o
  std::vector<double> resid1;      // [T,D] input to second half
  std::vector<double> ln2_normed;  // [T,D]
  std::vector<double> ln2_rstd;    // [T]
  std::vector<double> h_fc;        // [T,F] pre-activation
  std::vector<double> h_act;       // [T,F]
  std::vector<double> drop_att;    // [T,D] dropout multipliers (empty when dropout off)
  std::vector<double> drop_mlp;    // [T,D]
};

struct ForwardTrace {
  int T = 0;
  int vocab = 0;
  std::vector<int> ids;
  std::vector<double> logits;  // [T,V]
  // attention[l][h][q] holds q+1 weights over keys 0..q; rows sum to 1 and
  // later keys have no entry at all, which encodes the causal mask exactly.
  std::vector<std::vector<std::vector<std::vector<double>>>> attention;

  bool has_cache = false;  // backward caches populated
  std::vector<double> x_final;     // [T,D] after last block
  std::vector<double> lnf_normed;  // [T,D]
  std::vector<double> lnf_rstd;    // [T]
  std::vector<LayerCache> layer_cache;

  const double* logits_at(int t) const { return logits.data() + static_cast<std::size_t>(t) * vocab; }
};

// Full-sequence forward. Throws TruncationError when ids exceed max_seq_len,
// ConfigError on invalid ids. dropout_rng enables dropout (training only).
ForwardTrace forward(const Params& params, const std::vector<int>& ids, bool record_cache = false,
                     Rng* dropout_rng = nullptr);

// Mean negative log-likelihood over masked positions: mask[p] selects token
// ids[p] predicted from positions < p. mask[0] must be false; an all-false
// mask is a degenerate batch (ConfigError).
double nll_loss(const ForwardTrace& trace, const std::vector<int>& ids,
                const std::vector<unsigned char>& loss_mask);

// ---------------------------------------------------------------------------
// Training.

struct BatchItem {
  std::vector<int> ids;
  // weight[p] multiplies -log p(ids[p] | ids[<p]); 0 skips the position.
  // SL uses mask/n_masked, policy-gradient uses per-token returns.
  std::vector<double> weight;
  Rng* dropout_rng = nullptr;
};

// loss = (1/|batch|) * sum_i sum_p w[i][p] * (-log p). Accumulates gradients
// deterministically (fixed accumulation slots, reduced in order) and throws
// NumericError naming the first tensor with a non-finite gradient.
double loss_and_grad(const Params& params, const std::vector<BatchItem>& batch, Params& grads);

// Convenience SL weights: mask scaled to mean over masked positions.
std::vector<double> sl_weights(const std::vector<unsigned char>& loss_mask);

struct AdamWConfig {
  double lr = 1e-4;  // peak (scheduled) or fixed (schedule off)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // global-norm clip; 0 disables
  bool schedule = false;   // linear warmup then linear decay to zero
  int warmup_steps = 0;
  int total_steps = 0;
};

class AdamW {
 public:
  AdamW(const ModelConfig& model_config, const AdamWConfig& config);

  // Learning rate the NEXT step will use (1-based schedule position).
  double next_lr() const;
  void step(Params& params, const Params& grads);
  int steps_taken() const { return step_count_; }

 private:
  AdamWConfig cfg_;
  int step_count_ = 0;
  Params m_, v_;
};

// ---------------------------------------------------------------------------
// Decoding with a KV cache.

struct DecodeResult {
  std::vector<int> ids;             // generated tokens (stop token included)
  std::vector<double> logprobs;     // log-probability of each generated token
  bool truncated = false;           // hit max_new or max_seq_len without a stop
};

class DecodeSession {
 public:
  explicit DecodeSession(const Params& params, bool record_attention = false);

  int position() const { return pos_; }
  int capacity_left() const;
  void feed(const std::vector<int>& ids);  // teacher-forced tokens (prompt, splices)
  void feed(int id);

  // Probability of `id` as the next token (from current logits); feed() to commit.
  double next_logprob(int id) const;
  // temperature <= 0 selects argmax; ties resolve to the lowest id.
  int sample_next(double temperature, Rng* rng, double* logprob = nullptr) const;

  DecodeResult generate(const std::vector<int>& stop_ids, int max_new, double temperature,
                        Rng* rng);

  // Ragged attention rows for everything processed so far (layers x heads).
  const std::vector<std::vector<std::vector<std::vector<double>>>>& attention() const {
    return attention_;
  }

 private:
  void advance(int id);
  const Params& params_;
  bool record_attention_;
  int pos_ = 0;
  bool primed_ = false;  // logits_ valid for position pos_-1
  std::vector<std::vector<double>> k_cache_, v_cache_;  // per layer [T,D]
  std::vector<double> logits_;
  std::vector<std::vector<std::vector<std::vector<double>>>> attention_;
};

DecodeResult decode(const Params& params, const std::vector<int>& context_ids,
                    const std::vector<int>& stop_ids, int max_new, double temperature, Rng* rng);

// ---------------------------------------------------------------------------
// Attention aggregation.

struct Span {
  std::string name;
  int begin = 0;  // [begin, end)
  int end = 0;
};

// Mean attention mass from queries in each span onto keys in each span,
// averaged over layers, heads, and query positions. Spans must partition
// [0, T). Each row sums to 1 within 1e-12 of floating error; mass from a
// span onto a strictly later span is exactly zero.
std::map<std::string, std::map<std::string, double>> attention_summary(
    const ForwardTrace& trace, const std::vector<Span>& spans);

// ---------------------------------------------------------------------------
// Serialization. Binary, versioned; round-trips produce bit-identical logits.

void save_checkpoint(const Params& params, const std::string& path);
Params load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking (central differences).

struct GradCheckReport {
  int checked = 0;
  double max_rel_err = 0.0;
  std::string worst_tensor;
};

GradCheckReport finite_difference_check(const Params& params, const std::vector<BatchItem>& batch,
                                        int n_samples, std::uint64_t seed, double fd_step = 1e-5);

}  // namespace tod::lm
