#include "tod/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "tod/kernels.hpp"

namespace tod::lm {

using nlohmann::json;

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028653558798921198687;  // sqrt(2/pi)

inline double gelu(double x) {
  double u = kGeluC * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad(double x) {
  double u = kGeluC * (x + 0.044715 * x * x * x);
  double t = std::tanh(u);
  double sech2 = 1.0 - t * t;
  return 0.5 * (1.0 + t) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

// Row-wise layernorm; writes pre-gain normed values and 1/std.
void layernorm_forward(const double* x, int t_count, int d, const double* g, const double* b,
                       double* normed, double* rstd, double* out) {
  for (int t = 0; t < t_count; ++t) {
    const double* xt = x + static_cast<std::size_t>(t) * d;
    double* nt = normed + static_cast<std::size_t>(t) * d;
    double* ot = out + static_cast<std::size_t>(t) * d;
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += xt[i];
    mean /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) {
      double c = xt[i] - mean;
      var += c * c;
    }
    var /= d;
    double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[t] = rs;
    for (int i = 0; i < d; ++i) {
      nt[i] = (xt[i] - mean) * rs;
      ot[i] = g[i] * nt[i] + b[i];
    }
  }
}

// Backward through layernorm given cached normed/rstd.
void layernorm_backward(const double* dout, const double* normed, const double* rstd, int t_count,
                        int d, const double* g, double* dx, double* dg, double* db) {
  for (int t = 0; t < t_count; ++t) {
    const double* dot = dout + static_cast<std::size_t>(t) * d;
    const double* nt = normed + static_cast<std::size_t>(t) * d;
    double* dxt = dx + static_cast<std::size_t>(t) * d;
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < d; ++i) {
      double dn = dot[i] * g[i];
      m1 += dn;
      m2 += dn * nt[i];
      dg[i] += dot[i] * nt[i];
      db[i] += dot[i];
    }
    m1 /= d;
    m2 /= d;
    for (int i = 0; i < d; ++i) {
      double dn = dot[i] * g[i];
      dxt[i] = rstd[t] * (dn - m1 - nt[i] * m2);
    }
  }
}

void fill_gained(const double* normed, int t_count, int d, const double* g, const double* b,
                 double* out) {
  for (int t = 0; t < t_count; ++t) {
    const double* nt = normed + static_cast<std::size_t>(t) * d;
    double* ot = out + static_cast<std::size_t>(t) * d;
    for (int i = 0; i < d; ++i) ot[i] = g[i] * nt[i] + b[i];
  }
}

std::vector<double> make_dropout_mask(std::size_t n, double p, Rng* rng) {
  std::vector<double> mask(n);
  double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < n; ++i) mask[i] = (rng->uniform01() >= p) ? keep_scale : 0.0;
  return mask;
}

void gaussian_fill(std::vector<double>& v, Rng& rng, double scale) {
  for (double& x : v) x = rng.gaussian() * scale;
}

}  // namespace

// --- config / params ---------------------------------------------------------

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (n_heads < 1) throw ConfigError("n_heads must be >= 1");
  if (d_model < 1 || d_model % n_heads != 0)
    throw ConfigError("d_model must be a positive multiple of n_heads");
  if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
  if (max_seq_len < 2) throw ConfigError("max_seq_len must be >= 2");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

Params Params::zeros_like(const ModelConfig& config) {
  config.validate();
  Params p;
  p.config = config;
  int d = config.d_model, f = config.d_ff, v = config.vocab_size;
  p.wte.assign(static_cast<std::size_t>(v) * d, 0.0);
  p.wpe.assign(static_cast<std::size_t>(config.max_seq_len) * d, 0.0);
  p.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& L : p.layers) {
    L.ln1_g.assign(d, 0.0);
    L.ln1_b.assign(d, 0.0);
    L.w_qkv.assign(static_cast<std::size_t>(d) * 3 * d, 0.0);
    L.b_qkv.assign(static_cast<std::size_t>(3) * d, 0.0);
    L.w_o.assign(static_cast<std::size_t>(d) * d, 0.0);
    L.b_o.assign(d, 0.0);
    L.ln2_g.assign(d, 0.0);
    L.ln2_b.assign(d, 0.0);
    L.w_fc.assign(static_cast<std::size_t>(d) * f, 0.0);
    L.b_fc.assign(f, 0.0);
    L.w_proj.assign(static_cast<std::size_t>(f) * d, 0.0);
    L.b_proj.assign(d, 0.0);
  }
  p.lnf_g.assign(d, 0.0);
  p.lnf_b.assign(d, 0.0);
  p.w_out.assign(static_cast<std::size_t>(d) * v, 0.0);
  return p;
}

Params Params::init(const ModelConfig& config, std::uint64_t seed) {
  Params p = zeros_like(config);
  Rng rng(derive_seed(seed, 0x11a9));
  p.for_each_tensor([&](const char* name, std::vector<double>& t) {
    std::string n(name);
    bool is_ln_gain = n.size() >= 2 && n.substr(n.size() - 2) == "_g" && n.find("ln") != std::string::npos;
    bool is_bias = n.size() >= 2 && (n.substr(n.size() - 2) == "_b" || n.rfind("b_", 0) == 0 ||
                                     n.find(".b_") != std::string::npos);
    if (is_ln_gain)
      std::fill(t.begin(), t.end(), 1.0);
    else if (is_bias)
      std::fill(t.begin(), t.end(), 0.0);
    else
      gaussian_fill(t, rng, 0.02);
  });
  return p;
}

std::size_t Params::n_params() const {
  std::size_t n = 0;
  for_each_tensor([&](const char*, const std::vector<double>& t) { n += t.size(); });
  return n;
}

bool same_params(const Params& a, const Params& b) {
  if (!(a.config == b.config)) return false;
  bool same = true;
  std::vector<const std::vector<double>*> av, bv;
  a.for_each_tensor([&](const char*, const std::vector<double>& t) { av.push_back(&t); });
  b.for_each_tensor([&](const char*, const std::vector<double>& t) { bv.push_back(&t); });
  if (av.size() != bv.size()) return false;
  for (std::size_t i = 0; i < av.size() && same; ++i) {
    if (av[i]->size() != bv[i]->size()) return false;
    if (std::memcmp(av[i]->data(), bv[i]->data(), av[i]->size() * sizeof(double)) != 0)
      same = false;
  }
  return same;
}

// --- forward -------------------------------------------------------------------

ForwardTrace forward(const Params& params, const std::vector<int>& ids, bool record_cache,
                     Rng* dropout_rng) {
  const ModelConfig& cfg = params.config;
  const int T = static_cast<int>(ids.size());
  const int D = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size, H = cfg.n_heads;
  const int HD = D / H;
  if (T < 1) throw ConfigError("forward needs at least one token");
  if (T > cfg.max_seq_len)
    throw TruncationError("sequence length " + std::to_string(T) + " exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
  for (int id : ids)
    if (id < 0 || id >= V) throw ConfigError("token id out of range: " + std::to_string(id));
  bool use_dropout = cfg.dropout > 0.0 && dropout_rng != nullptr;

  ForwardTrace tr;
  tr.T = T;
  tr.vocab = V;
  tr.ids = ids;
  tr.has_cache = record_cache;
  tr.attention.assign(static_cast<std::size_t>(cfg.n_layers),
                      std::vector<std::vector<std::vector<double>>>(
                          static_cast<std::size_t>(H), std::vector<std::vector<double>>(
                                                           static_cast<std::size_t>(T))));
  if (record_cache) tr.layer_cache.resize(static_cast<std::size_t>(cfg.n_layers));

  std::vector<double> x(static_cast<std::size_t>(T) * D);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < D; ++i)
      x[static_cast<std::size_t>(t) * D + i] =
          params.wte[static_cast<std::size_t>(ids[static_cast<std::size_t>(t)]) * D + i] +
          params.wpe[static_cast<std::size_t>(t) * D + i];

  std::vector<double> normed(static_cast<std::size_t>(T) * D), rstd(T),
      gained(static_cast<std::size_t>(T) * D);
  std::vector<double> qkv(static_cast<std::size_t>(T) * 3 * D);
  std::vector<double> att_concat(static_cast<std::size_t>(T) * D);
  std::vector<double> proj(static_cast<std::size_t>(T) * D);
  std::vector<double> h_fc(static_cast<std::size_t>(T) * F), h_act(static_cast<std::size_t>(T) * F);

  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(HD));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& L = params.layers[static_cast<std::size_t>(l)];
    LayerCache* cache = record_cache ? &tr.layer_cache[static_cast<std::size_t>(l)] : nullptr;
    if (cache) cache->x_in = x;

    layernorm_forward(x.data(), T, D, L.ln1_g.data(), L.ln1_b.data(), normed.data(), rstd.data(),
                      gained.data());
    if (cache) {
      cache->ln1_normed = normed;
      cache->ln1_rstd = rstd;
    }
    kernels::matmul(gained.data(), L.w_qkv.data(), qkv.data(), T, D, 3 * D);
    kernels::add_bias(qkv.data(), L.b_qkv.data(), qkv.data(), T, 3 * D);
    if (cache) cache->qkv = qkv;

    auto& att_l = tr.attention[static_cast<std::size_t>(l)];
    std::fill(att_concat.begin(), att_concat.end(), 0.0);
    for (int h = 0; h < H; ++h) {
      const int o = h * HD;
      auto& att_h = att_l[static_cast<std::size_t>(h)];
      for (int t = 0; t < T; ++t) {
        const double* qt = qkv.data() + static_cast<std::size_t>(t) * 3 * D + o;
        std::vector<double>& row = att_h[static_cast<std::size_t>(t)];
        row.resize(static_cast<std::size_t>(t) + 1);
        double maxs = -1e300;
        for (int j = 0; j <= t; ++j) {
          const double* kj = qkv.data() + static_cast<std::size_t>(j) * 3 * D + D + o;
          double s = 0.0;
          for (int c = 0; c < HD; ++c) s += qt[c] * kj[c];
          s *= inv_sqrt_hd;
          row[static_cast<std::size_t>(j)] = s;
          if (s > maxs) maxs = s;
        }
        double denom = 0.0;
        for (int j = 0; j <= t; ++j) {
          double e = std::exp(row[static_cast<std::size_t>(j)] - maxs);
          row[static_cast<std::size_t>(j)] = e;
          denom += e;
        }
        double* out = att_concat.data() + static_cast<std::size_t>(t) * D + o;
        for (int j = 0; j <= t; ++j) {
          double w = row[static_cast<std::size_t>(j)] / denom;
          row[static_cast<std::size_t>(j)] = w;
          const double* vj = qkv.data() + static_cast<std::size_t>(j) * 3 * D + 2 * D + o;
          for (int c = 0; c < HD; ++c) out[c] += w * vj[c];
        }
      }
    }
    if (cache) cache->att_concat = att_concat;

    kernels::matmul(att_concat.data(), L.w_o.data(), proj.data(), T, D, D);
    kernels::add_bias(proj.data(), L.b_o.data(), proj.data(), T, D);
    if (use_dropout) {
      std::vector<double> mask = make_dropout_mask(proj.size(), cfg.dropout, dropout_rng);
      for (std::size_t i = 0; i < proj.size(); ++i) proj[i] *= mask[i];
      if (cache) cache->drop_att = std::move(mask);
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];
    if (cache) cache->resid1 = x;

    layernorm_forward(x.data(), T, D, L.ln2_g.data(), L.ln2_b.data(), normed.data(), rstd.data(),
                      gained.data());
    if (cache) {
      cache->ln2_normed = normed;
      cache->ln2_rstd = rstd;
    }
    kernels::matmul(gained.data(), L.w_fc.data(), h_fc.data(), T, D, F);
    kernels::add_bias(h_fc.data(), L.b_fc.data(), h_fc.data(), T, F);
    for (std::size_t i = 0; i < h_fc.size(); ++i) h_act[i] = gelu(h_fc[i]);
    if (cache) {
      cache->h_fc = h_fc;
      cache->h_act = h_act;
    }
    kernels::matmul(h_act.data(), L.w_proj.data(), proj.data(), T, F, D);
    kernels::add_bias(proj.data(), L.b_proj.data(), proj.data(), T, D);
    if (use_dropout) {
      std::vector<double> mask = make_dropout_mask(proj.size(), cfg.dropout, dropout_rng);
      for (std::size_t i = 0; i < proj.size(); ++i) proj[i] *= mask[i];
      if (cache) cache->drop_mlp = std::move(mask);
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];
  }

  if (record_cache) tr.x_final = x;
  layernorm_forward(x.data(), T, D, params.lnf_g.data(), params.lnf_b.data(), normed.data(),
                    rstd.data(), gained.data());
  if (record_cache) {
    tr.lnf_normed = normed;
    tr.lnf_rstd = rstd;
  }
  tr.logits.resize(static_cast<std::size_t>(T) * V);
  kernels::matmul(gained.data(), params.w_out.data(), tr.logits.data(), T, D, V);
  return tr;
}

// --- loss ---------------------------------------------------------------------

namespace {

// log p(ids[p] | prefix) from logits row p-1, numerically stable.
double token_logprob(const ForwardTrace& tr, int p, int label) {
  const double* row = tr.logits_at(p - 1);
  double maxv = row[0];
  for (int v = 1; v < tr.vocab; ++v) maxv = std::max(maxv, row[v]);
  double denom = 0.0;
  for (int v = 0; v < tr.vocab; ++v) denom += std::exp(row[v] - maxv);
  return row[label] - maxv - std::log(denom);
}

double weighted_loss(const ForwardTrace& tr, const std::vector<int>& ids,
                     const std::vector<double>& weight) {
  if (weight.size() != ids.size())
    throw ConfigError("weight vector length must match ids length");
  if (!weight.empty() && weight[0] != 0.0)
    throw ConfigError("position 0 cannot carry loss weight (nothing precedes it)");
  double loss = 0.0;
  for (std::size_t p = 1; p < ids.size(); ++p)
    if (weight[p] != 0.0) loss -= weight[p] * token_logprob(tr, static_cast<int>(p), ids[p]);
  return loss;
}

}  // namespace

double nll_loss(const ForwardTrace& trace, const std::vector<int>& ids,
                const std::vector<unsigned char>& loss_mask) {
  if (ids.size() != loss_mask.size() || static_cast<int>(ids.size()) != trace.T)
    throw ConfigError("nll_loss: ids/mask/trace lengths disagree");
  if (!loss_mask.empty() && loss_mask[0])
    throw ConfigError("nll_loss: mask selects position 0, which has no prediction context");
  int n = 0;
  for (unsigned char m : loss_mask) n += m ? 1 : 0;
  if (n == 0) throw ConfigError("nll_loss: degenerate batch, loss mask selects no position");
  double loss = 0.0;
  for (std::size_t p = 1; p < ids.size(); ++p)
    if (loss_mask[p]) loss -= token_logprob(trace, static_cast<int>(p), ids[p]);
  return loss / n;
}

std::vector<double> sl_weights(const std::vector<unsigned char>& loss_mask) {
  int n = 0;
  for (unsigned char m : loss_mask) n += m ? 1 : 0;
  if (n == 0) throw ConfigError("degenerate batch, loss mask selects no position");
  if (!loss_mask.empty() && loss_mask[0])
    throw ConfigError("mask selects position 0, which has no prediction context");
  std::vector<double> w(loss_mask.size(), 0.0);
  for (std::size_t p = 0; p < loss_mask.size(); ++p)
    if (loss_mask[p]) w[p] = 1.0 / n;
  return w;
}

// --- backward -----------------------------------------------------------------

namespace {

void backward_sample(const Params& params, const ForwardTrace& tr,
                     const std::vector<double>& weight, double scale, Params& g) {
  const ModelConfig& cfg = params.config;
  const int T = tr.T, D = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size, H = cfg.n_heads;
  const int HD = D / H;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(HD));

  // dlogits: weight[p] applies to the row p-1 that predicts ids[p].
  std::vector<double> dlogits(static_cast<std::size_t>(T) * V, 0.0);
  for (int p = 1; p < T; ++p) {
    double w = weight[static_cast<std::size_t>(p)] * scale;
    if (w == 0.0) continue;
    const double* row = tr.logits_at(p - 1);
    double* drow = dlogits.data() + static_cast<std::size_t>(p - 1) * V;
    double maxv = row[0];
    for (int v = 1; v < V; ++v) maxv = std::max(maxv, row[v]);
    double denom = 0.0;
    for (int v = 0; v < V; ++v) denom += std::exp(row[v] - maxv);
    for (int v = 0; v < V; ++v) drow[v] += w * (std::exp(row[v] - maxv) / denom);
    drow[tr.ids[static_cast<std::size_t>(p)]] -= w;
  }

  std::vector<double> gained(static_cast<std::size_t>(T) * D);
  fill_gained(tr.lnf_normed.data(), T, D, params.lnf_g.data(), params.lnf_b.data(), gained.data());
  kernels::matmul_at_acc(gained.data(), dlogits.data(), g.w_out.data(), T, D, V);
  std::vector<double> dgained(static_cast<std::size_t>(T) * D);
  kernels::matmul_bt(dlogits.data(), params.w_out.data(), dgained.data(), T, V, D);

  std::vector<double> dx(static_cast<std::size_t>(T) * D, 0.0);
  layernorm_backward(dgained.data(), tr.lnf_normed.data(), tr.lnf_rstd.data(), T, D,
                     params.lnf_g.data(), dx.data(), g.lnf_g.data(), g.lnf_b.data());

  std::vector<double> dproj(static_cast<std::size_t>(T) * D);
  std::vector<double> dh_act(static_cast<std::size_t>(T) * F);
  std::vector<double> dh_fc(static_cast<std::size_t>(T) * F);
  std::vector<double> dqkv(static_cast<std::size_t>(T) * 3 * D);
  std::vector<double> dtmp(static_cast<std::size_t>(T) * D);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerParams& L = params.layers[static_cast<std::size_t>(l)];
    LayerParams& gL = g.layers[static_cast<std::size_t>(l)];
    const LayerCache& c = tr.layer_cache[static_cast<std::size_t>(l)];

    // second half: x_out = resid1 + drop(mlp(ln2(resid1)))
    std::copy(dx.begin(), dx.end(), dproj.begin());
    if (!c.drop_mlp.empty())
      for (std::size_t i = 0; i < dproj.size(); ++i) dproj[i] *= c.drop_mlp[i];
    kernels::matmul_at_acc(c.h_act.data(), dproj.data(), gL.w_proj.data(), T, F, D);
    for (int t = 0; t < T; ++t) {
      const double* dp = dproj.data() + static_cast<std::size_t>(t) * D;
      for (int i = 0; i < D; ++i) gL.b_proj[static_cast<std::size_t>(i)] += dp[i];
    }
    kernels::matmul_bt(dproj.data(), L.w_proj.data(), dh_act.data(), T, D, F);
    for (std::size_t i = 0; i < dh_fc.size(); ++i) dh_fc[i] = dh_act[i] * gelu_grad(c.h_fc[i]);
    fill_gained(c.ln2_normed.data(), T, D, L.ln2_g.data(), L.ln2_b.data(), gained.data());
    kernels::matmul_at_acc(gained.data(), dh_fc.data(), gL.w_fc.data(), T, D, F);
    for (int t = 0; t < T; ++t) {
      const double* dh = dh_fc.data() + static_cast<std::size_t>(t) * F;
      for (int i = 0; i < F; ++i) gL.b_fc[static_cast<std::size_t>(i)] += dh[i];
    }
    kernels::matmul_bt(dh_fc.data(), L.w_fc.data(), dgained.data(), T, F, D);
    layernorm_backward(dgained.data(), c.ln2_normed.data(), c.ln2_rstd.data(), T, D,
                       L.ln2_g.data(), dtmp.data(), gL.ln2_g.data(), gL.ln2_b.data());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dtmp[i];  // residual join

    // first half: resid1 = x_in + drop(attn(ln1(x_in)))
    std::copy(dx.begin(), dx.end(), dproj.begin());
    if (!c.drop_att.empty())
      for (std::size_t i = 0; i < dproj.size(); ++i) dproj[i] *= c.drop_att[i];
    kernels::matmul_at_acc(c.att_concat.data(), dproj.data(), gL.w_o.data(), T, D, D);
    for (int t = 0; t < T; ++t) {
      const double* dp = dproj.data() + static_cast<std::size_t>(t) * D;
      for (int i = 0; i < D; ++i) gL.b_o[static_cast<std::size_t>(i)] += dp[i];
    }
    std::vector<double>& datt_concat = dgained;  // reuse buffer
    kernels::matmul_bt(dproj.data(), L.w_o.data(), datt_concat.data(), T, D, D);

    std::fill(dqkv.begin(), dqkv.end(), 0.0);
    const auto& att_l = tr.attention[static_cast<std::size_t>(l)];
    for (int h = 0; h < H; ++h) {
      const int o = h * HD;
      const auto& att_h = att_l[static_cast<std::size_t>(h)];
      for (int t = 0; t < T; ++t) {
        const std::vector<double>& row = att_h[static_cast<std::size_t>(t)];
        const double* dout = datt_concat.data() + static_cast<std::size_t>(t) * D + o;
        // dv and d(att weight)
        double srow = 0.0;
        std::vector<double> datt(static_cast<std::size_t>(t) + 1);
        for (int j = 0; j <= t; ++j) {
          const double* vj = c.qkv.data() + static_cast<std::size_t>(j) * 3 * D + 2 * D + o;
          double* dvj = dqkv.data() + static_cast<std::size_t>(j) * 3 * D + 2 * D + o;
          double da = 0.0;
          double w = row[static_cast<std::size_t>(j)];
          for (int cc = 0; cc < HD; ++cc) {
            da += dout[cc] * vj[cc];
            dvj[cc] += w * dout[cc];
          }
          datt[static_cast<std::size_t>(j)] = da;
          srow += w * da;
        }
        // softmax backward, then into q and k
        const double* qt = c.qkv.data() + static_cast<std::size_t>(t) * 3 * D + o;
        double* dqt = dqkv.data() + static_cast<std::size_t>(t) * 3 * D + o;
        for (int j = 0; j <= t; ++j) {
          double dscore = row[static_cast<std::size_t>(j)] *
                          (datt[static_cast<std::size_t>(j)] - srow) * inv_sqrt_hd;
          const double* kj = c.qkv.data() + static_cast<std::size_t>(j) * 3 * D + D + o;
          double* dkj = dqkv.data() + static_cast<std::size_t>(j) * 3 * D + D + o;
          for (int cc = 0; cc < HD; ++cc) {
            dqt[cc] += dscore * kj[cc];
            dkj[cc] += dscore * qt[cc];
          }
        }
      }
    }

    fill_gained(c.ln1_normed.data(), T, D, L.ln1_g.data(), L.ln1_b.data(), gained.data());
    kernels::matmul_at_acc(gained.data(), dqkv.data(), gL.w_qkv.data(), T, D, 3 * D);
    for (int t = 0; t < T; ++t) {
      const double* dq = dqkv.data() + static_cast<std::size_t>(t) * 3 * D;
      for (int i = 0; i < 3 * D; ++i) gL.b_qkv[static_cast<std::size_t>(i)] += dq[i];
    }
    kernels::matmul_bt(dqkv.data(), L.w_qkv.data(), dgained.data(), T, 3 * D, D);
    layernorm_backward(dgained.data(), c.ln1_normed.data(), c.ln1_rstd.data(), T, D,
                       L.ln1_g.data(), dtmp.data(), gL.ln1_g.data(), gL.ln1_b.data());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dtmp[i];
  }

  // embeddings
  for (int t = 0; t < T; ++t) {
    const double* dxt = dx.data() + static_cast<std::size_t>(t) * D;
    double* dwte = g.wte.data() + static_cast<std::size_t>(tr.ids[static_cast<std::size_t>(t)]) * D;
    double* dwpe = g.wpe.data() + static_cast<std::size_t>(t) * D;
    for (int i = 0; i < D; ++i) {
      dwte[i] += dxt[i];
      dwpe[i] += dxt[i];
    }
  }
}

void accumulate(Params& dst, const Params& src) {
  std::vector<std::vector<double>*> dv;
  std::vector<const std::vector<double>*> sv;
  dst.for_each_tensor([&](const char*, std::vector<double>& t) { dv.push_back(&t); });
  src.for_each_tensor([&](const char*, const std::vector<double>& t) { sv.push_back(&t); });
  for (std::size_t i = 0; i < dv.size(); ++i) {
    double* d = dv[i]->data();
    const double* s = sv[i]->data();
    for (std::size_t j = 0; j < dv[i]->size(); ++j) d[j] += s[j];
  }
}

}  // namespace

double loss_and_grad(const Params& params, const std::vector<BatchItem>& batch, Params& grads) {
  if (batch.empty()) throw ConfigError("empty batch");
  const int B = static_cast<int>(batch.size());
  const double scale = 1.0 / B;

  // Fixed accumulation-slot count (a function of batch size only) keeps
  // results bitwise identical for any OpenMP thread count.
  const int S = std::min(B, 16);
  std::vector<Params> slot_grads;
  slot_grads.reserve(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) slot_grads.push_back(Params::zeros_like(params.config));
  std::vector<double> slot_loss(static_cast<std::size_t>(S), 0.0);

#pragma omp parallel for schedule(static)
  for (int s = 0; s < S; ++s) {
    for (int i = s; i < B; i += S) {
      const BatchItem& item = batch[static_cast<std::size_t>(i)];
      // An all-zero weight vector contributes nothing to loss or gradient.
      bool live = false;
      for (double w : item.weight)
        if (w != 0.0) { live = true; break; }
      if (!live) continue;
      ForwardTrace tr = forward(params, item.ids, true, item.dropout_rng);
      slot_loss[static_cast<std::size_t>(s)] += weighted_loss(tr, item.ids, item.weight) * scale;
      backward_sample(params, tr, item.weight, scale, slot_grads[static_cast<std::size_t>(s)]);
    }
  }

  grads = Params::zeros_like(params.config);
  double loss = 0.0;
  for (int s = 0; s < S; ++s) {
    accumulate(grads, slot_grads[static_cast<std::size_t>(s)]);
    loss += slot_loss[static_cast<std::size_t>(s)];
  }

  grads.for_each_tensor([&](const char* name, std::vector<double>& t) {
    for (double v : t)
      if (!std::isfinite(v))
        throw NumericError(std::string("non-finite gradient in tensor ") + name);
  });
  if (!std::isfinite(loss)) throw NumericError("non-finite loss");
  return loss;
}

// --- optimizer ----------------------------------------------------------------

AdamW::AdamW(const ModelConfig& model_config, const AdamWConfig& config)
    : cfg_(config),
      m_(Params::zeros_like(model_config)),
      v_(Params::zeros_like(model_config)) {
  if (cfg_.lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (cfg_.schedule) {
    if (cfg_.total_steps < 1) throw ConfigError("scheduled optimizer needs total_steps >= 1");
    if (cfg_.warmup_steps < 1) cfg_.warmup_steps = 1;
    if (cfg_.warmup_steps > cfg_.total_steps) cfg_.warmup_steps = cfg_.total_steps;
  }
}

double AdamW::next_lr() const {
  int s = step_count_ + 1;
  if (!cfg_.schedule) return cfg_.lr;
  if (s <= cfg_.warmup_steps)
    return cfg_.lr * static_cast<double>(s) / cfg_.warmup_steps;
  if (s >= cfg_.total_steps) return 0.0;
  return cfg_.lr * static_cast<double>(cfg_.total_steps - s) /
         (cfg_.total_steps - cfg_.warmup_steps);
}

void AdamW::step(Params& params, const Params& grads) {
  double lr = next_lr();
  ++step_count_;

  double clip_scale = 1.0;
  if (cfg_.grad_clip > 0.0) {
    double sq = 0.0;
    grads.for_each_tensor([&](const char*, const std::vector<double>& t) {
      for (double v : t) sq += v * v;
    });
    double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) clip_scale = cfg_.grad_clip / norm;
  }

  double bc1 = 1.0 - std::pow(cfg_.beta1, step_count_);
  double bc2 = 1.0 - std::pow(cfg_.beta2, step_count_);

  std::vector<std::vector<double>*> pv, mv, vv;
  std::vector<const std::vector<double>*> gv;
  params.for_each_tensor([&](const char*, std::vector<double>& t) { pv.push_back(&t); });
  grads.for_each_tensor([&](const char*, const std::vector<double>& t) { gv.push_back(&t); });
  m_.for_each_tensor([&](const char*, std::vector<double>& t) { mv.push_back(&t); });
  v_.for_each_tensor([&](const char*, std::vector<double>& t) { vv.push_back(&t); });
  if (pv.size() != gv.size()) throw ConfigError("optimizer: parameter/gradient shape mismatch");

  for (std::size_t i = 0; i < pv.size(); ++i) {
    double* p = pv[i]->data();
    const double* g = gv[i]->data();
    double* m = mv[i]->data();
    double* v = vv[i]->data();
    std::size_t n = pv[i]->size();
    if (n != gv[i]->size()) throw ConfigError("optimizer: tensor size mismatch");
    for (std::size_t j = 0; j < n; ++j) {
      double gj = g[j] * clip_scale;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[j]);
    }
  }
}

// --- decoding -----------------------------------------------------------------

DecodeSession::DecodeSession(const Params& params, bool record_attention)
    : params_(params), record_attention_(record_attention) {
  const ModelConfig& cfg = params_.config;
  k_cache_.assign(static_cast<std::size_t>(cfg.n_layers),
                  std::vector<double>(static_cast<std::size_t>(cfg.max_seq_len) * cfg.d_model));
  v_cache_ = k_cache_;
  logits_.assign(static_cast<std::size_t>(cfg.vocab_size), 0.0);
  if (record_attention_)
    attention_.assign(static_cast<std::size_t>(cfg.n_layers),
                      std::vector<std::vector<std::vector<double>>>(
                          static_cast<std::size_t>(cfg.n_heads)));
}

int DecodeSession::capacity_left() const { return params_.config.max_seq_len - pos_; }

void DecodeSession::advance(int id) {
  const ModelConfig& cfg = params_.config;
  const int D = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size, H = cfg.n_heads;
  const int HD = D / H;
  if (id < 0 || id >= V) throw ConfigError("token id out of range: " + std::to_string(id));
  if (pos_ >= cfg.max_seq_len)
    throw TruncationError("decode session is full at max_seq_len " +
                          std::to_string(cfg.max_seq_len));
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(HD));
  const int t = pos_;

  std::vector<double> x(static_cast<std::size_t>(D));
  for (int i = 0; i < D; ++i)
    x[static_cast<std::size_t>(i)] = params_.wte[static_cast<std::size_t>(id) * D + i] +
                                     params_.wpe[static_cast<std::size_t>(t) * D + i];

  std::vector<double> normed(static_cast<std::size_t>(D)), gained(static_cast<std::size_t>(D));
  std::vector<double> rstd(1);
  std::vector<double> qkv(static_cast<std::size_t>(3) * D);
  std::vector<double> att_out(static_cast<std::size_t>(D));
  std::vector<double> proj(static_cast<std::size_t>(D));
  std::vector<double> h_fc(static_cast<std::size_t>(F)), h_act(static_cast<std::size_t>(F));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& L = params_.layers[static_cast<std::size_t>(l)];
    layernorm_forward(x.data(), 1, D, L.ln1_g.data(), L.ln1_b.data(), normed.data(), rstd.data(),
                      gained.data());
    kernels::matmul(gained.data(), L.w_qkv.data(), qkv.data(), 1, D, 3 * D);
    kernels::add_bias(qkv.data(), L.b_qkv.data(), qkv.data(), 1, 3 * D);

    double* krow = k_cache_[static_cast<std::size_t>(l)].data() + static_cast<std::size_t>(t) * D;
    double* vrow = v_cache_[static_cast<std::size_t>(l)].data() + static_cast<std::size_t>(t) * D;
    for (int i = 0; i < D; ++i) {
      krow[i] = qkv[static_cast<std::size_t>(D + i)];
      vrow[i] = qkv[static_cast<std::size_t>(2 * D + i)];
    }

    std::fill(att_out.begin(), att_out.end(), 0.0);
    for (int h = 0; h < H; ++h) {
      const int o = h * HD;
      const double* qt = qkv.data() + o;
      std::vector<double> row(static_cast<std::size_t>(t) + 1);
      double maxs = -1e300;
      for (int j = 0; j <= t; ++j) {
        const double* kj =
            k_cache_[static_cast<std::size_t>(l)].data() + static_cast<std::size_t>(j) * D + o;
        double s = 0.0;
        for (int c = 0; c < HD; ++c) s += qt[c] * kj[c];
        s *= inv_sqrt_hd;
        row[static_cast<std::size_t>(j)] = s;
        if (s > maxs) maxs = s;
      }
      double denom = 0.0;
      for (int j = 0; j <= t; ++j) {
        double e = std::exp(row[static_cast<std::size_t>(j)] - maxs);
        row[static_cast<std::size_t>(j)] = e;
        denom += e;
      }
      for (int j = 0; j <= t; ++j) {
        double w = row[static_cast<std::size_t>(j)] / denom;
        row[static_cast<std::size_t>(j)] = w;
        const double* vj =
            v_cache_[static_cast<std::size_t>(l)].data() + static_cast<std::size_t>(j) * D + o;
        for (int c = 0; c < HD; ++c) att_out[static_cast<std::size_t>(o + c)] += w * vj[c];
      }
      if (record_attention_)
        attention_[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)].push_back(
            std::move(row));
    }

    kernels::matmul(att_out.data(), L.w_o.data(), proj.data(), 1, D, D);
    kernels::add_bias(proj.data(), L.b_o.data(), proj.data(), 1, D);
    for (int i = 0; i < D; ++i) x[static_cast<std::size_t>(i)] += proj[static_cast<std::size_t>(i)];

    layernorm_forward(x.data(), 1, D, L.ln2_g.data(), L.ln2_b.data(), normed.data(), rstd.data(),
                      gained.data());
    kernels::matmul(gained.data(), L.w_fc.data(), h_fc.data(), 1, D, F);
    kernels::add_bias(h_fc.data(), L.b_fc.data(), h_fc.data(), 1, F);
    for (int i = 0; i < F; ++i) h_act[static_cast<std::size_t>(i)] = gelu(h_fc[static_cast<std::size_t>(i)]);
    kernels::matmul(h_act.data(), L.w_proj.data(), proj.data(), 1, F, D);
    kernels::add_bias(proj.data(), L.b_proj.data(), proj.data(), 1, D);
    for (int i = 0; i < D; ++i) x[static_cast<std::size_t>(i)] += proj[static_cast<std::size_t>(i)];
  }

  layernorm_forward(x.data(), 1, D, params_.lnf_g.data(), params_.lnf_b.data(), normed.data(),
                    rstd.data(), gained.data());
  kernels::matmul(gained.data(), params_.w_out.data(), logits_.data(), 1, D, V);
  primed_ = true;
  ++pos_;
}

void DecodeSession::feed(int id) { advance(id); }

void DecodeSession::feed(const std::vector<int>& ids) {
  for (int id : ids) advance(id);
}

double DecodeSession::next_logprob(int id) const {
  if (!primed_) throw ConfigError("decode session has no context yet");
  if (id < 0 || id >= static_cast<int>(logits_.size()))
    throw ConfigError("token id out of range: " + std::to_string(id));
  double maxv = logits_[0];
  for (double v : logits_) maxv = std::max(maxv, v);
  double denom = 0.0;
  for (double v : logits_) denom += std::exp(v - maxv);
  return logits_[static_cast<std::size_t>(id)] - maxv - std::log(denom);
}

int DecodeSession::sample_next(double temperature, Rng* rng, double* logprob) const {
  if (!primed_) throw ConfigError("decode session has no context yet");
  int chosen;
  if (temperature <= 0.0) {
    chosen = 0;
    for (std::size_t v = 1; v < logits_.size(); ++v)
      if (logits_[v] > logits_[static_cast<std::size_t>(chosen)]) chosen = static_cast<int>(v);
  } else {
    if (rng == nullptr) throw ConfigError("sampling requires an rng");
    double maxv = logits_[0];
    for (double v : logits_) maxv = std::max(maxv, v);
    double denom = 0.0;
    std::vector<double> e(logits_.size());
    for (std::size_t v = 0; v < logits_.size(); ++v) {
      e[v] = std::exp((logits_[v] - maxv) / temperature);
      denom += e[v];
    }
    double u = rng->uniform01() * denom;
    double acc = 0.0;
    chosen = static_cast<int>(logits_.size()) - 1;
    for (std::size_t v = 0; v < e.size(); ++v) {
      acc += e[v];
      if (u < acc) {
        chosen = static_cast<int>(v);
        break;
      }
    }
  }
  if (logprob != nullptr) *logprob = next_logprob(chosen);
  return chosen;
}

DecodeResult DecodeSession::generate(const std::vector<int>& stop_ids, int max_new,
                                     double temperature, Rng* rng) {
  DecodeResult res;
  for (int n = 0; n < max_new; ++n) {
    if (capacity_left() <= 0) {
      res.truncated = true;
      return res;
    }
    double lp = 0.0;
    int id = sample_next(temperature, rng, &lp);
    res.ids.push_back(id);
    res.logprobs.push_back(lp);
    advance(id);
    if (std::find(stop_ids.begin(), stop_ids.end(), id) != stop_ids.end()) return res;
  }
  res.truncated = true;
  return res;
}

DecodeResult decode(const Params& params, const std::vector<int>& context_ids,
                    const std::vector<int>& stop_ids, int max_new, double temperature, Rng* rng) {
  if (context_ids.empty()) throw ConfigError("decode needs a non-empty context");
  if (static_cast<int>(context_ids.size()) >= params.config.max_seq_len)
    throw TruncationError("decode context fills max_seq_len, nothing can be generated");
  DecodeSession session(params);
  session.feed(context_ids);
  return session.generate(stop_ids, max_new, temperature, rng);
}

// --- attention summary ----------------------------------------------------------

std::map<std::string, std::map<std::string, double>> attention_summary(
    const ForwardTrace& trace, const std::vector<Span>& spans) {
  if (spans.empty()) throw ConfigError("attention_summary needs at least one span");
  std::vector<Span> sorted = spans;
  std::sort(sorted.begin(), sorted.end(),
            [](const Span& a, const Span& b) { return a.begin < b.begin; });
  int expected = 0;
  for (const Span& s : sorted) {
    if (s.begin != expected || s.end <= s.begin)
      throw ConfigError("spans must partition [0, T) contiguously; bad span \"" + s.name + "\"");
    expected = s.end;
  }
  if (expected != trace.T) throw ConfigError("spans do not cover the full sequence");

  std::vector<int> span_of(static_cast<std::size_t>(trace.T));
  for (std::size_t si = 0; si < sorted.size(); ++si)
    for (int p = sorted[si].begin; p < sorted[si].end; ++p)
      span_of[static_cast<std::size_t>(p)] = static_cast<int>(si);

  const std::size_t n = sorted.size();
  std::vector<std::vector<double>> mass(n, std::vector<double>(n, 0.0));
  std::vector<double> rows(n, 0.0);  // number of (layer, head, query) rows per query span

  for (const auto& att_l : trace.attention) {
    for (const auto& att_h : att_l) {
      for (int q = 0; q < trace.T; ++q) {
        const auto& row = att_h[static_cast<std::size_t>(q)];
        int qs = span_of[static_cast<std::size_t>(q)];
        rows[static_cast<std::size_t>(qs)] += 1.0;
        for (int j = 0; j <= q; ++j)
          mass[static_cast<std::size_t>(qs)][static_cast<std::size_t>(span_of[static_cast<std::size_t>(j)])] +=
              row[static_cast<std::size_t>(j)];
      }
    }
  }

  std::map<std::string, std::map<std::string, double>> out;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      out[sorted[a].name][sorted[b].name] =
          rows[a] > 0.0 ? mass[a][b] / rows[a] : 0.0;
  return out;
}

// --- checkpoint -----------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'T', 'O', 'D', 'L', 'M', 'C', 'K', '1'};

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
}  // namespace

void save_checkpoint(const Params& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, 1);
  json header;
  header["config"] = {{"vocab_size", params.config.vocab_size},
                      {"n_layers", params.config.n_layers},
                      {"n_heads", params.config.n_heads},
                      {"d_model", params.config.d_model},
                      {"d_ff", params.config.d_ff},
                      {"max_seq_len", params.config.max_seq_len},
                      {"dropout", params.config.dropout}};
  std::string h = header.dump();
  write_u32(out, static_cast<std::uint32_t>(h.size()));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  params.for_each_tensor([&](const char* name, const std::vector<double>& t) {
    std::string n(name);
    write_u32(out, static_cast<std::uint32_t>(n.size()));
    out.write(n.data(), static_cast<std::streamsize>(n.size()));
    write_u64(out, t.size());
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  });
  if (!out) throw IoError("write failed for " + path);
}

Params load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw SchemaError("not a model checkpoint: " + path);
  std::uint32_t version = read_u32(in);
  if (version != 1) throw SchemaError("unsupported checkpoint version " + std::to_string(version));
  std::uint32_t hlen = read_u32(in);
  std::string h(hlen, '\0');
  in.read(h.data(), hlen);
  if (!in) throw SchemaError("truncated checkpoint header in " + path);
  ModelConfig cfg;
  try {
    json header = json::parse(h);
    const json& c = header.at("config");
    cfg.vocab_size = c.at("vocab_size").get<int>();
    cfg.n_layers = c.at("n_layers").get<int>();
    cfg.n_heads = c.at("n_heads").get<int>();
    cfg.d_model = c.at("d_model").get<int>();
    cfg.d_ff = c.at("d_ff").get<int>();
    cfg.max_seq_len = c.at("max_seq_len").get<int>();
    cfg.dropout = c.at("dropout").get<double>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint header: ") + e.what());
  }

  Params p = Params::zeros_like(cfg);
  p.for_each_tensor([&](const char* name, std::vector<double>& t) {
    std::uint32_t nlen = read_u32(in);
    std::string n(nlen, '\0');
    in.read(n.data(), nlen);
    if (!in || n != name)
      throw SchemaError("checkpoint tensor order mismatch: expected " + std::string(name) +
                        ", found " + n);
    std::uint64_t count = read_u64(in);
    if (count != t.size())
      throw SchemaError("checkpoint tensor " + n + " has " + std::to_string(count) +
                        " values, expected " + std::to_string(t.size()));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw SchemaError("truncated checkpoint tensor " + n);
  });
  return p;
}

// --- finite differences -----------------------------------------------------------

namespace {

double batch_loss(const Params& params, const std::vector<BatchItem>& batch) {
  double loss = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const BatchItem& item : batch) {
    ForwardTrace tr = forward(params, item.ids, false, nullptr);
    loss += weighted_loss(tr, item.ids, item.weight) * scale;
  }
  return loss;
}

}  // namespace

GradCheckReport finite_difference_check(const Params& params, const std::vector<BatchItem>& batch,
                                        int n_samples, std::uint64_t seed, double fd_step) {
  if (params.config.dropout != 0.0)
    throw ConfigError("finite differences require dropout = 0");
  Params grads = Params::zeros_like(params.config);
  loss_and_grad(params, batch, grads);

  struct TensorRef {
    std::string name;
    std::vector<double>* p;
    std::vector<double>* g;
  };
  std::vector<TensorRef> refs;
  Params& mut = const_cast<Params&>(params);
  {
    std::vector<std::vector<double>*> pv, gv;
    std::vector<std::string> names;
    mut.for_each_tensor([&](const char* name, std::vector<double>& t) {
      pv.push_back(&t);
      names.emplace_back(name);
    });
    grads.for_each_tensor([&](const char*, std::vector<double>& t) { gv.push_back(&t); });
    for (std::size_t i = 0; i < pv.size(); ++i) refs.push_back({names[i], pv[i], gv[i]});
  }
  std::size_t total = params.n_params();

  Rng rng(derive_seed(seed, 0xfDc3));
  GradCheckReport report;
  for (int s = 0; s < n_samples; ++s) {
    std::size_t flat = rng.next_u64() % total;
    std::size_t off = flat;
    const TensorRef* ref = nullptr;
    for (const auto& r : refs) {
      if (off < r.p->size()) {
        ref = &r;
        break;
      }
      off -= r.p->size();
    }
    double original = (*ref->p)[off];
    (*ref->p)[off] = original + fd_step;
    double lp = batch_loss(params, batch);
    (*ref->p)[off] = original - fd_step;
    double lm = batch_loss(params, batch);
    (*ref->p)[off] = original;
    double fd = (lp - lm) / (2.0 * fd_step);
    double an = (*ref->g)[off];
    // The floor keeps parameters with near-zero gradients from failing on
    // finite-difference rounding noise (loss is O(1), so the difference
    // quotient resolves gradients only down to about 1e-10).
    double denom = std::max(1e-6, std::abs(fd) + std::abs(an));
    double rel = std::abs(fd - an) / denom;
    ++report.checked;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_tensor = ref->name;
    }
  }
  return report;
}

}  // namespace tod::lm
