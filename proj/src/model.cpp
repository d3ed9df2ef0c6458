#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace unionlm::model {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028653559;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) {
  double u = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  double u = kGeluC * (x + kGeluA * x * x * x);
  double t = std::tanh(u);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

// y[t,o] = b[o] + sum_i W[o,i] * x[t,i]; W row-major [out x in]
void linear_fwd(const double* w, const double* b, const double* x, double* y, int t_len, int in,
                int out) {
  for (int t = 0; t < t_len; ++t) {
    const double* xt = x + static_cast<size_t>(t) * in;
    double* yt = y + static_cast<size_t>(t) * out;
    for (int o = 0; o < out; ++o) {
      const double* wo = w + static_cast<size_t>(o) * in;
      double acc = b ? b[o] : 0.0;
      for (int i = 0; i < in; ++i) acc += wo[i] * xt[i];
      yt[o] = acc;
    }
  }
}

// accumulates dW[o,i] += dy[t,o]*x[t,i], db[o] += dy[t,o], dx[t,i] += W[o,i]*dy[t,o]
void linear_bwd(const double* w, const double* x, const double* dy, double* dw, double* db,
                double* dx, int t_len, int in, int out) {
  for (int t = 0; t < t_len; ++t) {
    const double* xt = x + static_cast<size_t>(t) * in;
    const double* dyt = dy + static_cast<size_t>(t) * out;
    double* dxt = dx ? dx + static_cast<size_t>(t) * in : nullptr;
    for (int o = 0; o < out; ++o) {
      double g = dyt[o];
      if (g == 0.0) continue;
      const double* wo = w + static_cast<size_t>(o) * in;
      double* dwo = dw + static_cast<size_t>(o) * in;
      if (db) db[o] += g;
      for (int i = 0; i < in; ++i) {
        dwo[i] += g * xt[i];
        if (dxt) dxt[i] += wo[i] * g;
      }
    }
  }
}

// per-row layernorm; xhat and rstd are cached for the backward pass
void layernorm_fwd(const double* x, const double* g, const double* b, double* y, double* xhat,
                   double* rstd, int t_len, int d) {
  for (int t = 0; t < t_len; ++t) {
    const double* xt = x + static_cast<size_t>(t) * d;
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += xt[i];
    mu /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) {
      double c = xt[i] - mu;
      var += c * c;
    }
    var /= d;
    double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[t] = rs;
    double* xh = xhat + static_cast<size_t>(t) * d;
    double* yt = y + static_cast<size_t>(t) * d;
    for (int i = 0; i < d; ++i) {
      xh[i] = (xt[i] - mu) * rs;
      yt[i] = g[i] * xh[i] + b[i];
    }
  }
}

// dx[t] += rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
void layernorm_bwd(const double* g, const double* xhat, const double* rstd, const double* dy,
                   double* dg, double* db, double* dx, int t_len, int d) {
  for (int t = 0; t < t_len; ++t) {
    const double* xh = xhat + static_cast<size_t>(t) * d;
    const double* dyt = dy + static_cast<size_t>(t) * d;
    double* dxt = dx + static_cast<size_t>(t) * d;
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < d; ++i) {
      double dxh = dyt[i] * g[i];
      m1 += dxh;
      m2 += dxh * xh[i];
    }
    m1 /= d;
    m2 /= d;
    for (int i = 0; i < d; ++i) {
      if (dg) {
        dg[i] += dyt[i] * xh[i];
        db[i] += dyt[i];
      }
      double dxh = dyt[i] * g[i];
      dxt[i] += rstd[t] * (dxh - m1 - xh[i] * m2);
    }
  }
}

struct LayerCache {
  std::vector<double> ln1_xhat, ln1_rstd, ln1_out;
  std::vector<double> q, k, v;
  std::vector<double> att;  // [heads x T x T], zero above the diagonal
  std::vector<double> ctx;
  std::vector<double> drop1;
  std::vector<double> ln2_xhat, ln2_rstd, ln2_out;
  std::vector<double> h1, gact;
  std::vector<double> drop2;
};

struct TrunkCache {
  int t_len = 0;
  std::vector<int> ids;
  std::vector<double> drop0;
  std::vector<double> x;  // residual stream after the final block (pre lnf)
  std::vector<double> lnf_xhat, lnf_rstd;
  std::vector<double> hf;  // final hidden states, [T x d]
  std::vector<LayerCache> layers;
};

void fill_dropout_mask(std::vector<double>& mask, size_t n, double p, Rng* rng) {
  mask.resize(n);
  double keep_scale = 1.0 / (1.0 - p);
  for (size_t i = 0; i < n; ++i) mask[i] = rng->uniform() < p ? 0.0 : keep_scale;
}

void apply_mask(double* x, const std::vector<double>& mask) {
  for (size_t i = 0; i < mask.size(); ++i) x[i] *= mask[i];
}

void validate_ids(const ModelConfig& cfg, const std::vector<int>& ids) {
  if (ids.empty()) throw InvalidArgError("model: empty token sequence");
  if (static_cast<int>(ids.size()) > cfg.max_seq_len)
    throw InvalidArgError(strformat("model: sequence length %zu exceeds max_seq_len %d",
                                    ids.size(), cfg.max_seq_len));
  for (int id : ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw InvalidArgError(strformat("model: token id %d outside vocab of size %d", id,
                                      cfg.vocab_size));
}

void trunk_forward(const ModelState& state, const std::vector<int>& ids, TrunkCache& cache,
                   Rng* dropout_rng) {
  const ModelConfig& cfg = state.config;
  const ParamLayout& lay = state.layout;
  validate_ids(cfg, ids);
  const int t_len = static_cast<int>(ids.size());
  const int d = cfg.d_model;
  const int f = cfg.d_ff;
  const int heads = cfg.n_heads;
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = dropout_rng != nullptr && cfg.dropout > 0.0;
  const size_t td = static_cast<size_t>(t_len) * d;

  cache.t_len = t_len;
  cache.ids = ids;
  cache.x.assign(td, 0.0);
  const double* tok = state.p(lay.tok_emb);
  const double* pos = state.p(lay.pos_emb);
  for (int t = 0; t < t_len; ++t)
    for (int i = 0; i < d; ++i)
      cache.x[static_cast<size_t>(t) * d + i] =
          tok[static_cast<size_t>(ids[t]) * d + i] + pos[static_cast<size_t>(t) * d + i];
  if (drop) {
    fill_dropout_mask(cache.drop0, td, cfg.dropout, dropout_rng);
    apply_mask(cache.x.data(), cache.drop0);
  } else {
    cache.drop0.clear();
  }

  cache.layers.assign(cfg.n_layers, LayerCache{});
  std::vector<double> branch(td);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const ParamLayout::Layer& pl = lay.layers[l];
    LayerCache& lc = cache.layers[l];

    lc.ln1_out.resize(td);
    lc.ln1_xhat.resize(td);
    lc.ln1_rstd.resize(t_len);
    layernorm_fwd(cache.x.data(), state.p(pl.ln1_g), state.p(pl.ln1_b), lc.ln1_out.data(),
                  lc.ln1_xhat.data(), lc.ln1_rstd.data(), t_len, d);

    lc.q.resize(td);
    lc.k.resize(td);
    lc.v.resize(td);
    linear_fwd(state.p(pl.wq), state.p(pl.bq), lc.ln1_out.data(), lc.q.data(), t_len, d, d);
    linear_fwd(state.p(pl.wk), state.p(pl.bk), lc.ln1_out.data(), lc.k.data(), t_len, d, d);
    linear_fwd(state.p(pl.wv), state.p(pl.bv), lc.ln1_out.data(), lc.v.data(), t_len, d, d);

    lc.att.assign(static_cast<size_t>(heads) * t_len * t_len, 0.0);
    lc.ctx.assign(td, 0.0);
    for (int h = 0; h < heads; ++h) {
      const int hoff = h * dh;
      double* att_h = lc.att.data() + static_cast<size_t>(h) * t_len * t_len;
      for (int t = 0; t < t_len; ++t) {
        double* row = att_h + static_cast<size_t>(t) * t_len;
        const double* qt = lc.q.data() + static_cast<size_t>(t) * d + hoff;
        double maxs = -HUGE_VAL;
        for (int j = 0; j <= t; ++j) {
          const double* kj = lc.k.data() + static_cast<size_t>(j) * d + hoff;
          double s = 0.0;
          for (int i = 0; i < dh; ++i) s += qt[i] * kj[i];
          s *= inv_sqrt_dh;
          row[j] = s;
          maxs = std::max(maxs, s);
        }
        double z = 0.0;
        for (int j = 0; j <= t; ++j) {
          row[j] = std::exp(row[j] - maxs);
          z += row[j];
        }
        double* ct = lc.ctx.data() + static_cast<size_t>(t) * d + hoff;
        for (int j = 0; j <= t; ++j) {
          row[j] /= z;
          const double* vj = lc.v.data() + static_cast<size_t>(j) * d + hoff;
          for (int i = 0; i < dh; ++i) ct[i] += row[j] * vj[i];
        }
      }
    }

    linear_fwd(state.p(pl.wo), state.p(pl.bo), lc.ctx.data(), branch.data(), t_len, d, d);
    if (drop) {
      fill_dropout_mask(lc.drop1, td, cfg.dropout, dropout_rng);
      apply_mask(branch.data(), lc.drop1);
    }
    for (size_t i = 0; i < td; ++i) cache.x[i] += branch[i];

    lc.ln2_out.resize(td);
    lc.ln2_xhat.resize(td);
    lc.ln2_rstd.resize(t_len);
    layernorm_fwd(cache.x.data(), state.p(pl.ln2_g), state.p(pl.ln2_b), lc.ln2_out.data(),
                  lc.ln2_xhat.data(), lc.ln2_rstd.data(), t_len, d);

    lc.h1.resize(static_cast<size_t>(t_len) * f);
    lc.gact.resize(lc.h1.size());
    linear_fwd(state.p(pl.w1), state.p(pl.b1), lc.ln2_out.data(), lc.h1.data(), t_len, d, f);
    for (size_t i = 0; i < lc.h1.size(); ++i) lc.gact[i] = gelu(lc.h1[i]);
    linear_fwd(state.p(pl.w2), state.p(pl.b2), lc.gact.data(), branch.data(), t_len, f, d);
    if (drop) {
      fill_dropout_mask(lc.drop2, td, cfg.dropout, dropout_rng);
      apply_mask(branch.data(), lc.drop2);
    }
    for (size_t i = 0; i < td; ++i) cache.x[i] += branch[i];
  }

  cache.hf.resize(td);
  cache.lnf_xhat.resize(td);
  cache.lnf_rstd.resize(t_len);
  layernorm_fwd(cache.x.data(), state.p(lay.lnf_g), state.p(lay.lnf_b), cache.hf.data(),
                cache.lnf_xhat.data(), cache.lnf_rstd.data(), t_len, d);
}

// dhf = d(loss)/d(final hidden states); consumes the cache, accumulates into g
void trunk_backward(const ModelState& state, const TrunkCache& cache, std::vector<double>& dhf,
                    std::vector<double>& g) {
  const ModelConfig& cfg = state.config;
  const ParamLayout& lay = state.layout;
  const int t_len = cache.t_len;
  const int d = cfg.d_model;
  const int f = cfg.d_ff;
  const int heads = cfg.n_heads;
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const size_t td = static_cast<size_t>(t_len) * d;

  std::vector<double> dx(td, 0.0);
  layernorm_bwd(state.p(lay.lnf_g), cache.lnf_xhat.data(), cache.lnf_rstd.data(), dhf.data(),
                g.data() + lay.lnf_g.off, g.data() + lay.lnf_b.off, dx.data(), t_len, d);

  std::vector<double> dbranch(td), dctx(td), dq(td), dk(td), dv(td), da(td);
  std::vector<double> dgact(static_cast<size_t>(t_len) * f), dh1(dgact.size());
  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const ParamLayout::Layer& pl = lay.layers[l];
    const LayerCache& lc = cache.layers[l];

    // feed-forward sublayer
    std::copy(dx.begin(), dx.end(), dbranch.begin());
    if (!lc.drop2.empty()) apply_mask(dbranch.data(), lc.drop2);
    std::fill(dgact.begin(), dgact.end(), 0.0);
    linear_bwd(state.p(pl.w2), lc.gact.data(), dbranch.data(), g.data() + pl.w2.off,
               g.data() + pl.b2.off, dgact.data(), t_len, f, d);
    for (size_t i = 0; i < dh1.size(); ++i) dh1[i] = dgact[i] * gelu_grad(lc.h1[i]);
    std::fill(da.begin(), da.end(), 0.0);
    linear_bwd(state.p(pl.w1), lc.ln2_out.data(), dh1.data(), g.data() + pl.w1.off,
               g.data() + pl.b1.off, da.data(), t_len, d, f);
    layernorm_bwd(state.p(pl.ln2_g), lc.ln2_xhat.data(), lc.ln2_rstd.data(), da.data(),
                  g.data() + pl.ln2_g.off, g.data() + pl.ln2_b.off, dx.data(), t_len, d);

    // attention sublayer
    std::copy(dx.begin(), dx.end(), dbranch.begin());
    if (!lc.drop1.empty()) apply_mask(dbranch.data(), lc.drop1);
    std::fill(dctx.begin(), dctx.end(), 0.0);
    linear_bwd(state.p(pl.wo), lc.ctx.data(), dbranch.data(), g.data() + pl.wo.off,
               g.data() + pl.bo.off, dctx.data(), t_len, d, d);

    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    std::vector<double> dp(t_len), ds(t_len);
    for (int h = 0; h < heads; ++h) {
      const int hoff = h * dh;
      const double* att_h = lc.att.data() + static_cast<size_t>(h) * t_len * t_len;
      for (int t = 0; t < t_len; ++t) {
        const double* row = att_h + static_cast<size_t>(t) * t_len;
        const double* dct = dctx.data() + static_cast<size_t>(t) * d + hoff;
        double sum_pd = 0.0;
        for (int j = 0; j <= t; ++j) {
          const double* vj = lc.v.data() + static_cast<size_t>(j) * d + hoff;
          double acc = 0.0;
          for (int i = 0; i < dh; ++i) acc += dct[i] * vj[i];
          dp[j] = acc;
          sum_pd += row[j] * acc;
          double* dvj = dv.data() + static_cast<size_t>(j) * d + hoff;
          for (int i = 0; i < dh; ++i) dvj[i] += row[j] * dct[i];
        }
        const double* qt = lc.q.data() + static_cast<size_t>(t) * d + hoff;
        double* dqt = dq.data() + static_cast<size_t>(t) * d + hoff;
        for (int j = 0; j <= t; ++j) {
          ds[j] = row[j] * (dp[j] - sum_pd) * inv_sqrt_dh;
          const double* kj = lc.k.data() + static_cast<size_t>(j) * d + hoff;
          double* dkj = dk.data() + static_cast<size_t>(j) * d + hoff;
          for (int i = 0; i < dh; ++i) {
            dqt[i] += ds[j] * kj[i];
            dkj[i] += ds[j] * qt[i];
          }
        }
      }
    }

    std::fill(da.begin(), da.end(), 0.0);
    linear_bwd(state.p(pl.wq), lc.ln1_out.data(), dq.data(), g.data() + pl.wq.off,
               g.data() + pl.bq.off, da.data(), t_len, d, d);
    linear_bwd(state.p(pl.wk), lc.ln1_out.data(), dk.data(), g.data() + pl.wk.off,
               g.data() + pl.bk.off, da.data(), t_len, d, d);
    linear_bwd(state.p(pl.wv), lc.ln1_out.data(), dv.data(), g.data() + pl.wv.off,
               g.data() + pl.bv.off, da.data(), t_len, d, d);
    layernorm_bwd(state.p(pl.ln1_g), lc.ln1_xhat.data(), lc.ln1_rstd.data(), da.data(),
                  g.data() + pl.ln1_g.off, g.data() + pl.ln1_b.off, dx.data(), t_len, d);
  }

  if (!cache.drop0.empty()) apply_mask(dx.data(), cache.drop0);
  double* dtok = g.data() + lay.tok_emb.off;
  double* dpos = g.data() + lay.pos_emb.off;
  for (int t = 0; t < t_len; ++t)
    for (int i = 0; i < d; ++i) {
      double v = dx[static_cast<size_t>(t) * d + i];
      dtok[static_cast<size_t>(cache.ids[t]) * d + i] += v;
      dpos[static_cast<size_t>(t) * d + i] += v;
    }
}

// softmax cross-entropy on one logit row; returns loss, optionally writes
// dlogits = softmax - onehot (unscaled)
double softmax_xent(const double* z, int n, int target, double* dz) {
  double maxz = z[0];
  for (int i = 1; i < n; ++i) maxz = std::max(maxz, z[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(z[i] - maxz);
  double logz = maxz + std::log(sum);
  if (dz) {
    for (int i = 0; i < n; ++i) dz[i] = std::exp(z[i] - maxz) / sum;
    dz[target] -= 1.0;
  }
  return logz - z[target];
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1) throw InvalidArgError("model config: n_layers must be >= 1");
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
    throw InvalidArgError(
        strformat("model config: d_model %d must be a positive multiple of n_heads %d", d_model,
                  n_heads));
  if (d_ff < 1) throw InvalidArgError("model config: d_ff must be >= 1");
  if (vocab_size < tok::kNumSpecials)
    throw InvalidArgError(strformat("model config: vocab_size %d below the %d reserved tokens",
                                    vocab_size, tok::kNumSpecials));
  if (max_seq_len < 2) throw InvalidArgError("model config: max_seq_len must be >= 2");
  if (n_classes != corpus::kNumClasses)
    throw InvalidArgError(strformat("model config: n_classes must be %d, got %d",
                                    corpus::kNumClasses, n_classes));
  if (dropout < 0.0 || dropout >= 1.0)
    throw InvalidArgError("model config: dropout must lie in [0, 1)");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["n_layers"] = n_layers;
  j["d_model"] = d_model;
  j["n_heads"] = n_heads;
  j["d_ff"] = d_ff;
  j["vocab_size"] = vocab_size;
  j["max_seq_len"] = max_seq_len;
  j["n_classes"] = n_classes;
  j["dropout"] = dropout;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& content) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(strformat("model config: %s", e.what()));
  }
  ModelConfig cfg;
  try {
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.d_ff = j.at("d_ff").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.max_seq_len = j.at("max_seq_len").get<int>();
    cfg.n_classes = j.at("n_classes").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.seed = j.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(strformat("model config: %s", e.what()));
  }
  cfg.validate();
  return cfg;
}

ParamLayout ParamLayout::build(const ModelConfig& cfg) {
  ParamLayout lay;
  size_t off = 0;
  auto take = [&off](int rows, int cols) {
    TensorView v{off, rows, cols};
    off += v.count();
    return v;
  };
  lay.tok_emb = take(cfg.vocab_size, cfg.d_model);
  lay.pos_emb = take(cfg.max_seq_len, cfg.d_model);
  lay.layers.resize(cfg.n_layers);
  for (Layer& pl : lay.layers) {
    pl.ln1_g = take(1, cfg.d_model);
    pl.ln1_b = take(1, cfg.d_model);
    pl.wq = take(cfg.d_model, cfg.d_model);
    pl.bq = take(1, cfg.d_model);
    pl.wk = take(cfg.d_model, cfg.d_model);
    pl.bk = take(1, cfg.d_model);
    pl.wv = take(cfg.d_model, cfg.d_model);
    pl.bv = take(1, cfg.d_model);
    pl.wo = take(cfg.d_model, cfg.d_model);
    pl.bo = take(1, cfg.d_model);
    pl.ln2_g = take(1, cfg.d_model);
    pl.ln2_b = take(1, cfg.d_model);
    pl.w1 = take(cfg.d_ff, cfg.d_model);
    pl.b1 = take(1, cfg.d_ff);
    pl.w2 = take(cfg.d_model, cfg.d_ff);
    pl.b2 = take(1, cfg.d_model);
  }
  lay.lnf_g = take(1, cfg.d_model);
  lay.lnf_b = take(1, cfg.d_model);
  lay.cls_w = take(cfg.n_classes, cfg.d_model);
  lay.cls_b = take(1, cfg.n_classes);
  lay.total = off;
  return lay;
}

std::vector<std::pair<std::string, TensorView>> ParamLayout::groups() const {
  std::vector<std::pair<std::string, TensorView>> out;
  out.emplace_back("tok_emb", tok_emb);
  out.emplace_back("pos_emb", pos_emb);
  for (size_t l = 0; l < layers.size(); ++l) {
    const Layer& pl = layers[l];
    auto add = [&out, l](const char* name, const TensorView& v) {
      out.emplace_back(strformat("layer%zu.%s", l, name), v);
    };
    add("ln1_g", pl.ln1_g);
    add("ln1_b", pl.ln1_b);
    add("wq", pl.wq);
    add("bq", pl.bq);
    add("wk", pl.wk);
    add("bk", pl.bk);
    add("wv", pl.wv);
    add("bv", pl.bv);
    add("wo", pl.wo);
    add("bo", pl.bo);
    add("ln2_g", pl.ln2_g);
    add("ln2_b", pl.ln2_b);
    add("w1", pl.w1);
    add("b1", pl.b1);
    add("w2", pl.w2);
    add("b2", pl.b2);
  }
  out.emplace_back("lnf_g", lnf_g);
  out.emplace_back("lnf_b", lnf_b);
  out.emplace_back("cls_w", cls_w);
  out.emplace_back("cls_b", cls_b);
  return out;
}

size_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  size_t d = cfg.d_model, f = cfg.d_ff;
  size_t per_layer = 4 * d * d + 2 * d * f + f + 9 * d;
  return static_cast<size_t>(cfg.vocab_size) * d + static_cast<size_t>(cfg.max_seq_len) * d +
         static_cast<size_t>(cfg.n_layers) * per_layer + 2 * d +
         static_cast<size_t>(cfg.n_classes) * d + cfg.n_classes;
}

ModelState init_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelState state;
  state.config = cfg;
  state.layout = ParamLayout::build(cfg);
  state.params.assign(state.layout.total, 0.0);

  Rng rng(cfg.seed);
  const double base_std = 0.02;
  // residual output projections shrink with depth so the stream stays O(1)
  const double resid_std = base_std / std::sqrt(2.0 * cfg.n_layers);
  auto fill_gauss = [&](const TensorView& v, double std) {
    double* p = state.p(v);
    for (size_t i = 0; i < v.count(); ++i) p[i] = std * rng.gauss();
  };
  auto fill_const = [&](const TensorView& v, double c) {
    double* p = state.p(v);
    for (size_t i = 0; i < v.count(); ++i) p[i] = c;
  };

  fill_gauss(state.layout.tok_emb, base_std);
  fill_gauss(state.layout.pos_emb, base_std);
  for (const ParamLayout::Layer& pl : state.layout.layers) {
    fill_const(pl.ln1_g, 1.0);
    fill_gauss(pl.wq, base_std);
    fill_gauss(pl.wk, base_std);
    fill_gauss(pl.wv, base_std);
    fill_gauss(pl.wo, resid_std);
    fill_const(pl.ln2_g, 1.0);
    fill_gauss(pl.w1, base_std);
    fill_gauss(pl.w2, resid_std);
  }
  fill_const(state.layout.lnf_g, 1.0);
  fill_gauss(state.layout.cls_w, base_std);
  return state;
}

namespace {

std::vector<uint8_t> params_as_f32_bytes(const std::vector<double>& params, size_t off, size_t n) {
  std::vector<uint8_t> bytes(n * 4);
  for (size_t i = 0; i < n; ++i) {
    float f = static_cast<float>(params[off + i]);
    uint32_t u;
    std::memcpy(&u, &f, 4);
    bytes[i * 4 + 0] = static_cast<uint8_t>(u & 0xff);
    bytes[i * 4 + 1] = static_cast<uint8_t>((u >> 8) & 0xff);
    bytes[i * 4 + 2] = static_cast<uint8_t>((u >> 16) & 0xff);
    bytes[i * 4 + 3] = static_cast<uint8_t>((u >> 24) & 0xff);
  }
  return bytes;
}

}  // namespace

std::string ModelState::param_checksum() const {
  std::vector<uint8_t> bytes = params_as_f32_bytes(params, 0, params.size());
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

std::string ModelState::cls_head_checksum() const {
  size_t n = layout.cls_w.count() + layout.cls_b.count();
  std::vector<uint8_t> bytes = params_as_f32_bytes(params, layout.cls_w.off, n);
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

std::vector<double> forward_lm(const ModelState& state, const std::vector<int>& ids) {
  TrunkCache cache;
  trunk_forward(state, ids, cache, nullptr);
  const int t_len = cache.t_len;
  const int d = state.config.d_model;
  const int v = state.config.vocab_size;
  const double* emb = state.p(state.layout.tok_emb);
  std::vector<double> logits(static_cast<size_t>(t_len) * v);
  for (int t = 0; t < t_len; ++t) {
    const double* h = cache.hf.data() + static_cast<size_t>(t) * d;
    double* zt = logits.data() + static_cast<size_t>(t) * v;
    for (int w = 0; w < v; ++w) {
      const double* ew = emb + static_cast<size_t>(w) * d;
      double acc = 0.0;
      for (int i = 0; i < d; ++i) acc += ew[i] * h[i];
      zt[w] = acc;
    }
  }
  return logits;
}

std::vector<double> forward_last_logits(const ModelState& state, const std::vector<int>& ids) {
  TrunkCache cache;
  trunk_forward(state, ids, cache, nullptr);
  const int d = state.config.d_model;
  const int v = state.config.vocab_size;
  const double* emb = state.p(state.layout.tok_emb);
  const double* h = cache.hf.data() + static_cast<size_t>(cache.t_len - 1) * d;
  std::vector<double> logits(v);
  for (int w = 0; w < v; ++w) {
    const double* ew = emb + static_cast<size_t>(w) * d;
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += ew[i] * h[i];
    logits[w] = acc;
  }
  return logits;
}

double lm_loss(const std::vector<double>& logits, const std::vector<int>& ids,
               const std::vector<bool>& loss_mask, int vocab_size) {
  const size_t t_len = ids.size();
  if (t_len == 0) throw InvalidArgError("lm_loss: empty sequence");
  if (loss_mask.size() != t_len)
    throw InvalidArgError(strformat("lm_loss: mask length %zu != sequence length %zu",
                                    loss_mask.size(), t_len));
  if (logits.size() != t_len * static_cast<size_t>(vocab_size))
    throw InvalidArgError("lm_loss: logits shape mismatch");
  double sum = 0.0;
  long long n = 0;
  for (size_t t = 0; t < t_len; ++t) {
    if (!loss_mask[t]) continue;
    if (t == 0) throw InvalidArgError("lm_loss: loss mask selects position 0 (no predecessor)");
    sum += softmax_xent(logits.data() + (t - 1) * vocab_size, vocab_size, ids[t], nullptr);
    ++n;
  }
  if (n == 0) throw InvalidArgError("lm_loss: loss mask selects no positions");
  return sum / static_cast<double>(n);
}

SliceBounds slice_for_keyword(int keyword_id) {
  switch (keyword_id) {
    case tok::kKwComve: {
      const corpus::LabelSlice& s = corpus::slice_for(corpus::Dataset::comve);
      return {s.offset, s.width};
    }
    case tok::kKwCose: {
      const corpus::LabelSlice& s = corpus::slice_for(corpus::Dataset::cose);
      return {s.offset, s.width};
    }
    case tok::kKwOpenbook: {
      const corpus::LabelSlice& s = corpus::slice_for(corpus::Dataset::openbook);
      return {s.offset, s.width};
    }
    case tok::kKwOmcs:
      throw InvalidArgError("classification: the fact-corpus keyword has no label slice");
    default:
      throw InvalidArgError(strformat("classification: token id %d is not a dataset keyword",
                                      keyword_id));
  }
}

std::vector<double> classification_distribution(const ModelState& state,
                                                const std::vector<int>& ids, int keyword_id) {
  SliceBounds slice = slice_for_keyword(keyword_id);
  TrunkCache cache;
  trunk_forward(state, ids, cache, nullptr);
  const int d = state.config.d_model;
  const int nc = state.config.n_classes;
  const double* h = cache.hf.data() + static_cast<size_t>(cache.t_len - 1) * d;
  const double* wc = state.p(state.layout.cls_w);
  const double* bc = state.p(state.layout.cls_b);

  std::vector<double> z(slice.width);
  for (int c = 0; c < slice.width; ++c) {
    const double* row = wc + static_cast<size_t>(slice.offset + c) * d;
    double acc = bc[slice.offset + c];
    for (int i = 0; i < d; ++i) acc += row[i] * h[i];
    z[c] = acc;
  }
  double maxz = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - maxz);
    sum += v;
  }
  std::vector<double> probs(nc, 0.0);
  for (int c = 0; c < slice.width; ++c) probs[slice.offset + c] = z[c] / sum;
  return probs;
}

LossBreakdown compute_losses(const ModelState& state, std::span<const GenExample> gen_batch,
                             std::span<const ClsExample> cls_batch, double w_lm, double w_cls,
                             std::vector<double>* grads, Rng* dropout_rng) {
  const ModelConfig& cfg = state.config;
  if (gen_batch.empty() && cls_batch.empty())
    throw InvalidArgError("compute_losses: both batches are empty");
  if (grads && grads->size() != state.layout.total)
    throw InvalidArgError("compute_losses: gradient buffer size mismatch");

  long long total_masked = 0;
  for (const GenExample& ex : gen_batch) {
    if (ex.loss_mask.size() != ex.ids.size())
      throw InvalidArgError("compute_losses: loss mask length mismatch");
    long long m = 0;
    for (size_t t = 0; t < ex.ids.size(); ++t) {
      if (!ex.loss_mask[t]) continue;
      if (t == 0)
        throw InvalidArgError("compute_losses: loss mask selects position 0 (no predecessor)");
      ++m;
    }
    if (m == 0) throw InvalidArgError("compute_losses: generation example has an all-false mask");
    total_masked += m;
  }
  for (const ClsExample& ex : cls_batch) {
    SliceBounds slice = slice_for_keyword(ex.keyword_id);
    if (ex.label < slice.offset || ex.label >= slice.offset + slice.width)
      throw InvalidArgError(strformat(
          "compute_losses: label %d outside the keyword's slice [%d, %d)", ex.label, slice.offset,
          slice.offset + slice.width));
  }

  const int d = cfg.d_model;
  const int v = cfg.vocab_size;
  const double* emb = state.p(state.layout.tok_emb);
  LossBreakdown out;
  out.lm_tokens = total_masked;

  double lm_sum = 0.0;
  std::vector<double> zrow(v), dzrow(v);
  TrunkCache cache;
  for (const GenExample& ex : gen_batch) {
    trunk_forward(state, ex.ids, cache, dropout_rng);
    std::vector<double> dhf;
    if (grads) dhf.assign(static_cast<size_t>(cache.t_len) * d, 0.0);
    const double scale = total_masked > 0 ? w_lm / static_cast<double>(total_masked) : 0.0;
    for (size_t t = 1; t < ex.ids.size(); ++t) {
      if (!ex.loss_mask[t]) continue;
      const double* h = cache.hf.data() + (t - 1) * d;
      for (int w = 0; w < v; ++w) {
        const double* ew = emb + static_cast<size_t>(w) * d;
        double acc = 0.0;
        for (int i = 0; i < d; ++i) acc += ew[i] * h[i];
        zrow[w] = acc;
      }
      lm_sum += softmax_xent(zrow.data(), v, ex.ids[t], grads ? dzrow.data() : nullptr);
      if (grads) {
        double* demb = grads->data() + state.layout.tok_emb.off;
        double* dh = dhf.data() + (t - 1) * d;
        for (int w = 0; w < v; ++w) {
          double gz = dzrow[w] * scale;
          if (gz == 0.0) continue;
          const double* ew = emb + static_cast<size_t>(w) * d;
          double* dew = demb + static_cast<size_t>(w) * d;
          for (int i = 0; i < d; ++i) {
            dh[i] += ew[i] * gz;
            dew[i] += h[i] * gz;
          }
        }
      }
    }
    if (grads) trunk_backward(state, cache, dhf, *grads);
  }
  if (total_masked > 0) out.lm = lm_sum / static_cast<double>(total_masked);

  double cls_sum = 0.0;
  const int nc = cfg.n_classes;
  const double* wc = state.p(state.layout.cls_w);
  const double* bc = state.p(state.layout.cls_b);
  for (const ClsExample& ex : cls_batch) {
    SliceBounds slice = slice_for_keyword(ex.keyword_id);
    trunk_forward(state, ex.ids, cache, dropout_rng);
    const double* h = cache.hf.data() + static_cast<size_t>(cache.t_len - 1) * d;
    std::vector<double> z(slice.width), dz(slice.width);
    for (int c = 0; c < slice.width; ++c) {
      const double* row = wc + static_cast<size_t>(slice.offset + c) * d;
      double acc = bc[slice.offset + c];
      for (int i = 0; i < d; ++i) acc += row[i] * h[i];
      z[c] = acc;
    }
    cls_sum += softmax_xent(z.data(), slice.width, ex.label - slice.offset,
                            grads ? dz.data() : nullptr);
    if (grads) {
      const double scale = w_cls / static_cast<double>(cls_batch.size());
      std::vector<double> dhf(static_cast<size_t>(cache.t_len) * d, 0.0);
      double* dh = dhf.data() + static_cast<size_t>(cache.t_len - 1) * d;
      double* dwc = grads->data() + state.layout.cls_w.off;
      double* dbc = grads->data() + state.layout.cls_b.off;
      for (int c = 0; c < slice.width; ++c) {
        double gz = dz[c] * scale;
        int full = slice.offset + c;
        dbc[full] += gz;
        const double* row = wc + static_cast<size_t>(full) * d;
        double* drow = dwc + static_cast<size_t>(full) * d;
        for (int i = 0; i < d; ++i) {
          drow[i] += gz * h[i];
          dh[i] += gz * row[i];
        }
      }
      trunk_backward(state, cache, dhf, *grads);
    }
  }
  if (!cls_batch.empty()) out.cls = cls_sum / static_cast<double>(cls_batch.size());
  (void)nc;

  out.total = w_lm * out.lm + w_cls * out.cls;
  if (!std::isfinite(out.total))
    throw StateError(strformat("compute_losses: non-finite loss (lm=%g cls=%g)", out.lm, out.cls));
  return out;
}

namespace {

constexpr char kCkptMagic[4] = {'U', 'N', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
  const uint8_t* p;
  size_t n;
  size_t off = 0;
  void need(size_t k, const char* what) {
    if (off + k > n) throw ParseError(strformat("checkpoint: truncated while reading %s", what));
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[off + i]) << (8 * i);
    off += 8;
    return v;
  }
  std::string bytes(size_t k, const char* what) {
    need(k, what);
    std::string s(reinterpret_cast<const char*>(p + off), k);
    off += k;
    return s;
  }
};

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
  std::string config_json = state.config.to_json();
  std::vector<uint8_t> payload = params_as_f32_bytes(state.params, 0, state.params.size());

  std::string out;
  out.append(kCkptMagic, 4);
  put_u32(out, kCkptVersion);
  put_u32(out, static_cast<uint32_t>(config_json.size()));
  out.append(config_json);
  put_u32(out, static_cast<uint32_t>(state.vocab_hash.size()));
  out.append(state.vocab_hash);
  put_u64(out, state.params.size());
  out.append(reinterpret_cast<const char*>(payload.data()), payload.size());
  put_u64(out, fnv1a64(payload.data(), payload.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(strformat("cannot open %s for writing", path.c_str()));
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(strformat("failed writing %s", path.c_str()));
}

ModelState load_checkpoint(const std::string& path) {
  std::string blob = read_text_file(path);
  ByteReader r{reinterpret_cast<const uint8_t*>(blob.data()), blob.size()};
  std::string magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), kCkptMagic, 4) != 0)
    throw ParseError(strformat("%s is not a checkpoint (bad magic)", path.c_str()));
  uint32_t version = r.u32("version");
  if (version != kCkptVersion)
    throw ParseError(strformat("checkpoint %s: unsupported version %u", path.c_str(), version));
  uint32_t config_len = r.u32("config length");
  std::string config_json = r.bytes(config_len, "config");
  uint32_t hash_len = r.u32("vocab hash length");
  std::string vocab_hash = r.bytes(hash_len, "vocab hash");
  uint64_t n = r.u64("parameter count");

  ModelState state;
  state.config = ModelConfig::from_json(config_json);
  state.layout = ParamLayout::build(state.config);
  state.vocab_hash = vocab_hash;
  if (n != state.layout.total)
    throw ParseError(strformat("checkpoint %s: %llu parameters, config implies %zu", path.c_str(),
                               static_cast<unsigned long long>(n), state.layout.total));
  std::string payload = r.bytes(n * 4, "parameters");
  uint64_t want = r.u64("checksum");
  uint64_t got = fnv1a64(payload.data(), payload.size());
  if (want != got)
    throw ParseError(strformat("checkpoint %s: checksum mismatch (stored %s, computed %s)",
                               path.c_str(), hex64(want).c_str(), hex64(got).c_str()));

  state.params.resize(n);
  for (size_t i = 0; i < n; ++i) {
    uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= static_cast<uint32_t>(static_cast<uint8_t>(payload[i * 4 + b])) << (8 * b);
    float f;
    std::memcpy(&f, &u, 4);
    state.params[i] = static_cast<double>(f);
  }
  return state;
}

ModelState load_checkpoint(const std::string& path, const std::string& expect_vocab_hash) {
  ModelState state = load_checkpoint(path);
  if (!state.vocab_hash.empty() && state.vocab_hash != expect_vocab_hash)
    throw StateError(strformat(
        "checkpoint %s was trained with vocab %s but the current vocab hashes to %s", path.c_str(),
        state.vocab_hash.c_str(), expect_vocab_hash.c_str()));
  return state;
}

}  // namespace unionlm::model
