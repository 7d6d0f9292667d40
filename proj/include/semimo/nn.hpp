// SPDX-License-Identifier: Apache-2.0
//
// Neural building blocks on top of the autodiff tape: multi-head attention,
// homogeneous and heterogeneous (two-token-family) Transformer layers, the
// preamble-length adaptive module (PLAM), residual cross-attention blocks,
// windowed attention over 2-D grids, and a finite-difference gradient check.
//
// Tokens are rows, features are columns. All layers use pre-norm residuals.
// Output projections of RCA blocks are zero-initialized so a freshly built
// block is the identity map on its self input.

#ifndef SEMIMO_NN_HPP
#define SEMIMO_NN_HPP

#include <functional>
#include <string>
#include <vector>

#include "semimo/autodiff.hpp"
#include "semimo/params.hpp"

namespace semimo::nn {

using ag::Expr;

struct AttentionConfig {
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 128;
  double dropout_rate = 0.0;

  void validate() const {
    require(d_model >= 1 && n_heads >= 1 && d_ff >= 1, "AttentionConfig: positive dims required");
    require(d_model % n_heads == 0, "AttentionConfig: d_model must be divisible by n_heads");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "AttentionConfig: dropout in [0,1)");
  }
};

inline Expr maybe_dropout(ParamContext& ctx, Expr x, double rate) {
  if (rate <= 0.0 || !ctx.training()) return x;
  require(ctx.dropout_rng != nullptr, "dropout: no RandomSource bound to ParamContext");
  const RMat& v = ctx.tape().val(x);
  RMat mask(v.rows(), v.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j)
      mask(i, j) = ctx.dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  return ag::mul(x, ctx.tape().constant(std::move(mask)));
}

/// y = x W + b with W: in x out.
inline Expr linear(ParamContext& ctx, const std::string& prefix, Expr x, int in, int out,
                   Init w_init = Init::TruncNormal) {
  require(ctx.tape().val(x).cols() == in, "linear: input width mismatch at " + prefix);
  Expr w = ctx.p(prefix + "/w", in, out, w_init);
  Expr b = ctx.p(prefix + "/b", 1, out, Init::Zero);
  return ag::add_rowvec(ag::matmul(x, w), b);
}

/// Layer norm with learned gain/bias.
inline Expr layer_norm(ParamContext& ctx, const std::string& prefix, Expr x, int d) {
  Expr g = ctx.p(prefix + "/g", 1, d, Init::One);
  Expr b = ctx.p(prefix + "/b", 1, d, Init::Zero);
  return ag::add_rowvec(ag::mul_rowvec(ag::layernorm_rows(x), g), b);
}

/// Two-layer ReLU MLP; zero_out makes the second layer start at zero so the
/// surrounding residual block is initially the identity.
inline Expr feed_forward(ParamContext& ctx, const std::string& prefix, Expr x,
                         const AttentionConfig& cfg, bool zero_out = false) {
  Expr h = ag::relu(linear(ctx, prefix + "/fc1", x, cfg.d_model, cfg.d_ff));
  h = maybe_dropout(ctx, h, cfg.dropout_rate);
  return linear(ctx, prefix + "/fc2", h, cfg.d_ff, cfg.d_model,
                zero_out ? Init::Zero : Init::TruncNormal);
}

/// Scaled dot-product attention over already-projected q/k/v, heads sliced
/// from the feature axis, concatenated back. No output projection here.
inline Expr attention_core(Expr q, Expr k, Expr v, int n_heads) {
  ag::Tape& t = *q.tape;
  const int d = static_cast<int>(t.val(q).cols());
  require(d % n_heads == 0, "attention_core: width not divisible by heads");
  require(t.val(k).cols() == d && t.val(v).cols() == d, "attention_core: k/v width mismatch");
  const int dh = d / n_heads;
  std::vector<Expr> heads;
  heads.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Expr qh = ag::slice_cols(q, h * dh, dh);
    Expr kh = ag::slice_cols(k, h * dh, dh);
    Expr vh = ag::slice_cols(v, h * dh, dh);
    Expr scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), 1.0 / std::sqrt(double(dh)));
    heads.push_back(ag::matmul(ag::softmax_rows(scores), vh));
  }
  return n_heads == 1 ? heads[0] : ag::concat_cols(heads);
}

/// Full multi-head attention with learned projections under `prefix`:
/// softmax(QK^T/sqrt(d_head))V per head, concatenated, output-projected.
inline Expr multi_head_attention(ParamContext& ctx, const std::string& prefix, Expr q_tokens,
                                 Expr k_tokens, Expr v_tokens, const AttentionConfig& cfg,
                                 Init out_init = Init::TruncNormal) {
  cfg.validate();
  const int d = cfg.d_model;
  require(ctx.tape().val(q_tokens).cols() == d && ctx.tape().val(k_tokens).cols() == d &&
              ctx.tape().val(v_tokens).cols() == d,
          "multi_head_attention: token width mismatch");
  Expr q = linear(ctx, prefix + "/q", q_tokens, d, d);
  Expr k = linear(ctx, prefix + "/k", k_tokens, d, d);
  Expr v = linear(ctx, prefix + "/v", v_tokens, d, d);
  Expr a = attention_core(q, k, v, cfg.n_heads);
  a = maybe_dropout(ctx, a, cfg.dropout_rate);
  return linear(ctx, prefix + "/o", a, d, d, out_init);
}

/// Standard pre-norm Transformer encoder layer (self-attention + MLP).
inline Expr transformer_layer(ParamContext& ctx, const std::string& prefix, Expr x,
                              const AttentionConfig& cfg) {
  Expr n1 = layer_norm(ctx, prefix + "/ln1", x, cfg.d_model);
  x = ag::add(x, multi_head_attention(ctx, prefix + "/attn", n1, n1, n1, cfg));
  Expr n2 = layer_norm(ctx, prefix + "/ln2", x, cfg.d_model);
  return ag::add(x, feed_forward(ctx, prefix + "/ff", n2, cfg));
}

/// Heterogeneous layer: both token families attend jointly over the
/// concatenated key/value set, but each family has its own projections,
/// feed-forward, and norms.
inline std::pair<Expr, Expr> hetero_layer_forward(ParamContext& ctx, const std::string& prefix,
                                                  Expr signal_tokens, Expr preamble_tokens,
                                                  const AttentionConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model;
  require(ctx.tape().val(signal_tokens).cols() == d && ctx.tape().val(preamble_tokens).cols() == d,
          "hetero_layer_forward: both families must have width d_model");

  Expr ns = layer_norm(ctx, prefix + "/sig/ln1", signal_tokens, d);
  Expr np = layer_norm(ctx, prefix + "/pre/ln1", preamble_tokens, d);

  Expr qs = linear(ctx, prefix + "/sig/attn/q", ns, d, d);
  Expr ks = linear(ctx, prefix + "/sig/attn/k", ns, d, d);
  Expr vs = linear(ctx, prefix + "/sig/attn/v", ns, d, d);
  Expr qp = linear(ctx, prefix + "/pre/attn/q", np, d, d);
  Expr kp = linear(ctx, prefix + "/pre/attn/k", np, d, d);
  Expr vp = linear(ctx, prefix + "/pre/attn/v", np, d, d);

  Expr k_joint = ag::concat_rows({ks, kp});
  Expr v_joint = ag::concat_rows({vs, vp});

  Expr as = linear(ctx, prefix + "/sig/attn/o", attention_core(qs, k_joint, v_joint, cfg.n_heads),
                   d, d);
  Expr ap = linear(ctx, prefix + "/pre/attn/o", attention_core(qp, k_joint, v_joint, cfg.n_heads),
                   d, d);

  Expr s = ag::add(signal_tokens, as);
  Expr p = ag::add(preamble_tokens, ap);

  Expr s2 = layer_norm(ctx, prefix + "/sig/ln2", s, d);
  Expr p2 = layer_norm(ctx, prefix + "/pre/ln2", p, d);
  s = ag::add(s, feed_forward(ctx, prefix + "/sig/ff", s2, cfg));
  p = ag::add(p, feed_forward(ctx, prefix + "/pre/ff", p2, cfg));
  return {s, p};
}

/// Preamble-length adaptive module: sigmoid gates from mean-pooled features
/// concatenated with the normalized active length, broadcast over tokens.
inline Expr plam_forward(ParamContext& ctx, const std::string& prefix, Expr tokens, int l_active,
                         int l_max, int d_model) {
  require(l_active >= 1 && l_active <= l_max, "plam_forward: L must be in [1, L_max]");
  ag::Tape& t = ctx.tape();
  require(t.val(tokens).cols() == d_model, "plam_forward: token width mismatch");
  const int hidden = std::max(1, d_model / 2);

  Expr pooled = ag::mean_rows(tokens);  // 1 x d
  RMat lfrac(1, 1);
  lfrac(0, 0) = static_cast<double>(l_active) / static_cast<double>(l_max);
  Expr feat = ag::concat_cols({pooled, t.constant(lfrac)});  // 1 x (d+1)
  Expr h = ag::relu(linear(ctx, prefix + "/fc1", feat, d_model + 1, hidden));
  Expr gates = ag::sigmoid(linear(ctx, prefix + "/fc2", h, hidden, d_model));  // 1 x d
  return ag::mul_rowvec(tokens, gates);
}

/// Computes the PLAM gate vector only (shared gating across token families).
inline Expr plam_gates(ParamContext& ctx, const std::string& prefix, Expr tokens, int l_active,
                       int l_max, int d_model) {
  require(l_active >= 1 && l_active <= l_max, "plam_gates: L must be in [1, L_max]");
  const int hidden = std::max(1, d_model / 2);
  Expr pooled = ag::mean_rows(tokens);
  RMat lfrac(1, 1);
  lfrac(0, 0) = static_cast<double>(l_active) / static_cast<double>(l_max);
  Expr feat = ag::concat_cols({pooled, ctx.tape().constant(lfrac)});
  Expr h = ag::relu(linear(ctx, prefix + "/fc1", feat, d_model + 1, hidden));
  return ag::sigmoid(linear(ctx, prefix + "/fc2", h, hidden, d_model));
}

/// Residual cross-attention block: queries from the mean of the peers' (normed)
/// features, keys/values from self. `residual_cut` keeps the skip around the
/// cross-attention (the plain-cross-attention ablation drops it). Output
/// projection and second MLP layer start at zero, so at initialization the
/// block is the identity on f_self when the residual cut is present.
inline Expr rca_forward(ParamContext& ctx, const std::string& prefix, Expr f_self,
                        const std::vector<Expr>& f_peers, const AttentionConfig& cfg,
                        bool residual_cut = true) {
  cfg.validate();
  require(!f_peers.empty(), "rca_forward: need at least one peer");
  ag::Tape& t = ctx.tape();
  const int d = cfg.d_model;
  require(t.val(f_self).cols() == d, "rca_forward: self width mismatch");
  for (Expr p : f_peers) require(t.val(p).cols() == d, "rca_forward: peer width mismatch");

  Expr peer_mean = f_peers[0];
  for (std::size_t i = 1; i < f_peers.size(); ++i) peer_mean = ag::add(peer_mean, f_peers[i]);
  peer_mean = ag::scale(peer_mean, 1.0 / static_cast<double>(f_peers.size()));

  Expr nq = layer_norm(ctx, prefix + "/ln_q", peer_mean, d);
  Expr nkv = layer_norm(ctx, prefix + "/ln_kv", f_self, d);
  Expr q = linear(ctx, prefix + "/attn/q", nq, d, d);
  Expr k = linear(ctx, prefix + "/attn/k", nkv, d, d);
  Expr v = linear(ctx, prefix + "/attn/v", nkv, d, d);
  Expr a = linear(ctx, prefix + "/attn/o", attention_core(q, k, v, cfg.n_heads), d, d, Init::Zero);

  Expr x = residual_cut ? ag::add(f_self, a) : a;
  Expr n2 = layer_norm(ctx, prefix + "/ln2", x, d);
  return ag::add(x, feed_forward(ctx, prefix + "/ff", n2, cfg, /*zero_out=*/true));
}

/// Row-major grid index permutation implementing cyclic shift + window
/// partition. perm[t] = source row feeding output position t, where outputs
/// are ordered window-block-major, row-major inside each window.
inline std::vector<int> window_partition_perm(int grid_h, int grid_w, int window, int shift) {
  std::vector<int> perm;
  perm.reserve(static_cast<std::size_t>(grid_h) * grid_w);
  for (int wi = 0; wi < grid_h / window; ++wi)
    for (int wj = 0; wj < grid_w / window; ++wj)
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          int y = (wi * window + i + shift) % grid_h;
          int x = (wj * window + j + shift) % grid_w;
          perm.push_back(y * grid_w + x);
        }
  return perm;
}

inline std::vector<int> invert_perm(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  return inv;
}

/// Windowed self-attention on an H x W grid of tokens (rows in row-major
/// order). The grid is cyclically shifted by `shift`, partitioned into
/// window x window blocks, self-attention runs inside each block with shared
/// projections, and the shift is undone.
inline Expr windowed_attention_forward(ParamContext& ctx, const std::string& prefix, Expr grid,
                                       int grid_h, int grid_w, int window, int shift,
                                       const AttentionConfig& cfg) {
  cfg.validate();
  require(window >= 1 && grid_h % window == 0 && grid_w % window == 0,
          "windowed_attention_forward: window must divide grid dims");
  require(shift >= 0 && shift < window, "windowed_attention_forward: shift must be in [0, window)");
  ag::Tape& t = ctx.tape();
  require(t.val(grid).rows() == static_cast<Eigen::Index>(grid_h) * grid_w,
          "windowed_attention_forward: grid rows must equal H*W");

  const std::vector<int> perm = window_partition_perm(grid_h, grid_w, window, shift);
  Expr shuffled = ag::gather_rows(grid, perm);
  const int win_tokens = window * window;
  const int n_windows = (grid_h * grid_w) / win_tokens;
  std::vector<Expr> outs;
  outs.reserve(n_windows);
  for (int b = 0; b < n_windows; ++b) {
    Expr blk = ag::slice_rows(shuffled, b * win_tokens, win_tokens);
    outs.push_back(multi_head_attention(ctx, prefix + "/attn", blk, blk, blk, cfg));
  }
  Expr joined = n_windows == 1 ? outs[0] : ag::concat_rows(outs);
  return ag::gather_rows(joined, invert_perm(perm));
}

/// Pre-norm residual block around windowed attention plus MLP (the codec unit).
inline Expr swin_block(ParamContext& ctx, const std::string& prefix, Expr x, int grid_h,
                       int grid_w, int window, int shift, const AttentionConfig& cfg) {
  Expr n1 = layer_norm(ctx, prefix + "/ln1", x, cfg.d_model);
  x = ag::add(x, windowed_attention_forward(ctx, prefix, n1, grid_h, grid_w, window, shift, cfg));
  Expr n2 = layer_norm(ctx, prefix + "/ln2", x, cfg.d_model);
  return ag::add(x, feed_forward(ctx, prefix + "/ff", n2, cfg));
}

/// Central-difference gradient check on a random subsample of coordinates.
/// `forward(params, grads)` returns the scalar loss and, when `grads` is
/// non-null, fills the analytic gradient. Returns the max relative error.
inline double gradient_check(
    const std::function<double(ModelParams&, GradMap*)>& forward, ModelParams& params,
    double epsilon, int min_coords, RandomSource& rng) {
  require(epsilon > 0.0, "gradient_check: epsilon must be positive");
  GradMap grads;
  double loss = forward(params, &grads);
  if (!std::isfinite(loss)) throw NumericError("gradient_check: non-finite loss");

  std::vector<std::pair<std::string, int>> coords;
  for (const auto& [key, g] : grads)
    for (int i = 0; i < g.size(); ++i) coords.emplace_back(key, i);
  require(!coords.empty(), "gradient_check: no parameters bound");

  const int n_check = std::min<int>(static_cast<int>(coords.size()),
                                    std::max(min_coords, 50));
  // Fisher-Yates prefix shuffle picks the sampled coordinates.
  for (int i = 0; i < n_check; ++i) {
    int j = i + static_cast<int>(rng.next_u64() % (coords.size() - i));
    std::swap(coords[i], coords[j]);
  }

  double max_rel = 0.0;
  for (int c = 0; c < n_check; ++c) {
    const auto& [key, idx] = coords[c];
    double* slot = params.at(key).data() + idx;
    const double saved = *slot;
    *slot = saved + epsilon;
    double fp = forward(params, nullptr);
    *slot = saved - epsilon;
    double fm = forward(params, nullptr);
    *slot = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("gradient_check: non-finite loss during perturbation");
    const double fd = (fp - fm) / (2.0 * epsilon);
    const double an = grads.at(key)(idx);
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace semimo::nn

#endif  // SEMIMO_NN_HPP
