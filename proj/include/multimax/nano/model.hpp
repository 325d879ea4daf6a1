// A small pre-norm transformer classifier with a pluggable attention
// reweighting function and hand-written backpropagation.
//
//   tokens -> embedding -> L x [x + Attn(LN(x)); x + FFN(LN(x))] -> LN
//          -> mean over tokens -> linear -> class logits
//
// With MultiMax attention every layer owns one set of modulator parameters
// shared by its heads; they are trained with the rest of the weights.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "multimax/attention_stats.hpp"
#include "multimax/error.hpp"
#include "multimax/matrix.hpp"
#include "multimax/modulator.hpp"
#include "multimax/reweight.hpp"
#include "multimax/types.hpp"

namespace multimax::nano {

struct ToyModelConfig {
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t model_dim = 16;
  std::size_t ffn_dim = 32;
  std::size_t seq_len = 32;
  std::size_t vocab = 64;
  std::size_t classes = 4;
  /// For MultiMax the carried parameters initialize every layer.
  ReweightSpec reweight = spec::SoftMax{};
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return model_dim / heads; }

  void validate() const {
    if (depth < 1 || heads < 1 || model_dim < 1 || ffn_dim < 1 || seq_len < 1 || vocab < 1 ||
        classes < 1) {
      throw InvalidInput("toy model dimensions must all be >= 1");
    }
    if (model_dim % heads != 0) throw InvalidInput("model_dim must be divisible by heads");
    if (const auto* mm = std::get_if<spec::MultiMax>(&reweight)) mm->params.validate();
  }
};

/// Tensor slots within one transformer block.
enum BlockSlot : std::size_t {
  kLn1Gain, kLn1Bias, kQuery, kKey, kValue, kOutput, kLn2Gain, kLn2Bias, kFfnIn, kFfnInBias,
  kFfnOut, kFfnOutBias, kBlockSlots
};

inline constexpr const char* kBlockSlotNames[kBlockSlots] = {
    "ln1.gain", "ln1.bias", "attn.query", "attn.key", "attn.value", "attn.output",
    "ln2.gain", "ln2.bias", "ffn.in",     "ffn.in_bias", "ffn.out", "ffn.out_bias"};

/// All trainable state. `tensors` and `names` are parallel; `modulators` has
/// one entry per layer for MultiMax models and is empty otherwise.
struct ModelParams {
  std::vector<Matrix> tensors;
  std::vector<std::string> names;
  std::vector<ModulatorParams> modulators;

  ModelParams zeros_like() const {
    ModelParams z;
    z.names = names;
    for (const auto& t : tensors) z.tensors.emplace_back(t.rows(), t.cols());
    for (const auto& m : modulators) z.modulators.push_back(zero_like(m));
    return z;
  }
};

struct LayerNormCache {
  Matrix normalized;
  std::vector<double> inv_std;
};

struct BlockCache {
  Matrix input;
  LayerNormCache ln1;
  Matrix attn_in, q, k, v;
  std::vector<Matrix> logits;  // per head, pre-reweight, already scaled
  std::vector<Matrix> probs;   // per head
  Matrix attn_concat;
  Matrix mid;  // after the attention residual
  LayerNormCache ln2;
  Matrix ffn_in, pre_act, act;
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  Matrix final_hidden;  // output of the last block
  LayerNormCache ln_final;
  std::vector<double> pooled;
  std::vector<double> logits;
};

namespace detail {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)

inline double gelu(double u) {
  return 0.5 * u * (1.0 + std::tanh(kGeluScale * (u + 0.044715 * u * u * u)));
}

inline double gelu_derivative(double u) {
  const double th = std::tanh(kGeluScale * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluScale * (1.0 + 3.0 * 0.044715 * u * u);
}

inline Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache& cache) {
  const std::size_t n = x.cols();
  Matrix out(x.rows(), n);
  cache.normalized = Matrix(x.rows(), n);
  cache.inv_std.assign(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (double v : x.row(r)) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x.row(r)) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[r] = inv;
    for (std::size_t c = 0; c < n; ++c) {
      const double xhat = (x(r, c) - mean) * inv;
      cache.normalized(r, c) = xhat;
      out(r, c) = xhat * gain(0, c) + bias(0, c);
    }
  }
  return out;
}

inline Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormCache& cache,
                                  Matrix& dgain, Matrix& dbias) {
  const std::size_t n = dy.cols();
  Matrix dx(dy.rows(), n);
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double xhat = cache.normalized(r, c);
      dgain(0, c) += dy(r, c) * xhat;
      dbias(0, c) += dy(r, c);
      dxhat[c] = dy(r, c) * gain(0, c);
      mean_d += dxhat[c];
      mean_dx += dxhat[c] * xhat;
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    for (std::size_t c = 0; c < n; ++c) {
      dx(r, c) = cache.inv_std[r] * (dxhat[c] - mean_d - cache.normalized(r, c) * mean_dx);
    }
  }
  return dx;
}

inline void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) += bias(0, c);
  }
}

inline void accumulate_column_sums(const Matrix& m, Matrix& out) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += m(r, c);
  }
}

inline void add_in_place(Matrix& a, const Matrix& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

inline Matrix head_slice(const Matrix& m, std::size_t head, std::size_t width) {
  Matrix out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < width; ++c) out(r, c) = m(r, head * width + c);
  }
  return out;
}

inline void add_head_slice(Matrix& m, const Matrix& part, std::size_t head) {
  const std::size_t width = part.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < width; ++c) m(r, head * width + c) += part(r, c);
  }
}

}  // namespace detail

/// Result of scaled dot-product attention for one head.
struct AttentionOutput {
  Matrix output;
  Matrix probs;
};

/// probs row r = reweight(q_r . k^T / sqrt(d)); output = probs * v.
inline AttentionOutput attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                                         const ReweightSpec& spec, Matrix* logits_out = nullptr) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || q.cols() == 0) {
    throw InvalidInput("attention shape mismatch");
  }
  Matrix logits = matmul_nt(q, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (auto& x : logits.data()) x *= scale;
  Matrix probs(q.rows(), k.rows());
  if (k.rows() == 1) {
    probs.fill(1.0);
  } else {
    for (std::size_t r = 0; r < q.rows(); ++r) {
      const auto row = reweight(spec, Scores(std::vector<double>(logits.row(r).begin(), logits.row(r).end())));
      std::copy(row.begin(), row.end(), probs.row(r).begin());
    }
  }
  Matrix output = matmul(probs, v);
  if (logits_out) *logits_out = std::move(logits);
  return {std::move(output), std::move(probs)};
}

class ToyModel {
 public:
  explicit ToyModel(ToyModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    init();
  }
  ToyModel(ToyModelConfig cfg, ModelParams params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    check_layout();
  }

  const ToyModelConfig& config() const noexcept { return cfg_; }
  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }

  bool uses_multimax() const noexcept { return std::holds_alternative<spec::MultiMax>(cfg_.reweight); }

  std::size_t embedding_index() const noexcept { return 0; }
  std::size_t block_index(std::size_t layer, BlockSlot slot) const noexcept {
    return 1 + layer * kBlockSlots + slot;
  }
  std::size_t final_index(std::size_t which) const noexcept { return 1 + cfg_.depth * kBlockSlots + which; }

  /// Reweighting used by a layer: the configured function, with MultiMax
  /// carrying that layer's own parameters.
  ReweightSpec layer_spec(std::size_t layer) const {
    if (uses_multimax()) return spec::MultiMax{params_.modulators[layer]};
    return cfg_.reweight;
  }

  /// Class logits for one token sequence; fills `cache` for backward.
  std::vector<double> forward(std::span<const int> tokens, ForwardCache& cache) const {
    if (tokens.size() == 0) throw InvalidInput("empty token sequence");
    const std::size_t t = tokens.size();
    const std::size_t dm = cfg_.model_dim;
    const Matrix& embed = params_.tensors[embedding_index()];
    Matrix h(t, dm);
    for (std::size_t i = 0; i < t; ++i) {
      const int tok = tokens[i];
      if (tok < 0 || static_cast<std::size_t>(tok) >= cfg_.vocab) {
        throw InvalidInput("token " + std::to_string(tok) + " outside the vocabulary");
      }
      std::copy(embed.row(static_cast<std::size_t>(tok)).begin(), embed.row(static_cast<std::size_t>(tok)).end(),
                h.row(i).begin());
    }

    cache.blocks.assign(cfg_.depth, {});
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
      h = block_forward(l, std::move(h), cache.blocks[l]);
    }
    cache.final_hidden = h;
    const Matrix z = detail::layer_norm(h, p(final_index(0)), p(final_index(1)), cache.ln_final);
    cache.pooled.assign(dm, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t c = 0; c < dm; ++c) cache.pooled[c] += z(i, c) / static_cast<double>(t);
    }
    const Matrix& wc = p(final_index(2));
    const Matrix& bc = p(final_index(3));
    cache.logits.assign(cfg_.classes, 0.0);
    for (std::size_t k = 0; k < cfg_.classes; ++k) {
      double s = bc(0, k);
      for (std::size_t c = 0; c < dm; ++c) s += cache.pooled[c] * wc(c, k);
      cache.logits[k] = s;
    }
    return cache.logits;
  }

  std::vector<double> forward(std::span<const int> tokens) const {
    ForwardCache cache;
    return forward(tokens, cache);
  }

  /// Cross-entropy of one sequence; accumulates `weight` times its gradient.
  double loss_and_backward(std::span<const int> tokens, int label, double weight, ModelParams& grads) const {
    ForwardCache cache;
    forward(tokens, cache);
    const auto probs = softmax(Scores(cache.logits));
    const double loss = -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-300));

    const std::size_t dm = cfg_.model_dim;
    const std::size_t t = tokens.size();
    std::vector<double> dlogits(cfg_.classes);
    for (std::size_t k = 0; k < cfg_.classes; ++k) {
      dlogits[k] = weight * (probs[k] - (static_cast<int>(k) == label ? 1.0 : 0.0));
    }
    const Matrix& wc = p(final_index(2));
    Matrix& dwc = grads.tensors[final_index(2)];
    Matrix& dbc = grads.tensors[final_index(3)];
    std::vector<double> dpooled(dm, 0.0);
    for (std::size_t k = 0; k < cfg_.classes; ++k) {
      dbc(0, k) += dlogits[k];
      for (std::size_t c = 0; c < dm; ++c) {
        dwc(c, k) += cache.pooled[c] * dlogits[k];
        dpooled[c] += wc(c, k) * dlogits[k];
      }
    }
    Matrix dz(t, dm);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t c = 0; c < dm; ++c) dz(i, c) = dpooled[c] / static_cast<double>(t);
    }
    Matrix dh = detail::layer_norm_backward(dz, p(final_index(0)), cache.ln_final, grads.tensors[final_index(0)],
                                            grads.tensors[final_index(1)]);
    for (std::size_t l = cfg_.depth; l-- > 0;) {
      dh = block_backward(l, dh, cache.blocks[l], grads);
    }
    Matrix& dembed = grads.tensors[embedding_index()];
    for (std::size_t i = 0; i < t; ++i) {
      const auto tok = static_cast<std::size_t>(tokens[i]);
      for (std::size_t c = 0; c < dm; ++c) dembed(tok, c) += dh(i, c);
    }
    return loss;
  }

 private:
  const Matrix& p(std::size_t i) const { return params_.tensors[i]; }

  void add_tensor(std::string name, std::size_t rows, std::size_t cols, std::mt19937_64& rng, double stddev,
                  double fill = 0.0) {
    Matrix m(rows, cols, fill);
    if (stddev > 0.0) {
      std::normal_distribution<double> n(0.0, stddev);
      for (auto& v : m.data()) v = n(rng);
    }
    params_.tensors.push_back(std::move(m));
    params_.names.push_back(std::move(name));
  }

  void init() {
    std::mt19937_64 rng(cfg_.seed);
    const std::size_t dm = cfg_.model_dim, df = cfg_.ffn_dim;
    const double s_model = 1.0 / std::sqrt(static_cast<double>(dm));
    const double s_ffn = 1.0 / std::sqrt(static_cast<double>(df));
    add_tensor("embedding", cfg_.vocab, dm, rng, 1.0);
    for (std::size_t l = 0; l < cfg_.depth; ++l) {
      const std::string pre = "layer" + std::to_string(l + 1) + ".";
      add_tensor(pre + kBlockSlotNames[kLn1Gain], 1, dm, rng, 0.0, 1.0);
      add_tensor(pre + kBlockSlotNames[kLn1Bias], 1, dm, rng, 0.0);
      add_tensor(pre + kBlockSlotNames[kQuery], dm, dm, rng, s_model);
      add_tensor(pre + kBlockSlotNames[kKey], dm, dm, rng, s_model);
      add_tensor(pre + kBlockSlotNames[kValue], dm, dm, rng, s_model);
      add_tensor(pre + kBlockSlotNames[kOutput], dm, dm, rng, s_model);
      add_tensor(pre + kBlockSlotNames[kLn2Gain], 1, dm, rng, 0.0, 1.0);
      add_tensor(pre + kBlockSlotNames[kLn2Bias], 1, dm, rng, 0.0);
      add_tensor(pre + kBlockSlotNames[kFfnIn], dm, df, rng, s_model);
      add_tensor(pre + kBlockSlotNames[kFfnInBias], 1, df, rng, 0.0);
      add_tensor(pre + kBlockSlotNames[kFfnOut], df, dm, rng, s_ffn);
      add_tensor(pre + kBlockSlotNames[kFfnOutBias], 1, dm, rng, 0.0);
    }
    add_tensor("final_ln.gain", 1, dm, rng, 0.0, 1.0);
    add_tensor("final_ln.bias", 1, dm, rng, 0.0);
    add_tensor("classifier.weight", dm, cfg_.classes, rng, s_model);
    add_tensor("classifier.bias", 1, cfg_.classes, rng, 0.0);
    if (const auto* mm = std::get_if<spec::MultiMax>(&cfg_.reweight)) {
      params_.modulators.assign(cfg_.depth, mm->params);
    }
  }

  void check_layout() const {
    const std::size_t expected = 1 + cfg_.depth * kBlockSlots + 4;
    if (params_.tensors.size() != expected || params_.names.size() != expected) {
      throw InvalidInput("parameter set has " + std::to_string(params_.tensors.size()) + " tensors, expected " +
                         std::to_string(expected));
    }
    if (uses_multimax() && params_.modulators.size() != cfg_.depth) {
      throw InvalidInput("MultiMax model needs one modulator parameter set per layer");
    }
    for (const auto& m : params_.modulators) m.validate();
  }

  Matrix block_forward(std::size_t l, Matrix h, BlockCache& c) const {
    const std::size_t t = h.rows();
    const std::size_t dh = cfg_.head_dim();
    const auto spec = layer_spec(l);
    c.input = h;
    c.attn_in = detail::layer_norm(h, p(block_index(l, kLn1Gain)), p(block_index(l, kLn1Bias)), c.ln1);
    c.q = matmul(c.attn_in, p(block_index(l, kQuery)));
    c.k = matmul(c.attn_in, p(block_index(l, kKey)));
    c.v = matmul(c.attn_in, p(block_index(l, kValue)));
    c.attn_concat = Matrix(t, cfg_.model_dim);
    c.logits.assign(cfg_.heads, {});
    c.probs.assign(cfg_.heads, {});
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
      auto out = attention_forward(detail::head_slice(c.q, hd, dh), detail::head_slice(c.k, hd, dh),
                                   detail::head_slice(c.v, hd, dh), spec, &c.logits[hd]);
      detail::add_head_slice(c.attn_concat, out.output, hd);
      c.probs[hd] = std::move(out.probs);
    }
    c.mid = h;
    detail::add_in_place(c.mid, matmul(c.attn_concat, p(block_index(l, kOutput))));
    c.ffn_in = detail::layer_norm(c.mid, p(block_index(l, kLn2Gain)), p(block_index(l, kLn2Bias)), c.ln2);
    c.pre_act = matmul(c.ffn_in, p(block_index(l, kFfnIn)));
    detail::add_row_bias(c.pre_act, p(block_index(l, kFfnInBias)));
    c.act = c.pre_act;
    for (auto& v : c.act.data()) v = detail::gelu(v);
    Matrix out = c.mid;
    Matrix ffn = matmul(c.act, p(block_index(l, kFfnOut)));
    detail::add_row_bias(ffn, p(block_index(l, kFfnOutBias)));
    detail::add_in_place(out, ffn);
    return out;
  }

  Matrix block_backward(std::size_t l, const Matrix& dout, const BlockCache& c, ModelParams& g) const {
    const std::size_t t = dout.rows();
    const std::size_t dh = cfg_.head_dim();
    auto grad = [&](BlockSlot s) -> Matrix& { return g.tensors[block_index(l, s)]; };

    // Feed-forward branch.
    Matrix dmid = dout;
    matmul_tn_accumulate(c.act, dout, grad(kFfnOut));
    detail::accumulate_column_sums(dout, grad(kFfnOutBias));
    Matrix dact = matmul_nt(dout, p(block_index(l, kFfnOut)));
    for (std::size_t i = 0; i < dact.size(); ++i) dact.data()[i] *= detail::gelu_derivative(c.pre_act.data()[i]);
    matmul_tn_accumulate(c.ffn_in, dact, grad(kFfnIn));
    detail::accumulate_column_sums(dact, grad(kFfnInBias));
    const Matrix dffn_in = matmul_nt(dact, p(block_index(l, kFfnIn)));
    detail::add_in_place(dmid, detail::layer_norm_backward(dffn_in, p(block_index(l, kLn2Gain)), c.ln2,
                                                           grad(kLn2Gain), grad(kLn2Bias)));

    // Attention branch.
    Matrix dh_in = dmid;
    matmul_tn_accumulate(c.attn_concat, dmid, grad(kOutput));
    const Matrix dconcat = matmul_nt(dmid, p(block_index(l, kOutput)));
    Matrix dq(t, cfg_.model_dim), dk(t, cfg_.model_dim), dv(t, cfg_.model_dim);
    const auto spec = layer_spec(l);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
      const Matrix q = detail::head_slice(c.q, hd, dh);
      const Matrix k = detail::head_slice(c.k, hd, dh);
      const Matrix v = detail::head_slice(c.v, hd, dh);
      const Matrix dout_h = detail::head_slice(dconcat, hd, dh);
      const Matrix& probs = c.probs[hd];
      Matrix dv_h(t, dh);
      matmul_tn_accumulate(probs, dout_h, dv_h);
      const Matrix dprobs = matmul_nt(dout_h, v);
      Matrix dlogits(t, t);
      if (t > 1) {
        for (std::size_t r = 0; r < t; ++r) {
          const auto row = c.logits[hd].row(r);
          auto res = vjp(spec, Scores(std::vector<double>(row.begin(), row.end())), dprobs.row(r));
          for (std::size_t j = 0; j < t; ++j) dlogits(r, j) = res.grad_x[j] * scale;
          if (res.grad_params) {
            auto& gm = g.modulators[l];
            for (std::size_t n = 0; n < gm.orders.size(); ++n) {
              gm.orders[n].tb += res.grad_params->orders[n].tb;
              gm.orders[n].td += res.grad_params->orders[n].td;
              gm.orders[n].b += res.grad_params->orders[n].b;
              gm.orders[n].d += res.grad_params->orders[n].d;
            }
          }
        }
      }
      detail::add_head_slice(dq, matmul(dlogits, k), hd);
      Matrix dk_h(t, dh);
      matmul_tn_accumulate(dlogits, q, dk_h);
      detail::add_head_slice(dk, dk_h, hd);
      detail::add_head_slice(dv, dv_h, hd);
    }
    matmul_tn_accumulate(c.attn_in, dq, grad(kQuery));
    matmul_tn_accumulate(c.attn_in, dk, grad(kKey));
    matmul_tn_accumulate(c.attn_in, dv, grad(kValue));
    Matrix dattn_in = matmul_nt(dq, p(block_index(l, kQuery)));
    detail::add_in_place(dattn_in, matmul_nt(dk, p(block_index(l, kKey))));
    detail::add_in_place(dattn_in, matmul_nt(dv, p(block_index(l, kValue))));
    detail::add_in_place(dh_in, detail::layer_norm_backward(dattn_in, p(block_index(l, kLn1Gain)), c.ln1,
                                                            grad(kLn1Gain), grad(kLn1Bias)));
    return dh_in;
  }

  ToyModelConfig cfg_;
  ModelParams params_;
};

/// Per-layer attention probabilities from a forward cache.
inline AttentionStack attention_stack(const ForwardCache& cache) {
  AttentionStack stack;
  for (const auto& b : cache.blocks) stack.layers.push_back(AttentionLayer{b.probs});
  return stack;
}

}  // namespace multimax::nano
