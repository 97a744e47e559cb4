#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "subln/ops.hpp"
#include "subln/tensor.hpp"

namespace subln {

// Where LayerNorm sits relative to a residual sub-layer.
//   PostLN: LN(x + f(x))
//   PreLN:  x + f(LN(x))
//   SubLN:  x + W_out LN(g(W_in LN(x)))
enum class NormVariant { PostLN, PreLN, SubLN };

std::string_view to_string(NormVariant variant);
// Accepts "postln", "preln", "subln" (case-insensitive, '-' and '_' ignored).
NormVariant parse_norm_variant(std::string_view text);

enum class Activation { Gelu, Identity };

// Test hook: Identity replaces the softmax mixing matrix with I, so every
// position only sees its own value vector.
enum class AttentionMixing { Softmax, Identity };

struct AttentionSubLayer {
  Tensor wq, wk, wv, wo;  // each [d x d]
  std::size_t head_count = 1;
  NormVariant variant = NormVariant::SubLN;
  bool causal = false;
  AttentionMixing mixing = AttentionMixing::Softmax;
  double eps = ops::kDefaultLayerNormEps;

  // Zero-initialized parameters that require gradients.
  static AttentionSubLayer create(std::size_t d, std::size_t head_count, NormVariant variant, bool causal);
  std::size_t width() const { return wq.rows(); }
  void validate() const;
};

struct FfnSubLayer {
  Tensor w1;  // [d_ff x d]
  Tensor w2;  // [d x d_ff]
  NormVariant variant = NormVariant::SubLN;
  Activation activation = Activation::Gelu;
  double eps = ops::kDefaultLayerNormEps;

  static FfnSubLayer create(std::size_t d, std::size_t d_ff, NormVariant variant);
  std::size_t width() const { return w2.rows(); }
  void validate() const;
};

// Decoder attention over the encoder output. The SubLN form keeps a single
// LayerNorm, on the attention output before W_o; queries, keys and values are
// projected from un-normalized inputs. PreLN and PostLN models use the
// conventional placements (LN on the query stream, LN after the residual).
struct CrossAttentionSubLayer {
  Tensor wq, wk, wv, wo;  // each [d x d]
  std::size_t head_count = 1;
  NormVariant variant = NormVariant::SubLN;
  double eps = ops::kDefaultLayerNormEps;

  static CrossAttentionSubLayer create(std::size_t d, std::size_t head_count, NormVariant variant);
  std::size_t width() const { return wq.rows(); }
  void validate() const;
};

// softmax(q_h k_h^T / sqrt(head_dim)) v_h per head, heads concatenated along
// columns. q is [Tq x d], k and v are [Tk x d]. When `probs` is non-null the
// per-head mixing matrices are appended to it.
Tensor multi_head_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v, std::size_t head_count,
                            bool causal, AttentionMixing mixing = AttentionMixing::Softmax,
                            std::vector<Tensor>* probs = nullptr);

Tensor msa_forward(Tape& tape, const AttentionSubLayer& layer, const Tensor& x);
Tensor ffn_forward(Tape& tape, const FfnSubLayer& layer, const Tensor& x);
Tensor cross_attn_forward(Tape& tape, const CrossAttentionSubLayer& layer, const Tensor& y, const Tensor& enc_out);

}  // namespace subln
