#include "subln/layers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "subln/errors.hpp"

namespace subln {

std::string_view to_string(NormVariant variant) {
  switch (variant) {
    case NormVariant::PostLN:
      return "postln";
    case NormVariant::PreLN:
      return "preln";
    case NormVariant::SubLN:
      return "subln";
  }
  return "unknown";
}

NormVariant parse_norm_variant(std::string_view text) {
  std::string key;
  for (char c : text) {
    if (c == '-' || c == '_') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "postln") return NormVariant::PostLN;
  if (key == "preln") return NormVariant::PreLN;
  if (key == "subln") return NormVariant::SubLN;
  throw ConfigError("unknown norm variant '" + std::string(text) + "' (expected postln, preln or subln)");
}

namespace {

Tensor square_param(std::size_t rows, std::size_t cols) { return Tensor::zeros({rows, cols}, true); }

void check_square(const Tensor& w, std::size_t d, const char* name) {
  if (!w.defined() || w.rank() != 2 || w.rows() != d || w.cols() != d) {
    throw ConfigError(std::string(name) + " must be [" + std::to_string(d) + " x " + std::to_string(d) + "]");
  }
}

void check_heads(std::size_t d, std::size_t head_count) {
  if (head_count == 0 || d % head_count != 0) {
    throw ConfigError("head_count " + std::to_string(head_count) + " does not divide width " + std::to_string(d));
  }
}

void check_input(const Tensor& x, std::size_t d, const char* what) {
  if (x.rank() != 2 || x.cols() != d) {
    throw DimensionError(std::string(what) + ": expected [T x " + std::to_string(d) + "] input, got " +
                         shape_string(x.shape()));
  }
}

}  // namespace

AttentionSubLayer AttentionSubLayer::create(std::size_t d, std::size_t head_count, NormVariant variant, bool causal) {
  check_heads(d, head_count);
  AttentionSubLayer layer;
  layer.wq = square_param(d, d);
  layer.wk = square_param(d, d);
  layer.wv = square_param(d, d);
  layer.wo = square_param(d, d);
  layer.head_count = head_count;
  layer.variant = variant;
  layer.causal = causal;
  return layer;
}

void AttentionSubLayer::validate() const {
  const std::size_t d = wq.defined() ? wq.rows() : 0;
  check_square(wq, d, "W_q");
  check_square(wk, d, "W_k");
  check_square(wv, d, "W_v");
  check_square(wo, d, "W_o");
  check_heads(d, head_count);
}

FfnSubLayer FfnSubLayer::create(std::size_t d, std::size_t d_ff, NormVariant variant) {
  if (d_ff < d) throw ConfigError("d_ff (" + std::to_string(d_ff) + ") must be at least d (" + std::to_string(d) + ")");
  FfnSubLayer layer;
  layer.w1 = square_param(d_ff, d);
  layer.w2 = square_param(d, d_ff);
  layer.variant = variant;
  return layer;
}

void FfnSubLayer::validate() const {
  if (!w1.defined() || !w2.defined() || w1.rank() != 2 || w2.rank() != 2 || w1.rows() != w2.cols() ||
      w1.cols() != w2.rows()) {
    throw ConfigError("FFN weights do not compose");
  }
}

CrossAttentionSubLayer CrossAttentionSubLayer::create(std::size_t d, std::size_t head_count, NormVariant variant) {
  check_heads(d, head_count);
  CrossAttentionSubLayer layer;
  layer.wq = square_param(d, d);
  layer.wk = square_param(d, d);
  layer.wv = square_param(d, d);
  layer.wo = square_param(d, d);
  layer.head_count = head_count;
  layer.variant = variant;
  return layer;
}

void CrossAttentionSubLayer::validate() const {
  const std::size_t d = wq.defined() ? wq.rows() : 0;
  check_square(wq, d, "W_q");
  check_square(wk, d, "W_k");
  check_square(wv, d, "W_v");
  check_square(wo, d, "W_o");
  check_heads(d, head_count);
}

Tensor multi_head_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v, std::size_t head_count,
                            bool causal, AttentionMixing mixing, std::vector<Tensor>* probs) {
  const std::size_t d = q.cols();
  check_heads(d, head_count);
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw DimensionError("attention: incompatible q/k/v shapes " + shape_string(q.shape()) + ", " +
                         shape_string(k.shape()) + ", " + shape_string(v.shape()));
  }
  if (mixing == AttentionMixing::Identity) {
    if (q.rows() != k.rows()) throw DimensionError("identity mixing needs equal query and key lengths");
    return v;
  }
  const std::size_t head_dim = d / head_count;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> heads;
  heads.reserve(head_count);
  for (std::size_t h = 0; h < head_count; ++h) {
    const std::size_t begin = h * head_dim, end = begin + head_dim;
    Tensor qh = head_count == 1 ? q : ops::slice_cols(tape, q, begin, end);
    Tensor kh = head_count == 1 ? k : ops::slice_cols(tape, k, begin, end);
    Tensor vh = head_count == 1 ? v : ops::slice_cols(tape, v, begin, end);
    Tensor scores = ops::scale(tape, ops::linear(tape, qh, kh), inv_sqrt);
    Tensor weights = ops::softmax_rows(tape, scores, causal);
    if (probs) probs->push_back(weights);
    heads.push_back(ops::matmul(tape, weights, vh));
  }
  return head_count == 1 ? heads.front() : ops::concat_cols(tape, heads);
}

Tensor msa_forward(Tape& tape, const AttentionSubLayer& layer, const Tensor& x) {
  layer.validate();
  check_input(x, layer.width(), "msa_forward");
  auto attend = [&](const Tensor& input) {
    Tensor q = ops::linear(tape, input, layer.wq);
    Tensor k = ops::linear(tape, input, layer.wk);
    Tensor v = ops::linear(tape, input, layer.wv);
    return multi_head_attention(tape, q, k, v, layer.head_count, layer.causal, layer.mixing);
  };
  switch (layer.variant) {
    case NormVariant::SubLN: {
      Tensor mixed = attend(ops::layer_norm(tape, x, layer.eps));
      return ops::add(tape, x, ops::linear(tape, ops::layer_norm(tape, mixed, layer.eps), layer.wo));
    }
    case NormVariant::PreLN:
      return ops::add(tape, x, ops::linear(tape, attend(ops::layer_norm(tape, x, layer.eps)), layer.wo));
    case NormVariant::PostLN:
      return ops::layer_norm(tape, ops::add(tape, x, ops::linear(tape, attend(x), layer.wo)), layer.eps);
  }
  throw ConfigError("unhandled norm variant");
}

Tensor ffn_forward(Tape& tape, const FfnSubLayer& layer, const Tensor& x) {
  layer.validate();
  check_input(x, layer.width(), "ffn_forward");
  auto activate = [&](const Tensor& h) {
    return layer.activation == Activation::Gelu ? ops::gelu(tape, h) : h;
  };
  switch (layer.variant) {
    case NormVariant::SubLN: {
      Tensor hidden = activate(ops::linear(tape, ops::layer_norm(tape, x, layer.eps), layer.w1));
      return ops::add(tape, x, ops::linear(tape, ops::layer_norm(tape, hidden, layer.eps), layer.w2));
    }
    case NormVariant::PreLN: {
      Tensor hidden = activate(ops::linear(tape, ops::layer_norm(tape, x, layer.eps), layer.w1));
      return ops::add(tape, x, ops::linear(tape, hidden, layer.w2));
    }
    case NormVariant::PostLN: {
      Tensor hidden = activate(ops::linear(tape, x, layer.w1));
      return ops::layer_norm(tape, ops::add(tape, x, ops::linear(tape, hidden, layer.w2)), layer.eps);
    }
  }
  throw ConfigError("unhandled norm variant");
}

Tensor cross_attn_forward(Tape& tape, const CrossAttentionSubLayer& layer, const Tensor& y, const Tensor& enc_out) {
  layer.validate();
  const std::size_t d = layer.width();
  if (y.rank() != 2 || enc_out.rank() != 2 || y.cols() != d || enc_out.cols() != d) {
    throw ConfigError("cross_attn_forward: width mismatch between decoder input " + shape_string(y.shape()) +
                      ", encoder output " + shape_string(enc_out.shape()) + " and layer width " + std::to_string(d));
  }
  auto attend = [&](const Tensor& query_input) {
    Tensor q = ops::linear(tape, query_input, layer.wq);
    Tensor k = ops::linear(tape, enc_out, layer.wk);
    Tensor v = ops::linear(tape, enc_out, layer.wv);
    return multi_head_attention(tape, q, k, v, layer.head_count, false);
  };
  switch (layer.variant) {
    case NormVariant::SubLN:
      return ops::add(tape, y, ops::linear(tape, ops::layer_norm(tape, attend(y), layer.eps), layer.wo));
    case NormVariant::PreLN:
      return ops::add(tape, y, ops::linear(tape, attend(ops::layer_norm(tape, y, layer.eps)), layer.wo));
    case NormVariant::PostLN:
      return ops::layer_norm(tape, ops::add(tape, y, ops::linear(tape, attend(y), layer.wo)), layer.eps);
  }
  throw ConfigError("unhandled norm variant");
}

}  // namespace subln
