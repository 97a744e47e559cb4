#include "subln/model.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "subln/errors.hpp"
#include "subln/init.hpp"
#include "subln/io.hpp"

namespace subln {

namespace {

std::string normalize_key(std::string_view text) {
  std::string key;
  for (char c : text) {
    if (c == '_') c = '-';
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return key;
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::EncoderOnly:
      return "encoder-only";
    case Family::DecoderOnly:
      return "decoder-only";
    case Family::EncoderDecoder:
      return "enc-dec";
  }
  return "unknown";
}

Family parse_family(std::string_view text) {
  const std::string key = normalize_key(text);
  if (key == "encoder-only" || key == "encoder") return Family::EncoderOnly;
  if (key == "decoder-only" || key == "decoder") return Family::DecoderOnly;
  if (key == "enc-dec" || key == "encoder-decoder") return Family::EncoderDecoder;
  throw ConfigError("unknown family '" + std::string(text) + "' (expected encoder-only, decoder-only or enc-dec)");
}

std::string_view to_string(InitMode mode) { return mode == InitMode::Standard ? "standard" : "magneto"; }

InitMode parse_init_mode(std::string_view text) {
  const std::string key = normalize_key(text);
  if (key == "standard" || key == "unit" || key == "xavier") return InitMode::Standard;
  if (key == "magneto") return InitMode::Magneto;
  throw ConfigError("unknown init mode '" + std::string(text) + "' (expected standard or magneto)");
}

std::string_view to_string(WeightRole role) {
  switch (role) {
    case WeightRole::AttnQ:
      return "attn-q";
    case WeightRole::AttnK:
      return "attn-k";
    case WeightRole::AttnV:
      return "attn-v";
    case WeightRole::AttnO:
      return "attn-o";
    case WeightRole::FfnW1:
      return "ffn-w1";
    case WeightRole::FfnW2:
      return "ffn-w2";
    case WeightRole::CrossQ:
      return "cross-q";
    case WeightRole::CrossK:
      return "cross-k";
    case WeightRole::CrossV:
      return "cross-v";
    case WeightRole::CrossO:
      return "cross-o";
    case WeightRole::Vocab:
      return "vocab";
    case WeightRole::TokenEmbedding:
      return "token-embedding";
    case WeightRole::PositionEmbedding:
      return "position-embedding";
  }
  return "unknown";
}

void ModelConfig::validate() const {
  switch (family) {
    case Family::EncoderOnly:
      if (n_encoder_layers < 1 || n_decoder_layers != 0)
        throw ConfigError("encoder-only models need N >= 1 and M = 0");
      break;
    case Family::DecoderOnly:
      if (n_decoder_layers < 1 || n_encoder_layers != 0)
        throw ConfigError("decoder-only models need M >= 1 and N = 0");
      break;
    case Family::EncoderDecoder:
      if (n_encoder_layers < 1 || n_decoder_layers < 1) throw ConfigError("encoder-decoder models need N, M >= 1");
      break;
  }
  if (d < 2) throw ConfigError("d must be at least 2");
  if (d_ff < d) throw ConfigError("d_ff must be at least d");
  if (head_count == 0 || d % head_count != 0) throw ConfigError("head_count must divide d");
  if (vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
  if (max_len < 1) throw ConfigError("max_len must be positive");
}

std::size_t ModelConfig::encoder_sublayers() const { return 2 * n_encoder_layers; }

std::size_t ModelConfig::decoder_sublayers() const {
  return (family == Family::EncoderDecoder ? 3 : 2) * n_decoder_layers;
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{
      {"family", to_string(family)},
      {"variant", to_string(variant)},
      {"n_encoder_layers", n_encoder_layers},
      {"n_decoder_layers", n_decoder_layers},
      {"d", d},
      {"d_ff", d_ff},
      {"head_count", head_count},
      {"vocab_size", vocab_size},
      {"max_len", max_len},
      {"init", to_string(init)},
      {"seed", seed},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"family", "variant",    "n_encoder_layers", "n_decoder_layers",
                                           "d",      "d_ff",       "head_count",       "vocab_size",
                                           "max_len", "init",      "seed"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown model config key '" + key + "'");
  }
  ModelConfig c;
  try {
    if (j.contains("family")) c.family = parse_family(j.at("family").get<std::string>());
    if (j.contains("variant")) c.variant = parse_norm_variant(j.at("variant").get<std::string>());
    if (j.contains("n_encoder_layers")) c.n_encoder_layers = j.at("n_encoder_layers").get<std::size_t>();
    if (j.contains("n_decoder_layers")) c.n_decoder_layers = j.at("n_decoder_layers").get<std::size_t>();
    if (j.contains("d")) c.d = j.at("d").get<std::size_t>();
    if (j.contains("d_ff")) c.d_ff = j.at("d_ff").get<std::size_t>();
    if (j.contains("head_count")) c.head_count = j.at("head_count").get<std::size_t>();
    if (j.contains("vocab_size")) c.vocab_size = j.at("vocab_size").get<std::size_t>();
    if (j.contains("max_len")) c.max_len = j.at("max_len").get<std::size_t>();
    if (j.contains("init")) c.init = parse_init_mode(j.at("init").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

std::vector<NamedParameter> TransformerModel::parameters() const {
  std::vector<NamedParameter> out;
  out.push_back({"token_embedding", WeightRole::TokenEmbedding, Stream::Shared, token_embedding});
  out.push_back({"position_embedding", WeightRole::PositionEmbedding, Stream::Shared, position_embedding});
  auto add_stream = [&out](const std::vector<SubLayer>& layers, Stream stream, const std::string& prefix) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string base = prefix + "." + std::to_string(i) + ".";
      std::visit(
          [&](const auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, AttentionSubLayer>) {
              out.push_back({base + "attn.q", WeightRole::AttnQ, stream, layer.wq});
              out.push_back({base + "attn.k", WeightRole::AttnK, stream, layer.wk});
              out.push_back({base + "attn.v", WeightRole::AttnV, stream, layer.wv});
              out.push_back({base + "attn.o", WeightRole::AttnO, stream, layer.wo});
            } else if constexpr (std::is_same_v<T, CrossAttentionSubLayer>) {
              out.push_back({base + "cross.q", WeightRole::CrossQ, stream, layer.wq});
              out.push_back({base + "cross.k", WeightRole::CrossK, stream, layer.wk});
              out.push_back({base + "cross.v", WeightRole::CrossV, stream, layer.wv});
              out.push_back({base + "cross.o", WeightRole::CrossO, stream, layer.wo});
            } else {
              out.push_back({base + "ffn.w1", WeightRole::FfnW1, stream, layer.w1});
              out.push_back({base + "ffn.w2", WeightRole::FfnW2, stream, layer.w2});
            }
          },
          layers[i]);
    }
  };
  add_stream(encoder, Stream::Encoder, "encoder");
  add_stream(decoder, Stream::Decoder, "decoder");
  out.push_back({"vocab", WeightRole::Vocab, Stream::Shared, vocab});
  return out;
}

std::size_t TransformerModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

void TransformerModel::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

namespace {

Tensor fresh_copy(const Tensor& t) {
  Tensor copy = t.clone();
  copy.set_requires_grad(true);
  return copy;
}

std::vector<SubLayer> clone_stream(const std::vector<SubLayer>& layers) {
  std::vector<SubLayer> out;
  out.reserve(layers.size());
  for (const auto& sub : layers) {
    out.push_back(std::visit(
        [](auto layer) -> SubLayer {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, FfnSubLayer>) {
            layer.w1 = fresh_copy(layer.w1);
            layer.w2 = fresh_copy(layer.w2);
          } else {
            layer.wq = fresh_copy(layer.wq);
            layer.wk = fresh_copy(layer.wk);
            layer.wv = fresh_copy(layer.wv);
            layer.wo = fresh_copy(layer.wo);
          }
          return layer;
        },
        sub));
  }
  return out;
}

}  // namespace

TransformerModel TransformerModel::clone() const {
  TransformerModel copy = *this;
  copy.encoder = clone_stream(encoder);
  copy.decoder = clone_stream(decoder);
  copy.token_embedding = fresh_copy(token_embedding);
  copy.position_embedding = fresh_copy(position_embedding);
  copy.vocab = fresh_copy(vocab);
  return copy;
}

TransformerModel build_structure(const ModelConfig& config) {
  config.validate();
  TransformerModel model;
  model.config = config;
  const std::size_t d = config.d;
  model.token_embedding = Tensor::zeros({config.vocab_size, d}, true);
  model.position_embedding = Tensor::zeros({config.max_len, d}, true);
  for (std::size_t i = 0; i < config.n_encoder_layers; ++i) {
    model.encoder.emplace_back(AttentionSubLayer::create(d, config.head_count, config.variant, false));
    model.encoder.emplace_back(FfnSubLayer::create(d, config.d_ff, config.variant));
  }
  for (std::size_t i = 0; i < config.n_decoder_layers; ++i) {
    model.decoder.emplace_back(AttentionSubLayer::create(d, config.head_count, config.variant, true));
    if (config.family == Family::EncoderDecoder) {
      model.decoder.emplace_back(CrossAttentionSubLayer::create(d, config.head_count, config.variant));
    }
    model.decoder.emplace_back(FfnSubLayer::create(d, config.d_ff, config.variant));
  }
  if (model.encoder.size() != config.encoder_sublayers() || model.decoder.size() != config.decoder_sublayers()) {
    throw ContractError("sub-layer count does not match configuration");
  }
  const bool final_ln = config.variant != NormVariant::PostLN;
  model.encoder_final_ln = final_ln && !model.encoder.empty();
  model.decoder_final_ln = final_ln && !model.decoder.empty();
  model.vocab = Tensor::zeros({config.vocab_size, d}, true);
  return model;
}

TransformerModel build(const ModelConfig& config, Rng& rng) {
  TransformerModel model = build_structure(config);
  init::apply(model, init::InitPlan::for_config(config), rng);
  return model;
}

namespace {

Tensor embed_input(Tape& tape, const TransformerModel& model, const ModelInput& input) {
  if (const auto* vectors = std::get_if<Tensor>(&input)) {
    if (vectors->rank() != 2 || vectors->cols() != model.config.d) {
      throw DimensionError("vector-mode input must be [T x " + std::to_string(model.config.d) + "], got " +
                           shape_string(vectors->shape()));
    }
    return *vectors;
  }
  const auto& ids = std::get<std::vector<std::size_t>>(input);
  if (ids.empty()) throw DimensionError("empty token sequence");
  if (ids.size() > model.config.max_len) {
    throw IndexError("sequence length " + std::to_string(ids.size()) + " exceeds max_len " +
                     std::to_string(model.config.max_len));
  }
  for (auto id : ids) {
    if (id >= model.config.vocab_size) {
      throw IndexError("token id " + std::to_string(id) + " >= vocab size " + std::to_string(model.config.vocab_size));
    }
  }
  std::vector<std::size_t> positions(ids.size());
  for (std::size_t t = 0; t < positions.size(); ++t) positions[t] = t;
  return ops::add(tape, ops::embed(tape, model.token_embedding, ids),
                  ops::embed(tape, model.position_embedding, positions));
}

Tensor run_stream(Tape& tape, const std::vector<SubLayer>& layers, bool final_ln, Tensor x,
                  const Tensor* enc_out) {
  for (const auto& sub : layers) {
    x = std::visit(
        [&](const auto& layer) -> Tensor {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, AttentionSubLayer>) {
            return msa_forward(tape, layer, x);
          } else if constexpr (std::is_same_v<T, CrossAttentionSubLayer>) {
            if (!enc_out) throw ContractError("cross-attention without encoder output");
            return cross_attn_forward(tape, layer, x, *enc_out);
          } else {
            return ffn_forward(tape, layer, x);
          }
        },
        sub);
  }
  return final_ln ? ops::layer_norm(tape, x) : x;
}

}  // namespace

Tensor forward(Tape& tape, const TransformerModel& model, const ModelInput& input) {
  switch (model.config.family) {
    case Family::EncoderOnly: {
      Tensor h = run_stream(tape, model.encoder, model.encoder_final_ln, embed_input(tape, model, input), nullptr);
      return ops::linear(tape, h, model.vocab);
    }
    case Family::DecoderOnly: {
      Tensor h = run_stream(tape, model.decoder, model.decoder_final_ln, embed_input(tape, model, input), nullptr);
      return ops::linear(tape, h, model.vocab);
    }
    case Family::EncoderDecoder:
      throw ContractError("encoder-decoder models need both source and target inputs");
  }
  throw ContractError("unhandled family");
}

Tensor forward(Tape& tape, const TransformerModel& model, const ModelInput& source, const ModelInput& target) {
  if (model.config.family != Family::EncoderDecoder) {
    throw ContractError("source/target forward is only defined for encoder-decoder models");
  }
  Tensor enc_out = run_stream(tape, model.encoder, model.encoder_final_ln, embed_input(tape, model, source), nullptr);
  Tensor h = run_stream(tape, model.decoder, model.decoder_final_ln, embed_input(tape, model, target), &enc_out);
  return ops::linear(tape, h, model.vocab);
}

void sgd_step(TransformerModel& model, double eta) {
  auto params = model.parameters();
  const bool any = std::any_of(params.begin(), params.end(), [](const NamedParameter& p) { return p.tensor.has_grad(); });
  if (!any) throw ContractError("sgd_step: no parameter has a gradient; call backward() first");
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    auto data = p.tensor.mutable_data();
    auto grad = p.tensor.grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= eta * grad[i];
  }
}

namespace {

constexpr std::string_view kCheckpointMagic = "SUBLN-CKPT 1";

void write_le_double(std::ostream& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

double read_le_double(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw ConfigError("checkpoint: truncated parameter blob");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_checkpoint(std::ostream& out, const TransformerModel& model) {
  nlohmann::json header = model.config.to_json();
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  for (const auto& p : model.parameters()) {
    for (double v : p.tensor.data()) write_le_double(out, v);
  }
}

TransformerModel read_checkpoint(std::istream& in) {
  std::string magic, header;
  if (!std::getline(in, magic) || magic != kCheckpointMagic) throw ConfigError("checkpoint: bad magic line");
  if (!std::getline(in, header)) throw ConfigError("checkpoint: missing config header");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed config header: ") + e.what());
  }
  TransformerModel model = build_structure(ModelConfig::from_json(j));
  for (auto& p : model.parameters()) {
    for (auto& v : p.tensor.mutable_data()) v = read_le_double(in);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ConfigError("checkpoint: trailing bytes after parameters");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const TransformerModel& model) {
  io::write_atomically(path, [&](std::ostream& out) { write_checkpoint(out, model); });
}

TransformerModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace subln
