#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "subln/layers.hpp"
#include "subln/rng.hpp"
#include "subln/tensor.hpp"

namespace subln {

enum class Family { EncoderOnly, DecoderOnly, EncoderDecoder };

std::string_view to_string(Family family);
// Accepts encoder-only, decoder-only, enc-dec / encoder-decoder.
Family parse_family(std::string_view text);

// Standard: Xavier-normal with gain 1 everywhere. Magneto: the depth-derived
// gains on FFN and attention value/output projections.
enum class InitMode { Standard, Magneto };

std::string_view to_string(InitMode mode);
InitMode parse_init_mode(std::string_view text);

struct ModelConfig {
  Family family = Family::EncoderOnly;
  NormVariant variant = NormVariant::SubLN;
  std::size_t n_encoder_layers = 1;  // N
  std::size_t n_decoder_layers = 0;  // M
  std::size_t d = 16;
  std::size_t d_ff = 64;
  std::size_t head_count = 1;
  std::size_t vocab_size = 8;
  std::size_t max_len = 64;
  InitMode init = InitMode::Magneto;
  std::uint64_t seed = 0;

  void validate() const;
  // 2N
  std::size_t encoder_sublayers() const;
  // 2M for decoder-only, 3M for encoder-decoder
  std::size_t decoder_sublayers() const;

  nlohmann::json to_json() const;
  // Rejects unknown keys.
  static ModelConfig from_json(const nlohmann::json& j);
};

enum class WeightRole {
  AttnQ,
  AttnK,
  AttnV,
  AttnO,
  FfnW1,
  FfnW2,
  CrossQ,
  CrossK,
  CrossV,
  CrossO,
  Vocab,
  TokenEmbedding,
  PositionEmbedding,
};

std::string_view to_string(WeightRole role);

enum class Stream { Shared, Encoder, Decoder };

struct NamedParameter {
  std::string name;
  WeightRole role;
  Stream stream;
  Tensor tensor;
};

using SubLayer = std::variant<AttentionSubLayer, CrossAttentionSubLayer, FfnSubLayer>;

struct TransformerModel {
  ModelConfig config;
  std::vector<SubLayer> encoder;
  std::vector<SubLayer> decoder;
  Tensor token_embedding;     // [V x d]
  Tensor position_embedding;  // [max_len x d]
  Tensor vocab;               // [V x d]
  bool encoder_final_ln = false;
  bool decoder_final_ln = false;

  // Every trainable tensor in build order: embeddings, encoder sub-layers,
  // decoder sub-layers, vocabulary head.
  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
  // Deep copy with fresh parameter storage.
  TransformerModel clone() const;
};

// Allocates the sub-layer stacks for `config` and initializes them with the
// plan implied by config.init.
TransformerModel build(const ModelConfig& config, Rng& rng);
// Structure only; every parameter is zero.
TransformerModel build_structure(const ModelConfig& config);

// Token ids (embedded with learned absolute positions) or raw [T x d] vectors.
using ModelInput = std::variant<std::vector<std::size_t>, Tensor>;

// Encoder-only or decoder-only forward pass; returns [T x V] logits.
Tensor forward(Tape& tape, const TransformerModel& model, const ModelInput& input);
// Encoder-decoder forward pass; returns [T_target x V] logits.
Tensor forward(Tape& tape, const TransformerModel& model, const ModelInput& source, const ModelInput& target);

// theta <- theta - eta * grad for every parameter holding a gradient.
// Throws ContractError when no parameter has one.
void sgd_step(TransformerModel& model, double eta);

// Checkpoint: "SUBLN-CKPT 1\n", the config as one line of canonical JSON, then
// every parameter in build order as little-endian IEEE-754 doubles.
void write_checkpoint(std::ostream& out, const TransformerModel& model);
TransformerModel read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const TransformerModel& model);
TransformerModel load_checkpoint(const std::filesystem::path& path);

}  // namespace subln
