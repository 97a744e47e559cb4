#pragma once

#include <cstddef>
#include <optional>
#include <set>

#include "subln/model.hpp"
#include "subln/rng.hpp"

namespace subln::init {

struct Gains {
  std::optional<double> encoder;
  std::optional<double> decoder;
};

// Depth-derived gains (natural log):
//   encoder-only     gamma_e = sqrt(ln 2N)
//   decoder-only     gamma_d = sqrt(ln 2M)
//   encoder-decoder  gamma_e = sqrt(ln(3M) ln(2N) / 3), gamma_d = sqrt(ln 3M)
Gains gamma_for(Family family, std::size_t n_encoder_layers, std::size_t n_decoder_layers);

struct InitPlan {
  double gamma_encoder = 1.0;
  double gamma_decoder = 1.0;
  std::set<WeightRole> scaled_set;
  std::set<WeightRole> unscaled_set;

  // Gain 1 everywhere.
  static InitPlan standard();
  // gamma_for() gains on FFN W1/W2 and self-attention V/O.
  static InitPlan magneto(Family family, std::size_t n_encoder_layers, std::size_t n_decoder_layers);
  // Same scaled set with an explicit gain on both streams.
  static InitPlan with_gain(double gamma);
  static InitPlan for_config(const ModelConfig& config);

  double gain(WeightRole role, Stream stream) const;
};

// sqrt(2 / (fan_in + fan_out)) * gain
double xavier_std(std::size_t fan_in, std::size_t fan_out, double gain);

// Redraws every parameter of `model`: weight matrices from Xavier-normal with
// the plan's gain, W_vocab from N(0, 1/d), embeddings from N(0, 1).
void apply(TransformerModel& model, const InitPlan& plan, Rng& rng);

}  // namespace subln::init
