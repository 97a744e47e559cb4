#include "subln/init.hpp"

#include <cmath>

#include "subln/errors.hpp"

namespace subln::init {

Gains gamma_for(Family family, std::size_t n_encoder_layers, std::size_t n_decoder_layers) {
  const double n = static_cast<double>(n_encoder_layers);
  const double m = static_cast<double>(n_decoder_layers);
  switch (family) {
    case Family::EncoderOnly:
      if (n_encoder_layers < 1) throw ConfigError("encoder-only gain needs N >= 1");
      return {std::sqrt(std::log(2.0 * n)), std::nullopt};
    case Family::DecoderOnly:
      if (n_decoder_layers < 1) throw ConfigError("decoder-only gain needs M >= 1");
      return {std::nullopt, std::sqrt(std::log(2.0 * m))};
    case Family::EncoderDecoder:
      if (n_encoder_layers < 1 || n_decoder_layers < 1) throw ConfigError("encoder-decoder gains need N, M >= 1");
      return {std::sqrt(std::log(3.0 * m) * std::log(2.0 * n) / 3.0), std::sqrt(std::log(3.0 * m))};
  }
  throw ConfigError("unhandled family");
}

namespace {

const std::set<WeightRole> kScaled{WeightRole::FfnW1, WeightRole::FfnW2, WeightRole::AttnV, WeightRole::AttnO};
const std::set<WeightRole> kUnscaled{WeightRole::AttnQ,  WeightRole::AttnK,  WeightRole::CrossQ, WeightRole::CrossK,
                                     WeightRole::CrossV, WeightRole::CrossO, WeightRole::Vocab};

}  // namespace

InitPlan InitPlan::standard() { return with_gain(1.0); }

InitPlan InitPlan::with_gain(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("initialization gain must be positive");
  return InitPlan{gamma, gamma, kScaled, kUnscaled};
}

InitPlan InitPlan::magneto(Family family, std::size_t n_encoder_layers, std::size_t n_decoder_layers) {
  const Gains g = gamma_for(family, n_encoder_layers, n_decoder_layers);
  InitPlan plan = standard();
  if (g.encoder) plan.gamma_encoder = *g.encoder;
  if (g.decoder) plan.gamma_decoder = *g.decoder;
  return plan;
}

InitPlan InitPlan::for_config(const ModelConfig& config) {
  if (config.init == InitMode::Standard) return standard();
  return magneto(config.family, config.n_encoder_layers, config.n_decoder_layers);
}

double InitPlan::gain(WeightRole role, Stream stream) const {
  if (!scaled_set.contains(role)) return 1.0;
  return stream == Stream::Decoder ? gamma_decoder : gamma_encoder;
}

double xavier_std(std::size_t fan_in, std::size_t fan_out, double gain) {
  return gain * std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

void apply(TransformerModel& model, const InitPlan& plan, Rng& rng) {
  const double d = static_cast<double>(model.config.d);
  for (auto& p : model.parameters()) {
    double stddev = 1.0;
    switch (p.role) {
      case WeightRole::Vocab:
        stddev = 1.0 / std::sqrt(d);
        break;
      case WeightRole::TokenEmbedding:
      case WeightRole::PositionEmbedding:
        stddev = 1.0;
        break;
      default:
        // Weights are stored [fan_out x fan_in].
        stddev = xavier_std(p.tensor.cols(), p.tensor.rows(), plan.gain(p.role, p.stream));
        break;
    }
    for (auto& v : p.tensor.mutable_data()) v = stddev * rng.normal();
    p.tensor.zero_grad();
  }
}

}  // namespace subln::init
