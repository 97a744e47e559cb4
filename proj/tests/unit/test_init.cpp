#include <cmath>
#include <map>

#include "doctest.h"
#include "subln/errors.hpp"
#include "subln/init.hpp"
#include "subln/model.hpp"

using namespace subln;

namespace {

double sample_std(const Tensor& t) {
  double mean = 0.0;
  for (double v : t.data()) mean += v;
  mean /= static_cast<double>(t.numel());
  double var = 0.0;
  for (double v : t.data()) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(t.numel() - 1));
}

ModelConfig wide(Family family, std::size_t n, std::size_t m) {
  ModelConfig c;
  c.family = family;
  c.variant = NormVariant::SubLN;
  c.n_encoder_layers = n;
  c.n_decoder_layers = m;
  c.d = 64;
  c.d_ff = 256;
  c.head_count = 4;
  c.vocab_size = 128;
  c.max_len = 64;
  c.init = InitMode::Magneto;
  c.seed = 21;
  return c;
}

}  // namespace

TEST_CASE("depth-derived gains against frozen high-precision values") {
  const auto enc = init::gamma_for(Family::EncoderOnly, 12, 0);
  REQUIRE(enc.encoder);
  CHECK_FALSE(enc.decoder);
  CHECK(std::abs(*enc.encoder - 1.782709687623856) < 1e-12);

  const auto dec = init::gamma_for(Family::DecoderOnly, 0, 24);
  REQUIRE(dec.decoder);
  CHECK_FALSE(dec.encoder);
  CHECK(std::abs(*dec.decoder - 1.967536787688579) < 1e-12);

  const auto ed = init::gamma_for(Family::EncoderDecoder, 18, 18);
  CHECK(std::abs(*ed.encoder - 2.182857445037152) < 1e-12);
  CHECK(std::abs(*ed.decoder - 1.997244112912659) < 1e-12);

  CHECK(std::abs(*init::gamma_for(Family::EncoderOnly, 1, 0).encoder - 0.832554611157698) < 1e-12);
}

TEST_CASE("gains grow with depth and match the log formulas") {
  double last = 0.0;
  for (std::size_t n = 1; n <= 512; ++n) {
    const double g = *init::gamma_for(Family::EncoderOnly, n, 0).encoder;
    CHECK(g * g == doctest::Approx(std::log(2.0 * static_cast<double>(n))).epsilon(1e-14));
    CHECK(g > last);
    last = g;
  }
  for (std::size_t n = 1; n <= 40; n += 3)
    for (std::size_t m = 1; m <= 40; m += 5) {
      const auto g = init::gamma_for(Family::EncoderDecoder, n, m);
      const double e = *g.encoder, d = *g.decoder;
      CHECK(d * d == doctest::Approx(std::log(3.0 * m)).epsilon(1e-14));
      CHECK(3.0 * e * e == doctest::Approx(d * d * std::log(2.0 * n)).epsilon(1e-14));
    }
}

TEST_CASE("gain requests with missing depths are rejected") {
  CHECK_THROWS_AS(init::gamma_for(Family::EncoderOnly, 0, 0), ConfigError);
  CHECK_THROWS_AS(init::gamma_for(Family::DecoderOnly, 4, 0), ConfigError);
  CHECK_THROWS_AS(init::gamma_for(Family::EncoderDecoder, 0, 3), ConfigError);
  CHECK_THROWS_AS(init::gamma_for(Family::EncoderDecoder, 3, 0), ConfigError);
  CHECK_THROWS_AS(init::InitPlan::with_gain(0.0), ConfigError);
  CHECK_THROWS_AS(init::InitPlan::with_gain(-1.0), ConfigError);
  CHECK_THROWS_AS(init::InitPlan::with_gain(NAN), ConfigError);
}

TEST_CASE("scaled and unscaled role sets") {
  const auto plan = init::InitPlan::magneto(Family::EncoderDecoder, 6, 6);
  const std::set<WeightRole> scaled{WeightRole::FfnW1, WeightRole::FfnW2, WeightRole::AttnV, WeightRole::AttnO};
  CHECK(plan.scaled_set == scaled);
  for (auto r : plan.unscaled_set) CHECK_FALSE(plan.scaled_set.contains(r));
  for (auto r : {WeightRole::AttnQ, WeightRole::AttnK, WeightRole::CrossQ, WeightRole::CrossK, WeightRole::CrossV,
                 WeightRole::CrossO, WeightRole::Vocab}) {
    CHECK(plan.unscaled_set.contains(r));
    CHECK(plan.gain(r, Stream::Encoder) == 1.0);
    CHECK(plan.gain(r, Stream::Decoder) == 1.0);
  }
  CHECK(plan.gain(WeightRole::FfnW1, Stream::Encoder) == plan.gamma_encoder);
  CHECK(plan.gain(WeightRole::AttnO, Stream::Decoder) == plan.gamma_decoder);
  CHECK(plan.gamma_encoder != plan.gamma_decoder);

  const auto std_plan = init::InitPlan::standard();
  for (auto r : scaled) CHECK(std_plan.gain(r, Stream::Encoder) == 1.0);
}

TEST_CASE("xavier std") {
  CHECK(init::xavier_std(64, 64, 1.0) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(init::xavier_std(3, 5, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("drawn weights have the planned spread per role") {
  for (auto family : {Family::EncoderOnly, Family::DecoderOnly, Family::EncoderDecoder}) {
    const auto c = wide(family, family == Family::DecoderOnly ? 0 : 3, family == Family::EncoderOnly ? 0 : 3);
    Rng rng(c.seed);
    const auto model = build(c, rng);
    const auto plan = init::InitPlan::for_config(c);
    for (const auto& p : model.parameters()) {
      INFO(p.name);
      double want = 1.0;
      if (p.role == WeightRole::Vocab)
        want = 1.0 / std::sqrt(64.0);
      else if (p.role != WeightRole::TokenEmbedding && p.role != WeightRole::PositionEmbedding)
        want = init::xavier_std(p.tensor.cols(), p.tensor.rows(), plan.gain(p.role, p.stream));
      // Standard error of a sample std is about std / sqrt(2n); n >= 4096 here.
      CHECK(sample_std(p.tensor) == doctest::Approx(want).epsilon(0.05));
    }
  }
}

TEST_CASE("magneto scales exactly the planned roles relative to standard") {
  auto c = wide(Family::EncoderOnly, 6, 0);
  Rng a(c.seed);
  const auto magneto = build(c, a);
  c.init = InitMode::Standard;
  Rng b(c.seed);
  const auto standard = build(c, b);
  const double gamma = std::sqrt(std::log(12.0));
  const auto pm = magneto.parameters(), ps = standard.parameters();
  for (std::size_t i = 0; i < pm.size(); ++i) {
    const bool scaled = pm[i].role == WeightRole::FfnW1 || pm[i].role == WeightRole::FfnW2 ||
                        pm[i].role == WeightRole::AttnV || pm[i].role == WeightRole::AttnO;
    const double factor = scaled ? gamma : 1.0;
    for (std::size_t j = 0; j < pm[i].tensor.numel(); j += 97)
      CHECK(pm[i].tensor[j] == doctest::Approx(factor * ps[i].tensor[j]).epsilon(1e-13));
  }
}

TEST_CASE("initialization is deterministic in the seed") {
  const auto c = wide(Family::EncoderOnly, 2, 0);
  Rng a(5), b(5), other(6);
  const auto x = build(c, a), y = build(c, b), z = build(c, other);
  const auto px = x.parameters(), py = y.parameters(), pz = z.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < px.size(); ++i)
    for (std::size_t j = 0; j < px[i].tensor.numel(); ++j) {
      CHECK(px[i].tensor[j] == py[i].tensor[j]);
      differs = differs || px[i].tensor[j] != pz[i].tensor[j];
    }
  CHECK(differs);
}
