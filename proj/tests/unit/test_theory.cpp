#include <cmath>
#include <limits>

#include "doctest.h"
#include "subln/errors.hpp"
#include "subln/init.hpp"
#include "subln/rng.hpp"
#include "subln/theory.hpp"

using namespace subln;
using namespace subln::theory;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

// H_n summed upward, independent of theory::harmonic's direction.
double harmonic_up(std::size_t n) {
  double h = 0.0;
  for (std::size_t k = 1; k <= n; ++k) h += 1.0 / static_cast<double>(k);
  return h;
}

// Literal double-sum evaluation with every prefix recomputed, O(L^3).
double naive_bound(const ScaleProfile& p, double eta, double d, NormVariant variant) {
  const std::size_t L = p.length();
  auto a = [&](std::size_t n) {
    const double v2 = p.v[n] * p.v[n], w2 = p.w[n] * p.w[n];
    return variant == NormVariant::PreLN ? v2 * w2 : v2;
  };
  auto c = [&](std::size_t n) {
    const double v2 = p.v[n] * p.v[n], w2 = p.w[n] * p.w[n];
    return variant == NormVariant::PreLN ? v2 + w2 : 1.0 + v2 / w2;
  };
  double total = 0.0;
  for (std::size_t n = 0; n < L; ++n) total += a(n);
  double first = 0.0, second = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    first += c(l) / total;
    for (std::size_t k = 1; k < L; ++k) {
      double before = 0.0;
      for (std::size_t n = 0; n < k; ++n) before += a(n);
      second += c(l) / total * a(k) / before;
    }
  }
  return eta * d * (first + second);
}

ScaleProfile random_profile(Rng& rng, std::size_t L) {
  ScaleProfile p;
  for (std::size_t i = 0; i < L; ++i) {
    p.v.push_back(0.25 + 2.0 * rng.uniform());
    p.w.push_back(0.25 + 2.0 * rng.uniform());
  }
  return p;
}

}  // namespace

TEST_CASE("harmonic numbers") {
  CHECK(harmonic(0) == 0.0);
  CHECK(harmonic(1) == 1.0);
  CHECK(harmonic(4) == doctest::Approx(25.0 / 12.0).epsilon(1e-15));
  for (std::size_t n = 1; n <= 5000; n += 37) CHECK(rel(harmonic(n), harmonic_up(n)) < 1e-13);
}

TEST_CASE("small hand-evaluated bounds") {
  CHECK(bound_preln(ScaleProfile::uniform(1, 1.0), 1, 1).total == 2.0);
  CHECK(bound_preln(ScaleProfile::uniform(1, 1.0), 1, 1).term2 == 0.0);
  CHECK(bound_preln(ScaleProfile::uniform(2, 1.0), 1, 1).total == 4.0);
  CHECK(bound_subln(ScaleProfile::uniform(1, 1.0), 1, 1).total == 2.0);
  CHECK(bound_postln(ScaleProfile::uniform(4, 1.0), 1, 1) == 8.0);
  CHECK(bound_postln(ScaleProfile::uniform(4, 1.0), 0.5, 3) == 12.0);
  const double gamma = std::sqrt(std::log(4.0));
  CHECK(std::abs(bound_subln(ScaleProfile::uniform(4, gamma), 1, 1).total - 4.087635949185396) < 1e-12);
  const double g64 = std::sqrt(std::log(64.0));
  CHECK(bound_subln(ScaleProfile::uniform(64, g64), 1, 1).total == doctest::Approx(2.754714).epsilon(1e-6));
}

TEST_CASE("harmonic closed forms at uniform scales") {
  for (std::size_t L = 1; L <= 1024; ++L) {
    const double h = harmonic_up(L - 1);
    CHECK(rel(bound_preln(ScaleProfile::uniform(L, 1.0), 1, 1).total, 2.0 + 2.0 * h) < 1e-12);
    if (L >= 2) {
      const double g = std::sqrt(std::log(static_cast<double>(L)));
      CHECK(rel(bound_subln(ScaleProfile::uniform(L, g), 1, 1).total, 2.0 * (1.0 + h) / std::log(static_cast<double>(L))) <
            1e-12);
    }
  }
}

TEST_CASE("bounds scale linearly in eta and d") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_profile(rng, 1 + rng.below(30));
    const double eta = 1e-3 + rng.uniform(), d = 1.0 + static_cast<double>(rng.below(512));
    for (auto v : {NormVariant::PreLN, NormVariant::SubLN, NormVariant::PostLN})
      CHECK(rel(bound_for(v, p, eta, d).total, eta * d * bound_for(v, p, 1, 1).total) < 1e-13);
  }
}

TEST_CASE("factorized bounds match the literal double sum") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_profile(rng, 1 + rng.below(40));
    for (auto v : {NormVariant::PreLN, NormVariant::SubLN}) {
      const auto r = bound_for(v, p, 0.3, 7.0);
      CHECK(rel(r.total, naive_bound(p, 0.3, 7.0, v)) < 1e-12);
      CHECK(r.total > 0.0);
      CHECK(r.term1 + r.term2 + r.coupling == r.total);
    }
  }
}

TEST_CASE("post-LN surrogate dominates pre-LN for L >= 3 at unit scales") {
  CHECK(bound_postln(ScaleProfile::uniform(2, 1.0), 1, 1) == bound_preln(ScaleProfile::uniform(2, 1.0), 1, 1).total);
  for (std::size_t L = 3; L <= 512; ++L) {
    const auto p = ScaleProfile::uniform(L, 1.0);
    CHECK(bound_postln(p, 1, 1) > bound_preln(p, 1, 1).total);
    CHECK(bound_postln(p, 1, 1) == 2.0 * static_cast<double>(L));
  }
}

TEST_CASE("derived gain keeps the sub-LN bound bounded and non-increasing") {
  double last = std::numeric_limits<double>::infinity();
  for (std::size_t L = 4; L <= 4096; ++L) {
    const double g = std::sqrt(std::log(static_cast<double>(L)));
    const double b = bound_subln(ScaleProfile::uniform(L, g), 1, 1).total;
    CHECK(b >= 2.0);
    CHECK(b <= 4.2);
    CHECK(b <= last);
    last = b;
  }
}

TEST_CASE("encoder-decoder bound") {
  SUBCASE("hand expansion at N=M=1, unit scales") {
    // Decoder (3 sub-layers): 2 + 2 * (1 + 1/2) = 5. Encoder (2): 2 + 2 = 4.
    // Cross-attention weight: (1/3) * (1 + 1 + 1/2) = 5/6.
    for (auto v : {NormVariant::PreLN, NormVariant::SubLN}) {
      const auto r = bound_encdec(ScaleProfile::uniform(2, 1.0), ScaleProfile::uniform(3, 1.0), 1, 1, v);
      CHECK(r.term1 + r.term2 == doctest::Approx(5.0).epsilon(1e-15));
      CHECK(r.coupling == doctest::Approx(10.0 / 3.0).epsilon(1e-15));
      CHECK(r.total == doctest::Approx(25.0 / 3.0).epsilon(1e-15));
      CHECK(r.L == 2);
      CHECK(r.L_d == 3);
    }
  }
  SUBCASE("decoder length must be a multiple of three") {
    CHECK_THROWS_AS(bound_encdec(ScaleProfile::uniform(2, 1.0), ScaleProfile::uniform(4, 1.0), 1, 1, NormVariant::SubLN),
                    ConfigError);
    CHECK_THROWS_AS(bound_encdec(ScaleProfile::uniform(2, 1.0), ScaleProfile::uniform(3, 1.0), 1, 1, NormVariant::PostLN),
                    ConfigError);
  }
  SUBCASE("coupling weight against a literal sum") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      const auto dec = random_profile(rng, 3 * (1 + rng.below(10)));
      double total = 0.0;
      for (double x : dec.v) total += x * x;
      double tail = 0.0;
      for (std::size_t k = 1; k < dec.length(); ++k) {
        double before = 0.0;
        for (std::size_t n = 0; n < k; ++n) before += dec.v[n] * dec.v[n];
        tail += dec.v[k] * dec.v[k] / before;
      }
      double want = 0.0;
      for (std::size_t l = 0; l < dec.length(); l += 3) want += dec.v[l] * dec.v[l] / total * (1.0 + tail);
      CHECK(rel(encdec_coupling_coefficient(dec, NormVariant::SubLN), want) < 1e-12);
    }
  }
  SUBCASE("coupling term stays within a constant factor under derived gains") {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t n : {2, 4, 8, 16, 32}) {
      const auto g = init::gamma_for(Family::EncoderDecoder, n, n);
      const auto r = bound_encdec(ScaleProfile::uniform(2 * n, *g.encoder), ScaleProfile::uniform(3 * n, *g.decoder), 1, 1,
                                  NormVariant::SubLN);
      lo = std::min(lo, r.coupling);
      hi = std::max(hi, r.coupling);
    }
    CHECK(hi / lo < 2.5);
  }
  SUBCASE("decoder term under gamma_d") {
    for (std::size_t m = 2; m <= 64; ++m) {
      const double g = std::sqrt(std::log(3.0 * static_cast<double>(m)));
      const double b = bound_subln(ScaleProfile::uniform(3 * m, g), 1, 1).total;
      CHECK(b >= 2.0);
      CHECK(b <= 4.2);
    }
    // A single decoder layer sits outside the window: 2 (1 + 3/2) / ln 3.
    const double one = bound_subln(ScaleProfile::uniform(3, std::sqrt(std::log(3.0))), 1, 1).total;
    CHECK(one == doctest::Approx(5.0 / std::log(3.0)).epsilon(1e-14));
    CHECK(one > 4.2);
  }
}

TEST_CASE("signal-propagation quantities") {
  for (std::size_t L = 1; L <= 64; ++L) {
    const auto p = ScaleProfile::uniform(L, 1.0);
    CHECK(delta_l(p, L, NormVariant::PreLN) == doctest::Approx(1.0 / std::sqrt(static_cast<double>(L))).epsilon(1e-15));
  }
  Rng rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const auto p = random_profile(rng, 1 + rng.below(20));
    const std::size_t L = p.length();
    for (std::size_t l = 1; l <= L; ++l) {
      CHECK(pbar_l(p, l, NormVariant::SubLN) == 1.0);
      CHECK(pbar_l(p, l, NormVariant::PreLN) == p.w[l - 1] * p.w[l - 1]);
      for (auto variant : {NormVariant::PreLN, NormVariant::SubLN}) {
        auto a = [&](std::size_t n) {
          return variant == NormVariant::PreLN ? p.v[n] * p.v[n] * p.w[n] * p.w[n] : p.v[n] * p.v[n];
        };
        double total = 0.0;
        for (std::size_t n = 0; n < L; ++n) total += a(n);
        double dsum = 1.0, qsum = 1.0;
        for (std::size_t k = l + 1; k <= L; ++k) {
          double before = 0.0;
          for (std::size_t n = 0; n + 1 < k; ++n) before += a(n);
          dsum += std::sqrt(a(k - 1)) / std::sqrt(before);
          qsum += a(k - 1) / before;
        }
        CHECK(rel(delta_l(p, l, variant), dsum / std::sqrt(total)) < 1e-12);
        CHECK(rel(qbar_l(p, l, 5.0, variant), 5.0 * qsum / total) < 1e-12);
      }
    }
  }
  const auto p = ScaleProfile::uniform(4, 1.0);
  CHECK_THROWS_AS(delta_l(p, 0, NormVariant::SubLN), IndexError);
  CHECK_THROWS_AS(qbar_l(p, 5, 1.0, NormVariant::SubLN), IndexError);
  CHECK_THROWS_AS(pbar_l(p, 5, NormVariant::PreLN), IndexError);
  CHECK_THROWS_AS(delta_l(p, 1, NormVariant::PostLN), ConfigError);
  CHECK_THROWS_AS(layer_coefficient(p, 1, NormVariant::PostLN), ConfigError);
}

TEST_CASE("per-layer assembly") {
  Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_profile(rng, 1 + rng.below(50));
    for (auto variant : {NormVariant::PreLN, NormVariant::SubLN}) {
      double want = 0.0;
      double total = 0.0;
      for (std::size_t n = 0; n < p.length(); ++n)
        total += variant == NormVariant::PreLN ? p.v[n] * p.v[n] * p.w[n] * p.w[n] : p.v[n] * p.v[n];
      for (std::size_t l = 1; l <= p.length(); ++l) {
        const double c = layer_coefficient(p, l, variant);
        want += c * total * qbar_l(p, l, 3.0, variant);
      }
      const double assembled = assembled_update(p, 0.5, 3.0, variant);
      CHECK(rel(assembled, 0.5 * want) < 1e-12);
      // The per-layer q-bar only sums sensitivities above each layer, so the
      // assembly never exceeds the closed-form bound.
      CHECK(assembled <= bound_for(variant, p, 0.5, 3.0).total * (1.0 + 1e-12));
    }
  }
  for (std::size_t L = 1; L <= 256; ++L) {
    const double Ld = static_cast<double>(L);
    const auto p = ScaleProfile::uniform(L, 1.0);
    CHECK(rel(assembled_update(p, 1, 1, NormVariant::SubLN), 2.0 + 2.0 * (Ld - 1.0) / Ld) < 1e-12);
  }
  CHECK(assembled_update(ScaleProfile::uniform(1, 1.7), 1, 1, NormVariant::PreLN) ==
        doctest::Approx(bound_preln(ScaleProfile::uniform(1, 1.7), 1, 1).total).epsilon(1e-14));
}

TEST_CASE("sub-LN damps a single exploding input projection") {
  auto p = ScaleProfile::uniform(8, 1.0);
  p.w[3] = 10.0;
  CHECK(layer_coefficient(p, 4, NormVariant::SubLN) < layer_coefficient(p, 4, NormVariant::PreLN));
  CHECK(layer_coefficient(p, 4, NormVariant::SubLN) == doctest::Approx(1.01 / 8.0).epsilon(1e-15));
  CHECK(layer_coefficient(p, 4, NormVariant::PreLN) == doctest::Approx(101.0 / 107.0).epsilon(1e-15));

  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    auto q = random_profile(rng, 2 + rng.below(30));
    const std::size_t j = rng.below(q.length());
    double top = 0.0;
    for (double w : q.w) top = std::max(top, w);
    q.w[j] = top * (1.0 + 9.0 * rng.uniform());
    CHECK(layer_coefficient(q, j + 1, NormVariant::SubLN) <= layer_coefficient(q, j + 1, NormVariant::PreLN));
  }
}

TEST_CASE("invalid profiles") {
  CHECK_THROWS_AS(bound_subln(ScaleProfile{}, 1, 1), ConfigError);
  CHECK_THROWS_AS(bound_subln(ScaleProfile{{1.0, 1.0}, {1.0}}, 1, 1), ConfigError);
  CHECK_THROWS_AS(bound_preln(ScaleProfile{{1.0, 0.0}, {1.0, 1.0}}, 1, 1), ConfigError);
  CHECK_THROWS_AS(bound_postln(ScaleProfile{{NAN}, {1.0}}, 1, 1), ConfigError);
}

TEST_CASE("report csv") {
  CHECK(BoundReport::csv_header() == "variant,L,eta,d,term1,term2,coupling,total");
  CHECK(bound_subln(ScaleProfile::uniform(1, 1.0), 1, 1).csv_row() == "subln,1,1,1,2,0,0,2");
  CHECK(bound_preln(ScaleProfile::uniform(2, 1.0), 0.5, 2).csv_row() == "preln,2,0.5,2,2,2,0,4");
  const auto ed = bound_encdec(ScaleProfile::uniform(2, 1.0), ScaleProfile::uniform(3, 1.0), 1, 1, NormVariant::SubLN);
  CHECK(ed.csv_row().rfind("subln,2:3,1,1,", 0) == 0);
}
