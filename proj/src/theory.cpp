#include "subln/theory.hpp"

#include <cmath>
#include <sstream>

#include "subln/errors.hpp"
#include "subln/io.hpp"

namespace subln::theory {

ScaleProfile ScaleProfile::uniform(std::size_t length, double v_scale, double w_scale) {
  return ScaleProfile{std::vector<double>(length, v_scale), std::vector<double>(length, w_scale)};
}

void ScaleProfile::validate() const {
  if (v.empty()) throw ConfigError("scale profile is empty");
  if (v.size() != w.size()) throw ConfigError("scale profile: v and w lengths differ");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0) || !(w[i] > 0.0) || !std::isfinite(v[i]) || !std::isfinite(w[i])) {
      throw ConfigError("scale profile entries must be finite and positive (index " + std::to_string(i) + ")");
    }
  }
}

std::string BoundReport::csv_header() { return "variant,L,eta,d,term1,term2,coupling,total"; }

std::string BoundReport::csv_row() const {
  std::ostringstream out;
  out << to_string(variant) << ',';
  if (encoder_decoder()) {
    out << L << ':' << L_d;
  } else {
    out << L;
  }
  out << ',' << io::format_double(eta) << ',' << io::format_double(d) << ',' << io::format_double(term1) << ','
      << io::format_double(term2) << ',' << io::format_double(coupling) << ',' << io::format_double(total);
  return out.str();
}

double harmonic(std::size_t n) {
  double h = 0.0;
  for (std::size_t k = n; k >= 1; --k) h += 1.0 / static_cast<double>(k);
  return h;
}

namespace {

// Both bounds share one shape. With a_k the propagated magnitude of sub-layer
// k (v^2 w^2 for PreLN, v^2 for SubLN), S = sum a_n and P_k = a_1 + ... + a_k:
//   term1 = sum_l c_l / S
//   term2 = sum_l sum_{k=2..L} c_l / S * a_k / P_{k-1}
// and the double sum factorizes into (sum_l c_l / S) * (sum_k a_k / P_{k-1}).
struct Propagation {
  std::vector<double> magnitude;  // a_k
  std::vector<double> prefix;     // P_k, prefix[k] = a_1 + ... + a_{k+1} (0-indexed)
  double total = 0.0;
};

void require_analyzed(NormVariant variant) {
  if (variant == NormVariant::PostLN) throw ConfigError("signal-propagation quantities are defined for PreLN and SubLN");
}

Propagation propagation(const ScaleProfile& profile, NormVariant variant) {
  require_analyzed(variant);
  Propagation p;
  const std::size_t L = profile.length();
  p.magnitude.resize(L);
  p.prefix.resize(L);
  double running = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    const double v2 = profile.v[i] * profile.v[i];
    const double w2 = profile.w[i] * profile.w[i];
    p.magnitude[i] = variant == NormVariant::PreLN ? v2 * w2 : v2;
    running += p.magnitude[i];
    p.prefix[i] = running;
  }
  p.total = running;
  return p;
}

double coefficient_numerator(const ScaleProfile& profile, std::size_t i, NormVariant variant) {
  const double v2 = profile.v[i] * profile.v[i];
  const double w2 = profile.w[i] * profile.w[i];
  return variant == NormVariant::PreLN ? v2 + w2 : 1.0 + v2 / w2;
}

// sum_{k=from..L} a_k / P_{k-1}, 1-indexed, from >= 2.
double ratio_tail(const Propagation& p, std::size_t from) {
  double acc = 0.0;
  for (std::size_t k = from; k <= p.magnitude.size(); ++k) acc += p.magnitude[k - 1] / p.prefix[k - 2];
  return acc;
}

BoundReport analyzed_bound(const ScaleProfile& profile, double eta, double d, NormVariant variant) {
  profile.validate();
  const Propagation p = propagation(profile, variant);
  double coefficient_sum = 0.0;
  for (std::size_t i = 0; i < profile.length(); ++i) coefficient_sum += coefficient_numerator(profile, i, variant);
  coefficient_sum /= p.total;
  BoundReport r;
  r.variant = variant;
  r.L = profile.length();
  r.eta = eta;
  r.d = d;
  r.term1 = eta * d * coefficient_sum;
  r.term2 = eta * d * coefficient_sum * ratio_tail(p, 2);
  r.total = r.term1 + r.term2;
  return r;
}

void check_index(const ScaleProfile& profile, std::size_t l) {
  if (l < 1 || l > profile.length()) {
    throw IndexError("sub-layer index " + std::to_string(l) + " outside 1.." + std::to_string(profile.length()));
  }
}

}  // namespace

BoundReport bound_preln(const ScaleProfile& profile, double eta, double d) {
  return analyzed_bound(profile, eta, d, NormVariant::PreLN);
}

BoundReport bound_subln(const ScaleProfile& profile, double eta, double d) {
  return analyzed_bound(profile, eta, d, NormVariant::SubLN);
}

double bound_postln(const ScaleProfile& profile, double eta, double d) {
  profile.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < profile.length(); ++i) acc += profile.v[i] * profile.v[i] + profile.w[i] * profile.w[i];
  return eta * d * acc;
}

BoundReport bound_postln_report(const ScaleProfile& profile, double eta, double d) {
  BoundReport r;
  r.variant = NormVariant::PostLN;
  r.L = profile.length();
  r.eta = eta;
  r.d = d;
  r.term1 = bound_postln(profile, eta, d);
  r.total = r.term1;
  return r;
}

BoundReport bound_for(NormVariant variant, const ScaleProfile& profile, double eta, double d) {
  switch (variant) {
    case NormVariant::PreLN:
      return bound_preln(profile, eta, d);
    case NormVariant::SubLN:
      return bound_subln(profile, eta, d);
    case NormVariant::PostLN:
      return bound_postln_report(profile, eta, d);
  }
  throw ConfigError("unhandled norm variant");
}

double encdec_coupling_coefficient(const ScaleProfile& decoder, NormVariant variant) {
  decoder.validate();
  if (decoder.length() % 3 != 0) {
    throw ConfigError("decoder profile length " + std::to_string(decoder.length()) + " is not a multiple of 3");
  }
  const Propagation p = propagation(decoder, variant);
  double cross = 0.0;
  for (std::size_t l = 1; l <= decoder.length(); l += 3) cross += p.magnitude[l - 1];
  return cross / p.total * (1.0 + ratio_tail(p, 2));
}

BoundReport bound_encdec(const ScaleProfile& encoder, const ScaleProfile& decoder, double eta, double d,
                         NormVariant variant) {
  if (variant == NormVariant::PostLN) throw ConfigError("encoder-decoder bound is defined for PreLN and SubLN");
  const double coefficient = encdec_coupling_coefficient(decoder, variant);
  const BoundReport dec = analyzed_bound(decoder, eta, d, variant);
  const BoundReport enc = analyzed_bound(encoder, eta, d, variant);
  BoundReport r = dec;
  r.L = encoder.length();
  r.L_d = decoder.length();
  r.coupling = coefficient * enc.total;
  r.total = dec.total + r.coupling;
  return r;
}

double delta_l(const ScaleProfile& profile, std::size_t l, NormVariant variant) {
  profile.validate();
  check_index(profile, l);
  const Propagation p = propagation(profile, variant);
  double acc = 1.0;
  for (std::size_t k = l + 1; k <= profile.length(); ++k) acc += std::sqrt(p.magnitude[k - 1] / p.prefix[k - 2]);
  return acc / std::sqrt(p.total);
}

double qbar_l(const ScaleProfile& profile, std::size_t l, double d, NormVariant variant) {
  profile.validate();
  check_index(profile, l);
  const Propagation p = propagation(profile, variant);
  return d / p.total * (1.0 + ratio_tail(p, l + 1));
}

double pbar_l(const ScaleProfile& profile, std::size_t l, NormVariant variant) {
  profile.validate();
  check_index(profile, l);
  require_analyzed(variant);
  return variant == NormVariant::PreLN ? profile.w[l - 1] * profile.w[l - 1] : 1.0;
}

double layer_coefficient(const ScaleProfile& profile, std::size_t l, NormVariant variant) {
  profile.validate();
  check_index(profile, l);
  const Propagation p = propagation(profile, variant);
  return coefficient_numerator(profile, l - 1, variant) / p.total;
}

double assembled_update(const ScaleProfile& profile, double eta, double d, NormVariant variant) {
  profile.validate();
  const Propagation p = propagation(profile, variant);
  double acc = 0.0;
  // Tail sums from the back so the whole assembly stays O(L).
  double tail = 0.0;
  for (std::size_t l = profile.length(); l >= 1; --l) {
    const double q = d / p.total * (1.0 + tail);
    acc += coefficient_numerator(profile, l - 1, variant) * q;
    if (l >= 2) tail += p.magnitude[l - 1] / p.prefix[l - 2];
  }
  return eta * acc;
}

}  // namespace subln::theory
