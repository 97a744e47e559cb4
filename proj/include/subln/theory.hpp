#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "subln/layers.hpp"

// Closed-form model-update estimates for one SGD step, in terms of the
// per-sub-layer output/input projection scales v_l and w_l.
//
// These are upper-bound estimates carrying the Theta-level constants of their
// derivation. They are meant for comparing depth trends, not for predicting
// absolute update sizes.
namespace subln::theory {

struct ScaleProfile {
  std::vector<double> v;  // output-side scales, W^{l,2}
  std::vector<double> w;  // input-side scales, W^{l,1}

  static ScaleProfile uniform(std::size_t length, double v_scale, double w_scale);
  static ScaleProfile uniform(std::size_t length, double gamma) { return uniform(length, gamma, gamma); }
  std::size_t length() const { return v.size(); }
  // Non-empty, equal lengths, every entry finite and positive.
  void validate() const;
};

struct BoundReport {
  NormVariant variant = NormVariant::SubLN;
  std::size_t L = 0;    // L, or L_e for encoder-decoder
  std::size_t L_d = 0;  // 0 unless encoder-decoder
  double eta = 1.0;
  double d = 1.0;
  double term1 = 0.0;     // first (single-sum) term
  double term2 = 0.0;     // double-sum term
  double coupling = 0.0;  // encoder contribution routed through cross-attention
  double total = 0.0;

  bool encoder_decoder() const { return L_d != 0; }
  static std::string csv_header();
  // variant,L,eta,d,term1,term2,coupling,total; L is "L_e:L_d" for
  // encoder-decoder reports.
  std::string csv_row() const;
};

// H_n = 1 + 1/2 + ... + 1/n, H_0 = 0.
double harmonic(std::size_t n);

BoundReport bound_preln(const ScaleProfile& profile, double eta, double d);
BoundReport bound_subln(const ScaleProfile& profile, double eta, double d);
// eta * d * sum(v_l^2 + w_l^2); an order-of-magnitude surrogate.
double bound_postln(const ScaleProfile& profile, double eta, double d);
BoundReport bound_postln_report(const ScaleProfile& profile, double eta, double d);
BoundReport bound_for(NormVariant variant, const ScaleProfile& profile, double eta, double d);

// Encoder-decoder estimate: decoder term plus the encoder term weighted by the
// cross-attention sub-layers, which sit at 1-indexed positions l % 3 == 1 of
// the decoder profile. PreLN or SubLN only.
BoundReport bound_encdec(const ScaleProfile& encoder, const ScaleProfile& decoder, double eta, double d,
                         NormVariant variant);
// Weight multiplying the encoder term in bound_encdec.
double encdec_coupling_coefficient(const ScaleProfile& decoder, NormVariant variant);

// Signal-propagation quantities of sub-layer l (1-indexed). PostLN is not
// covered and throws ConfigError.
double delta_l(const ScaleProfile& profile, std::size_t l, NormVariant variant);
double qbar_l(const ScaleProfile& profile, std::size_t l, double d, NormVariant variant);
double pbar_l(const ScaleProfile& profile, std::size_t l, NormVariant variant);

// Per-sub-layer factor multiplying q-bar in the update:
//   PreLN (v_l^2 + w_l^2) / sum v_n^2 w_n^2, SubLN (1 + v_l^2 / w_l^2) / sum v_n^2.
double layer_coefficient(const ScaleProfile& profile, std::size_t l, NormVariant variant);

// eta * sum_l c_l * qbar_l, where c_l is (v_l^2 + w_l^2) for PreLN and
// (1 + v_l^2 / w_l^2) for SubLN.
double assembled_update(const ScaleProfile& profile, double eta, double d, NormVariant variant);

}  // namespace subln::theory
