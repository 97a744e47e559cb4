#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "subln/model.hpp"
#include "subln/stats.hpp"
#include "subln/tasks.hpp"
#include "subln/tensor.hpp"

// Empirical counterpart of the theory module: one-step model updates, depth
// and learning-rate sweeps, and finite-difference gradient checks.
namespace subln::lab {

// Loss driving the probe's SGD step. CrossEntropy is the default; Linear uses
// -F_label so the step follows the labeled logit's own gradient.
enum class ProbeLoss { CrossEntropy, Linear };

std::string_view to_string(ProbeLoss loss);
ProbeLoss parse_probe_loss(std::string_view text);

struct UpdateProbeConfig {
  ModelConfig model;
  double eta = 1e-3;
  std::size_t n_seeds = 5;
  std::uint64_t base_seed = 0;
  ProbeLoss loss = ProbeLoss::CrossEntropy;

  // n_seeds >= 3, eta > 0, model config valid.
  void validate() const;
};

struct UpdateMeasurement {
  std::uint64_t seed = 0;
  std::size_t L = 0;
  double eta = 0.0;
  NormVariant variant = NormVariant::SubLN;
  InitMode init = InitMode::Standard;
  double init_gamma = 1.0;
  std::optional<double> delta_f;  // unset iff diverged
  bool diverged = false;
};

// The probe's input: one standard-normal vector and a uniformly drawn label.
struct ProbeSample {
  Tensor x;  // [1 x d]
  std::size_t label = 0;
};

// Builds and initializes the model from `seed`, then draws the probe sample
// from the same stream.
std::pair<TransformerModel, ProbeSample> probe_setup(const ModelConfig& config, std::uint64_t seed);

// |F_label(theta*) - F_label(theta)| after exactly one SGD step of size eta on
// the probe loss. Vector mode, a single position. Any non-finite value marks
// the measurement as diverged.
double one_step_update(TransformerModel& model, const ProbeSample& sample, double eta, ProbeLoss loss, bool* diverged);

UpdateMeasurement measure_update(const ModelConfig& config, double eta, std::uint64_t seed,
                                 ProbeLoss loss = ProbeLoss::CrossEntropy);

struct Arm {
  NormVariant variant = NormVariant::SubLN;
  InitMode init = InitMode::Magneto;
};

std::string arm_label(const Arm& arm);

struct DepthSweepConfig {
  std::vector<std::size_t> L_values;  // ascending, each even (L = 2N)
  std::vector<Arm> arms;
  double eta = 1e-3;
  std::size_t d = 64;
  std::size_t d_ff = 0;  // 0 means d
  std::size_t head_count = 1;
  std::size_t vocab_size = 64;
  std::size_t n_seeds = 5;
  std::uint64_t base_seed = 0;
  ProbeLoss loss = ProbeLoss::CrossEntropy;
  std::size_t jobs = 1;

  void validate() const;
};

struct SweepCell {
  Arm arm;
  std::size_t L = 0;
  double eta = 0.0;
  double gamma = 1.0;
  double mean_delta_f = 0.0;  // over non-diverged seeds
  double std_delta_f = 0.0;
  std::size_t n_diverged = 0;
  double bound = 0.0;  // matching theory value at the cell's scales
  std::vector<UpdateMeasurement> samples;
};

struct SweepResult {
  std::size_t d = 0;
  std::vector<SweepCell> cells;

  std::vector<const SweepCell*> cells_for(const Arm& arm) const;
  // Header: variant,init,L,eta,d,seed,delta_f,diverged,bound. One row per seed.
  std::string to_csv(const std::string& comment = {}) const;
};

// Gain used for a sub-layer stack of depth L under `init` (encoder-only).
double sweep_gamma(InitMode init, std::size_t L);

SweepResult depth_sweep(const DepthSweepConfig& config);

// Depth-trend summary of one arm of a sweep.
struct DepthTrend {
  std::vector<double> L;
  std::vector<double> mean_delta_f;
  std::vector<double> bound;
  double max_over_min = 0.0;
  bool monotone_increasing = false;
  stats::LinearFit log_fit;  // mean delta_f against ln L
  double spearman_vs_bound = 0.0;
};

DepthTrend depth_trend(const SweepResult& result, const Arm& arm);

struct LrSweepConfig {
  tasks::Task task = tasks::Task::Copy;
  Family family = Family::DecoderOnly;
  std::vector<Arm> arms;
  std::vector<double> etas;
  std::size_t steps = 2000;  // at most 2000
  std::size_t n_layers = 8;  // N (encoder-decoder uses N = M) or M
  std::size_t d = 32;
  std::size_t d_ff = 0;  // 0 means d
  std::size_t head_count = 1;
  std::size_t batch = 4;
  std::size_t copy_alphabet = 8;
  std::size_t copy_length = 8;
  std::size_t char_window = 16;
  std::uint64_t seed = 0;
  std::size_t log_every = 10;
  std::size_t jobs = 1;

  void validate() const;
};

struct LrRun {
  Arm arm;
  double eta = 0.0;
  std::vector<std::pair<std::size_t, double>> curve;  // (step, loss), logged steps
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t steps_run = 0;
  bool diverged = false;
};

struct LrSweepResult {
  tasks::Task task = tasks::Task::Copy;
  std::vector<LrRun> runs;

  // Largest eta whose run did not diverge; nullopt if all diverged.
  std::optional<double> max_stable_eta(const Arm& arm) const;
  // Header: variant,init,task,eta,step,loss,diverged.
  std::string to_csv(const std::string& comment = {}) const;
};

// Tracks the divergence rule: a non-finite loss, or a loss above 10x the
// initial loss for 50 consecutive steps.
class DivergenceMonitor {
 public:
  static constexpr double kBlowupFactor = 10.0;
  static constexpr std::size_t kPatience = 50;

  // Returns true once the run counts as diverged.
  bool observe(double loss);
  bool diverged() const { return diverged_; }
  std::optional<double> initial() const { return initial_; }

 private:
  std::optional<double> initial_;
  std::size_t streak_ = 0;
  bool diverged_ = false;
};

// Mean loss over the batch's scored positions.
double batch_loss_value(const TransformerModel& model, const std::vector<tasks::Example>& batch);

// SGD training on a toy task. The step loss is the summed cross-entropy over
// all scored positions of the batch.
LrRun train(TransformerModel& model, const LrSweepConfig& config, const Arm& arm, double eta);

ModelConfig lr_model_config(const LrSweepConfig& config, const Arm& arm);

LrSweepResult lr_divergence_sweep(const LrSweepConfig& config);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t parameters_checked = 0;
  bool passed = false;
};

// Central finite differences over every parameter entry of `model` against
// the tape gradient of a seeded token-mode cross-entropy loss. Relative error
// of a tensor is ||analytic - numeric||_inf / max(||analytic||_inf,
// ||numeric||_inf); the report carries the maximum over tensors.
GradCheckReport grad_check(const TransformerModel& model, double tolerance = 1e-5, std::uint64_t seed = 0,
                           double step = 1e-5);

}  // namespace subln::lab
