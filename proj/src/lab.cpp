#include "subln/lab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <thread>

#include "subln/errors.hpp"
#include "subln/init.hpp"
#include "subln/io.hpp"
#include "subln/theory.hpp"

namespace subln::lab {

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is handled by
// exactly one thread; callers write results into per-index slots.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t t = 0; t < jobs; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += jobs) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string lower(std::string_view text) {
  std::string out;
  for (char c : text) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

std::string_view to_string(ProbeLoss loss) { return loss == ProbeLoss::CrossEntropy ? "cross-entropy" : "linear"; }

ProbeLoss parse_probe_loss(std::string_view text) {
  const std::string key = lower(text);
  if (key == "cross-entropy" || key == "ce" || key == "xent") return ProbeLoss::CrossEntropy;
  if (key == "linear") return ProbeLoss::Linear;
  throw ConfigError("unknown probe loss '" + std::string(text) + "' (expected cross-entropy or linear)");
}

void UpdateProbeConfig::validate() const {
  model.validate();
  if (n_seeds < 3) throw ConfigError("update probes need at least 3 seeds");
  if (!(eta > 0.0)) throw ConfigError("update probes need eta > 0");
}

std::pair<TransformerModel, ProbeSample> probe_setup(const ModelConfig& config, std::uint64_t seed) {
  ModelConfig seeded = config;
  seeded.seed = seed;
  Rng rng(seed);
  TransformerModel model = build(seeded, rng);
  ProbeSample sample;
  std::vector<double> x(config.d);
  for (auto& v : x) v = rng.normal();
  sample.x = Tensor::from({1, config.d}, std::move(x));
  sample.label = rng.below(config.vocab_size);
  return {std::move(model), sample};
}

namespace {

Tensor probe_forward(Tape& tape, const TransformerModel& model, const ProbeSample& sample) {
  if (model.config.family == Family::EncoderDecoder) return forward(tape, model, sample.x, sample.x);
  return forward(tape, model, sample.x);
}

}  // namespace

double one_step_update(TransformerModel& model, const ProbeSample& sample, double eta, ProbeLoss loss,
                       bool* diverged) {
  *diverged = false;
  model.zero_grad();
  Tape tape;
  Tensor logits = probe_forward(tape, model, sample);
  if (!all_finite(logits)) {
    *diverged = true;
    return 0.0;
  }
  const double before = logits.at(0, sample.label);
  Tensor objective = loss == ProbeLoss::CrossEntropy ? ops::cross_entropy(tape, logits, sample.label)
                                                     : ops::scale(tape, ops::pick(tape, logits, 0, sample.label), -1.0);
  tape.backward(objective);
  for (const auto& p : model.parameters()) {
    if (p.tensor.has_grad() && !std::all_of(p.tensor.grad().begin(), p.tensor.grad().end(), finite)) {
      *diverged = true;
      return 0.0;
    }
  }
  sgd_step(model, eta);
  Tape after_tape(false);
  Tensor after = probe_forward(after_tape, model, sample);
  if (!all_finite(after)) {
    *diverged = true;
    return 0.0;
  }
  return std::abs(after.at(0, sample.label) - before);
}

UpdateMeasurement measure_update(const ModelConfig& config, double eta, std::uint64_t seed, ProbeLoss loss) {
  auto [model, sample] = probe_setup(config, seed);
  UpdateMeasurement m;
  m.seed = seed;
  m.L = config.family == Family::DecoderOnly ? config.decoder_sublayers() : config.encoder_sublayers();
  m.eta = eta;
  m.variant = config.variant;
  m.init = config.init;
  const auto plan = init::InitPlan::for_config(config);
  m.init_gamma = config.family == Family::DecoderOnly ? plan.gamma_decoder : plan.gamma_encoder;
  bool diverged = false;
  const double delta = one_step_update(model, sample, eta, loss, &diverged);
  m.diverged = diverged;
  if (!diverged) m.delta_f = delta;
  return m;
}

std::string arm_label(const Arm& arm) { return std::string(to_string(arm.variant)) + "+" + std::string(to_string(arm.init)); }

void DepthSweepConfig::validate() const {
  if (L_values.empty()) throw ConfigError("depth sweep needs at least one L value");
  for (std::size_t i = 0; i < L_values.size(); ++i) {
    if (L_values[i] < 2 || L_values[i] % 2 != 0) {
      throw ConfigError("depth sweep L values must be even and >= 2 (L = 2N), got " + std::to_string(L_values[i]));
    }
    if (i > 0 && L_values[i] <= L_values[i - 1]) throw ConfigError("depth sweep L values must be ascending");
  }
  if (arms.empty()) throw ConfigError("depth sweep needs at least one variant");
  if (n_seeds < 3) throw ConfigError("depth sweep needs at least 3 seeds");
  if (!(eta > 0.0)) throw ConfigError("depth sweep needs eta > 0");
}

double sweep_gamma(InitMode init, std::size_t L) {
  if (init == InitMode::Standard) return 1.0;
  return *init::gamma_for(Family::EncoderOnly, L / 2, 0).encoder;
}

SweepResult depth_sweep(const DepthSweepConfig& config) {
  config.validate();
  struct Job {
    std::size_t cell;
    std::size_t trial;
  };
  SweepResult result;
  result.d = config.d;
  std::vector<Job> jobs;
  for (const auto& arm : config.arms) {
    for (std::size_t L : config.L_values) {
      SweepCell cell;
      cell.arm = arm;
      cell.L = L;
      cell.eta = config.eta;
      cell.gamma = sweep_gamma(arm.init, L);
      cell.bound = theory::bound_for(arm.variant, theory::ScaleProfile::uniform(L, cell.gamma), config.eta,
                                     static_cast<double>(config.d))
                       .total;
      cell.samples.resize(config.n_seeds);
      for (std::size_t t = 0; t < config.n_seeds; ++t) jobs.push_back({result.cells.size(), t});
      result.cells.push_back(std::move(cell));
    }
  }
  parallel_for(jobs.size(), config.jobs, [&](std::size_t i) {
    const Job job = jobs[i];
    SweepCell& cell = result.cells[job.cell];
    ModelConfig mc;
    mc.family = Family::EncoderOnly;
    mc.variant = cell.arm.variant;
    mc.init = cell.arm.init;
    mc.n_encoder_layers = cell.L / 2;
    mc.n_decoder_layers = 0;
    mc.d = config.d;
    mc.d_ff = config.d_ff == 0 ? config.d : config.d_ff;
    mc.head_count = config.head_count;
    mc.vocab_size = config.vocab_size;
    mc.max_len = 1;
    cell.samples[job.trial] = measure_update(mc, config.eta, config.base_seed + job.trial, config.loss);
  });
  for (auto& cell : result.cells) {
    std::vector<double> values;
    for (const auto& s : cell.samples) {
      if (s.diverged) {
        ++cell.n_diverged;
      } else {
        values.push_back(*s.delta_f);
      }
    }
    cell.mean_delta_f = stats::mean(values);
    cell.std_delta_f = stats::stddev(values);
  }
  return result;
}

std::vector<const SweepCell*> SweepResult::cells_for(const Arm& arm) const {
  std::vector<const SweepCell*> out;
  for (const auto& c : cells)
    if (c.arm.variant == arm.variant && c.arm.init == arm.init) out.push_back(&c);
  return out;
}

std::string SweepResult::to_csv(const std::string& comment) const {
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "variant,init,L,eta,d,seed,delta_f,diverged,bound\n";
  for (const auto& cell : cells) {
    for (const auto& s : cell.samples) {
      out << to_string(cell.arm.variant) << ',' << to_string(cell.arm.init) << ',' << cell.L << ','
          << io::format_double(cell.eta) << ',' << d << ',' << s.seed << ','
          << (s.delta_f ? io::format_double(*s.delta_f) : std::string()) << ',' << (s.diverged ? 1 : 0) << ','
          << io::format_double(cell.bound) << '\n';
    }
  }
  return out.str();
}

DepthTrend depth_trend(const SweepResult& result, const Arm& arm) {
  DepthTrend trend;
  for (const auto* cell : result.cells_for(arm)) {
    trend.L.push_back(static_cast<double>(cell->L));
    trend.mean_delta_f.push_back(cell->mean_delta_f);
    trend.bound.push_back(cell->bound);
  }
  if (trend.L.empty()) return trend;
  const auto [lo, hi] = std::minmax_element(trend.mean_delta_f.begin(), trend.mean_delta_f.end());
  trend.max_over_min = *lo > 0.0 ? *hi / *lo : INFINITY;
  trend.monotone_increasing = true;
  for (std::size_t i = 1; i < trend.mean_delta_f.size(); ++i) {
    if (!(trend.mean_delta_f[i] > trend.mean_delta_f[i - 1])) trend.monotone_increasing = false;
  }
  if (trend.L.size() >= 2) {
    std::vector<double> log_l;
    for (double l : trend.L) log_l.push_back(std::log(l));
    trend.log_fit = stats::least_squares(log_l, trend.mean_delta_f);
    trend.spearman_vs_bound = stats::spearman(trend.mean_delta_f, trend.bound);
  }
  return trend;
}

void LrSweepConfig::validate() const {
  if (arms.empty()) throw ConfigError("learning-rate sweep needs at least one variant");
  if (etas.empty()) throw ConfigError("learning-rate sweep needs at least one eta");
  for (double e : etas)
    if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError("learning rates must be finite and non-negative");
  if (steps < 1 || steps > 2000) throw ConfigError("steps must be in 1..2000");
  if (n_layers < 1) throw ConfigError("n_layers must be positive");
  if (batch < 1) throw ConfigError("batch must be positive");
  if (log_every < 1) throw ConfigError("log_every must be positive");
  if (task == tasks::Task::CharLM && family != Family::DecoderOnly) {
    throw ConfigError("the char-lm task is decoder-only");
  }
  if (family == Family::EncoderOnly) throw ConfigError("toy tasks need a decoder-only or encoder-decoder model");
}

std::optional<double> LrSweepResult::max_stable_eta(const Arm& arm) const {
  std::optional<double> best;
  for (const auto& run : runs) {
    if (run.arm.variant != arm.variant || run.arm.init != arm.init || run.diverged) continue;
    if (!best || run.eta > *best) best = run.eta;
  }
  return best;
}

std::string LrSweepResult::to_csv(const std::string& comment) const {
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "variant,init,task,eta,step,loss,diverged\n";
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.curve.size(); ++i) {
      const bool last = i + 1 == run.curve.size();
      out << to_string(run.arm.variant) << ',' << to_string(run.arm.init) << ',' << tasks::to_string(task) << ','
          << io::format_double(run.eta) << ',' << run.curve[i].first << ',' << io::format_double(run.curve[i].second)
          << ',' << (last && run.diverged ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

bool DivergenceMonitor::observe(double loss) {
  if (diverged_) return true;
  if (!std::isfinite(loss)) {
    diverged_ = true;
    return true;
  }
  if (!initial_) {
    initial_ = loss;
    return false;
  }
  streak_ = loss > kBlowupFactor * *initial_ ? streak_ + 1 : 0;
  if (streak_ >= kPatience) diverged_ = true;
  return diverged_;
}

ModelConfig lr_model_config(const LrSweepConfig& config, const Arm& arm) {
  ModelConfig mc;
  mc.family = config.family;
  mc.variant = arm.variant;
  mc.init = arm.init;
  mc.d = config.d;
  mc.d_ff = config.d_ff == 0 ? config.d : config.d_ff;
  mc.head_count = config.head_count;
  mc.seed = config.seed;
  if (config.family == Family::EncoderDecoder) {
    mc.n_encoder_layers = config.n_layers;
    mc.n_decoder_layers = config.n_layers;
  } else {
    mc.n_encoder_layers = 0;
    mc.n_decoder_layers = config.n_layers;
  }
  if (config.task == tasks::Task::Copy) {
    const tasks::CopyTask copy{config.copy_alphabet, config.copy_length};
    mc.vocab_size = copy.vocab_size();
    mc.max_len = copy.max_len();
  } else {
    mc.vocab_size = tasks::CharCorpus::builtin().vocab_size();
    mc.max_len = config.char_window;
  }
  return mc;
}

namespace {

std::vector<tasks::Example> training_pool(const LrSweepConfig& config) {
  Rng rng = Rng(config.seed).fork(0xDA7A);
  std::vector<tasks::Example> pool;
  if (config.task == tasks::Task::Copy) {
    const tasks::CopyTask copy{config.copy_alphabet, config.copy_length};
    for (std::size_t i = 0; i < config.batch; ++i) pool.push_back(copy.sample(rng, config.family));
  } else {
    const auto corpus = tasks::CharCorpus::builtin();
    for (std::size_t i = 0; i < config.batch; ++i) pool.push_back(corpus.sample(rng, config.char_window));
  }
  return pool;
}

std::size_t scored_positions(const std::vector<tasks::Example>& batch) {
  std::size_t n = 0;
  for (const auto& ex : batch)
    for (long t : ex.targets) n += t >= 0 ? 1 : 0;
  return n;
}

Tensor batch_loss(Tape& tape, const TransformerModel& model, const std::vector<tasks::Example>& batch) {
  Tensor total;
  for (const auto& ex : batch) {
    Tensor logits = model.config.family == Family::EncoderDecoder ? forward(tape, model, ex.source, ex.input)
                                                                  : forward(tape, model, ex.input);
    Tensor l = ops::cross_entropy_rows(tape, logits, ex.targets);
    total = total.defined() ? ops::add(tape, total, l) : l;
  }
  return total;
}

}  // namespace

double batch_loss_value(const TransformerModel& model, const std::vector<tasks::Example>& batch) {
  Tape tape(false);
  return batch_loss(tape, model, batch).item() / static_cast<double>(scored_positions(batch));
}

LrRun train(TransformerModel& model, const LrSweepConfig& config, const Arm& arm, double eta) {
  const auto pool = training_pool(config);
  const double scored = static_cast<double>(scored_positions(pool));
  LrRun run;
  run.arm = arm;
  run.eta = eta;
  DivergenceMonitor monitor;
  for (std::size_t step = 0; step < config.steps; ++step) {
    model.zero_grad();
    Tape tape;
    Tensor loss = batch_loss(tape, model, pool);
    const double value = loss.item() / scored;
    if (step == 0) run.initial_loss = value;
    run.final_loss = value;
    run.steps_run = step + 1;
    const bool stop = monitor.observe(value);
    if (step % config.log_every == 0 || stop || step + 1 == config.steps) run.curve.emplace_back(step, value);
    if (stop) {
      run.diverged = true;
      break;
    }
    tape.backward(loss);
    sgd_step(model, eta);
  }
  return run;
}

LrSweepResult lr_divergence_sweep(const LrSweepConfig& config) {
  config.validate();
  LrSweepResult result;
  result.task = config.task;
  struct Job {
    Arm arm;
    double eta;
  };
  std::vector<Job> jobs;
  for (const auto& arm : config.arms)
    for (double eta : config.etas) jobs.push_back({arm, eta});
  result.runs.resize(jobs.size());
  parallel_for(jobs.size(), config.jobs, [&](std::size_t i) {
    const ModelConfig mc = lr_model_config(config, jobs[i].arm);
    Rng rng(config.seed);
    TransformerModel model = build(mc, rng);
    result.runs[i] = train(model, config, jobs[i].arm, jobs[i].eta);
  });
  return result;
}

namespace {

struct GradCheckInput {
  std::vector<std::size_t> source;
  std::vector<std::size_t> input;
  std::vector<long> targets;
};

GradCheckInput grad_check_input(const ModelConfig& config, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(0x6C4D);
  GradCheckInput in;
  const std::size_t length = std::min<std::size_t>(3, config.max_len);
  auto draw = [&](std::size_t n) {
    std::vector<std::size_t> ids(n);
    for (auto& id : ids) id = rng.below(config.vocab_size);
    return ids;
  };
  if (config.family == Family::EncoderDecoder) in.source = draw(length);
  in.input = draw(config.family == Family::EncoderDecoder ? std::min<std::size_t>(2, length) : length);
  for (std::size_t t = 0; t < in.input.size(); ++t) in.targets.push_back(static_cast<long>(rng.below(config.vocab_size)));
  return in;
}

Tensor grad_check_loss(Tape& tape, const TransformerModel& model, const GradCheckInput& in) {
  Tensor logits = model.config.family == Family::EncoderDecoder ? forward(tape, model, in.source, in.input)
                                                                : forward(tape, model, in.input);
  return ops::cross_entropy_rows(tape, logits, in.targets);
}

}  // namespace

GradCheckReport grad_check(const TransformerModel& source_model, double tolerance, std::uint64_t seed, double step) {
  TransformerModel model = source_model.clone();
  const GradCheckInput in = grad_check_input(model.config, seed);
  model.zero_grad();
  {
    Tape tape;
    tape.backward(grad_check_loss(tape, model, in));
  }
  GradCheckReport report;
  for (auto& p : model.parameters()) {
    std::vector<double> analytic(p.tensor.numel(), 0.0);
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
    auto data = p.tensor.mutable_data();
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      Tape plus(false);
      const double f_plus = grad_check_loss(plus, model, in).item();
      data[i] = saved - step;
      Tape minus(false);
      const double f_minus = grad_check_loss(minus, model, in).item();
      data[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      diff = std::max(diff, std::abs(numeric - analytic[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
    }
    report.parameters_checked += data.size();
    const double rel = scale > 0.0 ? diff / scale : 0.0;
    if (rel > report.max_rel_error || report.worst_parameter.empty()) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      if (rel >= report.max_rel_error) report.worst_parameter = p.name;
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace subln::lab
