#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "subln/errors.hpp"
#include "subln/init.hpp"
#include "subln/io.hpp"
#include "subln/lab.hpp"
#include "subln/report.hpp"
#include "subln/run_config.hpp"
#include "subln/theory.hpp"

namespace fs = std::filesystem;
using namespace subln;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDiverged = 1;
constexpr int kExitConfig = 2;

struct Flag {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

struct Command {
  CLI::App* app = nullptr;
  std::vector<Flag> flags;
};

std::string flag_name(const std::string& key) {
  std::string name = key;
  std::replace(name.begin(), name.end(), '_', '-');
  return "--" + name;
}

void add_flags(Command& cmd, const std::vector<std::pair<std::string, std::string>>& keys) {
  cmd.flags.reserve(keys.size());
  for (const auto& [key, help] : keys) {
    cmd.flags.push_back({key, {}, nullptr});
    Flag& f = cmd.flags.back();
    f.option = cmd.app->add_option(flag_name(key), f.value, help);
  }
}

// Six decimals, truncated toward zero.
std::string fmt6(double v) {
  const auto micro = static_cast<long long>(std::floor(v * 1e6));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%lld.%06lld", micro / 1000000, micro % 1000000);
  return buf;
}

template <typename T>
T get_or(const std::optional<T>& v, T fallback) {
  return v ? *v : fallback;
}

std::string comment_line(const RunConfig& config) { return config.canonical(); }

fs::path out_dir(const RunConfig& config) {
  const fs::path dir = config.out ? fs::path(*config.out) : fs::path("subln-out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("config key 'out': cannot create directory '" + dir.string() + "': " + ec.message());
  return dir;
}

lab::Arm parse_arm(const std::string& text) {
  const auto sep = text.find_first_of(":+");
  if (sep == std::string::npos) throw ConfigError("config key 'arms': expected variant:init, got '" + text + "'");
  return {parse_norm_variant(text.substr(0, sep)), parse_init_mode(text.substr(sep + 1))};
}

std::vector<lab::Arm> parse_arms(const std::vector<std::string>& items) {
  std::vector<lab::Arm> arms;
  for (const auto& a : items) arms.push_back(parse_arm(a));
  return arms;
}

// gamma: "auto" (the family's depth-derived gain), "unit", or a number.
struct GammaSpec {
  bool automatic = false;
  double value = 1.0;
};

GammaSpec parse_gamma(const std::string& text) {
  if (text == "auto") return {true, 0.0};
  if (text == "unit") return {false, 1.0};
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && v > 0.0 && std::isfinite(v)) return {false, v};
  } catch (const std::exception&) {
  }
  throw ConfigError("config key 'gamma': expected auto, unit or a positive number, got '" + text + "'");
}

int cmd_gamma(RunConfig& config) {
  const Family family = parse_family(get_or<std::string>(config.family, "encoder-only"));
  config.family = std::string(to_string(family));
  const std::size_t n = get_or<std::uint64_t>(config.n, 0);
  const std::size_t m = get_or<std::uint64_t>(config.m, 0);
  const auto gains = init::gamma_for(family, n, m);
  if (gains.encoder) std::cout << "gamma_encoder=" << fmt6(*gains.encoder) << '\n';
  if (gains.decoder) std::cout << "gamma_decoder=" << fmt6(*gains.decoder) << '\n';
  const auto plan = init::InitPlan::magneto(family, n, m);
  std::string scaled, unscaled;
  for (auto role : plan.scaled_set) scaled += (scaled.empty() ? "" : ",") + std::string(to_string(role));
  for (auto role : plan.unscaled_set) unscaled += (unscaled.empty() ? "" : ",") + std::string(to_string(role));
  std::cout << "scaled=" << scaled << '\n' << "unscaled=" << unscaled << '\n';
  return kExitOk;
}

int cmd_bounds(RunConfig& config) {
  const NormVariant variant = parse_norm_variant(get_or<std::string>(config.variant, "subln"));
  const Family family = parse_family(get_or<std::string>(config.family, "encoder-only"));
  const GammaSpec gamma = parse_gamma(get_or<std::string>(config.gamma, "auto"));
  const double eta = get_or(config.eta, 1.0);
  const double d = static_cast<double>(get_or<std::uint64_t>(config.d, 1));
  config.variant = std::string(to_string(variant));
  config.family = std::string(to_string(family));
  config.gamma = get_or<std::string>(config.gamma, "auto");
  config.eta = eta;
  config.d = static_cast<std::uint64_t>(d);

  std::vector<theory::BoundReport> rows;
  if (family == Family::EncoderDecoder) {
    if (!config.n || !config.m) throw ConfigError("bounds for enc-dec need both n and m");
    double ge = gamma.value, gd = gamma.value;
    if (gamma.automatic) {
      const auto g = init::gamma_for(family, *config.n, *config.m);
      ge = *g.encoder;
      gd = *g.decoder;
    }
    rows.push_back(theory::bound_encdec(theory::ScaleProfile::uniform(2 * *config.n, ge),
                                        theory::ScaleProfile::uniform(3 * *config.m, gd), eta, d, variant));
  } else {
    std::vector<std::uint64_t> depths;
    if (config.depths) depths = *config.depths;
    else if (config.L) depths = {*config.L};
    else if (family == Family::EncoderOnly && config.n) depths = {2 * *config.n};
    else if (family == Family::DecoderOnly && config.m) depths = {2 * *config.m};
    else throw ConfigError("bounds need L, depths, or a layer count");
    for (std::uint64_t L : depths) {
      if (L < 1) throw ConfigError("config key 'L': must be positive");
      double g = gamma.value;
      if (gamma.automatic) {
        if (L % 2 != 0) throw ConfigError("config key 'L': gamma auto needs an even L (2N sub-layers)");
        g = family == Family::EncoderOnly ? *init::gamma_for(family, L / 2, 0).encoder
                                          : *init::gamma_for(family, 0, L / 2).decoder;
      }
      rows.push_back(theory::bound_for(variant, theory::ScaleProfile::uniform(L, g), eta, d));
    }
  }
  std::ostringstream csv;
  csv << theory::BoundReport::csv_header() << '\n';
  for (const auto& r : rows) csv << r.csv_row() << '\n';
  std::cout << csv.str();
  if (config.out) io::write_text_atomically(out_dir(config) / "bounds.csv", "# " + comment_line(config) + "\n" + csv.str());
  return kExitOk;
}

int cmd_sweep_depth(RunConfig& config) {
  lab::DepthSweepConfig sweep;
  config.depths = get_or<std::vector<std::uint64_t>>(config.depths, {4, 8, 16, 32, 64});
  config.arms = get_or<std::vector<std::string>>(config.arms, {"subln:magneto", "preln:standard"});
  config.eta = get_or(config.eta, 1e-3);
  config.d = get_or<std::uint64_t>(config.d, 64);
  config.d_ff = get_or<std::uint64_t>(config.d_ff, *config.d);
  config.heads = get_or<std::uint64_t>(config.heads, 1);
  config.vocab = get_or<std::uint64_t>(config.vocab, 64);
  config.seeds = get_or<std::uint64_t>(config.seeds, 5);
  config.loss = std::string(to_string(lab::parse_probe_loss(get_or<std::string>(config.loss, "cross-entropy"))));
  config.seed = config.resolved_seed();
  config.jobs = get_or<std::uint64_t>(config.jobs, 1);
  sweep.L_values.assign(config.depths->begin(), config.depths->end());
  sweep.arms = parse_arms(*config.arms);
  sweep.eta = *config.eta;
  sweep.d = *config.d;
  sweep.d_ff = *config.d_ff;
  sweep.head_count = *config.heads;
  sweep.vocab_size = *config.vocab;
  sweep.n_seeds = *config.seeds;
  sweep.loss = lab::parse_probe_loss(*config.loss);
  sweep.base_seed = *config.seed;
  sweep.jobs = *config.jobs;
  const fs::path dir = out_dir(config);
  const std::string comment = comment_line(config);

  const auto result = lab::depth_sweep(sweep);
  io::write_text_atomically(dir / "depth_sweep.csv", result.to_csv(comment));
  io::write_text_atomically(dir / "depth_sweep.svg", report::depth_sweep_svg(result));
  std::cout << report::depth_sweep_summary(result);
  std::cout << "wrote " << (dir / "depth_sweep.csv").string() << " and " << (dir / "depth_sweep.svg").string() << '\n';
  const bool all_diverged = std::all_of(result.cells.begin(), result.cells.end(),
                                        [](const lab::SweepCell& c) { return c.n_diverged == c.samples.size(); });
  return all_diverged ? kExitDiverged : kExitOk;
}

lab::LrSweepConfig lr_config(RunConfig& config, bool single) {
  lab::LrSweepConfig lr;
  config.task = std::string(tasks::to_string(tasks::parse_task(get_or<std::string>(config.task, "copy"))));
  config.family = std::string(to_string(parse_family(get_or<std::string>(config.family, "decoder-only"))));
  config.m = get_or<std::uint64_t>(config.m, 8);
  if (config.n && *config.n != *config.m) throw ConfigError("config key 'n': toy tasks use n = m");
  config.d = get_or<std::uint64_t>(config.d, 32);
  config.d_ff = get_or<std::uint64_t>(config.d_ff, *config.d);
  config.heads = get_or<std::uint64_t>(config.heads, 1);
  config.steps = get_or<std::uint64_t>(config.steps, 2000);
  config.batch = get_or<std::uint64_t>(config.batch, 4);
  config.log_every = get_or<std::uint64_t>(config.log_every, 10);
  config.copy_alphabet = get_or<std::uint64_t>(config.copy_alphabet, 8);
  config.copy_length = get_or<std::uint64_t>(config.copy_length, 8);
  config.char_window = get_or<std::uint64_t>(config.char_window, 16);
  config.seed = config.resolved_seed();
  config.jobs = get_or<std::uint64_t>(config.jobs, 1);
  if (single) {
    const lab::Arm arm{parse_norm_variant(get_or<std::string>(config.variant, "subln")),
                       parse_init_mode(get_or<std::string>(config.init, "magneto"))};
    config.variant = std::string(to_string(arm.variant));
    config.init = std::string(to_string(arm.init));
    config.eta = get_or(config.eta, 1e-3);
    lr.arms = {arm};
    lr.etas = {*config.eta};
  } else {
    config.arms = get_or<std::vector<std::string>>(config.arms, {"subln:magneto", "postln:standard"});
    config.etas = get_or<std::vector<double>>(config.etas, {1e-4, 3e-4, 1e-3, 3e-3, 1e-2});
    lr.arms = parse_arms(*config.arms);
    lr.etas = *config.etas;
  }
  lr.task = tasks::parse_task(*config.task);
  lr.family = parse_family(*config.family);
  lr.n_layers = *config.m;
  lr.d = *config.d;
  lr.d_ff = *config.d_ff;
  lr.head_count = *config.heads;
  lr.steps = *config.steps;
  lr.batch = *config.batch;
  lr.log_every = *config.log_every;
  lr.copy_alphabet = *config.copy_alphabet;
  lr.copy_length = *config.copy_length;
  lr.char_window = *config.char_window;
  lr.seed = *config.seed;
  lr.jobs = *config.jobs;
  lr.validate();
  return lr;
}

int cmd_sweep_lr(RunConfig& config) {
  const lab::LrSweepConfig lr = lr_config(config, false);
  const fs::path dir = out_dir(config);
  const auto result = lab::lr_divergence_sweep(lr);
  io::write_text_atomically(dir / "lr_sweep.csv", result.to_csv(comment_line(config)));
  for (const auto& run : result.runs) {
    std::cout << lab::arm_label(run.arm) << " eta=" << io::format_double(run.eta)
              << (run.diverged ? " diverged at step " + std::to_string(run.steps_run)
                               : " final_loss=" + io::format_double(run.final_loss))
              << '\n';
  }
  for (const auto& arm : lr.arms) {
    const auto best = result.max_stable_eta(arm);
    std::cout << "max_stable_eta " << lab::arm_label(arm) << '=' << (best ? io::format_double(*best) : "none") << '\n';
  }
  std::cout << "wrote " << (dir / "lr_sweep.csv").string() << '\n';
  const bool all_diverged =
      std::all_of(result.runs.begin(), result.runs.end(), [](const lab::LrRun& r) { return r.diverged; });
  return all_diverged ? kExitDiverged : kExitOk;
}

int cmd_train_toy(RunConfig& config) {
  const lab::LrSweepConfig lr = lr_config(config, true);
  const fs::path dir = out_dir(config);
  const ModelConfig mc = lab::lr_model_config(lr, lr.arms.front());
  Rng rng(lr.seed);
  TransformerModel model = build(mc, rng);
  lab::LrSweepResult result;
  result.task = lr.task;
  result.runs.push_back(lab::train(model, lr, lr.arms.front(), lr.etas.front()));
  const auto& run = result.runs.front();
  io::write_text_atomically(dir / "train_curve.csv", result.to_csv(comment_line(config)));
  save_checkpoint(dir / "model.ckpt", model);
  std::cout << lab::arm_label(run.arm) << " initial_loss=" << io::format_double(run.initial_loss)
            << " final_loss=" << io::format_double(run.final_loss) << " steps=" << run.steps_run
            << (run.diverged ? " DIVERGED" : "") << '\n';
  std::cout << "wrote " << (dir / "train_curve.csv").string() << " and " << (dir / "model.ckpt").string() << '\n';
  return run.diverged ? kExitDiverged : kExitOk;
}

int cmd_gradcheck(RunConfig& config) {
  ModelConfig mc;
  mc.family = parse_family(get_or<std::string>(config.family, "encoder-only"));
  mc.variant = parse_norm_variant(get_or<std::string>(config.variant, "subln"));
  mc.init = parse_init_mode(get_or<std::string>(config.init, "magneto"));
  config.family = std::string(to_string(mc.family));
  config.variant = std::string(to_string(mc.variant));
  config.init = std::string(to_string(mc.init));
  config.n = get_or<std::uint64_t>(config.n, mc.family == Family::DecoderOnly ? 0 : 1);
  config.m = get_or<std::uint64_t>(config.m, mc.family == Family::EncoderOnly ? 0 : 1);
  config.d = get_or<std::uint64_t>(config.d, 8);
  config.d_ff = get_or<std::uint64_t>(config.d_ff, *config.d);
  config.heads = get_or<std::uint64_t>(config.heads, 1);
  config.vocab = get_or<std::uint64_t>(config.vocab, 8);
  config.tolerance = get_or(config.tolerance, 1e-5);
  config.seed = config.resolved_seed();
  mc.n_encoder_layers = *config.n;
  mc.n_decoder_layers = *config.m;
  mc.d = *config.d;
  mc.d_ff = *config.d_ff;
  mc.head_count = *config.heads;
  mc.vocab_size = *config.vocab;
  mc.max_len = 8;
  mc.seed = *config.seed;
  mc.validate();
  if (build_structure(mc).parameter_count() > 5000) {
    throw ConfigError("gradcheck needs a model with at most 5000 parameters");
  }
  Rng rng(mc.seed);
  const TransformerModel model = build(mc, rng);
  const auto report = lab::grad_check(model, *config.tolerance, mc.seed);
  char err[64];
  std::snprintf(err, sizeof err, "%.3e", report.max_rel_error);
  std::cout << (report.passed ? "PASS" : "FAIL") << " max_rel_err=" << err << " parameters=" << report.parameters_checked
            << " worst=" << report.worst_parameter << '\n';
  return report.passed ? kExitOk : kExitDiverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-LayerNorm transformer lab: gains, update bounds, depth and learning-rate sweeps."};
  app.require_subcommand(1);
  app.set_help_flag();
  app.set_help_all_flag("-h,--help", "Print every command with its flags and exit");
  std::string config_path;
  app.add_option("--config", config_path, "flat JSON config file; flags override its values");
  app.fallthrough();

  const std::pair<std::string, std::string> family{"family", "encoder-only | decoder-only | enc-dec"};
  const std::pair<std::string, std::string> variant{"variant", "postln | preln | subln"};
  const std::pair<std::string, std::string> init{"init", "standard | magneto"};
  const std::pair<std::string, std::string> n{"n", "encoder layers N"};
  const std::pair<std::string, std::string> m{"m", "decoder layers M"};
  const std::pair<std::string, std::string> d{"d", "hidden width"};
  const std::pair<std::string, std::string> d_ff{"d_ff", "FFN width (default d)"};
  const std::pair<std::string, std::string> heads{"heads", "attention heads"};
  const std::pair<std::string, std::string> vocab{"vocab", "vocabulary size"};
  const std::pair<std::string, std::string> eta{"eta", "learning rate"};
  const std::pair<std::string, std::string> seed{"seed", "base seed (falls back to SUBLN_SEED, then 0)"};
  const std::pair<std::string, std::string> jobs{"jobs", "parallel trials (default 1)"};
  const std::pair<std::string, std::string> out{"out", "output directory (default subln-out)"};
  const std::pair<std::string, std::string> arms{"arms", "comma list of variant:init pairs"};
  const std::pair<std::string, std::string> task{"task", "copy | char-lm"};
  const std::vector<std::pair<std::string, std::string>> toy = {
      {"steps", "SGD steps (at most 2000)"},      {"batch", "training sequences"},
      {"log_every", "loss logging interval"},     {"copy_alphabet", "copy task alphabet size"},
      {"copy_length", "copy task sequence length"}, {"char_window", "char-lm window length"}};

  std::map<std::string, Command> commands;
  auto make = [&](const std::string& name, const std::string& help,
                  std::vector<std::pair<std::string, std::string>> keys) {
    Command& cmd = commands[name];
    cmd.app = app.add_subcommand(name, help);
    add_flags(cmd, keys);
  };
  make("gamma", "print the depth-derived initialization gains", {family, n, m});
  make("bounds", "evaluate the model-update upper-bound estimates as CSV",
       {variant, family, {"L", "sub-layer count"}, {"depths", "comma list of sub-layer counts"}, n, m,
        {"gamma", "auto | unit | number"}, eta, d, out});
  make("sweep-depth", "measure one-step updates across depths",
       {{"depths", "comma list of even sub-layer counts"}, arms, eta, d, d_ff, heads, vocab,
        {"seeds", "seeds per cell"}, {"loss", "cross-entropy | linear"}, seed, jobs, out});
  {
    std::vector<std::pair<std::string, std::string>> keys = {task, family, arms, {"etas", "comma list of learning rates"},
                                                             n, m, d, d_ff, heads, seed, jobs, out};
    keys.insert(keys.end(), toy.begin(), toy.end());
    make("sweep-lr", "train toy tasks over a learning-rate grid and record divergence", keys);
  }
  make("gradcheck", "compare tape gradients with central differences",
       {family, variant, init, n, m, d, d_ff, heads, vocab, {"tolerance", "pass threshold"}, seed});
  {
    std::vector<std::pair<std::string, std::string>> keys = {task, family, variant, init, eta, n, m, d, d_ff, heads, seed, out};
    keys.insert(keys.end(), toy.begin(), toy.end());
    make("train-toy", "train one toy model, write its loss curve and checkpoint", keys);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig config;
    if (!config_path.empty()) config = RunConfig::from_file(config_path);
    const auto* selected = app.get_subcommands().front();
    const std::string name = selected->get_name();
    if (!config.command.empty() && config.command != name) {
      throw ConfigError("config key 'command': file says '" + config.command + "' but '" + name + "' was run");
    }
    config.command = name;
    for (const auto& flag : commands[name].flags) {
      if (flag.option->count() > 0) config.set_text(flag.key, flag.value);
    }
    if (name == "gamma") return cmd_gamma(config);
    if (name == "bounds") return cmd_bounds(config);
    if (name == "sweep-depth") return cmd_sweep_depth(config);
    if (name == "sweep-lr") return cmd_sweep_lr(config);
    if (name == "gradcheck") return cmd_gradcheck(config);
    return cmd_train_toy(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
