#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace subln {

// Flat configuration shared by every CLI command. A value is either set (from
// the config file or a flag) or left for the command's default.
struct RunConfig {
  std::string command;

  std::optional<std::string> family;
  std::optional<std::string> variant;
  std::optional<std::string> init;
  std::optional<std::uint64_t> n;
  std::optional<std::uint64_t> m;
  std::optional<std::uint64_t> d;
  std::optional<std::uint64_t> d_ff;
  std::optional<std::uint64_t> heads;
  std::optional<std::uint64_t> vocab;

  std::optional<std::uint64_t> L;
  std::optional<std::string> gamma;  // "auto", "unit" or a positive number
  std::optional<double> eta;

  std::optional<std::vector<std::uint64_t>> depths;
  std::optional<std::vector<std::string>> arms;  // "variant:init"
  std::optional<std::uint64_t> seeds;
  std::optional<std::string> loss;

  std::optional<std::string> task;
  std::optional<std::vector<double>> etas;
  std::optional<std::uint64_t> steps;
  std::optional<std::uint64_t> batch;
  std::optional<std::uint64_t> log_every;
  std::optional<std::uint64_t> copy_alphabet;
  std::optional<std::uint64_t> copy_length;
  std::optional<std::uint64_t> char_window;

  std::optional<double> tolerance;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> jobs;
  std::optional<std::string> out;

  // Every recognized key, in declaration order.
  static const std::vector<std::string>& keys();

  // Sets one key from a JSON value. Unknown keys and ill-typed values throw
  // ConfigError naming the key.
  void set(std::string_view key, const nlohmann::json& value);
  // Same, from flag text. Lists are comma separated.
  void set_text(std::string_view key, std::string_view text);

  // Object with a string `command` plus any recognized keys.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);

  // Set keys only, sorted, compact; the same config always yields the same text.
  nlohmann::json to_json() const;
  std::string canonical() const;

  // Explicit seed, else SUBLN_SEED from the environment, else 0.
  std::uint64_t resolved_seed() const;
};

}  // namespace subln
