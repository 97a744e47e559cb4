#include "subln/run_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "subln/errors.hpp"

namespace subln {

namespace {

using nlohmann::json;

[[noreturn]] void bad_value(std::string_view key, const std::string& why) {
  throw ConfigError("config key '" + std::string(key) + "': " + why);
}

std::uint64_t as_uint(std::string_view key, const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) bad_value(key, "must be non-negative");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  bad_value(key, "expected a non-negative integer, got " + v.dump());
}

double as_real(std::string_view key, const json& v) {
  if (!v.is_number()) bad_value(key, "expected a number, got " + v.dump());
  const double x = v.get<double>();
  if (!std::isfinite(x)) bad_value(key, "must be finite");
  return x;
}

std::string as_string(std::string_view key, const json& v) {
  if (!v.is_string()) bad_value(key, "expected a string, got " + v.dump());
  return v.get<std::string>();
}

template <typename T, typename F>
std::vector<T> as_list(std::string_view key, const json& v, F item) {
  if (!v.is_array()) bad_value(key, "expected a list, got " + v.dump());
  if (v.empty()) bad_value(key, "list must not be empty");
  std::vector<T> out;
  for (const auto& e : v) out.push_back(item(key, e));
  return out;
}

std::vector<std::string> split(std::string_view text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

json parse_scalar_text(std::string_view key, const std::string& text, bool numeric, bool integer) {
  if (!numeric) return text;
  if (integer) {
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      bad_value(key, "expected a non-negative integer, got '" + text + "'");
    }
    return value;
  }
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) bad_value(key, "expected a number, got '" + text + "'");
  return value;
}

enum class Kind { Uint, Real, String, UintList, RealList, StringList };

Kind kind_of(std::string_view key) {
  static const std::vector<std::pair<std::string_view, Kind>> table = {
      {"family", Kind::String},        {"variant", Kind::String},     {"init", Kind::String},
      {"n", Kind::Uint},               {"m", Kind::Uint},             {"d", Kind::Uint},
      {"d_ff", Kind::Uint},            {"heads", Kind::Uint},         {"vocab", Kind::Uint},
      {"L", Kind::Uint},               {"gamma", Kind::String},       {"eta", Kind::Real},
      {"depths", Kind::UintList},      {"arms", Kind::StringList},    {"seeds", Kind::Uint},
      {"loss", Kind::String},          {"task", Kind::String},        {"etas", Kind::RealList},
      {"steps", Kind::Uint},           {"batch", Kind::Uint},         {"log_every", Kind::Uint},
      {"copy_alphabet", Kind::Uint},   {"copy_length", Kind::Uint},   {"char_window", Kind::Uint},
      {"tolerance", Kind::Real},       {"seed", Kind::Uint},          {"jobs", Kind::Uint},
      {"out", Kind::String},
  };
  for (const auto& [name, kind] : table)
    if (name == key) return kind;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "family", "variant", "init",  "n",     "m",         "d",             "d_ff",        "heads",
      "vocab",  "L",       "gamma", "eta",   "depths",    "arms",          "seeds",       "loss",
      "task",   "etas",    "steps", "batch", "log_every", "copy_alphabet", "copy_length", "char_window",
      "tolerance", "seed", "jobs",  "out"};
  return k;
}

void RunConfig::set(std::string_view key, const json& v) {
  if (key == "command") {
    command = as_string(key, v);
    return;
  }
  kind_of(key);
  if (key == "family") family = as_string(key, v);
  else if (key == "variant") variant = as_string(key, v);
  else if (key == "init") init = as_string(key, v);
  else if (key == "n") n = as_uint(key, v);
  else if (key == "m") m = as_uint(key, v);
  else if (key == "d") d = as_uint(key, v);
  else if (key == "d_ff") d_ff = as_uint(key, v);
  else if (key == "heads") heads = as_uint(key, v);
  else if (key == "vocab") vocab = as_uint(key, v);
  else if (key == "L") L = as_uint(key, v);
  else if (key == "gamma") {
    if (v.is_number()) {
      gamma = v.dump();
    } else {
      gamma = as_string(key, v);
    }
  } else if (key == "eta") eta = as_real(key, v);
  else if (key == "depths") depths = as_list<std::uint64_t>(key, v, as_uint);
  else if (key == "arms") arms = as_list<std::string>(key, v, as_string);
  else if (key == "seeds") seeds = as_uint(key, v);
  else if (key == "loss") loss = as_string(key, v);
  else if (key == "task") task = as_string(key, v);
  else if (key == "etas") etas = as_list<double>(key, v, as_real);
  else if (key == "steps") steps = as_uint(key, v);
  else if (key == "batch") batch = as_uint(key, v);
  else if (key == "log_every") log_every = as_uint(key, v);
  else if (key == "copy_alphabet") copy_alphabet = as_uint(key, v);
  else if (key == "copy_length") copy_length = as_uint(key, v);
  else if (key == "char_window") char_window = as_uint(key, v);
  else if (key == "tolerance") tolerance = as_real(key, v);
  else if (key == "seed") seed = as_uint(key, v);
  else if (key == "jobs") jobs = as_uint(key, v);
  else if (key == "out") out = as_string(key, v);
}

void RunConfig::set_text(std::string_view key, std::string_view text) {
  if (key == "command") {
    command = std::string(text);
    return;
  }
  const Kind kind = kind_of(key);
  const std::string s(text);
  switch (kind) {
    case Kind::Uint:
      set(key, parse_scalar_text(key, s, true, true));
      return;
    case Kind::Real:
      set(key, parse_scalar_text(key, s, true, false));
      return;
    case Kind::String:
      set(key, json(s));
      return;
    case Kind::UintList:
    case Kind::RealList:
    case Kind::StringList: {
      json list = json::array();
      for (const auto& part : split(s)) {
        if (part.empty()) bad_value(key, "empty list element in '" + s + "'");
        list.push_back(kind == Kind::StringList ? json(part)
                                                : parse_scalar_text(key, part, true, kind == Kind::UintList));
      }
      set(key, list);
      return;
    }
  }
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig config;
  for (const auto& [key, value] : j.items()) config.set(key, value);
  return config;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  json j = json::object();
  if (!command.empty()) j["command"] = command;
  auto put = [&](const char* key, const auto& field) {
    if (field) j[key] = *field;
  };
  put("family", family);
  put("variant", variant);
  put("init", init);
  put("n", n);
  put("m", m);
  put("d", d);
  put("d_ff", d_ff);
  put("heads", heads);
  put("vocab", vocab);
  put("L", L);
  put("gamma", gamma);
  put("eta", eta);
  put("depths", depths);
  put("arms", arms);
  put("seeds", seeds);
  put("loss", loss);
  put("task", task);
  put("etas", etas);
  put("steps", steps);
  put("batch", batch);
  put("log_every", log_every);
  put("copy_alphabet", copy_alphabet);
  put("copy_length", copy_length);
  put("char_window", char_window);
  put("tolerance", tolerance);
  put("seed", seed);
  put("jobs", jobs);
  put("out", out);
  return j;
}

std::string RunConfig::canonical() const { return to_json().dump(); }

std::uint64_t RunConfig::resolved_seed() const {
  if (seed) return *seed;
  const char* env = std::getenv("SUBLN_SEED");
  if (env == nullptr || *env == '\0') return 0;
  const std::string text(env);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("SUBLN_SEED must be a non-negative integer, got '" + text + "'");
  }
  return value;
}

}  // namespace subln
