#include "subln/tasks.hpp"

#include <algorithm>
#include <cctype>

#include "subln/errors.hpp"

namespace subln::tasks {

std::string_view to_string(Task task) { return task == Task::Copy ? "copy" : "char-lm"; }

Task parse_task(std::string_view text) {
  std::string key;
  for (char c : text) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "copy") return Task::Copy;
  if (key == "char-lm" || key == "charlm" || key == "char_lm") return Task::CharLM;
  throw ConfigError("unknown task '" + std::string(text) + "' (expected copy or char-lm)");
}

Example CopyTask::sample(Rng& rng, Family family) const {
  if (alphabet < 2 || length < 1) throw ConfigError("copy task needs alphabet >= 2 and length >= 1");
  std::vector<std::size_t> symbols(length);
  for (auto& s : symbols) s = rng.below(alphabet);
  const std::size_t sep = alphabet;
  Example ex;
  switch (family) {
    case Family::DecoderOnly:
    case Family::EncoderOnly: {
      ex.input = symbols;
      ex.input.push_back(sep);
      ex.input.insert(ex.input.end(), symbols.begin(), symbols.end() - 1);
      ex.targets.assign(ex.input.size(), -1);
      for (std::size_t i = 0; i < length; ++i) ex.targets[length + i] = static_cast<long>(symbols[i]);
      break;
    }
    case Family::EncoderDecoder: {
      ex.source = symbols;
      ex.input.push_back(sep);
      ex.input.insert(ex.input.end(), symbols.begin(), symbols.end() - 1);
      ex.targets.assign(symbols.begin(), symbols.end());
      break;
    }
  }
  return ex;
}

CharCorpus::CharCorpus(std::string text) {
  if (text.size() < 2) throw ConfigError("character corpus is too short");
  alphabet_ = text;
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
  ids_.reserve(text.size());
  for (char c : text) ids_.push_back(static_cast<std::size_t>(alphabet_.find(c)));
}

CharCorpus CharCorpus::builtin() {
  return CharCorpus(
      "the river ran quietly past the mill, and the miller watched the water turn the wheel. "
      "every morning he weighed the grain, every evening he swept the floor, and every night he "
      "listened to the wheel turning in the dark. the village said the mill was older than the "
      "church, older than the bridge, older than the road that climbed the hill to the market town. "
      "when the rains came the river rose and the wheel turned faster, and the miller sang to keep "
      "time with it. when the summer was dry the river fell and the wheel slowed, and the miller "
      "sat by the door and mended sacks and waited for the weather to change. ");
}

Example CharCorpus::sample(Rng& rng, std::size_t length) const {
  if (length + 1 > ids_.size()) throw ConfigError("window longer than the corpus");
  const std::size_t start = rng.below(ids_.size() - length);
  Example ex;
  ex.input.assign(ids_.begin() + static_cast<std::ptrdiff_t>(start),
                  ids_.begin() + static_cast<std::ptrdiff_t>(start + length));
  ex.targets.resize(length);
  for (std::size_t t = 0; t < length; ++t) ex.targets[t] = static_cast<long>(ids_[start + t + 1]);
  return ex;
}

}  // namespace subln::tasks
