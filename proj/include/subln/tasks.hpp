#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "subln/model.hpp"
#include "subln/rng.hpp"

namespace subln::tasks {

enum class Task { Copy, CharLM };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

// One training sequence. `source` is empty except for encoder-decoder models.
// `targets[t]` is the label for output position t, or -1 when position t does
// not contribute to the loss.
struct Example {
  std::vector<std::size_t> source;
  std::vector<std::size_t> input;
  std::vector<long> targets;
};

// Copy task over an alphabet of `alphabet` symbols (ids 0..alphabet-1) with a
// separator id `alphabet`. Decoder-only: the model reads s_1..s_n SEP
// s_1..s_{n-1} and is scored on reproducing s_1..s_n after the separator.
// Encoder-decoder: the encoder reads s, the decoder reads SEP s_1..s_{n-1} and
// is scored on s.
struct CopyTask {
  std::size_t alphabet = 8;
  std::size_t length = 8;

  std::size_t vocab_size() const { return alphabet + 1; }
  std::size_t max_len() const { return 2 * length; }
  Example sample(Rng& rng, Family family) const;
};

// Next-character prediction on windows of a fixed text.
class CharCorpus {
 public:
  explicit CharCorpus(std::string text);
  // A few paragraphs of built-in English prose.
  static CharCorpus builtin();

  std::size_t vocab_size() const { return alphabet_.size(); }
  std::size_t size() const { return ids_.size(); }
  // Window of `length` characters; targets are the following characters.
  Example sample(Rng& rng, std::size_t length) const;

 private:
  std::string alphabet_;
  std::vector<std::size_t> ids_;
};

}  // namespace subln::tasks
