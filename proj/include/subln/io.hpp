#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>

namespace subln::io {

// Writes through a sibling temporary file and renames it over `path`, so
// readers never observe a partially written file.
void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);
void write_text_atomically(const std::filesystem::path& path, std::string_view text);

// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace subln::io
