#pragma once

#include <filesystem>
#include <string>

namespace skar {

// Whole-file reads and writes; failures raise DataError naming the path.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// where is prefixed to the error message, usually "file:line".
double parse_double(const std::string& text, const std::string& where);

// 17 significant digits, enough to round-trip a double.
std::string format_exact(double value);
std::string format_fixed(double value, int decimals);

}  // namespace skar
