#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tlbench::csv {

/// Splits one CSV record. Handles double-quoted fields with "" escapes; no
/// embedded newlines.
std::vector<std::string> split_record(std::string_view line);

/// Quotes a field only when it contains a comma, quote or leading/trailing
/// space.
std::string escape(std::string_view field);
std::string join_record(const std::vector<std::string>& fields);

/// Splits text into lines, dropping '\r' and a trailing empty line.
std::vector<std::string_view> lines(std::string_view text);

std::string trim(std::string_view s);

} // namespace tlbench::csv
