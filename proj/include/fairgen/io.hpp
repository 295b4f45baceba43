// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace fairgen {

// Writes via a temp file in the same directory, then renames into place, so
// readers never observe a half-written artifact.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& fill);
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

// Formats a double with 9 significant digits (the CSV/report convention).
std::string format_g9(double v);

}  // namespace fairgen
