// SPDX-License-Identifier: Apache-2.0
#include "fairgen/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fairgen/error.hpp"

namespace fairgen {

namespace fs = std::filesystem;

void atomic_write(const fs::path& path,
                  const std::function<void(std::ostream&)>& fill) {
  fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot open for writing: " + tmp.string());
    fill(out);
    out.flush();
    if (!out) throw ArtifactError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw ArtifactError("rename failed for " + path.string() + ": " + ec.message());
  }
}

void atomic_write(const fs::path& path, const std::string& content) {
  atomic_write(path, [&](std::ostream& out) { out << content; });
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace fairgen
