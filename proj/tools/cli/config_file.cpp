// SPDX-License-Identifier: Apache-2.0
#include <cctype>
#include <fstream>
#include <string>
#include <vector>

#include "gla/cli/cli.hpp"
#include "gla/errors.hpp"

namespace gla::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::vector<std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key.find_first_of(" \t") != std::string::npos || key == "config") {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": bad key '" + key + "'");
    }
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

}  // namespace gla::cli
