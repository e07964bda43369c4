#include "facet/run_config.hpp"

#include <fstream>
#include <sstream>

#include "facet/error.hpp"

namespace facet {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, std::set<std::string> allowed_keys) {
  RunConfig cfg(std::move(allowed_keys));
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(number) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw UsageError("config line " + std::to_string(number) + ": empty key");
    if (cfg.contains(key)) throw UsageError("config line " + std::to_string(number) + ": duplicate key '" + key + "'");
    cfg.set(key, trim(t.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path, std::set<std::string> allowed_keys) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), std::move(allowed_keys));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!allowed_.empty() && allowed_.count(key) == 0) throw UsageError("unknown config key '" + key + "'");
  if (value.find('\n') != std::string::npos) throw UsageError("config value for '" + key + "' contains a newline");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("missing config key '" + key + "'");
  return it->second;
}

std::string RunConfig::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write config '" + path.string() + "'");
  out << to_string();
}

}  // namespace facet
