#include "dkmpc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dkmpc/errors.hpp"

namespace dkmpc {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line has no '='", line_no);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("config line has empty key", line_no);
    cfg.kv_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

void Config::set_from_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty())
    throw Error("override must be key=value, got: " + assignment);
  kv_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string Config::get_string(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw Error("missing config key: " + key);
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

Scalar Config::get_scalar(const std::string& key) const {
  const std::string raw = get_string(key);
  char* end = nullptr;
  const Scalar v = std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() || *end != '\0')
    throw Error("config key " + key + " is not a number: " + raw);
  return v;
}

Scalar Config::get_scalar(const std::string& key, Scalar fallback) const {
  return has(key) ? get_scalar(key) : fallback;
}

long Config::get_int(const std::string& key) const {
  const std::string raw = get_string(key);
  char* end = nullptr;
  const long v = std::strtol(raw.c_str(), &end, 10);
  if (end == raw.c_str() || *end != '\0')
    throw Error("config key " + key + " is not an integer: " + raw);
  return v;
}

long Config::get_int(const std::string& key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
  const std::string raw = get_string(key);
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw Error("config key " + key + " is not a bool: " + raw);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<Scalar> Config::get_scalars(const std::string& key) const {
  const std::string raw = get_string(key);
  std::vector<Scalar> out;
  std::istringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) throw Error("config key " + key + " has an empty element");
    char* end = nullptr;
    const Scalar v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || *end != '\0')
      throw Error("config key " + key + " has a non-numeric element: " + t);
    out.push_back(v);
  }
  if (out.empty()) throw Error("config key " + key + " is an empty list");
  return out;
}

std::vector<Scalar> Config::get_scalars(
    const std::string& key, const std::vector<Scalar>& fallback) const {
  return has(key) ? get_scalars(key) : fallback;
}

std::string Config::snapshot() const {
  std::ostringstream out;
  for (const auto& [k, v] : kv_) out << k << " = " << v << "\n";
  return out.str();
}

}  // namespace dkmpc
