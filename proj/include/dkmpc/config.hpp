#pragma once

#include <map>
#include <string>
#include <vector>

#include "dkmpc/types.hpp"

namespace dkmpc {

// Flat key = value text file. '#' starts a comment, blank lines are skipped,
// later assignments win. Keys are kept sorted so snapshot() is canonical.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  // Accepts "key=value" as passed on a command line.
  void set_from_assignment(const std::string& assignment);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  Scalar get_scalar(const std::string& key) const;
  Scalar get_scalar(const std::string& key, Scalar fallback) const;
  long get_int(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated list of numbers.
  std::vector<Scalar> get_scalars(const std::string& key) const;
  std::vector<Scalar> get_scalars(const std::string& key,
                                  const std::vector<Scalar>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

  // Canonical "key = value" lines, one per entry, sorted by key.
  std::string snapshot() const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace dkmpc
