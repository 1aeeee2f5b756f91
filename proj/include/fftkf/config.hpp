#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fftkf::config {

/// Raised for any parse or validation problem; the message names the file,
/// section, and key involved.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key = value file with [section] headers. Full-line comments start
/// with '#' or ';'. Keys must appear under a section header; duplicate keys
/// within a section and duplicate section headers are errors.
struct RawConfig {
  std::vector<std::string> section_order;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>>
      sections;

  bool has_section(const std::string& name) const {
    return sections.count(name) > 0;
  }
};

RawConfig parse_ini(const std::string& text, const std::string& origin);
RawConfig load_ini_file(const std::string& path);

/// Typed accessor over one section. Every get_* marks the key as consumed;
/// finish() rejects keys that were never consumed (typo protection).
class SectionView {
 public:
  SectionView(const RawConfig& raw, std::string section);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback);
  std::string require_string(const std::string& key);
  double get_double(const std::string& key, double fallback);
  double require_double(const std::string& key);
  long long get_int(const std::string& key, long long fallback);
  long long require_int(const std::string& key);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<double> require_double_list(const std::string& key);
  std::vector<std::uint64_t> require_u64_list(const std::string& key);

  /// Throws ConfigError naming any key present in the section that no
  /// accessor asked for.
  void finish() const;

  const std::string& name() const { return section_; }

 private:
  std::optional<std::string> lookup(const std::string& key);
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  const RawConfig* raw_;
  std::string section_;
  std::vector<std::string> consumed_;
};

}  // namespace fftkf::config
