#include "fftkf/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace fftkf::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  if (!s.empty() && s.back() == ',') out.push_back("");
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

}  // namespace

RawConfig parse_ini(const std::string& text, const std::string& origin) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": malformed section header '" + t + "'");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": empty section name");
      }
      if (raw.sections.count(section) > 0) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": duplicate section [" + section + "]");
      }
      raw.section_order.push_back(section);
      raw.sections[section];
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value', got '" + t + "'");
    }
    if (section.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": key outside any [section]");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": empty key name");
    }
    auto& entries = raw.sections[section];
    for (const auto& kv : entries) {
      if (kv.first == key) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": duplicate key '" + key + "' in [" + section + "]");
      }
    }
    entries.emplace_back(key, value);
  }
  return raw;
}

RawConfig load_ini_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ini(buf.str(), path);
}

SectionView::SectionView(const RawConfig& raw, std::string section)
    : raw_(&raw), section_(std::move(section)) {}

std::optional<std::string> SectionView::lookup(const std::string& key) {
  consumed_.push_back(key);
  auto it = raw_->sections.find(section_);
  if (it == raw_->sections.end()) return std::nullopt;
  for (const auto& kv : it->second) {
    if (kv.first == key) return kv.second;
  }
  return std::nullopt;
}

bool SectionView::has(const std::string& key) const {
  auto it = raw_->sections.find(section_);
  if (it == raw_->sections.end()) return false;
  for (const auto& kv : it->second) {
    if (kv.first == key) return true;
  }
  return false;
}

void SectionView::fail(const std::string& key, const std::string& what) const {
  throw ConfigError("[" + section_ + "] " + key + ": " + what);
}

std::string SectionView::get_string(const std::string& key,
                                    const std::string& fallback) {
  auto v = lookup(key);
  return v ? *v : fallback;
}

std::string SectionView::require_string(const std::string& key) {
  auto v = lookup(key);
  if (!v || v->empty()) fail(key, "required");
  return *v;
}

double SectionView::get_double(const std::string& key, double fallback) {
  auto v = lookup(key);
  if (!v) return fallback;
  auto d = parse_double(*v);
  if (!d) fail(key, "expected a number, got '" + *v + "'");
  return *d;
}

double SectionView::require_double(const std::string& key) {
  auto v = lookup(key);
  if (!v) fail(key, "required");
  auto d = parse_double(*v);
  if (!d) fail(key, "expected a number, got '" + *v + "'");
  return *d;
}

long long SectionView::get_int(const std::string& key, long long fallback) {
  auto v = lookup(key);
  if (!v) return fallback;
  auto d = parse_int(*v);
  if (!d) fail(key, "expected an integer, got '" + *v + "'");
  return *d;
}

long long SectionView::require_int(const std::string& key) {
  auto v = lookup(key);
  if (!v) fail(key, "required");
  auto d = parse_int(*v);
  if (!d) fail(key, "expected an integer, got '" + *v + "'");
  return *d;
}

bool SectionView::get_bool(const std::string& key, bool fallback) {
  auto v = lookup(key);
  if (!v) return fallback;
  std::string t = trim(*v);
  std::transform(t.begin(), t.end(), t.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "no" || t == "0") return false;
  fail(key, "expected true/false, got '" + *v + "'");
}

std::vector<double> SectionView::require_double_list(const std::string& key) {
  auto v = lookup(key);
  if (!v || trim(*v).empty()) fail(key, "required");
  std::vector<double> out;
  for (const auto& item : split_commas(*v)) {
    auto d = parse_double(item);
    if (!d) fail(key, "expected comma-separated numbers, got '" + *v + "'");
    out.push_back(*d);
  }
  return out;
}

std::vector<std::uint64_t> SectionView::require_u64_list(
    const std::string& key) {
  auto v = lookup(key);
  if (!v || trim(*v).empty()) fail(key, "required");
  std::vector<std::uint64_t> out;
  for (const auto& item : split_commas(*v)) {
    auto d = parse_int(item);
    if (!d || *d < 0) {
      fail(key, "expected comma-separated non-negative integers, got '" + *v +
                    "'");
    }
    out.push_back(static_cast<std::uint64_t>(*d));
  }
  return out;
}

void SectionView::finish() const {
  auto it = raw_->sections.find(section_);
  if (it == raw_->sections.end()) return;
  for (const auto& kv : it->second) {
    if (std::find(consumed_.begin(), consumed_.end(), kv.first) ==
        consumed_.end()) {
      throw ConfigError("[" + section_ + "] unknown key '" + kv.first + "'");
    }
  }
}

}  // namespace fftkf::config
