#include "ccl/kvtext.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ccl/errors.hpp"

namespace ccl {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::optional<double> parse_f64(const std::string& s) {
  if (s.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> parse_u64(const std::string& s) {
  if (s.empty() || s[0] == '-') return std::nullopt;
  errno = 0;
  char* end = nullptr;
  unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size()) return std::nullopt;
  return static_cast<std::uint64_t>(v);
}

void KvMap::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

void KvMap::set_u64(const std::string& key, std::uint64_t v) { set(key, std::to_string(v)); }
void KvMap::set_f64(const std::string& key, double v) { set(key, format_f64(v)); }
void KvMap::set_bool(const std::string& key, bool v) { set(key, v ? "true" : "false"); }

bool KvMap::contains(const std::string& key) const { return find(key).has_value(); }

std::optional<std::string> KvMap::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::string& KvMap::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw FormatError("kvtext: missing key '" + key + "'");
}

std::uint64_t KvMap::get_u64(const std::string& key) const {
  auto v = parse_u64(get(key));
  if (!v) throw FormatError("kvtext: key '" + key + "' is not an unsigned integer");
  return *v;
}

double KvMap::get_f64(const std::string& key) const {
  auto v = parse_f64(get(key));
  if (!v) throw FormatError("kvtext: key '" + key + "' is not a number");
  return *v;
}

bool KvMap::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw FormatError("kvtext: key '" + key + "' is not a boolean");
}

std::string KvMap::serialize() const {
  std::ostringstream out;
  for (const auto& [k, v] : entries_) out << k << " = " << v << "\n";
  return out.str();
}

KvMap KvMap::parse(const std::string& text) {
  KvMap kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError("kvtext: line " + std::to_string(lineno) + " has no '='");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw FormatError("kvtext: line " + std::to_string(lineno) + " has an empty key");
    }
    kv.set(key, trim(t.substr(eq + 1)));
  }
  return kv;
}

KvMap read_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return KvMap::parse(buf.str());
}

void write_kv_file(const std::filesystem::path& path, const KvMap& kv) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << kv.serialize();
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

}  // namespace ccl
