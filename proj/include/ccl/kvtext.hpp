#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ccl {

// Ordered key/value text document: one `key = value` per line, `#` comments,
// UTF-8. Shared by dataset manifests, checkpoints, config files and reports.
class KvMap {
 public:
  void set(std::string key, std::string value);
  void set_u64(const std::string& key, std::uint64_t v);
  void set_f64(const std::string& key, double v);  // round-trippable %.17g
  void set_bool(const std::string& key, bool v);

  bool contains(const std::string& key) const;
  std::optional<std::string> find(const std::string& key) const;

  // Throw FormatError when the key is missing or the value does not parse.
  const std::string& get(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_f64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string serialize() const;
  static KvMap parse(const std::string& text);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

KvMap read_kv_file(const std::filesystem::path& path);
void write_kv_file(const std::filesystem::path& path, const KvMap& kv);

std::string format_f64(double v);
std::optional<double> parse_f64(const std::string& s);
std::optional<std::uint64_t> parse_u64(const std::string& s);

}  // namespace ccl
