#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sgs/common.hpp"
#include "sgs/losses.hpp"
#include "sgs/networks.hpp"

namespace sgs {

// Line-oriented configuration: `key = value` with `#` comments and
// `[section]` headers. Canonical key names are section-qualified
// ("loss.lambda1"); a bare key resolves if its short name is unique across
// the schema. Unknown keys are hard errors.
class Config {
 public:
  Config();  // all defaults

  static Config from_file(const std::string& path);
  void load_file(const std::string& path);

  // Accepts "section.key" or a unique bare key; validates type and value.
  void set(const std::string& key, const std::string& value);
  std::string get_raw(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

  // Cross-key invariants; throws ConfigError on violation.
  void validate() const;

  std::string digest() const;

  // Canonical serialization of the resolved configuration.
  std::string serialize() const;

  // Generated reference of every key, default and description.
  static std::string reference();

  ModelConfig model_config() const;
  LossWeights loss_weights() const;

 private:
  std::string canonical_key(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace sgs
