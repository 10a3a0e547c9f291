#include "loid/config.hpp"

#include <fstream>

#include "loid/error.hpp"
#include "loid/probe.hpp"

namespace loid {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string segment = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (segment.empty()) throw ConfigError("override '" + key + "' has an empty path segment");
    nlohmann::json* next = nullptr;
    if (node->is_array()) {
      std::size_t index = 0;
      try {
        index = std::stoul(segment);
      } catch (const std::exception&) {
        throw ConfigError("override '" + key + "': '" + segment + "' does not index an array");
      }
      if (index >= node->size()) throw ConfigError("override '" + key + "': index " + segment + " out of range");
      next = &(*node)[index];
    } else {
      if (node->is_null()) *node = nlohmann::json::object();
      if (!node->is_object()) throw ConfigError("override '" + key + "': '" + segment + "' is below a scalar");
      next = &(*node)[segment];
    }
    if (dot == std::string::npos) {
      *next = std::move(value);
      return;
    }
    node = next;
    start = dot + 1;
  }
}

std::string config_hash(const nlohmann::json& config) { return prompt_hash(config.dump()); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, const std::string& key) {
  return splitmix64(master ^ splitmix64(std::stoull(prompt_hash(key), nullptr, 16)));
}

}  // namespace loid
