#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace loid {

nlohmann::json read_json_file(const std::string& path);

// Applies "a.b.c=value". The value is parsed as JSON when possible and
// kept as a string otherwise; missing intermediate objects are created.
// Numeric segments index into existing arrays.
void apply_override(nlohmann::json& config, const std::string& assignment);

// 16 hex digits of FNV-1a over the canonical (key-sorted, compact) dump.
std::string config_hash(const nlohmann::json& config);

std::uint64_t splitmix64(std::uint64_t x);
// Independent stream seed for a named unit of work under a master seed.
std::uint64_t derive_seed(std::uint64_t master, const std::string& key);

}  // namespace loid
