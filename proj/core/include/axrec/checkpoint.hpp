#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "axrec/common.hpp"

namespace axrec {

// Single-file checkpoint: magic, JSON header, then raw little-endian doubles.
void save_blob(const std::string& path, const nlohmann::json& header,
               const std::vector<double>& blob);
std::pair<nlohmann::json, std::vector<double>> load_blob(const std::string& path);

std::uint64_t file_hash(const std::string& path);

}  // namespace axrec
