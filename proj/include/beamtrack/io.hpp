#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "beamtrack/common.hpp"

namespace beamtrack {

using json = nlohmann::json;

// FNV-1a 64-bit. Stable across runs and platforms, unlike std::hash.
uint64_t fnv1a(std::string_view s);

// Hash of the canonical (key-sorted) JSON dump; invariant under key order.
std::string config_hash(const json& j);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j,
                     int indent = 2);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& text);

// Single-file container: one JSON header line, then raw little-endian
// float64 payload. Used for feature tensors and model checkpoints.
struct BlobFile {
  json meta;
  std::vector<double> payload;
};

void write_blob(const std::filesystem::path& path, const json& meta,
                const std::vector<double>& payload);
BlobFile read_blob(const std::filesystem::path& path);

// Row-major matrix packing into a flat payload, for blob serialization.
void pack_mat(std::vector<double>& payload, const Mat& m);
Mat unpack_mat(const std::vector<double>& payload, size_t& pos, Eigen::Index rows,
               Eigen::Index cols);

}  // namespace beamtrack
