#pragma once

#include <filesystem>
#include <string>

#include "beamtrack/common.hpp"
#include "beamtrack/io.hpp"

namespace beamtrack {

// Written to <out_dir>/manifest.json when a run starts and finalized when it
// ends. The config hash is stable under JSON key reordering. Timings make the
// manifest the one output file excluded from byte-identity comparisons.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::string config_digest;
  uint64_t seed = 0;
  std::string out_dir;
  std::string version = kVersion;
  std::string status = "running";
  std::string message;
  double started_unix = 0;
  double finished_unix = 0;
  double wall_seconds = 0;

  json to_json() const;

  static RunManifest start(const std::string& command, const std::string& config_path,
                           const json& config, uint64_t seed,
                           const std::filesystem::path& out_dir);
  void finalize(const std::string& final_status, const std::string& final_message = "");
  void write() const;  // to <out_dir>/manifest.json
};

}  // namespace beamtrack
