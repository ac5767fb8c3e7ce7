#include "beamtrack/manifest.hpp"

#include <chrono>

namespace beamtrack {

namespace {

double now_unix() {
  return std::chrono::duration<double>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

json RunManifest::to_json() const {
  return {{"command", command},
          {"config_path", config_path},
          {"config_hash", config_digest},
          {"seed", seed},
          {"out_dir", out_dir},
          {"version", version},
          {"status", status},
          {"message", message},
          {"started_unix", started_unix},
          {"finished_unix", finished_unix},
          {"wall_seconds", wall_seconds}};
}

RunManifest RunManifest::start(const std::string& command, const std::string& config_path,
                               const json& config, uint64_t seed,
                               const std::filesystem::path& out_dir) {
  RunManifest m;
  m.command = command;
  m.config_path = config_path;
  m.config_digest = config_hash(config);
  m.seed = seed;
  m.out_dir = out_dir.string();
  m.started_unix = now_unix();
  m.write();
  return m;
}

void RunManifest::finalize(const std::string& final_status, const std::string& final_message) {
  status = final_status;
  message = final_message;
  finished_unix = now_unix();
  wall_seconds = finished_unix - started_unix;
  write();
}

void RunManifest::write() const {
  write_json_file(std::filesystem::path(out_dir) / "manifest.json", to_json());
}

}  // namespace beamtrack
