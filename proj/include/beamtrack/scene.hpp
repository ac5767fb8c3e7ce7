#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "beamtrack/codebook.hpp"
#include "beamtrack/common.hpp"
#include "beamtrack/dataset.hpp"
#include "beamtrack/feature_map.hpp"

namespace beamtrack {

struct Vec2 {
  Real x = 0, y = 0;
};

// Street-canyon scene: users and blockers move along x with constant speed,
// wrapping modulo street_length; the base station watches the street from one
// side, its frontal azimuth range carved into per-camera sectors.
struct SceneConfig {
  Real street_length = 160.0;
  Real street_width = 12.0;
  int num_users = 6;
  int num_blockers = 8;
  std::array<Real, 2> user_speed_range = {0.2, 1.0};     // m/s
  std::array<Real, 2> blocker_speed_range = {0.4, 2.0};  // m/s
  Real blocker_radius = 2.5;
  Vec2 bs_position = {80.0, -30.0};
  int num_cameras = 3;
  Real timestep = 0.1;   // seconds
  int duration = 900;    // steps
  uint64_t seed = 1;
  std::array<int, 3> feature_map_dims = {13, 13, 8};  // H, W, C
  Real beta_blockage = 0.1;    // LOS gain multiplier when blocked
  Real beta_reflection = 0.3;  // wall-reflection path gain
  Real carrier_ghz = 28.0;

  void validate() const;
  json to_json() const;
  static SceneConfig from_json(const json& j);
};

struct ScenarioTrace {
  SceneConfig config;
  int num_antennas = 0;  // from the codebook used at simulation time

  // [object][step]
  std::vector<std::vector<Vec2>> user_pos;
  std::vector<std::vector<Vec2>> blocker_pos;
  std::vector<std::vector<uint8_t>> los;    // [user][step], 1 = line of sight
  std::vector<std::vector<int>> best_beam;  // [user][step]

  int duration() const { return user_pos.empty() ? 0 : static_cast<int>(user_pos[0].size()); }
};

ScenarioTrace simulate_scene(const SceneConfig& cfg, const Codebook& cb);

void save_trace_json(const ScenarioTrace& trace, const std::filesystem::path& path);

// Narrowband two-path response for one user at one step, packed as
// [Re(0..N-1); Im(0..N-1)]. Paths: direct (attenuated by beta_blockage when
// blocked) plus a single wall reflection.
Vec channel_response(const ScenarioTrace& trace, int t, int user);

// Index of the codebook vector maximizing |<f, h>|^2 under the complex
// reading of the packed layout; ties break to the lowest index.
int optimal_beam(const Vec& h, const Codebook& cb);

// Squared complex inner-product magnitude between codebook row q and h.
Real beam_gain(const Vec& h, const Codebook& cb, int q);

// Camera sector covering the azimuth of pos as seen from the base station;
// positions outside the frontal fan clamp to the nearest edge sector.
int camera_for_position(const SceneConfig& cfg, Vec2 pos);

// Renders one camera's view at one step: a Gaussian blob per visible object,
// positioned by range and in-sector bearing, on a class+identity channel.
FeatureMap render_feature_map(const ScenarioTrace& trace, int t, int camera);

// Sliding windows over every user's timeline: tau observations, m future
// labels. Feature refs name per-step camera views rendered on demand.
Dataset generate_instances(const ScenarioTrace& trace, int tau, int m);

}  // namespace beamtrack
