#include "beamtrack/scene.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <set>

#include "beamtrack/rng.hpp"

namespace beamtrack {

namespace {

constexpr double kSpeedOfLight = 299792458.0;
constexpr double kBlobSigma = 0.8;

double wrap_mod(double v, double period) {
  double r = std::fmod(v, period);
  return r < 0 ? r + period : r;
}

double dist_point_segment(Vec2 p, Vec2 a, Vec2 b) {
  double abx = b.x - a.x, aby = b.y - a.y;
  double len2 = abx * abx + aby * aby;
  double t = 0.0;
  if (len2 > 0.0)
    t = std::clamp(((p.x - a.x) * abx + (p.y - a.y) * aby) / len2, 0.0, 1.0);
  double cx = a.x + t * abx, cy = a.y + t * aby;
  return std::hypot(p.x - cx, p.y - cy);
}

double azimuth_from_bs(const SceneConfig& cfg, Vec2 pos) {
  // Bearing from the broadside (+y) direction; street points sit in
  // (-pi/2, pi/2) when the base station is behind the y=0 edge.
  return std::atan2(pos.x - cfg.bs_position.x, pos.y - cfg.bs_position.y);
}

double render_range_max(const SceneConfig& cfg) {
  return std::hypot(cfg.street_length, cfg.street_width + std::abs(cfg.bs_position.y));
}

}  // namespace

void SceneConfig::validate() const {
  if (street_length <= 0 || street_width <= 0)
    throw ConfigError("street dimensions must be positive");
  if (num_users < 1)
    throw ConfigError("need at least one user");
  if (num_blockers < 0)
    throw ConfigError("num_blockers must be >= 0");
  for (auto range : {user_speed_range, blocker_speed_range})
    if (range[0] < 0 || range[1] < range[0])
      throw ConfigError("speed ranges must satisfy 0 <= lo <= hi");
  if (blocker_radius <= 0)
    throw ConfigError("blocker_radius must be positive");
  if (num_cameras < 1)
    throw ConfigError("need at least one camera");
  if (timestep <= 0)
    throw ConfigError("timestep must be positive");
  if (duration < 1)
    throw ConfigError("duration must be >= 1");
  if (feature_map_dims[0] < 1 || feature_map_dims[1] < 1 || feature_map_dims[2] < 2)
    throw ConfigError("feature map needs H >= 1, W >= 1, C >= 2");
  if (beta_blockage < 0 || beta_reflection < 0)
    throw ConfigError("path gains must be >= 0");
  if (carrier_ghz <= 0)
    throw ConfigError("carrier frequency must be positive");
}

json SceneConfig::to_json() const {
  return {{"street_length", street_length},
          {"street_width", street_width},
          {"num_users", num_users},
          {"num_blockers", num_blockers},
          {"user_speed_range", user_speed_range},
          {"blocker_speed_range", blocker_speed_range},
          {"blocker_radius", blocker_radius},
          {"bs_position", {bs_position.x, bs_position.y}},
          {"num_cameras", num_cameras},
          {"timestep", timestep},
          {"duration", duration},
          {"seed", seed},
          {"feature_map_dims", feature_map_dims},
          {"beta_blockage", beta_blockage},
          {"beta_reflection", beta_reflection},
          {"carrier_ghz", carrier_ghz}};
}

SceneConfig SceneConfig::from_json(const json& j) {
  SceneConfig cfg;
  cfg.street_length = j.value("street_length", cfg.street_length);
  cfg.street_width = j.value("street_width", cfg.street_width);
  cfg.num_users = j.value("num_users", cfg.num_users);
  cfg.num_blockers = j.value("num_blockers", cfg.num_blockers);
  cfg.user_speed_range = j.value("user_speed_range", cfg.user_speed_range);
  cfg.blocker_speed_range = j.value("blocker_speed_range", cfg.blocker_speed_range);
  cfg.blocker_radius = j.value("blocker_radius", cfg.blocker_radius);
  if (j.contains("bs_position")) {
    auto p = j.at("bs_position");
    cfg.bs_position = {p.at(0).get<Real>(), p.at(1).get<Real>()};
  }
  cfg.num_cameras = j.value("num_cameras", cfg.num_cameras);
  cfg.timestep = j.value("timestep", cfg.timestep);
  cfg.duration = j.value("duration", cfg.duration);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.feature_map_dims = j.value("feature_map_dims", cfg.feature_map_dims);
  cfg.beta_blockage = j.value("beta_blockage", cfg.beta_blockage);
  cfg.beta_reflection = j.value("beta_reflection", cfg.beta_reflection);
  cfg.carrier_ghz = j.value("carrier_ghz", cfg.carrier_ghz);
  cfg.validate();
  return cfg;
}

ScenarioTrace simulate_scene(const SceneConfig& cfg, const Codebook& cb) {
  cfg.validate();
  Rng rng(cfg.seed);

  struct Body {
    Real lane = 0, x0 = 0, speed = 0, dir = 1;
  };
  auto draw_bodies = [&](int count, const std::array<Real, 2>& speed_range) {
    std::vector<Body> bodies(count);
    Real margin = std::min<Real>(0.5, cfg.street_width / 4);
    for (auto& b : bodies) {
      b.lane = margin + rng.uniform() * (cfg.street_width - 2 * margin);
      b.x0 = rng.uniform() * cfg.street_length;
      b.speed = speed_range[0] + rng.uniform() * (speed_range[1] - speed_range[0]);
      b.dir = rng.uniform() < 0.5 ? Real(1) : Real(-1);
    }
    return bodies;
  };
  auto users = draw_bodies(cfg.num_users, cfg.user_speed_range);
  auto blockers = draw_bodies(cfg.num_blockers, cfg.blocker_speed_range);

  ScenarioTrace trace;
  trace.config = cfg;
  trace.num_antennas = cb.config.num_antennas;

  auto roll_out = [&](const std::vector<Body>& bodies) {
    std::vector<std::vector<Vec2>> pos(bodies.size());
    for (size_t i = 0; i < bodies.size(); ++i) {
      pos[i].resize(cfg.duration);
      for (int t = 0; t < cfg.duration; ++t) {
        Real x = wrap_mod(bodies[i].x0 + bodies[i].dir * bodies[i].speed * cfg.timestep * t,
                          cfg.street_length);
        pos[i][t] = {x, bodies[i].lane};
      }
    }
    return pos;
  };
  trace.user_pos = roll_out(users);
  trace.blocker_pos = roll_out(blockers);

  trace.los.assign(cfg.num_users, std::vector<uint8_t>(cfg.duration, 1));
  for (int u = 0; u < cfg.num_users; ++u)
    for (int t = 0; t < cfg.duration; ++t)
      for (const auto& bpos : trace.blocker_pos)
        if (dist_point_segment(bpos[t], cfg.bs_position, trace.user_pos[u][t]) <
            cfg.blocker_radius) {
          trace.los[u][t] = 0;
          break;
        }

  trace.best_beam.assign(cfg.num_users, std::vector<int>(cfg.duration, 0));
  for (int u = 0; u < cfg.num_users; ++u)
    for (int t = 0; t < cfg.duration; ++t)
      trace.best_beam[u][t] = optimal_beam(channel_response(trace, t, u), cb);
  return trace;
}

void save_trace_json(const ScenarioTrace& trace, const std::filesystem::path& path) {
  auto pos_to_json = [](const std::vector<std::vector<Vec2>>& objs) {
    json out = json::array();
    for (const auto& track : objs) {
      json tj = json::array();
      for (const auto& p : track)
        tj.push_back({p.x, p.y});
      out.push_back(std::move(tj));
    }
    return out;
  };
  json j = {{"config", trace.config.to_json()},
            {"num_antennas", trace.num_antennas},
            {"user_pos", pos_to_json(trace.user_pos)},
            {"blocker_pos", pos_to_json(trace.blocker_pos)},
            {"los", trace.los},
            {"best_beam", trace.best_beam}};
  write_json_file(path, j);
}

Vec channel_response(const ScenarioTrace& trace, int t, int user) {
  if (user < 0 || user >= static_cast<int>(trace.user_pos.size()) || t < 0 ||
      t >= trace.duration())
    throw ContractError("channel_response: user/step out of range");
  const SceneConfig& cfg = trace.config;
  const int n = trace.num_antennas;
  const double lambda = kSpeedOfLight / (cfg.carrier_ghz * 1e9);

  Vec2 p = trace.user_pos[user][t];
  Vec2 mirror = {p.x, 2 * cfg.street_width - p.y};

  auto add_path = [&](std::vector<std::complex<double>>& h, Vec2 target, double gain) {
    double d = std::hypot(target.x - cfg.bs_position.x, target.y - cfg.bs_position.y);
    double phi = azimuth_from_bs(cfg, target);
    std::complex<double> coef = gain * std::exp(std::complex<double>(0, -2 * M_PI * d / lambda));
    double s = std::sin(phi);
    for (int i = 0; i < n; ++i)
      h[i] += coef * std::exp(std::complex<double>(0, M_PI * i * s));
  };

  std::vector<std::complex<double>> h(n, {0, 0});
  double g_los = trace.los[user][t] ? 1.0 : cfg.beta_blockage;
  if (g_los > 0)
    add_path(h, p, g_los);
  if (cfg.beta_reflection > 0)
    add_path(h, mirror, cfg.beta_reflection);

  Vec out(2 * n);
  for (int i = 0; i < n; ++i) {
    out(i) = static_cast<Real>(h[i].real());
    out(n + i) = static_cast<Real>(h[i].imag());
  }
  return out;
}

Real beam_gain(const Vec& h, const Codebook& cb, int q) {
  if (h.size() != cb.embed_dim())
    throw ContractError("beam_gain: channel/codebook dimension mismatch");
  if (q < 0 || q >= cb.num_beams())
    throw ContractError("beam_gain: beam index out of range");
  const Eigen::Index n = h.size() / 2;
  auto f = cb.vectors.row(q);
  Real re = f.head(n).dot(h.head(n)) + f.tail(n).dot(h.tail(n));
  Real im = f.head(n).dot(h.tail(n)) - f.tail(n).dot(h.head(n));
  return re * re + im * im;
}

int optimal_beam(const Vec& h, const Codebook& cb) {
  if (h.size() != cb.embed_dim())
    throw ContractError("optimal_beam: channel/codebook dimension mismatch");
  int best = 0;
  Real best_val = -1;
  for (int q = 0; q < cb.num_beams(); ++q) {
    Real v = beam_gain(h, cb, q);
    if (v > best_val) {
      best_val = v;
      best = q;
    }
  }
  return best;
}

int camera_for_position(const SceneConfig& cfg, Vec2 pos) {
  double az = azimuth_from_bs(cfg, pos);
  double u = (az + M_PI / 2) / M_PI;  // frontal fan mapped to [0, 1]
  // A position exactly on a shared sector boundary belongs to the
  // lower-index camera; outside the fan it clamps to the edge sector.
  int idx = static_cast<int>(std::ceil(u * cfg.num_cameras)) - 1;
  return std::clamp(idx, 0, cfg.num_cameras - 1);
}

FeatureMap render_feature_map(const ScenarioTrace& trace, int t, int camera) {
  const SceneConfig& cfg = trace.config;
  if (camera < 0 || camera >= cfg.num_cameras || t < 0 || t >= trace.duration())
    throw ContractError("render_feature_map: camera/step out of range");
  const auto [h, w, c] = cfg.feature_map_dims;
  FeatureMap fm(h, w, c);

  const double sector = M_PI / cfg.num_cameras;
  const double lo = -M_PI / 2 + camera * sector;
  const double hi = lo + sector;
  const bool first = camera == 0;
  const double range_max = render_range_max(cfg);
  const int user_block = cfg.feature_map_dims[2] / 2;
  const int blocker_block = cfg.feature_map_dims[2] - user_block;

  // Sector membership is (lo, hi] (camera 0 also owns lo), mirroring
  // camera_for_position's boundary-to-lower-index rule.
  auto deposit = [&](Vec2 pos, int channel) {
    double az = azimuth_from_bs(cfg, pos);
    if (az < lo || az > hi || (az == lo && !first))
      return;
    double col = (az - lo) / sector * (w - 1);
    double dist = std::hypot(pos.x - cfg.bs_position.x, pos.y - cfg.bs_position.y);
    double row = std::min(dist / range_max, 1.0) * (h - 1);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double d2 = (i - row) * (i - row) + (j - col) * (j - col);
        fm.at(i, j, channel) += static_cast<Real>(std::exp(-d2 / (2 * kBlobSigma * kBlobSigma)));
      }
  };

  for (size_t u = 0; u < trace.user_pos.size(); ++u)
    deposit(trace.user_pos[u][t], static_cast<int>(u) % user_block);
  for (size_t b = 0; b < trace.blocker_pos.size(); ++b)
    deposit(trace.blocker_pos[b][t], user_block + static_cast<int>(b) % blocker_block);

  for (auto& v : fm.values)
    v = std::min<Real>(v, Real(1));
  return fm;
}

Dataset generate_instances(const ScenarioTrace& trace, int tau, int m) {
  if (tau < 1 || m < 1)
    throw ConfigError("tau and m must be >= 1");
  if (trace.duration() < tau + m)
    throw ConfigError("trace duration " + std::to_string(trace.duration()) +
                      " too short for tau + m = " + std::to_string(tau + m));
  const SceneConfig& cfg = trace.config;

  auto image_id = [&](int cam, int t) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "s%llu_c%d_t%05d",
                  static_cast<unsigned long long>(cfg.seed), cam, t);
    return std::string(buf);
  };

  Dataset ds;
  ds.name = "scene_s" + std::to_string(cfg.seed);
  std::set<std::pair<int, int>> views;  // (camera, step) pairs to render

  const int num_windows = trace.duration() - tau - m + 1;
  for (int u = 0; u < cfg.num_users; ++u)
    for (int s = 0; s < num_windows; ++s) {
      InstanceRecord rec;
      rec.beams.resize(tau);
      rec.features.resize(tau);
      rec.labels.resize(m);
      for (int i = 0; i < tau; ++i) {
        rec.beams[i] = trace.best_beam[u][s + i];
        int cam = camera_for_position(cfg, trace.user_pos[u][s + i]);
        rec.features[i] = image_id(cam, s + i);
        views.emplace(cam, s + i);
      }
      for (int k = 0; k < m; ++k)
        rec.labels[k] = trace.best_beam[u][s + tau + k];
      rec.user_id = u;
      rec.t = s + tau - 1;
      ds.records.push_back(std::move(rec));
    }

  for (auto [cam, t] : views)
    ds.feature_store.emplace(image_id(cam, t),
                             std::make_shared<FeatureMap>(render_feature_map(trace, t, cam)));
  ds.validate();
  return ds;
}

}  // namespace beamtrack
