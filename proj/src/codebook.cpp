#include "beamtrack/codebook.hpp"

#include "beamtrack/rng.hpp"

namespace beamtrack {

std::string to_string(CodebookKind k) {
  switch (k) {
    case CodebookKind::gaussian: return "gaussian";
    case CodebookKind::orthogonal: return "orthogonal";
    case CodebookKind::steering: return "steering";
  }
  throw ContractError("unhandled codebook kind");
}

CodebookKind codebook_kind_from_string(const std::string& s) {
  if (s == "gaussian") return CodebookKind::gaussian;
  if (s == "orthogonal") return CodebookKind::orthogonal;
  if (s == "steering") return CodebookKind::steering;
  throw ConfigError("unknown codebook kind: " + s);
}

void CodebookConfig::validate() const {
  if (num_beams < 1) throw ConfigError("codebook: num_beams must be >= 1");
  if (num_antennas < 1)
    throw ConfigError("codebook: num_antennas must be >= 1");
  if (kind == CodebookKind::orthogonal && num_beams > 2 * num_antennas)
    throw ConfigError(
        "codebook: orthogonal kind requires num_beams <= 2*num_antennas (" +
        std::to_string(num_beams) + " > " + std::to_string(2 * num_antennas) +
        ")");
}

json CodebookConfig::to_json() const {
  return json{{"num_beams", num_beams},
              {"num_antennas", num_antennas},
              {"kind", to_string(kind)},
              {"seed", seed}};
}

CodebookConfig CodebookConfig::from_json(const json& j) {
  CodebookConfig c;
  c.num_beams = j.value("num_beams", c.num_beams);
  c.num_antennas = j.value("num_antennas", c.num_antennas);
  c.kind = codebook_kind_from_string(j.value("kind", std::string("gaussian")));
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Codebook generate_codebook(const CodebookConfig& config) {
  config.validate();
  const int q = config.num_beams;
  const int dim = 2 * config.num_antennas;

  if (config.kind == CodebookKind::steering) {
    // Unit-norm ULA steering vectors on a uniform sin-angle grid, packed
    // [Re(0..N-1); Im(0..N-1)]. Adjacent indices point at adjacent angles,
    // so beam-index distance tracks angular distance. With Q == N this is a
    // unitary offset-DFT (rows mutually orthogonal).
    const int n = config.num_antennas;
    const Real scale = Real(1) / std::sqrt(Real(n));
    Mat m(q, dim);
    for (int r = 0; r < q; ++r) {
      const Real s = Real(-1) + (Real(2) * r + 1) / q;  // sin of the beam angle
      for (int i = 0; i < n; ++i) {
        const Real phase = Real(EIGEN_PI) * i * s;
        m(r, i) = std::cos(phase) * scale;
        m(r, n + i) = std::sin(phase) * scale;
      }
    }
    return Codebook{config, std::move(m)};
  }

  Rng rng(config.seed);
  Mat m(q, dim);
  for (int r = 0; r < q; ++r)
    for (int c = 0; c < dim; ++c) m(r, c) = static_cast<Real>(rng.normal());

  if (config.kind == CodebookKind::orthogonal) {
    // Modified Gram-Schmidt, two passes for numerical orthogonality.
    for (int r = 0; r < q; ++r) {
      for (int pass = 0; pass < 2; ++pass)
        for (int p = 0; p < r; ++p)
          m.row(r) -= m.row(r).dot(m.row(p)) * m.row(p);
      const Real norm = m.row(r).norm();
      if (norm < Real(1e-12))
        throw ConfigError("codebook: degenerate row during orthogonalization");
      m.row(r) /= norm;
    }
  }

  return Codebook{config, std::move(m)};
}

Vec embed_beam(const Codebook& cb, int index) {
  if (index < 0 || index >= cb.num_beams())
    throw ContractError("embed_beam: index " + std::to_string(index) +
                        " out of range [0, " + std::to_string(cb.num_beams()) +
                        ")");
  return cb.vectors.row(index).transpose();
}

void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
  json j;
  j["config"] = cb.config.to_json();
  json rows = json::array();
  for (int r = 0; r < cb.vectors.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < cb.vectors.cols(); ++c) row.push_back(cb.vectors(r, c));
    rows.push_back(std::move(row));
  }
  j["vectors"] = std::move(rows);
  write_json_file(path, j, -1);
}

Codebook load_codebook(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  Codebook cb;
  cb.config = CodebookConfig::from_json(j.at("config"));
  const auto& rows = j.at("vectors");
  const int q = cb.config.num_beams;
  const int dim = 2 * cb.config.num_antennas;
  if (static_cast<int>(rows.size()) != q)
    throw DataError("codebook file: row count does not match config");
  cb.vectors.resize(q, dim);
  for (int r = 0; r < q; ++r) {
    if (static_cast<int>(rows[r].size()) != dim)
      throw DataError("codebook file: row " + std::to_string(r) +
                      " has wrong length");
    for (int c = 0; c < dim; ++c) cb.vectors(r, c) = rows[r][c].get<Real>();
  }
  return cb;
}

}  // namespace beamtrack
