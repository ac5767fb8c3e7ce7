#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "beamtrack/common.hpp"
#include "beamtrack/io.hpp"

namespace beamtrack {

enum class CodebookKind { gaussian, orthogonal, steering };

std::string to_string(CodebookKind k);
CodebookKind codebook_kind_from_string(const std::string& s);

struct CodebookConfig {
  int num_beams = 128;     // Q
  int num_antennas = 128;  // N; beam embedding width is 2N
  CodebookKind kind = CodebookKind::gaussian;
  uint64_t seed = 0;

  void validate() const;
  json to_json() const;
  static CodebookConfig from_json(const json& j);
};

// Immutable after construction; safe for concurrent reads.
struct Codebook {
  CodebookConfig config;
  Mat vectors;  // Q x 2N, one beamforming vector per row

  int num_beams() const { return static_cast<int>(vectors.rows()); }
  int embed_dim() const { return static_cast<int>(vectors.cols()); }
};

// Deterministic per config. Gaussian entries are i.i.d. standard normal;
// the orthogonal kind orthonormalizes a seeded Gaussian matrix; the steering
// kind is a uniform sin-angle grid of unit-norm ULA steering vectors (beam
// index distance then tracks angular distance, which the scene simulator
// relies on for stable beam labels).
Codebook generate_codebook(const CodebookConfig& config);

// Row lookup: the length-2N embedding of a beam index.
Vec embed_beam(const Codebook& cb, int index);

void save_codebook(const Codebook& cb, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

}  // namespace beamtrack
