#include "beamtrack/io.hpp"

#include <cstdio>
#include <fstream>

namespace beamtrack {

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash(const json& j) {
  // nlohmann keeps object keys in sorted order, so dump() is canonical.
  const uint64_t h = fnv1a(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::filesystem::path& path, const json& j,
                     int indent) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << j.dump(indent) << "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  return s;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << text;
}

void write_blob(const std::filesystem::path& path, const json& meta,
                const std::vector<double>& payload) {
  json header = meta;
  header["payload_count"] = payload.size();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << header.dump() << "\n";
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!out) throw DataError("short write: " + path.string());
}

void pack_mat(std::vector<double>& payload, const Mat& m) {
  payload.reserve(payload.size() + static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      payload.push_back(static_cast<double>(m(i, j)));
}

Mat unpack_mat(const std::vector<double>& payload, size_t& pos, Eigen::Index rows,
               Eigen::Index cols) {
  const size_t need = static_cast<size_t>(rows) * static_cast<size_t>(cols);
  if (pos + need > payload.size())
    throw CheckpointError("payload shorter than declared tensor shapes");
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = static_cast<Real>(payload[pos++]);
  return m;
}

BlobFile read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line))
    throw DataError("missing blob header: " + path.string());
  BlobFile blob;
  try {
    blob.meta = json::parse(header_line);
  } catch (const json::parse_error& e) {
    throw DataError("malformed blob header in " + path.string() + ": " +
                    e.what());
  }
  const size_t count = blob.meta.value("payload_count", size_t{0});
  blob.payload.resize(count);
  in.read(reinterpret_cast<char*>(blob.payload.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<size_t>(in.gcount()) != count * sizeof(double))
    throw DataError("truncated blob payload: " + path.string());
  return blob;
}

}  // namespace beamtrack
