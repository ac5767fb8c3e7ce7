#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "beamtrack/common.hpp"
#include "beamtrack/feature_map.hpp"
#include "beamtrack/io.hpp"

namespace beamtrack {

// One observational sequence: tau (beam, image-ref) pairs plus the next m
// optimal beams as labels.
struct InstanceRecord {
  std::vector<int> beams;            // length tau
  std::vector<std::string> features; // length tau, keys into the feature store
  std::vector<int> labels;           // length m
  int user_id = 0;
  long t = 0;                        // timestep of the last observation
};

// Ordered map so serialization and embedder fitting are deterministic.
using FeatureStore = std::map<std::string, std::shared_ptr<const FeatureMap>>;

struct Dataset {
  std::string name;
  std::vector<InstanceRecord> records;
  FeatureStore feature_store;

  size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  int tau() const { return records.empty() ? 0 : static_cast<int>(records.front().beams.size()); }
  int m() const { return records.empty() ? 0 : static_cast<int>(records.front().labels.size()); }

  // Image IDs actually referenced by records.
  std::set<std::string> image_ids() const;

  // Checks record shape uniformity and that the feature store keys equal the
  // referenced image-ID set. Throws DataError on violation.
  void validate() const;

  // Copy of this dataset whose store is restricted to the given records.
  Dataset subset(const std::vector<size_t>& indices, const std::string& new_name) const;
};

struct IngestStats {
  size_t rows_parsed = 0;
  size_t rows_skipped = 0;
  std::vector<std::string> warnings;
};

// CSV layout: header "beam_1,img_1,...,beam_T,img_T,label_1,...,label_M,user_id,t".
// Image cells are file stems; features are loaded from feature_dir/<stem>.feat.
// Rows referencing a missing feature file are skipped with a warning; malformed
// rows (bad field count, non-integer numerics) raise DataError naming the line.
Dataset ingest_viwi_csv(const std::filesystem::path& csv_path,
                        const std::filesystem::path& feature_dir,
                        IngestStats* stats = nullptr);

void write_instances_csv(const Dataset& ds, const std::filesystem::path& csv_path);
void write_feature_store(const Dataset& ds, const std::filesystem::path& dir);

struct SplitResult {
  Dataset train;  // D_t
  Dataset v1;     // D_v1
  Dataset v2;     // D_v2
  json manifest;  // row-index provenance per output
};

// Rebuilds train/validation sets from two raw datasets by row position:
//   train = raw_train[a:b)  u  raw_val[c:d)
//   v1    = raw_train[0:a)  u  raw_val[0:c)
//   v2    = raw_train[b:)   u  raw_val[d:)
// Cut points out of range or unordered raise ConfigError. The three outputs
// must be pairwise image-disjoint; a violation raises DataError listing
// offending IDs.
SplitResult split_leakage_free(const Dataset& raw_train, const Dataset& raw_val,
                               std::pair<size_t, size_t> train_cuts,
                               std::pair<size_t, size_t> val_cuts);

// Population standard deviation of the tau observed beam indices.
Real beam_std(const InstanceRecord& rec);

struct ClusterConfig {
  Real t1 = 0.0;
  Real t2 = 2.0;

  void validate() const;
  json to_json() const;
  static ClusterConfig from_json(const json& j);
};

struct StdClusters {
  Dataset a;  // std <= t1
  Dataset b;  // t1 < std <= t2
  Dataset c;  // std > t2
};

StdClusters cluster_by_std(const Dataset& ds, const ClusterConfig& cfg);

// Merges datasets; shared image IDs must carry identical feature maps.
Dataset union_datasets(const std::vector<const Dataset*>& parts, const std::string& name);

}  // namespace beamtrack
