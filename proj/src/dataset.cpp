#include "beamtrack/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace beamtrack {

namespace fs = std::filesystem;

void save_feature_map(const FeatureMap& fm, const fs::path& path) {
  json meta = {{"kind", "feature_map"}, {"dims", {fm.h, fm.w, fm.c}}};
  std::vector<double> payload(fm.values.begin(), fm.values.end());
  write_blob(path, meta, payload);
}

FeatureMap load_feature_map(const fs::path& path) {
  BlobFile blob = read_blob(path);
  if (blob.meta.value("kind", "") != "feature_map" || !blob.meta.contains("dims"))
    throw DataError("not a feature map blob: " + path.string());
  auto dims = blob.meta["dims"];
  if (!dims.is_array() || dims.size() != 3)
    throw DataError("feature map dims malformed: " + path.string());
  FeatureMap fm(dims[0].get<int>(), dims[1].get<int>(), dims[2].get<int>());
  if (blob.payload.size() != fm.values.size())
    throw DataError("feature map payload size mismatch: " + path.string());
  for (size_t i = 0; i < fm.values.size(); ++i)
    fm.values[i] = static_cast<Real>(blob.payload[i]);
  return fm;
}

std::set<std::string> Dataset::image_ids() const {
  std::set<std::string> ids;
  for (const auto& rec : records)
    ids.insert(rec.features.begin(), rec.features.end());
  return ids;
}

void Dataset::validate() const {
  if (records.empty()) {
    if (!feature_store.empty())
      throw DataError("dataset '" + name + "': empty record list but non-empty feature store");
    return;
  }
  const size_t tau = records.front().beams.size();
  const size_t m = records.front().labels.size();
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.beams.size() != tau || r.features.size() != tau || r.labels.size() != m)
      throw DataError("dataset '" + name + "': record " + std::to_string(i) +
                      " has inconsistent shape");
  }
  auto ids = image_ids();
  for (const auto& id : ids)
    if (!feature_store.count(id))
      throw DataError("dataset '" + name + "': unresolved image ref '" + id + "'");
  if (ids.size() != feature_store.size())
    for (const auto& [key, _] : feature_store)
      if (!ids.count(key))
        throw DataError("dataset '" + name + "': orphan feature store entry '" + key + "'");
}

Dataset Dataset::subset(const std::vector<size_t>& indices, const std::string& new_name) const {
  Dataset out;
  out.name = new_name;
  out.records.reserve(indices.size());
  for (size_t idx : indices) {
    if (idx >= records.size())
      throw ContractError("subset index out of range");
    out.records.push_back(records[idx]);
  }
  for (const auto& rec : out.records)
    for (const auto& id : rec.features) {
      auto it = feature_store.find(id);
      if (it == feature_store.end())
        throw DataError("dataset '" + name + "': unresolved image ref '" + id + "'");
      out.feature_store.emplace(it->first, it->second);
    }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ','))
    out.push_back(cell);
  if (!line.empty() && line.back() == ',')
    out.emplace_back();
  return out;
}

long parse_long(const std::string& s, const std::string& where) {
  try {
    size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size())
      throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError("malformed integer '" + s + "' at " + where);
  }
}

// Header must look like beam_1,img_1,...,beam_T,img_T,label_1,...,label_M,user_id,t.
// Returns (tau, m).
std::pair<int, int> parse_header(const std::vector<std::string>& cols, const std::string& path) {
  int tau = 0;
  size_t i = 0;
  while (i + 1 < cols.size() && cols[i] == "beam_" + std::to_string(tau + 1) &&
         cols[i + 1] == "img_" + std::to_string(tau + 1)) {
    ++tau;
    i += 2;
  }
  int m = 0;
  while (i < cols.size() && cols[i] == "label_" + std::to_string(m + 1)) {
    ++m;
    ++i;
  }
  bool tail_ok = (i + 2 == cols.size()) && cols[i] == "user_id" && cols[i + 1] == "t";
  if (tau < 1 || m < 1 || !tail_ok)
    throw DataError("unrecognized CSV header in " + path);
  return {tau, m};
}

}  // namespace

Dataset ingest_viwi_csv(const fs::path& csv_path, const fs::path& feature_dir,
                        IngestStats* stats) {
  std::ifstream in(csv_path);
  if (!in)
    throw DataError("cannot open CSV: " + csv_path.string());

  std::string line;
  if (!std::getline(in, line))
    throw DataError("empty CSV: " + csv_path.string());
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  auto [tau, m] = parse_header(split_csv_line(line), csv_path.string());
  const size_t expected = 2 * static_cast<size_t>(tau) + m + 2;

  Dataset ds;
  ds.name = csv_path.stem().string();
  IngestStats local;
  IngestStats& st = stats ? *stats : local;

  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    auto cells = split_csv_line(line);
    const std::string where = csv_path.filename().string() + ":" + std::to_string(line_no);
    if (cells.size() != expected)
      throw DataError("expected " + std::to_string(expected) + " fields, got " +
                      std::to_string(cells.size()) + " at " + where);

    InstanceRecord rec;
    rec.beams.resize(tau);
    rec.features.resize(tau);
    rec.labels.resize(m);
    for (int k = 0; k < tau; ++k) {
      rec.beams[k] = static_cast<int>(parse_long(cells[2 * k], where));
      rec.features[k] = cells[2 * k + 1];
    }
    for (int k = 0; k < m; ++k)
      rec.labels[k] = static_cast<int>(parse_long(cells[2 * tau + k], where));
    rec.user_id = static_cast<int>(parse_long(cells[expected - 2], where));
    rec.t = parse_long(cells[expected - 1], where);

    bool resolved = true;
    for (const auto& id : rec.features) {
      if (ds.feature_store.count(id))
        continue;
      fs::path fp = feature_dir / (id + ".feat");
      if (!fs::exists(fp)) {
        st.warnings.push_back("skipping " + where + ": missing feature file " + fp.string());
        ++st.rows_skipped;
        resolved = false;
        break;
      }
      ds.feature_store.emplace(id, std::make_shared<FeatureMap>(load_feature_map(fp)));
    }
    if (!resolved)
      continue;
    ds.records.push_back(std::move(rec));
    ++st.rows_parsed;
  }

  // Drop store entries that belonged only to skipped rows.
  auto ids = ds.image_ids();
  for (auto it = ds.feature_store.begin(); it != ds.feature_store.end();)
    it = ids.count(it->first) ? std::next(it) : ds.feature_store.erase(it);

  ds.validate();
  return ds;
}

void write_instances_csv(const Dataset& ds, const fs::path& csv_path) {
  ds.validate();
  std::ofstream out(csv_path);
  if (!out)
    throw DataError("cannot write CSV: " + csv_path.string());
  const int tau = ds.tau();
  const int m = ds.m();
  for (int k = 1; k <= tau; ++k)
    out << "beam_" << k << ",img_" << k << ",";
  for (int k = 1; k <= m; ++k)
    out << "label_" << k << ",";
  out << "user_id,t\n";
  for (const auto& rec : ds.records) {
    for (int k = 0; k < tau; ++k)
      out << rec.beams[k] << "," << rec.features[k] << ",";
    for (int k = 0; k < m; ++k)
      out << rec.labels[k] << ",";
    out << rec.user_id << "," << rec.t << "\n";
  }
  if (!out)
    throw DataError("write failed: " + csv_path.string());
}

void write_feature_store(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [id, fm] : ds.feature_store)
    save_feature_map(*fm, dir / (id + ".feat"));
}

namespace {

void check_cuts(std::pair<size_t, size_t> cuts, size_t n, const std::string& which) {
  auto [a, b] = cuts;
  if (a > b || b > n)
    throw ConfigError("invalid " + which + " cut points (" + std::to_string(a) + ", " +
                      std::to_string(b) + ") for dataset of size " + std::to_string(n));
}

std::vector<size_t> iota_range(size_t lo, size_t hi) {
  std::vector<size_t> v(hi - lo);
  for (size_t i = lo; i < hi; ++i)
    v[i - lo] = i;
  return v;
}

void check_disjoint(const Dataset& x, const Dataset& y) {
  auto ix = x.image_ids();
  auto iy = y.image_ids();
  std::vector<std::string> shared;
  std::set_intersection(ix.begin(), ix.end(), iy.begin(), iy.end(), std::back_inserter(shared));
  if (shared.empty())
    return;
  std::string msg = "image leakage between '" + x.name + "' and '" + y.name + "': ";
  const size_t show = std::min<size_t>(shared.size(), 10);
  for (size_t i = 0; i < show; ++i)
    msg += (i ? ", " : "") + shared[i];
  if (shared.size() > show)
    msg += ", ... (" + std::to_string(shared.size()) + " total)";
  throw DataError(msg);
}

}  // namespace

SplitResult split_leakage_free(const Dataset& raw_train, const Dataset& raw_val,
                               std::pair<size_t, size_t> train_cuts,
                               std::pair<size_t, size_t> val_cuts) {
  check_cuts(train_cuts, raw_train.size(), "train");
  check_cuts(val_cuts, raw_val.size(), "val");
  auto [a, b] = train_cuts;
  auto [c, d] = val_cuts;

  auto mid_t = raw_train.subset(iota_range(a, b), "mid_t");
  auto mid_v = raw_val.subset(iota_range(c, d), "mid_v");
  auto head_t = raw_train.subset(iota_range(0, a), "head_t");
  auto head_v = raw_val.subset(iota_range(0, c), "head_v");
  auto tail_t = raw_train.subset(iota_range(b, raw_train.size()), "tail_t");
  auto tail_v = raw_val.subset(iota_range(d, raw_val.size()), "tail_v");

  SplitResult res;
  res.train = union_datasets({&mid_t, &mid_v}, "D_t");
  res.v1 = union_datasets({&head_t, &head_v}, "D_v1");
  res.v2 = union_datasets({&tail_t, &tail_v}, "D_v2");

  check_disjoint(res.train, res.v1);
  check_disjoint(res.train, res.v2);
  check_disjoint(res.v1, res.v2);

  auto ranges = [](size_t lo, size_t hi) { return json::array({lo, hi}); };
  res.manifest = {
      {"train", {{"from_raw_train", ranges(a, b)}, {"from_raw_val", ranges(c, d)},
                 {"rows", res.train.size()}, {"images", res.train.feature_store.size()}}},
      {"v1", {{"from_raw_train", ranges(0, a)}, {"from_raw_val", ranges(0, c)},
              {"rows", res.v1.size()}, {"images", res.v1.feature_store.size()}}},
      {"v2", {{"from_raw_train", ranges(b, raw_train.size())},
              {"from_raw_val", ranges(d, raw_val.size())},
              {"rows", res.v2.size()}, {"images", res.v2.feature_store.size()}}},
  };
  return res;
}

Real beam_std(const InstanceRecord& rec) {
  if (rec.beams.empty())
    throw ContractError("beam_std on empty observation");
  double mean = 0.0;
  for (int b : rec.beams)
    mean += b;
  mean /= static_cast<double>(rec.beams.size());
  double ss = 0.0;
  for (int b : rec.beams)
    ss += (b - mean) * (b - mean);
  return static_cast<Real>(std::sqrt(ss / static_cast<double>(rec.beams.size())));
}

void ClusterConfig::validate() const {
  if (!(t1 < t2))
    throw ConfigError("cluster thresholds must satisfy t1 < t2");
}

json ClusterConfig::to_json() const { return {{"t1", t1}, {"t2", t2}}; }

ClusterConfig ClusterConfig::from_json(const json& j) {
  ClusterConfig cfg;
  cfg.t1 = j.value("t1", cfg.t1);
  cfg.t2 = j.value("t2", cfg.t2);
  cfg.validate();
  return cfg;
}

StdClusters cluster_by_std(const Dataset& ds, const ClusterConfig& cfg) {
  cfg.validate();
  std::vector<size_t> ia, ib, ic;
  for (size_t i = 0; i < ds.records.size(); ++i) {
    Real s = beam_std(ds.records[i]);
    if (s <= cfg.t1)
      ia.push_back(i);
    else if (s <= cfg.t2)
      ib.push_back(i);
    else
      ic.push_back(i);
  }
  StdClusters out;
  out.a = ds.subset(ia, ds.name + "/A");
  out.b = ds.subset(ib, ds.name + "/B");
  out.c = ds.subset(ic, ds.name + "/C");
  return out;
}

Dataset union_datasets(const std::vector<const Dataset*>& parts, const std::string& name) {
  Dataset out;
  out.name = name;
  int tau = 0, m = 0;
  for (const Dataset* p : parts) {
    if (p->empty())
      continue;
    if (tau == 0) {
      tau = p->tau();
      m = p->m();
    } else if (p->tau() != tau || p->m() != m) {
      throw DataError("union of datasets with mismatched shapes: '" + p->name + "'");
    }
    out.records.insert(out.records.end(), p->records.begin(), p->records.end());
    for (const auto& [id, fm] : p->feature_store) {
      auto [it, inserted] = out.feature_store.emplace(id, fm);
      if (!inserted && it->second != fm && !it->second->same_as(*fm))
        throw DataError("conflicting feature maps for image ID '" + id + "'");
    }
  }
  // Restrict the store to referenced IDs (inputs may carry extras after merge).
  auto ids = out.image_ids();
  for (auto it = out.feature_store.begin(); it != out.feature_store.end();)
    it = ids.count(it->first) ? std::next(it) : out.feature_store.erase(it);
  return out;
}

}  // namespace beamtrack
