#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "beamtrack/dataset.hpp"
#include "beamtrack/rng.hpp"
#include "beamtrack/scene.hpp"

using namespace beamtrack;
namespace fs = std::filesystem;

namespace {

fs::path cli_root() {
  fs::path dir = fs::temp_directory_path() / "beamtrack_cli_tests";
  fs::create_directories(dir);
  return dir;
}

// Exit code of one CLI invocation; stdout/stderr land in <log>.txt files.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(BEAMTRACK_CLI_PATH) + " " + args + " > " +
                          log.string() + ".out.txt 2> " + log.string() + ".err.txt";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(2) << "\n";
}

json tiny_scene_config(uint64_t seed = 3, int duration = 18) {
  return {{"scene",
           {{"duration", duration},
            {"num_users", 2},
            {"num_blockers", 2},
            {"seed", seed},
            {"feature_map_dims", {4, 4, 2}}}},
          {"codebook", {{"num_beams", 8}, {"num_antennas", 8}}},
          {"tau", 8},
          {"m", 5}};
}

json tiny_train_config() {
  return {{"input_mode", "beam_only"},
          {"sequence_model", "uni_gru"},
          {"embedder", "none"},
          {"tau", 4},
          {"m", 5},
          {"train",
           {{"hidden_dim", 4},
            {"num_layers", 1},
            {"epochs_uni", 2},
            {"batch_size", 8},
            {"dropout", 0.0},
            {"learning_rate", 0.001},
            {"seed", 11}}}};
}

// Simulated dataset fixture shared by the cases in this file; generated once.
fs::path fixture_sim(uint64_t seed) {
  fs::path dir = cli_root() / ("sim" + std::to_string(seed));
  if (fs::exists(dir / "summary.json"))
    return dir;
  fs::path cfg = cli_root() / ("sim" + std::to_string(seed) + ".json");
  write_json(cfg, tiny_scene_config(seed));
  REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " + dir.string(),
                  cli_root() / ("sim" + std::to_string(seed) + "_log")) == 0);
  return dir;
}

// Hand-built dataset with one unique image per record (row splits stay
// image-disjoint). Returns the directory holding instances.csv + features/.
fs::path fixture_rows(const std::string& tag, int n, uint64_t seed) {
  fs::path dir = cli_root() / ("rows_" + tag);
  if (fs::exists(dir / "instances.csv"))
    return dir;
  fs::create_directories(dir);
  Dataset ds;
  ds.name = tag;
  Rng rng(seed);
  for (int r = 0; r < n; ++r) {
    InstanceRecord rec;
    rec.user_id = 0;
    rec.t = r;
    const std::string id = tag + "_img" + std::to_string(r);
    for (int i = 0; i < 4; ++i) {
      rec.beams.push_back(static_cast<int>(rng.uniform() * 8));
      rec.features.push_back(id);
    }
    for (int k = 0; k < 5; ++k)
      rec.labels.push_back(static_cast<int>(rng.uniform() * 8));
    auto fm = std::make_shared<FeatureMap>(2, 2, 2);
    for (auto& v : fm->values)
      v = static_cast<Real>(rng.uniform());
    ds.feature_store[id] = fm;
    ds.records.push_back(std::move(rec));
  }
  ds.validate();
  write_instances_csv(ds, dir / "instances.csv");
  write_feature_store(ds, dir / "features");
  return dir;
}

// Relative-path -> bytes map of a directory tree, minus the run manifest
// (the only file carrying timings).
std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json")
      continue;
    out[fs::relative(entry.path(), root).string()] = slurp(entry.path());
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("simulate writes a complete dataset directory") {
    const fs::path dir = fixture_sim(3);
    for (const char* f :
         {"codebook.json", "trace.json", "instances.csv", "summary.json", "manifest.json"})
      CHECK(fs::exists(dir / f));
    CHECK(fs::is_directory(dir / "features"));

    const json summary = json::parse(slurp(dir / "summary.json"));
    CHECK(summary.at("records") == 12);  // 2 users x (18 - 13 + 1) windows
    CHECK(summary.at("tau") == 8);
    CHECK(summary.at("m") == 5);

    const json manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest.at("command") == "simulate");
    CHECK(manifest.at("status") == "ok");
    CHECK(manifest.at("seed") == 3);
    CHECK(manifest.at("config_hash").get<std::string>().size() == 16);
    CHECK(manifest.at("wall_seconds").get<double>() >= 0.0);
  }

  TEST_CASE("ingest round-trips simulated output") {
    const fs::path dir = fixture_sim(3);
    const fs::path out = cli_root() / "ingest";
    CHECK(run_cli("ingest --csv " + (dir / "instances.csv").string() + " --features " +
                      (dir / "features").string() + " --out " + out.string(),
                  out) == 0);
    const json summary = json::parse(slurp(out / "summary.json"));
    CHECK(summary.at("rows") == 12);
    CHECK(summary.at("rows_skipped") == 0);
    CHECK(summary.at("tau") == 8);
  }

  TEST_CASE("error classes map to distinct exit codes") {
    const fs::path dir = fixture_sim(3);
    const fs::path log = cli_root() / "codes";
    fs::path cfg = cli_root() / "codes_scene.json";
    write_json(cfg, tiny_scene_config());

    // Config rejection.
    CHECK(run_cli("simulate --config " + cfg.string() + " --set scene.duration=5 --out " +
                      (cli_root() / "codes_sim").string(),
                  log) == 2);
    CHECK(run_cli("eval --val-csv x.csv --val-features y --out " +
                      (cli_root() / "codes_eval").string(),
                  log) == 2);  // neither --model nor --pred-csv
    CHECK(run_cli("train --train-csv x.csv --train-features y --out " +
                      (cli_root() / "codes_train").string(),
                  log) == 2);  // no codebook and no resume
    CHECK(run_cli("report --out " + (cli_root() / "codes_report").string(), log) == 2);
    CHECK(run_cli("simulate --set scene=duration --set scene.duration=18 --out " +
                      (cli_root() / "codes_sim2").string(),
                  log) == 2);  // --set path crosses a scalar

    // Malformed data.
    const fs::path bad = cli_root() / "bad.csv";
    std::ofstream(bad) << "beam_1,img_1\n1\n";
    CHECK(run_cli("ingest --csv " + bad.string() + " --features " +
                      (dir / "features").string() + " --out " +
                      (cli_root() / "codes_ing").string(),
                  log) == 3);

    // Unusable checkpoint.
    CHECK(run_cli("eval --model nope.ckpt --val-csv " + (dir / "instances.csv").string() +
                      " --val-features " + (dir / "features").string() + " --out " +
                      (cli_root() / "codes_ck").string(),
                  log) == 4);

    // CLI parse failures are nonzero without claiming a specific class.
    CHECK(run_cli("frobnicate", log) != 0);
    CHECK(run_cli("", log) != 0);
  }

  TEST_CASE("set overrides reach the config and the manifest records the seed") {
    fs::path cfg = cli_root() / "ovr.json";
    write_json(cfg, tiny_scene_config(3));
    const fs::path out = cli_root() / "ovr_sim";
    CHECK(run_cli("simulate --config " + cfg.string() +
                      " --set scene.seed=9 --set scene.duration=20 --out " + out.string(),
                  out) == 0);
    CHECK(json::parse(slurp(out / "summary.json")).at("records") == 16);
    CHECK(json::parse(slurp(out / "manifest.json")).at("seed") == 9);
  }

  TEST_CASE("train then eval round-trips a model") {
    const fs::path sim = fixture_sim(3);
    const fs::path sim2 = fixture_sim(4);
    fs::path cfg = cli_root() / "train.json";
    write_json(cfg, tiny_train_config());

    const fs::path tdir = cli_root() / "t_main";
    CHECK(run_cli("train --train-csv " + (sim / "instances.csv").string() +
                      " --train-features " + (sim / "features").string() + " --codebook " +
                      (sim / "codebook.json").string() + " --config " + cfg.string() +
                      " --out " + tdir.string(),
                  tdir) == 0);
    for (const char* f : {"model.ckpt", "checkpoint_latest.ckpt", "loss_log.csv",
                          "config_snapshot.json", "train_summary.json"})
      CHECK(fs::exists(tdir / f));
    const json tsum = json::parse(slurp(tdir / "train_summary.json"));
    CHECK(tsum.at("status") == "ok");
    CHECK(tsum.at("epochs") == 2);

    const fs::path edir = cli_root() / "e_main";
    CHECK(run_cli("eval --model " + (tdir / "model.ckpt").string() + " --val-csv " +
                      (sim2 / "instances.csv").string() + " --val-features " +
                      (sim2 / "features").string() + " --out " + edir.string(),
                  edir) == 0);
    const json report = json::parse(slurp(edir / "report.json"));
    CHECK(report.at("total").get<double>() >= 0.0);
    CHECK(report.at("total").get<double>() <= 1.0);
    CHECK(report.at("n_instances") == 12);
    CHECK(slurp(edir / "table.txt").find("model") != std::string::npos);
  }

  TEST_CASE("eval scores a predictions csv identically to the baselines run") {
    const fs::path sim = fixture_sim(3);
    const fs::path sim2 = fixture_sim(4);
    const fs::path bdir = cli_root() / "bl";
    CHECK(run_cli("baselines --train-csv " + (sim / "instances.csv").string() +
                      " --train-features " + (sim / "features").string() + " --val-csv " +
                      (sim2 / "instances.csv").string() + " --val-features " +
                      (sim2 / "features").string() + " --set num_beams=8 --out " +
                      bdir.string(),
                  bdir) == 0);
    for (const char* f : {"last_step.csv", "linreg.csv", "statistical.csv", "scores.json",
                          "table.txt", "beam_distribution.json"})
      CHECK(fs::exists(bdir / f));

    const fs::path edir = cli_root() / "e_pred";
    CHECK(run_cli("eval --pred-csv " + (bdir / "last_step.csv").string() + " --val-csv " +
                      (sim2 / "instances.csv").string() + " --val-features " +
                      (sim2 / "features").string() + " --out " + edir.string(),
                  edir) == 0);
    const json from_eval = json::parse(slurp(edir / "report.json"));
    const json from_baselines = json::parse(slurp(bdir / "scores.json")).at("last_step");
    CHECK(from_eval == from_baselines);
    CHECK(slurp(edir / "table.txt").find("last_step") != std::string::npos);
  }

  TEST_CASE("failures inside a run finalize the manifest as an error") {
    const fs::path sim = fixture_sim(3);
    fs::path cfg = cli_root() / "mf.json";
    write_json(cfg, tiny_train_config());
    const fs::path tdir = cli_root() / "t_fail";
    CHECK(run_cli("train --train-csv " + (sim / "instances.csv").string() +
                      " --train-features " + (sim / "features").string() +
                      " --codebook missing_codebook.json --config " + cfg.string() +
                      " --out " + tdir.string(),
                  tdir) == 3);
    const json manifest = json::parse(slurp(tdir / "manifest.json"));
    CHECK(manifest.at("status") == "error");
    CHECK(!manifest.at("message").get<std::string>().empty());
  }

  TEST_CASE("repeated runs are byte-identical outside the manifest") {
    fs::path cfg = cli_root() / "det.json";
    write_json(cfg, tiny_scene_config(5));
    const fs::path s1 = cli_root() / "det_sim1";
    const fs::path s2 = cli_root() / "det_sim2";
    CHECK(run_cli("simulate --config " + cfg.string() + " --out " + s1.string(), s1) == 0);
    CHECK(run_cli("simulate --config " + cfg.string() + " --out " + s2.string(), s2) == 0);
    CHECK(tree_bytes(s1) == tree_bytes(s2));

    fs::path tcfg = cli_root() / "det_train.json";
    write_json(tcfg, tiny_train_config());
    const fs::path t1 = cli_root() / "det_t1";
    const fs::path t2 = cli_root() / "det_t2";
    const std::string train_args = "train --train-csv " + (s1 / "instances.csv").string() +
                                   " --train-features " + (s1 / "features").string() +
                                   " --codebook " + (s1 / "codebook.json").string() +
                                   " --config " + tcfg.string();
    CHECK(run_cli(train_args + " --out " + t1.string(), t1) == 0);
    CHECK(run_cli(train_args + " --out " + t2.string(), t2) == 0);
    CHECK(tree_bytes(t1) == tree_bytes(t2));

    const fs::path e1 = cli_root() / "det_e1";
    const fs::path e2 = cli_root() / "det_e2";
    const std::string eval_args = "eval --model " + (t1 / "model.ckpt").string() +
                                  " --val-csv " + (s1 / "instances.csv").string() +
                                  " --val-features " + (s1 / "features").string();
    CHECK(run_cli(eval_args + " --out " + e1.string(), e1) == 0);
    CHECK(run_cli(eval_args + " --out " + e2.string(), e2) == 0);
    CHECK(tree_bytes(e1) == tree_bytes(e2));
  }

  TEST_CASE("interrupting and resuming training matches the straight run") {
    const fs::path sim = fixture_sim(3);
    fs::path cfg = cli_root() / "resume.json";
    json tc = tiny_train_config();
    tc["train"]["epochs_uni"] = 4;
    write_json(cfg, tc);
    const std::string data_args = " --train-csv " + (sim / "instances.csv").string() +
                                  " --train-features " + (sim / "features").string();

    const fs::path full = cli_root() / "res_full";
    CHECK(run_cli("train" + data_args + " --codebook " + (sim / "codebook.json").string() +
                      " --config " + cfg.string() + " --out " + full.string(),
                  full) == 0);

    const fs::path paused = cli_root() / "res_paused";
    CHECK(run_cli("train" + data_args + " --codebook " + (sim / "codebook.json").string() +
                      " --config " + cfg.string() + " --stop-after-epoch 2 --out " +
                      paused.string(),
                  paused) == 0);
    CHECK(json::parse(slurp(paused / "train_summary.json")).at("status") == "paused");
    CHECK(!fs::exists(paused / "model.ckpt"));

    const fs::path resumed = cli_root() / "res_resumed";
    CHECK(run_cli("train" + data_args + " --resume " +
                      (paused / "checkpoint_latest.ckpt").string() + " --out " +
                      resumed.string(),
                  resumed) == 0);
    CHECK(slurp(resumed / "model.ckpt") == slurp(full / "model.ckpt"));

    // Resuming under a contradicting config is refused.
    json other = tc;
    other["train"]["seed"] = 99;
    fs::path ocfg = cli_root() / "resume_other.json";
    write_json(ocfg, other);
    CHECK(run_cli("train" + data_args + " --resume " +
                      (paused / "checkpoint_latest.ckpt").string() + " --config " +
                      ocfg.string() + " --out " + (cli_root() / "res_bad").string(),
                  cli_root() / "res_bad_log") == 4);
  }

  TEST_CASE("split produces disjoint row ranges and rejects image overlap") {
    const fs::path tr = fixture_rows("tr", 12, 31);
    const fs::path va = fixture_rows("va", 12, 32);
    fs::path cfg = cli_root() / "split.json";
    write_json(cfg, {{"cuts", {{"train", {2, 8}}, {"val", {3, 9}}}}});

    const fs::path out = cli_root() / "split_out";
    CHECK(run_cli("split --train-csv " + (tr / "instances.csv").string() +
                      " --train-features " + (tr / "features").string() + " --val-csv " +
                      (va / "instances.csv").string() + " --val-features " +
                      (va / "features").string() + " --config " + cfg.string() + " --out " +
                      out.string(),
                  out) == 0);
    CHECK(fs::exists(out / "split_manifest.json"));
    auto rows_in = [&](const char* stem) {
      std::istringstream lines(slurp(out / (std::string(stem) + ".csv")));
      size_t n = 0;
      std::string line;
      while (std::getline(lines, line))
        if (!line.empty())
          ++n;
      return n - 1;  // header
    };
    CHECK(rows_in("d_t") == 12);
    CHECK(rows_in("d_v1") == 5);
    CHECK(rows_in("d_v2") == 7);

    // Windowed scene data shares images across adjacent rows, so any row cut
    // leaks; the command must refuse instead of emitting a tainted split.
    const fs::path sim = fixture_sim(3);
    CHECK(run_cli("split --train-csv " + (sim / "instances.csv").string() +
                      " --train-features " + (sim / "features").string() + " --val-csv " +
                      (va / "instances.csv").string() + " --val-features " +
                      (va / "features").string() + " --config " + cfg.string() + " --out " +
                      (cli_root() / "split_bad").string(),
                  cli_root() / "split_bad_log") == 3);
  }

  TEST_CASE("cluster partitions by observed-beam spread") {
    const fs::path sim = fixture_sim(3);
    const fs::path out = cli_root() / "cluster_out";
    CHECK(run_cli("cluster --csv " + (sim / "instances.csv").string() + " --features " +
                      (sim / "features").string() + " --out " + out.string(),
                  out) == 0);
    const json summary = json::parse(slurp(out / "cluster_summary.json"));
    CHECK(summary.at("t1") == 0.0);
    CHECK(summary.at("t2") == 2.0);
    const size_t total = summary.at("A").at("rows").get<size_t>() +
                         summary.at("B").at("rows").get<size_t>() +
                         summary.at("C").at("rows").get<size_t>();
    CHECK(total == 12);
    for (const char* tag : {"A", "B", "C"})
      CHECK(fs::exists(out / (std::string(tag) + ".csv")));
  }

  TEST_CASE("experiment runs a memory sweep end to end") {
    const fs::path sim = fixture_sim(3);
    const fs::path sim2 = fixture_sim(4);
    fs::path cfg = cli_root() / "sweep.json";
    json sweep = {{"kind", "sweep"}, {"taus", {2, 3}}, {"pipeline", tiny_train_config()}};
    sweep["pipeline"]["train"]["epochs_uni"] = 1;
    write_json(cfg, sweep);

    const fs::path out = cli_root() / "sweep_out";
    CHECK(run_cli("experiment --train-csv " + (sim / "instances.csv").string() +
                      " --train-features " + (sim / "features").string() + " --val-csv " +
                      (sim2 / "instances.csv").string() + " --val-features " +
                      (sim2 / "features").string() + " --codebook " +
                      (sim / "codebook.json").string() + " --config " + cfg.string() +
                      " --out " + out.string(),
                  out) == 0);
    const json result = json::parse(slurp(out / "result.json"));
    REQUIRE(result.size() == 2);
    CHECK(result[0].at("tau") == 2);
    CHECK(result[1].at("tau") == 3);
    CHECK(slurp(out / "table.txt").find("tau=2") != std::string::npos);
  }

  TEST_CASE("report merges score files and BEAMTRACK_OUT_DIR supplies defaults") {
    const fs::path sim = fixture_sim(3);
    const fs::path edir = cli_root() / "e_main";
    if (!fs::exists(edir / "report.json")) {
      // train/eval case may not have run in a filtered invocation; skip then.
      return;
    }
    const fs::path out = cli_root() / "report_out";
    CHECK(run_cli("report --add model=" + (edir / "report.json").string() + " --add again=" +
                      (edir / "report.json").string() + " --out " + out.string(),
                  out) == 0);
    CHECK(slurp(out / "table.txt").find("again") != std::string::npos);
    CHECK(fs::exists(out / "table.csv"));
    CHECK(run_cli("report --add malformed --out " + (cli_root() / "report_bad").string(),
                  cli_root() / "report_bad_log") == 2);

    const fs::path envroot = cli_root() / "envout";
    fs::create_directories(envroot);
    const std::string cmd = "BEAMTRACK_OUT_DIR=" + envroot.string() + " " +
                            std::string(BEAMTRACK_CLI_PATH) + " report --add model=" +
                            (edir / "report.json").string() + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(fs::exists(envroot / "report" / "table.txt"));
  }
}
