#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>

#include "beamtrack/baselines.hpp"
#include "beamtrack/manifest.hpp"
#include "beamtrack/pipeline.hpp"
#include "beamtrack/scene.hpp"

namespace fs = std::filesystem;
using namespace beamtrack;

namespace {

// Applies one dotted-path override, e.g. "train.seed=7". Values parse as JSON
// when possible and fall back to raw strings.
void apply_set(json& config, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects dotted.path=value, got '" + kv + "'");
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &config;
  size_t start = 0;
  for (;;) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty())
      throw ConfigError("--set path has an empty segment: '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null())
      throw ConfigError("--set path '" + path + "' crosses a non-object value");
    start = dot + 1;
  }
}

json load_config(const std::string& path, const std::vector<std::string>& sets) {
  json config = path.empty() ? json::object() : read_json_file(path);
  if (!config.is_object())
    throw ConfigError("config root must be a JSON object");
  for (const auto& kv : sets)
    apply_set(config, kv);
  return config;
}

fs::path resolve_out(const std::string& flag, const std::string& command) {
  if (!flag.empty())
    return flag;
  if (const char* env = std::getenv("BEAMTRACK_OUT_DIR"); env && *env)
    return fs::path(env) / command;
  return fs::path("out") / command;
}

int resolve_workers(int config_value) {
  if (const char* env = std::getenv("BEAMTRACK_WORKERS"); env && *env) {
    const int w = std::atoi(env);
    if (w >= 1)
      return w;
  }
  return std::max(1, config_value);
}

Dataset load_dataset(const std::string& csv, const std::string& features) {
  IngestStats stats;
  Dataset ds = ingest_viwi_csv(csv, features, &stats);
  for (const auto& w : stats.warnings)
    std::cerr << "warning: " << w << "\n";
  return ds;
}

void write_loss_log(const fs::path& path, const std::vector<Real>& losses) {
  std::ofstream out(path);
  out << "epoch,loss\n";
  out.precision(17);
  for (size_t i = 0; i < losses.size(); ++i)
    out << i << "," << losses[i] << "\n";
}

// Runs body inside a start/finalize manifest pair; errors finalize as such
// and propagate to the exit-code mapping in main.
void with_manifest(const std::string& command, const std::string& config_path,
                   const json& config, uint64_t seed, const fs::path& out,
                   const std::function<void()>& body) {
  fs::create_directories(out);
  RunManifest manifest = RunManifest::start(command, config_path, config, seed, out);
  try {
    body();
  } catch (const std::exception& e) {
    manifest.finalize("error", e.what());
    throw;
  }
  manifest.finalize("ok");
}

// Thrown by the training sink to honor --stop-after-epoch.
struct EarlyStop {};

struct FileSink : CheckpointSink {
  fs::path dir;
  int stop_after = 0;  // 0 = run to completion

  void on_epoch(const TrainedPredictor& model, const nn::Adam& adam, const Rng& data_rng,
                int next_epoch) override {
    save_checkpoint(dir / "checkpoint_latest.ckpt", model, adam, data_rng, next_epoch);
    if (stop_after > 0 && next_epoch >= stop_after)
      throw EarlyStop{};
  }
};

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_simulate(const json& config, const std::string& config_path, const fs::path& out) {
  SceneConfig scene = SceneConfig::from_json(config.value("scene", json::object()));
  // Labels come from argmax beam gain, so the labeling codebook defaults to
  // the angle-ordered steering kind; otherwise beam indices have no spatial
  // continuity and the emitted sequences are untrackable noise.
  json cb_json = config.value("codebook", json::object());
  if (!cb_json.contains("kind"))
    cb_json["kind"] = "steering";
  CodebookConfig cb_config = CodebookConfig::from_json(cb_json);
  const int tau = config.value("tau", 8);
  const int m = config.value("m", 5);

  with_manifest("simulate", config_path, config, scene.seed, out, [&] {
    Codebook cb = generate_codebook(cb_config);
    ScenarioTrace trace = simulate_scene(scene, cb);
    Dataset ds = generate_instances(trace, tau, m);

    save_codebook(cb, out / "codebook.json");
    save_trace_json(trace, out / "trace.json");
    write_instances_csv(ds, out / "instances.csv");
    write_feature_store(ds, out / "features");

    size_t los_steps = 0, steps = 0;
    for (const auto& row : trace.los) {
      for (uint8_t v : row)
        los_steps += v;
      steps += row.size();
    }
    write_json_file(out / "summary.json",
                    {{"records", ds.size()},
                     {"images", ds.feature_store.size()},
                     {"tau", tau},
                     {"m", m},
                     {"los_fraction", steps ? static_cast<double>(los_steps) / steps : 0.0}});
    std::cout << "simulated " << ds.size() << " records, " << ds.feature_store.size()
              << " images -> " << out.string() << "\n";
  });
}

void cmd_ingest(const json& config, const std::string& config_path, const fs::path& out,
                const std::string& csv, const std::string& features) {
  with_manifest("ingest", config_path, config, 0, out, [&] {
    IngestStats stats;
    Dataset ds = ingest_viwi_csv(csv, features, &stats);
    write_json_file(out / "summary.json", {{"rows", ds.size()},
                                           {"images", ds.feature_store.size()},
                                           {"tau", ds.tau()},
                                           {"m", ds.m()},
                                           {"rows_skipped", stats.rows_skipped},
                                           {"warnings", stats.warnings}});
    std::cout << "ingested " << ds.size() << " rows (" << stats.rows_skipped
              << " skipped), " << ds.feature_store.size() << " images\n";
  });
}

void cmd_split(const json& config, const std::string& config_path, const fs::path& out,
               const std::string& train_csv, const std::string& train_features,
               const std::string& val_csv, const std::string& val_features) {
  const auto cuts = config.value("cuts", json::object());
  const auto tcuts = cuts.value("train", json::array({70251, 210787}));
  const auto vcuts = cuts.value("val", json::array({30141, 90389}));
  if (tcuts.size() != 2 || vcuts.size() != 2)
    throw ConfigError("cuts.train and cuts.val must each be [begin, end]");

  with_manifest("split", config_path, config, 0, out, [&] {
    Dataset raw_train = load_dataset(train_csv, train_features);
    Dataset raw_val = load_dataset(val_csv, val_features);
    SplitResult split = split_leakage_free(
        raw_train, raw_val, {tcuts[0].get<size_t>(), tcuts[1].get<size_t>()},
        {vcuts[0].get<size_t>(), vcuts[1].get<size_t>()});

    for (const auto* part : {&split.train, &split.v1, &split.v2}) {
      const std::string stem = part->name == "D_t" ? "d_t" : part->name == "D_v1" ? "d_v1" : "d_v2";
      write_instances_csv(*part, out / (stem + ".csv"));
      write_feature_store(*part, out / ("features_" + stem));
    }
    write_json_file(out / "split_manifest.json", split.manifest);
    std::cout << "split sizes: train " << split.train.size() << ", v1 " << split.v1.size()
              << ", v2 " << split.v2.size() << "\n";
  });
}

void cmd_cluster(const json& config, const std::string& config_path, const fs::path& out,
                 const std::string& csv, const std::string& features) {
  ClusterConfig thresholds = ClusterConfig::from_json(config.value("thresholds", json::object()));
  with_manifest("cluster", config_path, config, 0, out, [&] {
    Dataset ds = load_dataset(csv, features);
    StdClusters clusters = cluster_by_std(ds, thresholds);
    json summary = {{"t1", thresholds.t1}, {"t2", thresholds.t2}};
    for (const auto& [tag, part] : {std::pair<const char*, const Dataset*>{"A", &clusters.a},
                                    {"B", &clusters.b},
                                    {"C", &clusters.c}}) {
      write_instances_csv(*part, out / (std::string(tag) + ".csv"));
      double lo = 0, hi = 0, sum = 0;
      for (size_t i = 0; i < part->records.size(); ++i) {
        const double s = beam_std(part->records[i]);
        lo = i == 0 ? s : std::min(lo, s);
        hi = std::max(hi, s);
        sum += s;
      }
      summary[tag] = {{"rows", part->size()},
                      {"std_min", lo},
                      {"std_max", hi},
                      {"std_mean", part->empty() ? 0.0 : sum / part->size()}};
    }
    write_json_file(out / "cluster_summary.json", summary);
    std::cout << "clusters: A " << clusters.a.size() << ", B " << clusters.b.size() << ", C "
              << clusters.c.size() << "\n";
  });
}

void cmd_baselines(const json& config, const std::string& config_path, const fs::path& out,
                   const std::string& train_csv, const std::string& train_features,
                   const std::string& val_csv, const std::string& val_features) {
  const int num_beams = config.value("num_beams", 128);
  const uint64_t seed = config.value("seed", uint64_t{1});
  ScoringConfig scoring = ScoringConfig::from_json(config.value("scoring", json::object()));

  with_manifest("baselines", config_path, config, seed, out, [&] {
    Dataset train = load_dataset(train_csv, train_features);
    Dataset val = load_dataset(val_csv, val_features);
    const int m = val.m();

    Predictions last = last_step_predict(val, m);
    Predictions lin = linreg_predict(val, m, num_beams);
    BeamDistribution dist = fit_beam_distribution(train, num_beams);
    Predictions stat = statistical_predict(dist, val, m, seed);

    write_predictions_csv(out / "last_step.csv", val, last);
    write_predictions_csv(out / "linreg.csv", val, lin);
    write_predictions_csv(out / "statistical.csv", val, stat);
    write_json_file(out / "beam_distribution.json", dist.to_json());

    std::vector<std::pair<std::string, ScoreReport>> rows = {
        {"last_step", score_predictions(last, val, scoring)},
        {"linreg", score_predictions(lin, val, scoring)},
        {"statistical", score_predictions(stat, val, scoring)}};
    json scores;
    for (const auto& [name, report] : rows)
      scores[name] = report.to_json();
    write_json_file(out / "scores.json", scores);
    write_text_file(out / "table.txt", render_score_table(rows));
    std::cout << render_score_table(rows);
  });
}

void cmd_train(const json& config, const std::string& config_path, const fs::path& out,
               const std::string& train_csv, const std::string& train_features,
               const std::string& codebook_path, const std::string& resume_path,
               int stop_after) {
  PipelineConfig cfg = PipelineConfig::from_json(config);
  with_manifest("train", config_path, config, cfg.train.seed, out, [&] {
    Dataset train = load_dataset(train_csv, train_features);

    FileSink sink;
    sink.dir = out;
    sink.stop_after = stop_after;

    TrainedPredictor model;
    bool stopped_early = false;
    try {
      if (!resume_path.empty()) {
        LoadedCheckpoint state = load_checkpoint(resume_path);
        if (!config_path.empty() &&
            config_hash(state.model.config.to_json()) != config_hash(cfg.to_json()))
          throw CheckpointError(
              "checkpoint config does not match --config; resume with the original config "
              "or drop --config");
        Codebook cb = codebook_path.empty()
                          ? generate_codebook(state.model.codebook_config)
                          : load_codebook(codebook_path);
        model = resume_training(std::move(state), train, cb, &sink);
      } else {
        Codebook cb = load_codebook(codebook_path);
        model = train_predictor(train, cb, cfg, &sink);
      }
    } catch (const EarlyStop&) {
      stopped_early = true;
    }

    if (stopped_early) {
      write_json_file(out / "train_summary.json",
                      {{"status", "paused"}, {"completed_epochs", stop_after}});
      std::cout << "paused after " << stop_after << " epochs; checkpoint_latest.ckpt written\n";
      return;
    }

    write_json_file(out / "config_snapshot.json", model.config.to_json());
    write_loss_log(out / "loss_log.csv", model.epoch_losses);
    Rng dummy(0);
    nn::Adam adam_unused{{model.config.train.learning_rate}};
    // The final checkpoint reuses the sink's last state for exact resumes.
    fs::path latest = out / "checkpoint_latest.ckpt";
    if (fs::exists(latest))
      fs::copy_file(latest, out / "model.ckpt", fs::copy_options::overwrite_existing);
    else
      save_checkpoint(out / "model.ckpt", model, adam_unused, dummy,
                      static_cast<int>(model.epoch_losses.size()));
    write_json_file(out / "train_summary.json",
                    {{"status", "ok"},
                     {"epochs", model.epoch_losses.size()},
                     {"final_loss",
                      model.epoch_losses.empty() ? 0.0 : model.epoch_losses.back()}});
    std::cout << "trained " << model.epoch_losses.size() << " epochs -> "
              << (out / "model.ckpt").string() << "\n";
  });
}

void cmd_eval(const json& config, const std::string& config_path, const fs::path& out,
              const std::string& model_path, const std::string& pred_csv,
              const std::string& val_csv, const std::string& val_features) {
  with_manifest("eval", config_path, config, 0, out, [&] {
    Dataset val = load_dataset(val_csv, val_features);
    ScoreReport report;
    std::string name;
    if (!model_path.empty()) {
      LoadedCheckpoint state = load_checkpoint(model_path);
      if (config.contains("scoring"))
        state.model.config.scoring = ScoringConfig::from_json(config.at("scoring"));
      report = evaluate(state.model, val);
      name = "model";
    } else {
      ScoringConfig scoring = ScoringConfig::from_json(config.value("scoring", json::object()));
      Predictions preds = read_predictions_csv(pred_csv, val.m());
      if (preds.size() != val.size())
        throw DataError("predictions CSV has " + std::to_string(preds.size()) +
                        " rows; validation set has " + std::to_string(val.size()));
      report = score_predictions(preds, val, scoring);
      name = fs::path(pred_csv).stem().string();
    }
    write_json_file(out / "report.json", report.to_json());
    write_text_file(out / "table.txt", render_score_table({{name, report}}));
    std::cout << render_score_table({{name, report}});
  });
}

void cmd_experiment(const json& config, const std::string& config_path, const fs::path& out,
                    const std::string& train_csv, const std::string& train_features,
                    const std::string& val_csv, const std::string& val_features,
                    const std::string& codebook_path) {
  const std::string kind = config.value("kind", "cluster");
  PipelineConfig base = PipelineConfig::from_json(config.value("pipeline", json::object()));

  with_manifest("experiment", config_path, config, base.train.seed, out, [&] {
    Dataset train = load_dataset(train_csv, train_features);
    Dataset val = load_dataset(val_csv, val_features);
    Codebook cb = load_codebook(codebook_path);

    if (kind == "cluster") {
      ClusterExperimentConfig exp;
      if (config.contains("plan"))
        exp.plan = ExperimentPlan::from_json(config.at("plan"));
      exp.thresholds = ClusterConfig::from_json(config.value("thresholds", json::object()));
      exp.base_seed = config.value("base_seed", uint64_t{1});
      exp.workers = resolve_workers(config.value("workers", 1));
      ClusterExperimentResult result = run_cluster_experiment(train, val, cb, base, exp);
      write_json_file(out / "result.json", result.to_json());
      write_text_file(out / "table.txt", result.render_table());
      std::cout << result.render_table();
    } else if (kind == "sweep") {
      std::vector<int> taus = config.value("taus", std::vector<int>{4, 6, 8});
      auto rows = run_memory_sweep(train, val, cb, base, taus);
      std::vector<std::pair<std::string, ScoreReport>> named;
      json result = json::array();
      for (const auto& row : rows) {
        named.push_back({"tau=" + std::to_string(row.tau), row.report});
        result.push_back({{"tau", row.tau}, {"report", row.report.to_json()}});
      }
      write_json_file(out / "result.json", result);
      write_text_file(out / "table.txt", render_score_table(named));
      std::cout << render_score_table(named);
    } else {
      throw ConfigError("unknown experiment kind '" + kind + "' (expected cluster or sweep)");
    }
  });
}

void cmd_report(const json& config, const std::string& config_path, const fs::path& out,
                const std::vector<std::string>& adds) {
  with_manifest("report", config_path, config, 0, out, [&] {
    std::vector<std::pair<std::string, ScoreReport>> rows;
    for (const auto& add : adds) {
      const auto eq = add.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--add expects name=path, got '" + add + "'");
      rows.emplace_back(add.substr(0, eq),
                        ScoreReport::from_json(read_json_file(add.substr(eq + 1))));
    }
    if (rows.empty())
      throw ConfigError("report needs at least one --add name=path");
    write_text_file(out / "table.txt", render_score_table(rows));
    write_text_file(out / "table.csv", render_score_csv(rows));
    std::cout << render_score_table(rows);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmWave beam tracking: simulation, prediction, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path, out_flag;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "JSON config file")->capture_default_str();
  app.add_option("--out", out_flag, "output directory (default: $BEAMTRACK_OUT_DIR/<cmd>)");
  app.add_option("--set", sets, "dotted-path config overrides, e.g. train.seed=7");

  std::string csv, features, train_csv, train_features, val_csv, val_features;
  std::string codebook_path, model_path, pred_csv, resume_path;
  std::vector<std::string> adds;
  int stop_after = 0;

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic scene dataset");
  auto* ingest = app.add_subcommand("ingest", "validate and summarize an instances CSV");
  ingest->add_option("--csv", csv, "instances CSV")->required();
  ingest->add_option("--features", features, "feature-map directory")->required();
  auto* split = app.add_subcommand("split", "leakage-free train/val1/val2 re-split");
  split->add_option("--train-csv", train_csv)->required();
  split->add_option("--train-features", train_features)->required();
  split->add_option("--val-csv", val_csv)->required();
  split->add_option("--val-features", val_features)->required();
  auto* cluster = app.add_subcommand("cluster", "partition by observed-beam std");
  cluster->add_option("--csv", csv, "instances CSV")->required();
  cluster->add_option("--features", features, "feature-map directory")->required();
  auto* baselines = app.add_subcommand("baselines", "last-step / linreg / statistical");
  baselines->add_option("--train-csv", train_csv)->required();
  baselines->add_option("--train-features", train_features)->required();
  baselines->add_option("--val-csv", val_csv)->required();
  baselines->add_option("--val-features", val_features)->required();
  auto* train = app.add_subcommand("train", "train a sequence predictor");
  train->add_option("--train-csv", train_csv)->required();
  train->add_option("--train-features", train_features)->required();
  train->add_option("--codebook", codebook_path, "codebook JSON (from simulate)");
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_option("--stop-after-epoch", stop_after, "pause after N epochs (testing aid)");
  auto* eval = app.add_subcommand("eval", "score a model or a predictions CSV");
  eval->add_option("--model", model_path, "model checkpoint");
  eval->add_option("--pred-csv", pred_csv, "predictions CSV (alternative to --model)");
  eval->add_option("--val-csv", val_csv)->required();
  eval->add_option("--val-features", val_features)->required();
  auto* experiment = app.add_subcommand("experiment", "cluster table or memory sweep");
  experiment->add_option("--train-csv", train_csv)->required();
  experiment->add_option("--train-features", train_features)->required();
  experiment->add_option("--val-csv", val_csv)->required();
  experiment->add_option("--val-features", val_features)->required();
  experiment->add_option("--codebook", codebook_path)->required();
  auto* report = app.add_subcommand("report", "merge score reports into one table");
  report->add_option("--add", adds, "name=path pairs of report JSON files");

  for (auto* sub : app.get_subcommands(nullptr))
    sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    const json config = load_config(config_path, sets);
    if (simulate->parsed()) {
      cmd_simulate(config, config_path, resolve_out(out_flag, "simulate"));
    } else if (ingest->parsed()) {
      cmd_ingest(config, config_path, resolve_out(out_flag, "ingest"), csv, features);
    } else if (split->parsed()) {
      cmd_split(config, config_path, resolve_out(out_flag, "split"), train_csv,
                train_features, val_csv, val_features);
    } else if (cluster->parsed()) {
      cmd_cluster(config, config_path, resolve_out(out_flag, "cluster"), csv, features);
    } else if (baselines->parsed()) {
      cmd_baselines(config, config_path, resolve_out(out_flag, "baselines"), train_csv,
                    train_features, val_csv, val_features);
    } else if (train->parsed()) {
      if (resume_path.empty() && codebook_path.empty())
        throw ConfigError("train needs --codebook (or --resume)");
      cmd_train(config, config_path, resolve_out(out_flag, "train"), train_csv,
                train_features, codebook_path, resume_path, stop_after);
    } else if (eval->parsed()) {
      if (model_path.empty() == pred_csv.empty())
        throw ConfigError("eval needs exactly one of --model or --pred-csv");
      cmd_eval(config, config_path, resolve_out(out_flag, "eval"), model_path, pred_csv,
               val_csv, val_features);
    } else if (experiment->parsed()) {
      cmd_experiment(config, config_path, resolve_out(out_flag, "experiment"), train_csv,
                     train_features, val_csv, val_features, codebook_path);
    } else if (report->parsed()) {
      cmd_report(config, config_path, resolve_out(out_flag, "report"), adds);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
