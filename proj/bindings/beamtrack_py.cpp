#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "beamtrack/baselines.hpp"
#include "beamtrack/manifest.hpp"
#include "beamtrack/pipeline.hpp"
#include "beamtrack/scene.hpp"

namespace py = pybind11;
using namespace beamtrack;

namespace {

json parse_config(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
}

}  // namespace

PYBIND11_MODULE(_beamtrack, mod) {
  mod.doc() = "mmWave beam tracking: simulation, sequence prediction, evaluation";
  mod.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(mod, "DataError", PyExc_ValueError);
  py::register_exception<CheckpointError>(mod, "CheckpointError", PyExc_ValueError);
  py::register_exception<ContractError>(mod, "ContractError", PyExc_RuntimeError);
  py::register_exception<TrainingError>(mod, "TrainingError", PyExc_RuntimeError);

  // --- codebook ------------------------------------------------------------
  py::class_<CodebookConfig>(mod, "CodebookConfig")
      .def(py::init<>())
      .def_readwrite("num_beams", &CodebookConfig::num_beams)
      .def_readwrite("num_antennas", &CodebookConfig::num_antennas)
      .def_readwrite("seed", &CodebookConfig::seed)
      .def_property(
          "kind", [](const CodebookConfig& c) { return to_string(c.kind); },
          [](CodebookConfig& c, const std::string& s) { c.kind = codebook_kind_from_string(s); })
      .def("to_json", [](const CodebookConfig& c) { return c.to_json().dump(); })
      .def_static("from_json",
                  [](const std::string& s) { return CodebookConfig::from_json(parse_config(s)); });

  py::class_<Codebook>(mod, "Codebook")
      .def_readonly("config", &Codebook::config)
      .def_readonly("vectors", &Codebook::vectors)
      .def("__len__", [](const Codebook& cb) { return cb.vectors.rows(); });

  mod.def("generate_codebook", &generate_codebook);
  mod.def("embed_beam", &embed_beam, py::arg("codebook"), py::arg("beam"));
  mod.def("save_codebook", &save_codebook, py::arg("codebook"), py::arg("path"));
  mod.def("load_codebook", &load_codebook, py::arg("path"));

  // --- scene ---------------------------------------------------------------
  py::class_<Vec2>(mod, "Vec2")
      .def(py::init<>())
      .def(py::init([](Real x, Real y) { return Vec2{x, y}; }))
      .def_readwrite("x", &Vec2::x)
      .def_readwrite("y", &Vec2::y);

  py::class_<SceneConfig>(mod, "SceneConfig")
      .def(py::init<>())
      .def_readwrite("street_length", &SceneConfig::street_length)
      .def_readwrite("street_width", &SceneConfig::street_width)
      .def_readwrite("num_users", &SceneConfig::num_users)
      .def_readwrite("num_blockers", &SceneConfig::num_blockers)
      .def_readwrite("user_speed_range", &SceneConfig::user_speed_range)
      .def_readwrite("blocker_speed_range", &SceneConfig::blocker_speed_range)
      .def_readwrite("blocker_radius", &SceneConfig::blocker_radius)
      .def_readwrite("bs_position", &SceneConfig::bs_position)
      .def_readwrite("num_cameras", &SceneConfig::num_cameras)
      .def_readwrite("timestep", &SceneConfig::timestep)
      .def_readwrite("duration", &SceneConfig::duration)
      .def_readwrite("seed", &SceneConfig::seed)
      .def_readwrite("feature_map_dims", &SceneConfig::feature_map_dims)
      .def_readwrite("beta_blockage", &SceneConfig::beta_blockage)
      .def_readwrite("beta_reflection", &SceneConfig::beta_reflection)
      .def_readwrite("carrier_ghz", &SceneConfig::carrier_ghz)
      .def("validate", &SceneConfig::validate)
      .def("to_json", [](const SceneConfig& c) { return c.to_json().dump(); })
      .def_static("from_json",
                  [](const std::string& s) { return SceneConfig::from_json(parse_config(s)); });

  py::class_<ScenarioTrace>(mod, "ScenarioTrace")
      .def_readonly("config", &ScenarioTrace::config)
      .def_readonly("num_antennas", &ScenarioTrace::num_antennas)
      .def_readonly("los", &ScenarioTrace::los)
      .def_readonly("best_beam", &ScenarioTrace::best_beam)
      .def_property_readonly("duration", &ScenarioTrace::duration)
      .def("user_position",
           [](const ScenarioTrace& tr, int user, int t) {
             return std::make_pair(tr.user_pos.at(user).at(t).x, tr.user_pos.at(user).at(t).y);
           })
      .def("blocker_position", [](const ScenarioTrace& tr, int b, int t) {
        return std::make_pair(tr.blocker_pos.at(b).at(t).x, tr.blocker_pos.at(b).at(t).y);
      });

  mod.def("simulate_scene", &simulate_scene, py::arg("config"), py::arg("codebook"));
  mod.def("save_trace_json", &save_trace_json, py::arg("trace"), py::arg("path"));
  mod.def("channel_response", &channel_response, py::arg("trace"), py::arg("t"), py::arg("user"));
  mod.def("optimal_beam", &optimal_beam, py::arg("h"), py::arg("codebook"));
  mod.def("beam_gain", &beam_gain, py::arg("h"), py::arg("codebook"), py::arg("q"));
  mod.def("camera_for_position", &camera_for_position, py::arg("config"), py::arg("pos"));
  mod.def("render_feature_map", &render_feature_map, py::arg("trace"), py::arg("t"),
          py::arg("camera"));
  mod.def("generate_instances", &generate_instances, py::arg("trace"), py::arg("tau"),
          py::arg("m"));

  // --- feature maps and datasets --------------------------------------------
  py::class_<FeatureMap, std::shared_ptr<FeatureMap>>(mod, "FeatureMap")
      .def_readonly("h", &FeatureMap::h)
      .def_readonly("w", &FeatureMap::w)
      .def_readonly("c", &FeatureMap::c)
      .def("flatten", &FeatureMap::flatten)
      .def("at", [](const FeatureMap& f, int i, int j, int k) { return f.at(i, j, k); });

  py::class_<InstanceRecord>(mod, "InstanceRecord")
      .def_readonly("beams", &InstanceRecord::beams)
      .def_readonly("features", &InstanceRecord::features)
      .def_readonly("labels", &InstanceRecord::labels)
      .def_readonly("user_id", &InstanceRecord::user_id)
      .def_readonly("t", &InstanceRecord::t);

  py::class_<Dataset>(mod, "Dataset")
      .def_readonly("name", &Dataset::name)
      .def("__len__", &Dataset::size)
      .def("tau", &Dataset::tau)
      .def("m", &Dataset::m)
      .def("image_ids", &Dataset::image_ids)
      .def("record", [](const Dataset& ds, size_t i) { return ds.records.at(i); })
      .def("feature",
           [](const Dataset& ds, const std::string& id) {
             auto it = ds.feature_store.find(id);
             if (it == ds.feature_store.end())
               throw DataError("unknown image id '" + id + "'");
             return std::const_pointer_cast<FeatureMap>(it->second);
           })
      .def("subset", &Dataset::subset, py::arg("indices"), py::arg("name"))
      .def("validate", &Dataset::validate);

  py::class_<IngestStats>(mod, "IngestStats")
      .def_readonly("rows_parsed", &IngestStats::rows_parsed)
      .def_readonly("rows_skipped", &IngestStats::rows_skipped)
      .def_readonly("warnings", &IngestStats::warnings);

  mod.def(
      "ingest_viwi_csv",
      [](const std::filesystem::path& csv, const std::filesystem::path& features) {
        IngestStats stats;
        Dataset ds = ingest_viwi_csv(csv, features, &stats);
        return std::make_pair(std::move(ds), stats);
      },
      py::arg("csv"), py::arg("features"));
  mod.def("write_instances_csv", &write_instances_csv, py::arg("dataset"), py::arg("path"));
  mod.def("write_feature_store", &write_feature_store, py::arg("dataset"), py::arg("dir"));

  py::class_<SplitResult>(mod, "SplitResult")
      .def_readonly("train", &SplitResult::train)
      .def_readonly("v1", &SplitResult::v1)
      .def_readonly("v2", &SplitResult::v2)
      .def_property_readonly("manifest",
                             [](const SplitResult& r) { return r.manifest.dump(); });

  mod.def("split_leakage_free", &split_leakage_free, py::arg("raw_train"), py::arg("raw_val"),
          py::arg("train_cuts"), py::arg("val_cuts"));

  mod.def("beam_std", &beam_std, py::arg("record"));

  py::class_<ClusterConfig>(mod, "ClusterConfig")
      .def(py::init<>())
      .def_readwrite("t1", &ClusterConfig::t1)
      .def_readwrite("t2", &ClusterConfig::t2);

  py::class_<StdClusters>(mod, "StdClusters")
      .def_readonly("a", &StdClusters::a)
      .def_readonly("b", &StdClusters::b)
      .def_readonly("c", &StdClusters::c);

  mod.def("cluster_by_std", &cluster_by_std, py::arg("dataset"), py::arg("config"));

  // --- baselines -------------------------------------------------------------
  py::class_<BeamDistribution>(mod, "BeamDistribution")
      .def_readonly("probs", &BeamDistribution::probs);

  mod.def("last_step_predict", &last_step_predict, py::arg("dataset"), py::arg("m"));
  mod.def("linreg_predict", &linreg_predict, py::arg("dataset"), py::arg("m"),
          py::arg("num_beams"));
  mod.def("fit_beam_distribution", &fit_beam_distribution, py::arg("dataset"),
          py::arg("num_beams"));
  mod.def("statistical_predict", &statistical_predict, py::arg("distribution"),
          py::arg("dataset"), py::arg("m"), py::arg("seed"));
  mod.def("write_predictions_csv", &write_predictions_csv, py::arg("path"), py::arg("dataset"),
          py::arg("predictions"));
  mod.def("read_predictions_csv", &read_predictions_csv, py::arg("path"), py::arg("m"));

  // --- scoring ---------------------------------------------------------------
  py::class_<ScoringConfig>(mod, "ScoringConfig")
      .def(py::init<>())
      .def_readwrite("sigma", &ScoringConfig::sigma);

  py::class_<ScoreReport>(mod, "ScoreReport")
      .def_readonly("score_1", &ScoreReport::score_1)
      .def_readonly("score_3", &ScoreReport::score_3)
      .def_readonly("score_5", &ScoreReport::score_5)
      .def_readonly("total", &ScoreReport::total)
      .def_readonly("sigma", &ScoreReport::sigma)
      .def_readonly("n_instances", &ScoreReport::n_instances)
      .def("to_json", [](const ScoreReport& r) { return r.to_json().dump(); });

  mod.def("score_m", &score_m, py::arg("preds"), py::arg("truths"), py::arg("m"),
          py::arg("config"));
  mod.def("total_score", &total_score, py::arg("s1"), py::arg("s3"), py::arg("s5"));
  mod.def("weighted_cluster_score", &weighted_cluster_score, py::arg("scores"),
          py::arg("cardinalities"));
  mod.def("make_score_report", &make_score_report, py::arg("preds"), py::arg("truths"),
          py::arg("config"));

  // --- pipeline ----------------------------------------------------------------
  py::enum_<InputMode>(mod, "InputMode")
      .value("beam_only", InputMode::beam_only)
      .value("staggered", InputMode::staggered)
      .value("concat", InputMode::concat);
  py::enum_<EmbedderKind>(mod, "EmbedderKind")
      .value("none", EmbedderKind::none)
      .value("pca", EmbedderKind::pca)
      .value("ae", EmbedderKind::ae)
      .value("cls", EmbedderKind::cls);
  py::enum_<nn::Direction>(mod, "Direction")
      .value("forward", nn::Direction::forward)
      .value("bidirectional", nn::Direction::bidirectional);

  py::class_<nn::TrainConfig>(mod, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &nn::TrainConfig::learning_rate)
      .def_readwrite("batch_size", &nn::TrainConfig::batch_size)
      .def_readwrite("num_layers", &nn::TrainConfig::num_layers)
      .def_readwrite("hidden_dim", &nn::TrainConfig::hidden_dim)
      .def_readwrite("epochs_uni", &nn::TrainConfig::epochs_uni)
      .def_readwrite("epochs_bi", &nn::TrainConfig::epochs_bi)
      .def_readwrite("dropout", &nn::TrainConfig::dropout)
      .def_readwrite("seed", &nn::TrainConfig::seed)
      .def_readwrite("clip_norm", &nn::TrainConfig::clip_norm);

  py::class_<EmbedTrainOptions>(mod, "EmbedTrainOptions")
      .def(py::init<>())
      .def_readwrite("hidden", &EmbedTrainOptions::hidden)
      .def_readwrite("epochs", &EmbedTrainOptions::epochs)
      .def_readwrite("learning_rate", &EmbedTrainOptions::learning_rate)
      .def_readwrite("batch_size", &EmbedTrainOptions::batch_size)
      .def_readwrite("seed", &EmbedTrainOptions::seed);

  py::class_<PipelineConfig>(mod, "PipelineConfig")
      .def(py::init<>())
      .def_readwrite("input_mode", &PipelineConfig::input_mode)
      .def_readwrite("sequence_model", &PipelineConfig::sequence_model)
      .def_readwrite("embedder", &PipelineConfig::embedder)
      .def_readwrite("embedding_dim", &PipelineConfig::embedding_dim)
      .def_readwrite("tau", &PipelineConfig::tau)
      .def_readwrite("m", &PipelineConfig::m)
      .def_readwrite("train", &PipelineConfig::train)
      .def_readwrite("scoring", &PipelineConfig::scoring)
      .def_readwrite("embedder_opts", &PipelineConfig::embedder_opts)
      .def("validate", &PipelineConfig::validate)
      .def("to_json", [](const PipelineConfig& c) { return c.to_json().dump(); })
      .def_static("from_json",
                  [](const std::string& s) { return PipelineConfig::from_json(parse_config(s)); });

  py::class_<TrainedPredictor>(mod, "TrainedPredictor")
      .def_readonly("config", &TrainedPredictor::config)
      .def_readonly("train_image_ids", &TrainedPredictor::train_image_ids)
      .def_readonly("epoch_losses", &TrainedPredictor::epoch_losses);

  mod.def(
      "train_predictor",
      [](const Dataset& train, const Codebook& cb, const PipelineConfig& cfg) {
        return train_predictor(train, cb, cfg);
      },
      py::arg("train"), py::arg("codebook"), py::arg("config"),
      py::call_guard<py::gil_scoped_release>());
  mod.def("predict", &predict, py::arg("model"), py::arg("dataset"),
          py::call_guard<py::gil_scoped_release>());
  mod.def("score_predictions", &score_predictions, py::arg("predictions"), py::arg("dataset"),
          py::arg("scoring"));
  mod.def("evaluate", &evaluate, py::arg("model"), py::arg("val"),
          py::call_guard<py::gil_scoped_release>());

  mod.def(
      "save_model",
      [](const std::filesystem::path& path, const TrainedPredictor& model) {
        nn::Adam adam{{model.config.train.learning_rate, model.config.train.adam_beta1,
                       model.config.train.adam_beta2, model.config.train.adam_eps}};
        save_checkpoint(path, model, adam, Rng(0),
                        static_cast<int>(model.epoch_losses.size()));
      },
      py::arg("path"), py::arg("model"));
  mod.def(
      "load_model",
      [](const std::filesystem::path& path) {
        return std::move(load_checkpoint(path).model);
      },
      py::arg("path"));

  // --- experiments ----------------------------------------------------------
  py::class_<SweepRow>(mod, "SweepRow")
      .def_readonly("tau", &SweepRow::tau)
      .def_readonly("report", &SweepRow::report);

  mod.def("run_memory_sweep", &run_memory_sweep, py::arg("train"), py::arg("val"),
          py::arg("codebook"), py::arg("base"), py::arg("taus"),
          py::call_guard<py::gil_scoped_release>());

  py::class_<ExperimentPlan>(mod, "ExperimentPlan")
      .def_static("default_plan", &ExperimentPlan::default_plan)
      .def_static("from_json",
                  [](const std::string& s) { return ExperimentPlan::from_json(parse_config(s)); })
      .def("to_json", [](const ExperimentPlan& p) { return p.to_json().dump(); });

  py::class_<ClusterExperimentConfig>(mod, "ClusterExperimentConfig")
      .def(py::init<>())
      .def_readwrite("plan", &ClusterExperimentConfig::plan)
      .def_readwrite("thresholds", &ClusterExperimentConfig::thresholds)
      .def_readwrite("base_seed", &ClusterExperimentConfig::base_seed)
      .def_readwrite("workers", &ClusterExperimentConfig::workers);

  py::class_<ClusterCell>(mod, "ClusterCell")
      .def_readonly("row_name", &ClusterCell::row_name)
      .def_readonly("mode", &ClusterCell::mode)
      .def_readonly("score_5", &ClusterCell::score_5)
      .def_readonly("full", &ClusterCell::full)
      .def_readonly("train_size", &ClusterCell::train_size)
      .def_readonly("val_size", &ClusterCell::val_size);

  py::class_<ClusterExperimentResult>(mod, "ClusterExperimentResult")
      .def_readonly("cells", &ClusterExperimentResult::cells)
      .def_property_readonly("weighted",
                             [](const ClusterExperimentResult& r) { return r.weighted.dump(); })
      .def("render_table", &ClusterExperimentResult::render_table)
      .def("to_json", [](const ClusterExperimentResult& r) { return r.to_json().dump(); });

  mod.def("run_cluster_experiment", &run_cluster_experiment, py::arg("train"), py::arg("val"),
          py::arg("codebook"), py::arg("base"), py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
}
