#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "medkan/bench.hpp"
#include "medkan/gradcheck.hpp"
#include "medkan/train.hpp"

namespace medkan {

struct SynthSpec {
    int classes = 4;
    int per_class = 128;
    int size = 28;
    double noise = 0.1;
    std::uint64_t seed = 1;
};

/// One experiment: model + training recipe + dataset + output location.
/// JSON parsing is strict; unknown keys are rejected.
struct RunConfig {
    std::string variant; // "S"|"B"|"L", or empty when `model` is explicit
    MedKanConfig model;
    TrainConfig train;
    std::string data_path;          // NPZ archive, mutually exclusive with synth
    std::optional<SynthSpec> synth; // generated in-process
    std::string out_dir = "out";
    int runs = 1;
    int threads = 0; // 0 = hardware concurrency
};

RunConfig parse_run_config(const nlohmann::json& j);
SynthSpec parse_synth_spec(const nlohmann::json& j);

/// Fully materialized config: every default filled in, the variant resolved
/// to its concrete model. Re-running from the echo reproduces the run.
nlohmann::json echo_run_config(const RunConfig& rc);

/// Executes the training command: writes config.echo.json, per-run
/// metrics.csv / best.ckpt / final.ckpt, and summary.csv when runs > 1.
/// Returns a summary JSON.
nlohmann::json driver_train(const RunConfig& rc);

nlohmann::json driver_eval(const std::string& ckpt_path, const std::string& data_path,
                           const std::string& split, const std::string& dump_logits_path,
                           int batch_size);

nlohmann::json driver_gradcam(const std::string& ckpt_path, const std::string& data_path,
                              const std::string& split, int index, int target_class,
                              int stage_index, const std::string& out_prefix);

nlohmann::json driver_make_synth(const SynthSpec& spec, const std::string& out_path);

nlohmann::json gradcheck_report_json(const GradcheckReport& report);

/// Loads a dataset from either source and resizes it to the model input size
/// when the spatial extents differ.
Dataset load_run_dataset(const RunConfig& rc, int target_size);

} // namespace medkan
