#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/ablation.hpp"
#include "mrt/model.hpp"
#include "mrt/synthetic.hpp"
#include "mrt/training.hpp"

namespace mrt {

struct PathsConfig {
    std::string dataset;     // dataset directory
    std::string output = "out";
    std::string checkpoint;  // empty: <output>/checkpoint
    friend bool operator==(const PathsConfig&, const PathsConfig&) = default;
};

struct DataConfig {
    std::size_t stride = 0;  // 0: the horizon
    double test_fraction = 0.20;
    double val_fraction = 0.15;
    double keep_fraction = 1.0;
    bool quantise = true;
    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct SynthConfig {
    std::size_t n_series = 2000;
    std::uint64_t seed = 0;
    SynthParams params;
    friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct GradCheckConfig {
    ModelConfig model;  // defaults to toy_config()
    std::vector<std::string> modules;  // defaults to every module; empty checks nothing
    double tolerance = 1e-4;
    double step = 1e-5;
    std::size_t max_coords = 200;
    friend bool operator==(const GradCheckConfig&, const GradCheckConfig&) = default;
};

struct AblationConfig {
    AblationSpec spec;
    std::vector<std::string> studies{"resolution", "module", "scaling"};
    friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

/// Everything a CLI command reads. JSON sections: paths, model, train, data,
/// synth, gradcheck, ablation, run. Unknown keys are rejected with their path.
struct RunConfig {
    PathsConfig paths;
    ModelConfig model;
    TrainSpec train;
    DataConfig data;
    SynthConfig synth;
    GradCheckConfig gradcheck;
    AblationConfig ablation;
    int precision = 32;  // 32 or 64
    std::size_t jobs = 1;
    std::string split = "test";  // evaluate / predict

    RunConfig();

    // Field checks plus the path requirements of `command` (empty: none).
    void validate(const std::string& command = "") const;

    std::filesystem::path output_dir() const { return paths.output; }
    std::filesystem::path checkpoint_dir() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace mrt
