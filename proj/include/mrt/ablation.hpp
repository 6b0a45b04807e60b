#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/model.hpp"

namespace mrt {

enum class ModuleArm { none, tvkt, cst, both };

std::string to_string(ModuleArm arm);
ModuleArm module_arm_from_string(const std::string& s);

struct AblationSpec {
    std::vector<std::size_t> base_set{1, 2, 4, 8, 16};
    std::size_t resolution_repeats = 1;
    std::vector<ModuleArm> module_arms{ModuleArm::none, ModuleArm::tvkt, ModuleArm::cst, ModuleArm::both};
    std::size_t module_repeats = 5;
    std::vector<std::size_t> scaling_sizes{32, 64, 96, 128};
    std::vector<ModuleArm> scaling_arms{ModuleArm::none, ModuleArm::tvkt, ModuleArm::both};
    std::size_t scaling_repeats = 1;

    void validate() const;
    friend bool operator==(const AblationSpec&, const AblationSpec&) = default;
};

void to_json(nlohmann::json& j, const AblationSpec& s);
void from_json(const nlohmann::json& j, AblationSpec& s);

struct AblationArm {
    std::string study;  // resolution | module | scaling
    std::string id;
    ModelConfig config;
    std::size_t repeats = 1;
};

// Every nonempty subset of `base`, each ascending, in binary-counter order.
std::vector<std::vector<std::size_t>> nonempty_subsets(const std::vector<std::size_t>& base);

void apply_module_arm(ModelConfig& config, ModuleArm arm);

// Derived configs start from `base`; each is validated.
std::vector<AblationArm> resolution_arms(const AblationSpec& spec, const ModelConfig& base);
std::vector<AblationArm> module_arms(const AblationSpec& spec, const ModelConfig& base);
// d_ff = 2 d_m, d_cross = d_m / 4, heads = d_m / 8, blocks = 2.
std::vector<AblationArm> scaling_arms(const AblationSpec& spec, const ModelConfig& base);

std::uint64_t arm_seed(std::uint64_t base_seed, const std::string& arm_id, std::size_t repeat);

struct SummaryStats {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;  // sample deviation; 0 for n < 2
    double min = 0.0;
};

SummaryStats summarize(const std::vector<double>& values);

struct ArmResult {
    std::string study;
    std::string id;
    std::vector<std::uint64_t> seeds;
    std::vector<double> values;  // test RMSE of successful repeats
    std::vector<std::string> failures;
    SummaryStats stats;
};

// Returns the test RMSE of one repeat; exceptions mark the repeat failed.
using ArmRunner = std::function<double(const AblationArm& arm, std::size_t repeat, std::uint64_t seed)>;

/// Runs every repeat of every arm with at most `jobs` concurrent repeats.
/// Results keep arm order and repeat order regardless of scheduling.
std::vector<ArmResult> run_ablation(const std::vector<AblationArm>& arms, const ArmRunner& runner,
                                    std::uint64_t base_seed, std::size_t jobs = 1);

// study,arm,repeats,failed,mean,std,min
void write_report_csv(const std::filesystem::path& path, const std::vector<ArmResult>& results);
// One row per repeat: study,arm,repeat,seed,rmse,error
void write_runs_csv(const std::filesystem::path& path, const std::vector<ArmResult>& results);

}  // namespace mrt
