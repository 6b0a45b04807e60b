#pragma once

#include <ostream>
#include <string>

#include "mrt/pipeline.hpp"
#include "mrt/run_config.hpp"
#include "mrt/verification.hpp"

namespace mrt {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

// Loads and prepares the configured dataset with the model's window geometry.
PreparedData load_prepared(const RunConfig& config);

/// Command bodies behind the CLI. Each validates `config`, writes its
/// artifacts under config.paths.output and returns an exit code; errors
/// propagate as exceptions (see exit_code_for).
int cmd_synth(const RunConfig& config, std::ostream& log);
int cmd_train(const RunConfig& config, std::ostream& log);
int cmd_evaluate(const RunConfig& config, std::ostream& log);
int cmd_predict(const RunConfig& config, std::ostream& log);
// `corrupt` perturbs every analytic gradient (negative control).
int cmd_gradcheck(const RunConfig& config, std::ostream& log, bool corrupt = false);
int cmd_ablate(const RunConfig& config, std::ostream& log);
int cmd_info(const RunConfig& config, std::ostream& log);

int exit_code_for(const std::exception& e);

}  // namespace mrt
