#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mrt/grad_check.hpp"
#include "mrt/model.hpp"

namespace mrt {

// Small model used by gradient checks: d_m=8, K={1,2}, l=8, f=4, C=2, both
// auxiliary token families on.
ModelConfig toy_config();

// Two channels; TVK: price (specific, numerical), promo (global, categorical
// 3), hour (global, numerical); statics: group (global, categorical 3), kind
// (specific, categorical 2), size (global, numerical).
Schema toy_schema();

/// Random batch matching `schema` and `config`. Sample 0 is left-padded by
/// `pad_first` steps; categorical values include missing codes.
SeriesBatch random_batch(const Schema& schema, const ModelConfig& config, std::size_t batch, std::uint64_t seed,
                         std::size_t pad_first = 0);

inline constexpr std::size_t kGradCheckMaxParams = 50000;

struct ModuleGradReport {
    std::string module;
    GradCheckReport report;
};

// mrp, static, tvk.global, tvk.specific, mixer, encoder, head, model.
const std::vector<std::string>& grad_check_modules();

using GradTamper = std::function<void(const std::string& module, const std::string& entry, Tensor<double>&)>;

/// Finite-difference checks of each listed module in isolation (random inputs,
/// loss = mean of outputs weighted by a fixed random tensor) and of the end to
/// end model ("model": training loss w.r.t. every parameter, plus the forecast
/// w.r.t. the observed window). Refuses configs above kGradCheckMaxParams.
std::vector<ModuleGradReport> run_grad_checks(const ModelConfig& config, const Schema& schema,
                                              const std::vector<std::string>& modules,
                                              const GradCheckOptions& options = {}, const GradTamper& tamper = {});

}  // namespace mrt
