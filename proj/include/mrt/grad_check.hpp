#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mrt/autograd.hpp"

namespace mrt {

struct GradCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-5;
    // Coordinates sampled per tensor; tensors at or below this size are checked exhaustively.
    std::size_t max_coords = 200;
    // Denominator floor of the relative error, so that vanishing gradients are
    // compared in absolute terms.
    double abs_floor = 1e-6;
    std::uint64_t seed = 0;
    std::size_t worst_kept = 5;
};

struct GradCheckCoord {
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckEntry {
    std::string name;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    std::vector<GradCheckCoord> worst;
    bool passed = true;
};

struct GradCheckReport {
    double tolerance = 0.0;
    std::vector<GradCheckEntry> entries;

    bool passed() const;
    double max_rel_error() const;
    std::string to_string() const;
};

using NamedVars = std::vector<std::pair<std::string, Var<double>>>;

/// Compares reverse-mode gradients of the scalar `f` against central finite
/// differences, coordinate by coordinate. `f` must rebuild its graph from the
/// current values of `params` on every call. `tamper`, when set, is applied to
/// each analytic gradient before comparison (negative controls).
GradCheckReport grad_check(const std::function<Var<double>()>& f, const NamedVars& params,
                           const GradCheckOptions& options = {},
                           const std::function<void(const std::string&, Tensor<double>&)>& tamper = {});

}  // namespace mrt
