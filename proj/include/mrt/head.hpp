#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mrt/aux_tokens.hpp"
#include "mrt/layers.hpp"
#include "mrt/patch_plan.hpp"

namespace mrt {

struct HeadParamCount {
    std::size_t weights = 0;     // d_m * sum(p_i + 1)
    std::size_t biases = 0;      // sum(p_i + 1)
    std::size_t flattening = 0;  // d_m * f * sum(k_i)
};

HeadParamCount head_param_count(const std::vector<std::size_t>& K, std::size_t horizon, std::size_t d_model);

/// Reverse splitting: the k_i tokens at each resolution's MRP positions are
/// projected to p_i+1 values, patches planned one shorter drop their last
/// value, patches are concatenated to length f, and resolutions are summed.
template <typename T>
class ReverseSplitter {
public:
    ReverseSplitter() = default;
    ReverseSplitter(ParameterStore<T>& store, const std::string& prefix, std::vector<std::size_t> K,
                    std::size_t horizon, std::size_t d_model, Rng& rng);

    // encoded [B,C,n_MRT,d_m] -> [B,C,f]
    Var<T> operator()(const Var<T>& encoded, const TokenLayout& layout) const;
    // Forecast of resolution i alone.
    Var<T> partial(const Var<T>& encoded, const TokenLayout& layout, std::size_t i) const;

    const std::vector<PatchPlan>& plans() const { return plans_; }
    const std::vector<Linear<T>>& projections() const { return proj_; }

private:
    std::vector<std::size_t> K_;
    std::size_t horizon_ = 0;
    std::size_t d_model_ = 0;
    std::vector<PatchPlan> plans_;
    std::vector<std::vector<std::ptrdiff_t>> index_;
    std::vector<std::size_t> offset_;  // token offset of each resolution within the MRP span
    std::vector<Linear<T>> proj_;
};

extern template class ReverseSplitter<float>;
extern template class ReverseSplitter<double>;

}  // namespace mrt
