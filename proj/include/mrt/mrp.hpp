#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mrt/layers.hpp"
#include "mrt/patch_plan.hpp"

namespace mrt {

/// Multiple-resolution patching of the past window: for each k in K the
/// series is split per make_patch_plan(l, k), short patches are left-padded
/// with one zero, and every patch is projected by that resolution's shared
/// [b+1, d_m] map. Tokens are ordered by ascending k, then patch position.
template <typename T>
class MrpTokenizer {
public:
    MrpTokenizer() = default;
    MrpTokenizer(ParameterStore<T>& store, const std::string& prefix, std::vector<std::size_t> K, std::size_t lookback,
                 std::size_t d_model, Rng& rng);

    // past [B,C,l] -> [B,C,n_MRP,d_m]
    Var<T> operator()(const Var<T>& past) const;

    std::size_t n_tokens() const { return n_tokens_; }
    const std::vector<PatchPlan>& plans() const { return plans_; }
    const std::vector<Linear<T>>& projections() const { return proj_; }

private:
    std::vector<std::size_t> K_;
    std::size_t lookback_ = 0;
    std::size_t d_model_ = 0;
    std::size_t n_tokens_ = 0;
    std::vector<PatchPlan> plans_;
    std::vector<std::vector<std::ptrdiff_t>> index_;
    std::vector<Linear<T>> proj_;
};

extern template class MrpTokenizer<float>;
extern template class MrpTokenizer<double>;

}  // namespace mrt
