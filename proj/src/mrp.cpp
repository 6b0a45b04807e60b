#include "mrt/mrp.hpp"

namespace mrt {

template <typename T>
MrpTokenizer<T>::MrpTokenizer(ParameterStore<T>& store, const std::string& prefix, std::vector<std::size_t> K,
                              std::size_t lookback, std::size_t d_model, Rng& rng)
    : K_(std::move(K)), lookback_(lookback), d_model_(d_model) {
    check_resolutions(K_);
    for (auto k : K_) {
        plans_.push_back(make_patch_plan(lookback_, k));
        index_.push_back(left_padded_index(plans_.back()));
        const std::size_t w = plans_.back().base() + 1;
        proj_.emplace_back(store, prefix + ".k" + std::to_string(k), w, d_model_, true, rng);
        n_tokens_ += k;
    }
}

template <typename T>
Var<T> MrpTokenizer<T>::operator()(const Var<T>& past) const {
    const Shape& s = past.shape();
    if (s.size() != 3 || s[2] != lookback_) {
        throw DimensionError("mrp: expected [B,C," + std::to_string(lookback_) + "], got " + shape_str(s));
    }
    std::vector<Var<T>> parts;
    for (std::size_t i = 0; i < K_.size(); ++i) {
        const std::size_t w = plans_[i].base() + 1;
        Var<T> patches = reshape(gather_last(past, index_[i]), {s[0], s[1], K_[i], w});
        parts.push_back(proj_[i](patches));
    }
    return parts.size() == 1 ? parts.front() : concat(parts, 2);
}

template class MrpTokenizer<float>;
template class MrpTokenizer<double>;

}  // namespace mrt
