#include "mrt/head.hpp"

namespace mrt {

HeadParamCount head_param_count(const std::vector<std::size_t>& K, std::size_t horizon, std::size_t d_model) {
    check_resolutions(K);
    HeadParamCount c;
    std::size_t sum_k = 0;
    for (auto k : K) {
        const auto plan = make_patch_plan(horizon, k);
        c.biases += plan.base() + 1;
        sum_k += k;
    }
    c.weights = d_model * c.biases;
    c.flattening = d_model * horizon * sum_k;
    return c;
}

template <typename T>
ReverseSplitter<T>::ReverseSplitter(ParameterStore<T>& store, const std::string& prefix, std::vector<std::size_t> K,
                                    std::size_t horizon, std::size_t d_model, Rng& rng)
    : K_(std::move(K)), horizon_(horizon), d_model_(d_model) {
    check_resolutions(K_);
    if (horizon_ < K_.back()) {
        throw ConfigError("head: horizon f=" + std::to_string(horizon_) + " is shorter than the largest resolution " +
                          std::to_string(K_.back()));
    }
    std::size_t off = 0;
    for (auto k : K_) {
        plans_.push_back(make_patch_plan(horizon_, k));
        index_.push_back(truncating_index(plans_.back()));
        offset_.push_back(off);
        off += k;
        proj_.emplace_back(store, prefix + ".k" + std::to_string(k), d_model_, plans_.back().base() + 1, true, rng);
    }
}

template <typename T>
Var<T> ReverseSplitter<T>::partial(const Var<T>& encoded, const TokenLayout& layout, std::size_t i) const {
    const auto& span = layout.span(TokenFamily::mrp);
    const std::size_t n_mrp = offset_.back() + K_.back();
    const Shape& s = encoded.shape();
    if (span.length != n_mrp || s.size() != 4 || s[2] != layout.total() || s[3] != d_model_) {
        throw ConfigError("head: layout with " + std::to_string(span.length) + " MRP tokens and input " + shape_str(s) +
                          " do not match " + std::to_string(n_mrp) + " planned tokens");
    }
    const std::size_t w = plans_[i].base() + 1;
    Var<T> tokens = slice(encoded, 2, span.start + offset_[i], K_[i]);     // [B,C,k,d]
    Var<T> patches = reshape(proj_[i](tokens), {s[0], s[1], K_[i] * w});  // [B,C,k*(p+1)]
    return gather_last(patches, index_[i]);
}

template <typename T>
Var<T> ReverseSplitter<T>::operator()(const Var<T>& encoded, const TokenLayout& layout) const {
    Var<T> out = partial(encoded, layout, 0);
    for (std::size_t i = 1; i < K_.size(); ++i) out = add(out, partial(encoded, layout, i));
    return out;
}

template class ReverseSplitter<float>;
template class ReverseSplitter<double>;

}  // namespace mrt
