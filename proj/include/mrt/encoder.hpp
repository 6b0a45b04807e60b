#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mrt/layers.hpp"

namespace mrt {

/// Multi-head self-attention with q/k/v/out projections, unmasked.
template <typename T>
class SelfAttention {
public:
    SelfAttention() = default;
    SelfAttention(ParameterStore<T>& store, const std::string& prefix, std::size_t d_model, std::size_t heads,
                  Rng& rng);

    // x [N,T,d_m] -> [N,T,d_m]; `probs` receives [N,heads,T,T] when non-null.
    Var<T> operator()(const Var<T>& x, Tensor<T>* probs = nullptr) const;

private:
    std::size_t heads_ = 1;
    Linear<T> q_, k_, v_, out_;
};

/// Learned positional bias added once, then post-norm blocks:
/// x = norm(x + attn(x)); x = norm(x + ffn(x)). Channels act as samples.
template <typename T>
class Encoder {
public:
    Encoder() = default;
    Encoder(ParameterStore<T>& store, const std::string& prefix, std::size_t n_tokens, std::size_t d_model,
            std::size_t d_ff, std::size_t heads, std::size_t blocks, double dropout, NormFlavor norm, Rng& rng);

    // tokens [B,C,n_MRT,d_m] -> same shape
    Var<T> operator()(const Var<T>& tokens, const Mode& mode) const;

    const Var<T>& positional_bias() const { return pos_; }
    std::size_t blocks() const { return blocks_.size(); }

private:
    struct Block {
        SelfAttention<T> attn;
        Norm<T> norm1;
        Linear<T> ff1;
        Linear<T> ff2;
        Norm<T> norm2;
    };
    std::size_t n_tokens_ = 0;
    std::size_t d_model_ = 0;
    double dropout_ = 0.0;
    Var<T> pos_;
    std::vector<Block> blocks_;
};

extern template class SelfAttention<float>;
extern template class SelfAttention<double>;
extern template class Encoder<float>;
extern template class Encoder<double>;

}  // namespace mrt
