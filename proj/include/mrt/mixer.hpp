#pragma once

#include <cstddef>
#include <string>

#include "mrt/layers.hpp"

namespace mrt {

/// Cross-series tokens. Token mixing (norm, linear over the token dim, GeLU,
/// dropout, skip), squeeze to n_CST tokens, channel mixing (norm, linear
/// d_c->d_cross, GeLU, dropout, linear d_cross->d_c, skip), a learned squeeze
/// of the channel dim to one, and replication across channels.
template <typename T>
class ChannelMixer {
public:
    ChannelMixer() = default;
    ChannelMixer(ParameterStore<T>& store, const std::string& prefix, std::size_t channels, std::size_t n_base,
                 std::size_t n_cst, std::size_t d_model, std::size_t d_cross, double dropout, NormFlavor norm,
                 Rng& rng);

    // tokens [B,C,n_B,d_m] -> [B,C,n_CST,d_m]
    Var<T> operator()(const Var<T>& tokens, const Mode& mode) const;

    std::size_t n_tokens() const { return n_cst_; }

private:
    std::size_t channels_ = 0;
    std::size_t n_base_ = 0;
    std::size_t n_cst_ = 0;
    std::size_t d_model_ = 0;
    double dropout_ = 0.0;
    Norm<T> token_norm_;
    Linear<T> token_mix_;
    Linear<T> token_squeeze_;
    Norm<T> channel_norm_;
    Linear<T> channel_up_;
    Linear<T> channel_down_;
    Linear<T> channel_squeeze_;
};

/// Appends CST tokens after the base tokens; an undefined or empty `cst`
/// returns `base` unchanged.
template <typename T>
Var<T> append_cst(const Var<T>& base, const Var<T>& cst);

extern template class ChannelMixer<float>;
extern template class ChannelMixer<double>;

}  // namespace mrt
