#include "mrt/mixer.hpp"

#include <iostream>

namespace mrt {

template <typename T>
ChannelMixer<T>::ChannelMixer(ParameterStore<T>& store, const std::string& prefix, std::size_t channels,
                              std::size_t n_base, std::size_t n_cst, std::size_t d_model, std::size_t d_cross,
                              double dropout, NormFlavor norm, Rng& rng)
    : channels_(channels), n_base_(n_base), n_cst_(n_cst), d_model_(d_model), dropout_(dropout) {
    if (channels == 0 || n_base == 0 || n_cst == 0 || d_cross == 0) {
        throw ConfigError("channel mixer: channels, n_base, n_cst and d_cross must be >= 1");
    }
    if (n_cst > n_base) {
        std::cerr << "warning: n_CST=" << n_cst << " exceeds the " << n_base << " base tokens\n";
    }
    const auto features = [&](std::size_t tokens) { return norm == NormFlavor::batch ? tokens * d_model : d_model; };
    token_norm_ = Norm<T>(store, prefix + ".token_norm", norm, features(n_base));
    token_mix_ = Linear<T>(store, prefix + ".token_mix", n_base, n_base, true, rng);
    token_squeeze_ = Linear<T>(store, prefix + ".token_squeeze", n_base, n_cst, true, rng);
    channel_norm_ = Norm<T>(store, prefix + ".channel_norm", norm, features(n_cst));
    channel_up_ = Linear<T>(store, prefix + ".channel_up", channels, d_cross, true, rng);
    channel_down_ = Linear<T>(store, prefix + ".channel_down", d_cross, channels, true, rng);
    channel_squeeze_ = Linear<T>(store, prefix + ".channel_squeeze", channels, 1, true, rng);
}

template <typename T>
Var<T> ChannelMixer<T>::operator()(const Var<T>& x, const Mode& mode) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[2] != n_base_ || s[3] != d_model_) {
        throw DimensionError("channel mixer: expected [B,C," + std::to_string(n_base_) + "," +
                             std::to_string(d_model_) + "], got " + shape_str(s));
    }
    if (s[1] != channels_) {
        throw ConfigError("channel mixer: built for " + std::to_string(channels_) + " channels, got " +
                          std::to_string(s[1]));
    }
    const std::size_t C = s[1];
    // Token mixing over the token dim.
    Var<T> h = permute(token_norm_(x, 2, mode.train), {0, 1, 3, 2});          // [B,C,d,n_B]
    h = apply_dropout(gelu(token_mix_(h)), dropout_, mode);
    Var<T> y = add(x, permute(h, {0, 1, 3, 2}));
    y = permute(token_squeeze_(permute(y, {0, 1, 3, 2})), {0, 1, 3, 2});     // [B,C,n_CST,d]
    // Channel mixing over the channel dim.
    Var<T> g = permute(channel_norm_(y, 2, mode.train), {0, 2, 3, 1});        // [B,n_CST,d,C]
    g = channel_down_(apply_dropout(gelu(channel_up_(g)), dropout_, mode));
    Var<T> z = add(y, permute(g, {0, 3, 1, 2}));
    Var<T> squeezed = permute(channel_squeeze_(permute(z, {0, 2, 3, 1})), {0, 3, 1, 2});  // [B,1,n_CST,d]
    return expand(squeezed, 1, C);
}

template <typename T>
Var<T> append_cst(const Var<T>& base, const Var<T>& cst) {
    if (!cst.defined() || cst.shape()[2] == 0) return base;
    const Shape& a = base.shape();
    const Shape& b = cst.shape();
    if (a.size() != 4 || b.size() != 4 || a[0] != b[0] || a[1] != b[1] || a[3] != b[3]) {
        throw DimensionError("append_cst: base " + shape_str(a) + " and cst " + shape_str(b) + " disagree");
    }
    return concat(std::vector<Var<T>>{base, cst}, 2);
}

template Var<float> append_cst(const Var<float>&, const Var<float>&);
template Var<double> append_cst(const Var<double>&, const Var<double>&);

template class ChannelMixer<float>;
template class ChannelMixer<double>;

}  // namespace mrt
