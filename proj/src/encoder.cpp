#include "mrt/encoder.hpp"

namespace mrt {

template <typename T>
SelfAttention<T>::SelfAttention(ParameterStore<T>& store, const std::string& prefix, std::size_t d_model,
                                std::size_t heads, Rng& rng)
    : heads_(heads) {
    if (heads == 0 || d_model % heads != 0) {
        throw ConfigError("attention: heads=" + std::to_string(heads) + " does not divide d_m=" +
                          std::to_string(d_model));
    }
    q_ = Linear<T>(store, prefix + ".q", d_model, d_model, true, rng);
    k_ = Linear<T>(store, prefix + ".k", d_model, d_model, true, rng);
    v_ = Linear<T>(store, prefix + ".v", d_model, d_model, true, rng);
    out_ = Linear<T>(store, prefix + ".out", d_model, d_model, true, rng);
}

template <typename T>
Var<T> SelfAttention<T>::operator()(const Var<T>& x, Tensor<T>* probs) const {
    return out_(attention(q_(x), k_(x), v_(x), heads_, probs));
}

template <typename T>
Encoder<T>::Encoder(ParameterStore<T>& store, const std::string& prefix, std::size_t n_tokens, std::size_t d_model,
                    std::size_t d_ff, std::size_t heads, std::size_t blocks, double dropout, NormFlavor norm,
                    Rng& rng)
    : n_tokens_(n_tokens), d_model_(d_model), dropout_(dropout) {
    if (blocks == 0) {
        throw ConfigError("encoder: blocks must be >= 1");
    }
    pos_ = store.add(prefix + ".pos_bias", normal_init<T>({1, 1, n_tokens, d_model}, 0.02, rng));
    const std::size_t features = norm == NormFlavor::batch ? n_tokens * d_model : d_model;
    for (std::size_t i = 0; i < blocks; ++i) {
        const std::string p = prefix + ".block" + std::to_string(i);
        Block b;
        b.attn = SelfAttention<T>(store, p + ".attn", d_model, heads, rng);
        b.norm1 = Norm<T>(store, p + ".norm1", norm, features);
        b.ff1 = Linear<T>(store, p + ".ff1", d_model, d_ff, true, rng);
        b.ff2 = Linear<T>(store, p + ".ff2", d_ff, d_model, true, rng);
        b.norm2 = Norm<T>(store, p + ".norm2", norm, features);
        blocks_.push_back(std::move(b));
    }
}

template <typename T>
Var<T> Encoder<T>::operator()(const Var<T>& tokens, const Mode& mode) const {
    const Shape& s = tokens.shape();
    if (s.size() != 4 || s[2] != n_tokens_ || s[3] != d_model_) {
        throw ConfigError("encoder: positional bias is for " + std::to_string(n_tokens_) + " tokens of width " +
                          std::to_string(d_model_) + ", got " + shape_str(s));
    }
    Var<T> x = reshape(add(tokens, pos_), {s[0] * s[1], s[2], s[3]});
    for (const auto& b : blocks_) {
        x = b.norm1(add(x, b.attn(x)), 1, mode.train);
        Var<T> f = b.ff2(apply_dropout(gelu(b.ff1(x)), dropout_, mode));
        x = b.norm2(add(x, f), 1, mode.train);
    }
    return reshape(x, s);
}

template class SelfAttention<float>;
template class SelfAttention<double>;
template class Encoder<float>;
template class Encoder<double>;

}  // namespace mrt
