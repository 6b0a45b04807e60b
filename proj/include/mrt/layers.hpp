#pragma once

#include <cstddef>
#include <string>

#include "mrt/ops.hpp"
#include "mrt/parameter_store.hpp"
#include "mrt/rng.hpp"

namespace mrt {

// Forward-pass mode. `rng` drives dropout and may be null when dropout is off
// or the mode is eval.
struct Mode {
    bool train = false;
    Rng* rng = nullptr;
};

enum class NormFlavor { batch, layer };

const char* to_string(NormFlavor f);
NormFlavor norm_flavor_from_string(const std::string& s);

template <typename T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor<T> t(std::move(shape));
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-a, a));
    return t;
}

template <typename T>
Tensor<T> normal_init(Shape shape, double stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.storage()) v = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

template <typename T>
Var<T> apply_dropout(const Var<T>& x, double p, const Mode& mode) {
    if (!mode.train || p == 0.0) return x;
    if (!mode.rng) {
        throw ConfigError("dropout in train mode needs a random stream");
    }
    return dropout(x, p, *mode.rng, true);
}

/// Affine map over the last dimension with registered weight [in,out] and
/// optional bias [out].
template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, bool bias, Rng& rng)
        : in_(in), out_(out) {
        w_ = store.add(name + ".weight", uniform_init<T>({in, out}, in, rng));
        if (bias) b_ = store.add(name + ".bias", Tensor<T>({out}));
    }

    Var<T> operator()(const Var<T>& x) const { return linear(x, w_, b_); }

    const Var<T>& weight() const { return w_; }
    const Var<T>& bias() const { return b_; }
    std::size_t in() const { return in_; }
    std::size_t out() const { return out_; }

private:
    std::size_t in_ = 0;
    std::size_t out_ = 0;
    Var<T> w_;
    Var<T> b_;
};

/// Normalization layer. Batch flavor normalizes each coordinate of the
/// trailing dims across the leading `batch_axes` dims and keeps running
/// statistics as store buffers; layer flavor normalizes over the last dim.
template <typename T>
class Norm {
public:
    Norm() = default;
    Norm(ParameterStore<T>& store, const std::string& name, NormFlavor flavor, std::size_t features)
        : flavor_(flavor), features_(features) {
        gamma_ = store.add(name + ".gamma", Tensor<T>({features}, T{1}));
        beta_ = store.add(name + ".beta", Tensor<T>({features}));
        if (flavor == NormFlavor::batch) {
            mean_ = store.add(name + ".running_mean", Tensor<T>({features}), false);
            var_ = store.add(name + ".running_var", Tensor<T>({features}, T{1}), false);
        }
    }

    Var<T> operator()(const Var<T>& x, std::size_t batch_axes, bool train) const {
        if (flavor_ == NormFlavor::layer) {
            return layer_norm(x, gamma_, beta_);
        }
        Var<T> m = mean_;
        Var<T> v = var_;
        return batch_norm(x, gamma_, beta_, m.mutable_value(), v.mutable_value(), batch_axes, train);
    }

    NormFlavor flavor() const { return flavor_; }

private:
    NormFlavor flavor_ = NormFlavor::layer;
    std::size_t features_ = 0;
    Var<T> gamma_;
    Var<T> beta_;
    Var<T> mean_;
    Var<T> var_;
};

}  // namespace mrt
