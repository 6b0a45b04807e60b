#pragma once

#include <cstddef>
#include <vector>

#include "mrt/parameter_store.hpp"

namespace mrt {

struct AdamOptions {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over every trainable entry of a store. Frozen indices are skipped.
template <typename T>
class Adam {
public:
    Adam(ParameterStore<T>& store, AdamOptions options);

    void step();
    std::size_t steps() const noexcept { return steps_; }
    const AdamOptions& options() const noexcept { return options_; }

private:
    ParameterStore<T>& store_;
    AdamOptions options_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t steps_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace mrt
