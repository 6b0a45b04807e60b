#include "mrt/optimizer.hpp"

#include <cmath>

namespace mrt {

template <typename T>
Adam<T>::Adam(ParameterStore<T>& store, AdamOptions options) : store_(store), options_(options) {
    if (!(options_.learning_rate >= 0.0)) {
        throw ConfigError("learning rate must be non-negative");
    }
    for (const auto& e : store_.entries()) {
        m_.emplace_back(e.var.size(), 0.0);
        v_.emplace_back(e.var.size(), 0.0);
    }
}

template <typename T>
void Adam<T>::step() {
    ++steps_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    auto& entries = store_.entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
        auto& e = entries[p];
        if (!e.trainable || !e.var.has_grad()) continue;
        const Tensor<T> g = e.var.grad();
        auto& w = e.var.mutable_value();
        std::vector<bool> skip;
        if (!e.frozen.empty()) {
            skip.assign(w.size(), false);
            for (auto i : e.frozen) skip[i] = true;
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!skip.empty() && skip[i]) continue;
            const double gi = static_cast<double>(g[i]);
            m_[p][i] = b1 * m_[p][i] + (1.0 - b1) * gi;
            v_[p][i] = b2 * v_[p][i] + (1.0 - b2) * gi * gi;
            const double mhat = m_[p][i] / c1;
            const double vhat = v_[p][i] / c2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) -
                                  options_.learning_rate * mhat / (std::sqrt(vhat) + options_.eps));
        }
    }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace mrt
