#include "mrt/patch_plan.hpp"

#include <string>

#include "mrt/errors.hpp"

namespace mrt {

PatchPlan make_patch_plan(std::size_t h, std::size_t k) {
    if (k == 0) {
        throw ConfigError("patch plan: resolution must be >= 1");
    }
    if (k > h) {
        throw ConfigError("patch plan: resolution too dense, k=" + std::to_string(k) + " exceeds window length h=" +
                          std::to_string(h));
    }
    PatchPlan p;
    p.h = h;
    p.k = k;
    const std::size_t b = h / k;
    const std::size_t n_long = h - b * k;
    std::size_t off = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t len = i < n_long ? b + 1 : b;
        p.lengths.push_back(len);
        p.offsets.push_back(off);
        off += len;
    }
    return p;
}

std::vector<std::ptrdiff_t> left_padded_index(const PatchPlan& plan) {
    const std::size_t w = plan.base() + 1;
    std::vector<std::ptrdiff_t> idx;
    idx.reserve(plan.k * w);
    for (std::size_t i = 0; i < plan.k; ++i) {
        for (std::size_t j = plan.lengths[i]; j < w; ++j) idx.push_back(-1);
        for (std::size_t j = 0; j < plan.lengths[i]; ++j) {
            idx.push_back(static_cast<std::ptrdiff_t>(plan.offsets[i] + j));
        }
    }
    return idx;
}

std::vector<std::ptrdiff_t> truncating_index(const PatchPlan& plan) {
    const std::size_t w = plan.base() + 1;
    std::vector<std::ptrdiff_t> idx;
    idx.reserve(plan.h);
    for (std::size_t i = 0; i < plan.k; ++i) {
        for (std::size_t j = 0; j < plan.lengths[i]; ++j) {
            idx.push_back(static_cast<std::ptrdiff_t>(i * w + j));
        }
    }
    return idx;
}

void check_resolutions(const std::vector<std::size_t>& K) {
    if (K.empty()) {
        throw ConfigError("resolution set is empty");
    }
    for (std::size_t i = 0; i < K.size(); ++i) {
        if (K[i] == 0) {
            throw ConfigError("resolution set contains 0");
        }
        if (i > 0 && K[i] <= K[i - 1]) {
            throw ConfigError("resolution set must be strictly ascending");
        }
    }
}

}  // namespace mrt
