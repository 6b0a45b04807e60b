#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "mrt/grad_check.hpp"
#include "mrt/ops.hpp"
#include "mrt/parameter_store.hpp"
#include "mrt/rng.hpp"

namespace testutil {

template <typename T = double>
mrt::Tensor<T> randn(mrt::Shape shape, std::uint64_t seed, double scale = 1.0) {
    mrt::Rng rng(seed);
    mrt::Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(rng.normal(0.0, scale));
    return t;
}

template <typename T = double>
mrt::Var<T> leaf(mrt::Shape shape, std::uint64_t seed, double scale = 1.0) {
    return mrt::Var<T>(randn<T>(std::move(shape), seed, scale), true);
}

// Scalar sum(x * w) for a fixed random w, so every output coordinate matters.
inline mrt::Var<double> probe(const mrt::Var<double>& x, std::uint64_t seed = 99) {
    return mrt::sum_all(mrt::mul(x, mrt::Var<double>(randn<double>(x.shape(), seed))));
}

// Trainable entries of `store`, optionally restricted to a name prefix.
inline mrt::NamedVars trainable(const mrt::ParameterStore<double>& store, const std::string& prefix = "") {
    mrt::NamedVars out;
    for (const auto& e : store.entries()) {
        if (e.trainable && e.name.rfind(prefix, 0) == 0) out.emplace_back(e.name, e.var);
    }
    return out;
}

template <typename T>
double max_abs_diff(const mrt::Tensor<T>& a, const mrt::Tensor<T>& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("mrt_test_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace testutil
