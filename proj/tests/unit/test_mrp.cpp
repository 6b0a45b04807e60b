#include <numeric>

#include "doctest.h"
#include "mrt/errors.hpp"
#include "mrt/mrp.hpp"
#include "mrt/patch_plan.hpp"
#include "test_util.hpp"

using namespace mrt;
using testutil::max_abs_diff;

TEST_CASE("patch plan examples") {
    CHECK(make_patch_plan(28, 8).lengths == std::vector<std::size_t>{4, 4, 4, 4, 3, 3, 3, 3});
    CHECK(make_patch_plan(32, 4).lengths == std::vector<std::size_t>{8, 8, 8, 8});
    CHECK(make_patch_plan(5, 1).lengths == std::vector<std::size_t>{5});
    CHECK(make_patch_plan(28, 8).offsets == std::vector<std::size_t>{0, 4, 8, 12, 16, 19, 22, 25});
    CHECK_THROWS_AS(make_patch_plan(3, 4), ConfigError);
    CHECK_THROWS_AS(make_patch_plan(3, 0), ConfigError);
}

TEST_CASE("patch plan invariants hold over a grid") {
    for (std::size_t h = 1; h <= 64; ++h) {
        for (std::size_t k = 1; k <= h; ++k) {
            const auto p = make_patch_plan(h, k);
            REQUIRE(p.lengths.size() == k);
            CHECK(std::accumulate(p.lengths.begin(), p.lengths.end(), std::size_t{0}) == h);
            const std::size_t b = h / k;
            std::size_t longer = 0;
            for (std::size_t i = 0; i < k; ++i) {
                CHECK((p.lengths[i] == b || p.lengths[i] == b + 1));
                if (p.lengths[i] == b + 1) {
                    CHECK(i == longer);  // longer patches come first
                    ++longer;
                }
            }
            CHECK(longer == h - b * k);
            // Reconstruction through the padded and truncating indices.
            const auto pad = left_padded_index(p);
            CHECK(pad.size() == k * (b + 1));
            const auto trunc = truncating_index(p);
            std::vector<std::ptrdiff_t> back;
            // Left padding shifts real values right within each row; undo it per row.
            for (std::size_t i = 0; i < k; ++i) {
                const std::size_t skip = b + 1 - p.lengths[i];
                for (std::size_t j = 0; j < p.lengths[i]; ++j) back.push_back(pad[i * (b + 1) + skip + j]);
            }
            std::vector<std::ptrdiff_t> expect(h);
            std::iota(expect.begin(), expect.end(), 0);
            CHECK(back == expect);
            CHECK(trunc.size() == h);
        }
    }
}

TEST_CASE("resolution sets must be ascending and distinct") {
    CHECK_NOTHROW(check_resolutions({1, 2, 4}));
    CHECK_THROWS_AS(check_resolutions({}), ConfigError);
    CHECK_THROWS_AS(check_resolutions({2, 1}), ConfigError);
    CHECK_THROWS_AS(check_resolutions({1, 1}), ConfigError);
    CHECK_THROWS_AS(check_resolutions({0, 1}), ConfigError);
}

TEST_CASE("mrp: token count for the paper resolution set") {
    ParameterStore<double> store;
    Rng rng(0);
    MrpTokenizer<double> mrp(store, "mrp", {1, 2, 3, 4, 6, 8}, 32, 64, rng);
    CHECK(mrp.n_tokens() == 24);
    auto out = mrp(Var<double>(testutil::randn({2, 3, 32}, 1)));
    CHECK(out.shape() == Shape{2, 3, 24, 64});
    CHECK_THROWS_AS(MrpTokenizer<double>(store, "x", {1, 64}, 32, 8, rng), ConfigError);
    CHECK_THROWS_AS(mrp(Var<double>(Tensor<double>({1, 1, 31}))), DimensionError);
}

TEST_CASE("mrp: zero input yields each resolution's bias") {
    ParameterStore<double> store;
    Rng rng(0);
    MrpTokenizer<double> mrp(store, "mrp", {1, 2, 4}, 12, 6, rng);
    for (auto k : {1, 2, 4}) {
        auto& b = store.get("mrp.k" + std::to_string(k) + ".bias").mutable_value();
        for (std::size_t j = 0; j < 6; ++j) b[j] = 0.1 * k + 0.01 * static_cast<double>(j);
    }
    auto out = mrp(Var<double>(Tensor<double>({2, 2, 12})));
    const std::vector<std::size_t> ks{1, 2, 4, 4, 4, 4, 4};
    std::size_t tok = 0;
    for (std::size_t k : {1, 2, 4}) {
        for (std::size_t p = 0; p < k; ++p, ++tok) {
            for (std::size_t r = 0; r < 4; ++r) {
                for (std::size_t j = 0; j < 6; ++j) {
                    CHECK(out.value()[(r * 7 + tok) * 6 + j] == 0.1 * static_cast<double>(k) + 0.01 * static_cast<double>(j));
                }
            }
        }
    }
}

TEST_CASE("mrp: brute-force oracle over padded patches") {
    ParameterStore<double> store;
    Rng rng(4);
    const std::size_t l = 11, d = 5;
    const std::vector<std::size_t> K{1, 3, 4};
    MrpTokenizer<double> mrp(store, "mrp", K, l, d, rng);
    const auto x = testutil::randn({2, 2, l}, 9);
    auto out = mrp(Var<double>(x));
    std::size_t tok = 0;
    for (auto k : K) {
        const std::size_t b = l / k, n_long = l - b * k;
        const auto& W = store.get("mrp.k" + std::to_string(k) + ".weight").value();
        const auto& bias = store.get("mrp.k" + std::to_string(k) + ".bias").value();
        std::size_t off = 0;
        for (std::size_t p = 0; p < k; ++p, ++tok) {
            const std::size_t len = p < n_long ? b + 1 : b;
            std::vector<double> patch(b + 1, 0.0);
            for (std::size_t r = 0; r < 4; ++r) {
                for (std::size_t j = 0; j < len; ++j) patch[b + 1 - len + j] = x[r * l + off + j];
                for (std::size_t e = 0; e < d; ++e) {
                    double s = bias[e];
                    for (std::size_t i = 0; i <= b; ++i) s += patch[i] * W[i * d + e];
                    CHECK(out.value()[(r * 8 + tok) * d + e] == doctest::Approx(s).epsilon(1e-12));
                }
            }
            off += len;
        }
    }
}

TEST_CASE("mrp: one input step moves at most |K| tokens") {
    ParameterStore<double> store;
    Rng rng(2);
    const std::vector<std::size_t> K{1, 2, 3, 4, 6, 8};
    MrpTokenizer<double> mrp(store, "mrp", K, 32, 8, rng);
    const auto x = testutil::randn({1, 1, 32}, 3);
    const auto base = mrp(Var<double>(x)).value();
    for (std::size_t t = 0; t < 32; ++t) {
        auto xp = x;
        xp[t] += 1.0;
        const auto moved = mrp(Var<double>(xp)).value();
        std::size_t changed = 0;
        for (std::size_t tok = 0; tok < 24; ++tok) {
            bool diff = false;
            for (std::size_t e = 0; e < 8; ++e) diff |= moved[tok * 8 + e] != base[tok * 8 + e];
            changed += diff;
        }
        CHECK(changed == K.size());
    }
}

TEST_CASE("mrp: channel permutation commutes with tokenization") {
    ParameterStore<double> store;
    Rng rng(2);
    MrpTokenizer<double> mrp(store, "mrp", {1, 2, 4}, 16, 4, rng);
    const auto x = testutil::randn({2, 3, 16}, 3);
    const auto out = mrp(Var<double>(x)).value();
    const std::vector<std::size_t> perm{2, 0, 1};
    Tensor<double> xp(x.shape());
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t t = 0; t < 16; ++t) xp[(b * 3 + c) * 16 + t] = x[(b * 3 + perm[c]) * 16 + t];
    const auto outp = mrp(Var<double>(xp)).value();
    const std::size_t per = 7 * 4;
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < per; ++i)
                CHECK(outp[(b * 3 + c) * per + i] == out[(b * 3 + perm[c]) * per + i]);
}

TEST_CASE("mrp: gradients") {
    ParameterStore<double> store;
    Rng rng(2);
    MrpTokenizer<double> mrp(store, "mrp", {1, 3}, 7, 4, rng);
    auto x = testutil::leaf({2, 1, 7}, 5);
    NamedVars params = testutil::trainable(store);
    params.emplace_back("x", x);
    const auto report = grad_check([&] { return testutil::probe(mrp(x)); }, params);
    INFO(report.to_string());
    CHECK(report.passed());
}
