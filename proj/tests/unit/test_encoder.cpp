#include "doctest.h"
#include "mrt/encoder.hpp"
#include "mrt/errors.hpp"
#include "test_util.hpp"

using namespace mrt;
using testutil::max_abs_diff;

namespace {

Tensor<double> permute_tokens(const Tensor<double>& x, const std::vector<std::size_t>& perm) {
    const auto& s = x.shape();
    const std::size_t N = s[0] * s[1], T = s[2], D = s[3];
    Tensor<double> out(s);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t d = 0; d < D; ++d) out[(n * T + t) * D + d] = x[(n * T + perm[t]) * D + d];
    return out;
}

}  // namespace

TEST_CASE("encoder: shape is preserved for any block count") {
    for (std::size_t blocks : {1, 2, 3}) {
        ParameterStore<double> store;
        Rng rng(1);
        Encoder<double> enc(store, "encoder", 6, 8, 16, 2, blocks, 0.0, NormFlavor::batch, rng);
        CHECK(enc.blocks() == blocks);
        auto out = enc(Var<double>(testutil::randn({3, 2, 6, 8}, 2)), Mode{true, &rng});
        CHECK(out.shape() == Shape{3, 2, 6, 8});
    }
}

TEST_CASE("encoder: zeroed attention and feed-forward weights leave the norm path") {
    ParameterStore<double> store;
    Rng rng(1);
    Encoder<double> enc(store, "encoder", 4, 8, 16, 2, 1, 0.0, NormFlavor::layer, rng);
    for (auto& e : store.entries()) {
        if (e.name.find(".attn.") != std::string::npos || e.name.find(".ff") != std::string::npos) {
            e.var.mutable_value().fill(0.0);
        }
    }
    const auto x = testutil::randn({2, 1, 4, 8}, 3);
    auto out = enc(Var<double>(x), Mode{}).value();
    // Oracle: layer norm (unit gamma, zero beta) applied twice to x + pos.
    const auto& pos = enc.positional_bias().value();
    for (std::size_t r = 0; r < 8; ++r) {
        std::vector<double> v(8);
        for (std::size_t d = 0; d < 8; ++d) v[d] = x[r * 8 + d] + pos[(r % 4) * 8 + d];
        for (int pass = 0; pass < 2; ++pass) {
            double m = 0.0, var = 0.0;
            for (double a : v) m += a;
            m /= 8;
            for (double a : v) var += (a - m) * (a - m);
            var /= 8;
            for (double& a : v) a = (a - m) / std::sqrt(var + 1e-5);
        }
        for (std::size_t d = 0; d < 8; ++d) CHECK(out[r * 8 + d] == doctest::Approx(v[d]).epsilon(1e-9));
    }
}

TEST_CASE("encoder: token permutation equivariance without positional bias") {
    ParameterStore<double> store;
    Rng rng(1);
    Encoder<double> enc(store, "encoder", 5, 8, 16, 4, 2, 0.0, NormFlavor::layer, rng);
    store.get("encoder.pos_bias").mutable_value().fill(0.0);
    const auto x = testutil::randn({2, 2, 5, 8}, 4);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    const auto out = enc(Var<double>(x), Mode{}).value();
    const auto outp = enc(Var<double>(permute_tokens(x, perm)), Mode{}).value();
    CHECK(max_abs_diff(outp, permute_tokens(out, perm)) < 1e-12);
}

TEST_CASE("encoder: eval passes are bit-identical and token counts are checked") {
    ParameterStore<double> store;
    Rng rng(1);
    Encoder<double> enc(store, "encoder", 4, 8, 16, 2, 2, 0.1, NormFlavor::batch, rng);
    const auto x = Var<double>(testutil::randn({3, 2, 4, 8}, 5));
    enc(x, Mode{true, &rng});
    const auto a = enc(x, Mode{}).value();
    const auto b = enc(x, Mode{}).value();
    CHECK(a == b);
    CHECK_THROWS_AS(enc(Var<double>(testutil::randn({3, 2, 5, 8}, 5)), Mode{}), ConfigError);
    CHECK_THROWS_AS(Encoder<double>(store, "e2", 4, 8, 16, 3, 1, 0.0, NormFlavor::batch, rng), ConfigError);
    CHECK_THROWS_AS(Encoder<double>(store, "e3", 4, 8, 16, 2, 0, 0.0, NormFlavor::batch, rng), ConfigError);
}

TEST_CASE("encoder: gradients on a two-block, four-token configuration") {
    for (auto flavor : {NormFlavor::batch, NormFlavor::layer}) {
        ParameterStore<double> store;
        Rng rng(1);
        Encoder<double> enc(store, "encoder", 4, 8, 16, 2, 2, 0.0, flavor, rng);
        auto x = testutil::leaf({2, 2, 4, 8}, 6);
        auto params = testutil::trainable(store);
        params.emplace_back("x", x);
        const auto w = Var<double>(testutil::randn({2, 2, 4, 8}, 7));
        const auto report = grad_check([&] { return mean_all(mul(enc(x, Mode{true, &rng}), w)); }, params);
        INFO(report.to_string());
        CHECK(report.passed());
    }
}
