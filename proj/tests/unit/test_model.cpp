#include "doctest.h"
#include "mrt/errors.hpp"
#include "mrt/model.hpp"
#include "mrt/synthetic.hpp"
#include "mrt/verification.hpp"
#include "test_util.hpp"

using namespace mrt;
using testutil::max_abs_diff;

namespace {

std::vector<double> permute_block(const std::vector<double>& v, std::size_t B, std::size_t C,
                                  const std::vector<std::size_t>& perm) {
    const std::size_t inner = v.size() / (B * C);
    std::vector<double> out(v.size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < inner; ++i) out[(b * C + c) * inner + i] = v[(b * C + perm[c]) * inner + i];
    return out;
}

SeriesBatch permute_channels(const SeriesBatch& in, const std::vector<std::size_t>& perm) {
    SeriesBatch b = in;
    b.observed = permute_block(in.observed, in.batch, in.channels, perm);
    b.tvk = permute_block(in.tvk, in.batch, in.channels, perm);
    b.statics = permute_block(in.statics, in.batch, in.channels, perm);
    b.target = permute_block(in.target, in.batch, in.channels, perm);
    return b;
}

}  // namespace

TEST_CASE("model: paper configuration token layout") {
    const Model<float> model(ModelConfig{}, synthetic_schema({}));
    const auto& l = model.layout();
    CHECK(l.total() == 52);
    CHECK(l.count(TokenFamily::mrp) == 24);
    CHECK(l.count(TokenFamily::st) == 4);
    CHECK(l.count(TokenFamily::tvkt_global) + l.count(TokenFamily::tvkt_specific) == 16);
    CHECK(l.count(TokenFamily::cst) == 8);
    CHECK(l.span(TokenFamily::cst).start == 44);
    CHECK_NOTHROW(model.audit());
    std::size_t sum = 0;
    for (const auto& [name, n] : model.module_parameter_counts()) sum += n;
    CHECK(sum == model.parameter_count());
    const auto hc = head_param_count(ModelConfig{}.K, 16, 64);
    CHECK(model.store().parameter_count("head.") == hc.weights + hc.biases);
}

TEST_CASE("model: configuration validation") {
    const auto schema = toy_schema();
    auto bad = [&](auto edit) {
        auto c = toy_config();
        edit(c);
        CHECK_THROWS_AS(Model<double>(c, schema), ConfigError);
    };
    bad([](ModelConfig& c) { c.heads = 3; });
    bad([](ModelConfig& c) { c.K = {1, 8}; c.horizon = 4; });
    bad([](ModelConfig& c) { c.K = {1, 16}; });
    bad([](ModelConfig& c) { c.K = {2, 1}; });
    bad([](ModelConfig& c) { c.channels = 3; });
    bad([](ModelConfig& c) { c.blocks = 0; });
    bad([](ModelConfig& c) { c.dropout = 1.0; });
    nlohmann::json j = toy_config();
    CHECK(j.get<ModelConfig>() == toy_config());
    j["bogus"] = 1;
    CHECK_THROWS(j.get<ModelConfig>());
}

TEST_CASE("model: same seed gives the same parameters and forecasts") {
    const auto schema = toy_schema();
    const auto batch = random_batch(schema, toy_config(), 4, 3);
    const Model<double> a(toy_config(), schema), b(toy_config(), schema);
    CHECK(a.forward(batch, {}).pred.value() == b.forward(batch, {}).pred.value());
    auto c2 = toy_config();
    c2.seed = 1;
    const Model<double> c(c2, schema);
    CHECK(max_abs_diff(a.forward(batch, {}).pred.value(), c.forward(batch, {}).pred.value()) > 0.0);
}

TEST_CASE("model: MRP-only arm ignores auxiliary inputs") {
    const auto schema = toy_schema();
    auto cfg = toy_config();
    cfg.include_tvkt = false;
    cfg.include_static = false;
    cfg.include_cst = false;
    const Model<double> model(cfg, schema);
    CHECK(model.layout().total() == 3);
    const auto batch = random_batch(schema, cfg, 3, 1);
    const auto other = random_batch(schema, cfg, 3, 2);
    auto mixed = batch;
    mixed.tvk = other.tvk;
    mixed.statics = other.statics;
    CHECK(model.forward(batch, {}).pred.value() == model.forward(mixed, {}).pred.value());
    CHECK(model.store().parameter_count("tvk") == 0);
    CHECK(model.store().parameter_count("mixer") == 0);
}

TEST_CASE("model: a zero head forecasts the last observed value") {
    const auto schema = toy_schema();
    Model<double> model(toy_config(), schema);
    for (auto& e : model.store().entries())
        if (e.name.rfind("head.", 0) == 0) e.var.mutable_value().fill(0.0);
    const auto batch = random_batch(schema, toy_config(), 3, 4, 2);
    const auto r = model.forward(batch, {});
    const std::size_t l = 8, f = 4;
    for (std::size_t row = 0; row < 6; ++row)
        for (std::size_t t = 0; t < f; ++t) CHECK(r.pred.value()[row * f + t] == batch.observed[row * l + l - 1]);
}

TEST_CASE("model: channel permutation equivariance without cross-series tokens") {
    const auto schema = toy_schema();
    auto cfg = toy_config();
    cfg.include_cst = false;
    Model<double> model(cfg, schema);
    const auto batch = random_batch(schema, cfg, 4, 5);
    const auto swapped = permute_channels(batch, {1, 0});
    const auto a = model.forward(batch, {}).pred.value();
    const auto b = model.forward(swapped, {}).pred.value();
    const auto pa = permute_block(a.storage(), 4, 2, {1, 0});
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(b[i] == doctest::Approx(pa[i]).epsilon(1e-12));
}

TEST_CASE("model: forecasts follow affine changes of the input") {
    const auto schema = toy_schema();
    const Model<double> model(toy_config(), schema);
    const auto batch = random_batch(schema, toy_config(), 4, 6);
    auto shifted = batch;
    for (auto& v : shifted.observed) v = 3.0 * v + 7.0;
    for (auto& v : shifted.target) v = 3.0 * v + 7.0;
    const auto a = model.forward(batch, {});
    const auto b = model.forward(shifted, {});
    for (std::size_t i = 0; i < a.pred.size(); ++i) {
        CHECK(b.pred.value()[i] == doctest::Approx(3.0 * a.pred.value()[i] + 7.0).epsilon(1e-9));
        CHECK(b.pred_norm.value()[i] == doctest::Approx(a.pred_norm.value()[i]).epsilon(1e-9));
        CHECK(b.target_norm[i] == doctest::Approx(a.target_norm[i]).epsilon(1e-9));
    }
}

TEST_CASE("model: encoder override sees the full token matrix") {
    const auto schema = toy_schema();
    Model<double> model(toy_config(), schema);
    std::size_t seen = 0;
    model.set_encoder_override([&](const Var<double>& x) {
        seen = x.shape()[2];
        return x;
    });
    const auto batch = random_batch(schema, toy_config(), 2, 7);
    model.forward(batch, {});
    CHECK(seen == model.layout().total());
}

TEST_CASE("model: batch-norm training rejects single-sample batches, all-pad samples are rejected") {
    const auto schema = toy_schema();
    const Model<double> model(toy_config(), schema);
    Rng rng(0);
    CHECK_THROWS_AS(model.forward(random_batch(schema, toy_config(), 1, 1), Mode{true, &rng}), StatisticsError);
    CHECK_NOTHROW(model.forward(random_batch(schema, toy_config(), 1, 1), Mode{}));
    auto b = random_batch(schema, toy_config(), 2, 1);
    b.pad_len[0] = 8;
    CHECK_THROWS_AS(model.forward(b, Mode{}), DimensionError);
}

TEST_CASE("model: checkpoint round trip reproduces eval forecasts") {
    const auto schema = toy_schema();
    Model<double> model(toy_config(), schema);
    Rng rng(0);
    const auto train_batch = random_batch(schema, toy_config(), 4, 8);
    model.forward(train_batch, Mode{true, &rng});  // moves running statistics
    testutil::TempDir dir("ckpt");
    model.save(dir.path);
    const auto loaded = Model<double>::load(dir.path);
    CHECK(loaded.config() == model.config());
    CHECK(loaded.schema() == model.schema());
    CHECK(loaded.layout() == model.layout());
    const auto batch = random_batch(schema, toy_config(), 3, 9);
    CHECK(loaded.forward(batch, {}).pred.value() == model.forward(batch, {}).pred.value());
}

TEST_CASE("model: float and double builds agree") {
    const auto schema = toy_schema();
    const Model<double> d(toy_config(), schema);
    const Model<float> f(toy_config(), schema);
    const auto batch = random_batch(schema, toy_config(), 3, 10);
    const auto pd = d.forward(batch, {}).pred.value();
    const auto pf = f.forward(batch, {}).pred.value();
    for (std::size_t i = 0; i < pd.size(); ++i) CHECK(pf[i] == doctest::Approx(pd[i]).epsilon(1e-4));
}
