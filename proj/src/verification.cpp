#include "mrt/verification.hpp"

#include <algorithm>

#include "mrt/errors.hpp"
#include "mrt/ops.hpp"
#include "mrt/rng.hpp"

namespace mrt {

namespace {

using D = double;

Tensor<D> random_tensor(Shape shape, Rng& rng) {
    Tensor<D> t(std::move(shape));
    for (auto& v : t.data()) v = rng.normal();
    return t;
}

Var<D> weighted_mean(const Var<D>& x, const Tensor<D>& w) { return mean_all(mul(x, Var<D>(w))); }

NamedVars trainable(const ParameterStore<D>& store) {
    NamedVars out;
    for (const auto& e : store.entries()) {
        if (e.trainable) out.emplace_back(e.name, e.var);
    }
    return out;
}

std::vector<std::size_t> scope_indices(const std::vector<VariableSchema>& tvk, VarScope scope) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < tvk.size(); ++i) {
        if (tvk[i].scope == scope) idx.push_back(i);
    }
    return idx;
}

std::vector<VariableSchema> pick(const std::vector<VariableSchema>& vars, const std::vector<std::size_t>& idx) {
    std::vector<VariableSchema> out;
    for (auto i : idx) out.push_back(vars[i]);
    return out;
}

Tensor<D> tvk_tensor(const SeriesBatch& b, const std::vector<std::size_t>& vars) {
    const std::size_t span = b.lookback + b.horizon;
    Tensor<D> out({b.batch, b.channels, span, vars.size()});
    for (std::size_t r = 0; r < b.batch * b.channels * span; ++r) {
        for (std::size_t i = 0; i < vars.size(); ++i) out[r * vars.size() + i] = b.tvk[r * b.n_tvk + vars[i]];
    }
    return out;
}

}  // namespace

ModelConfig toy_config() {
    ModelConfig c;
    c.K = {1, 2};
    c.lookback = 8;
    c.horizon = 4;
    c.channels = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.d_cross = 4;
    c.heads = 2;
    c.blocks = 1;
    c.n_tvk = 2;
    c.n_static = 2;
    c.n_cst = 2;
    return c;
}

Schema toy_schema() {
    Schema s;
    s.key = {"item"};
    s.variables = {
        {"sales_a", VarKind::numerical, 0, VarScope::specific, VarGroup::observed},
        {"sales_b", VarKind::numerical, 0, VarScope::specific, VarGroup::observed},
        {"price", VarKind::numerical, 0, VarScope::specific, VarGroup::tvk},
        {"promo", VarKind::categorical, 3, VarScope::global, VarGroup::tvk},
        {"hour", VarKind::numerical, 0, VarScope::global, VarGroup::tvk},
        {"group", VarKind::categorical, 3, VarScope::global, VarGroup::statics},
        {"kind", VarKind::categorical, 2, VarScope::specific, VarGroup::statics},
        {"size", VarKind::numerical, 0, VarScope::global, VarGroup::statics},
    };
    s.validate();
    return s;
}

SeriesBatch random_batch(const Schema& schema, const ModelConfig& config, std::size_t batch, std::uint64_t seed,
                         std::size_t pad_first) {
    Rng rng(seed);
    const auto tvk = schema.tvk();
    const auto sta = schema.statics();
    SeriesBatch b;
    b.batch = batch;
    b.channels = config.channels;
    b.lookback = config.lookback;
    b.horizon = config.horizon;
    b.n_tvk = tvk.size();
    b.n_static = sta.size();
    const std::size_t B = batch, C = config.channels, l = config.lookback, f = config.horizon, span = l + f;
    b.observed.resize(B * C * l);
    b.target.resize(B * C * f);
    b.tvk.resize(B * C * span * tvk.size());
    b.statics.resize(B * C * sta.size());
    b.pad_len.assign(B, 0);
    if (B > 0) b.pad_len[0] = pad_first;
    b.scale.assign(B * C, Scaler{});
    for (std::size_t s = 0; s < B; ++s) b.row_ids.push_back(s);

    auto draw = [&](const VariableSchema& v) {
        if (v.kind == VarKind::numerical) return rng.normal();
        if (rng.uniform() < 0.1) return v.missing_code();
        return static_cast<double>(rng.integer(0, static_cast<std::int64_t>(v.cardinality) - 1));
    };
    for (std::size_t s = 0; s < B; ++s) {
        std::vector<double> global_sta(sta.size());
        for (std::size_t v = 0; v < sta.size(); ++v) global_sta[v] = draw(sta[v]);
        std::vector<double> global_tvk(span * tvk.size());
        for (auto& x : global_tvk) x = 0.0;
        for (std::size_t t = 0; t < span; ++t)
            for (std::size_t v = 0; v < tvk.size(); ++v) global_tvk[t * tvk.size() + v] = draw(tvk[v]);
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t row = s * C + c;
            const double level = 3.0 + rng.uniform(0.0, 2.0);
            for (std::size_t t = 0; t < l; ++t) {
                b.observed[row * l + t] = t < b.pad_len[s] ? kNumericalPad : level + rng.normal();
            }
            for (std::size_t t = 0; t < f; ++t) b.target[row * f + t] = level + rng.normal();
            for (std::size_t v = 0; v < sta.size(); ++v) {
                b.statics[row * sta.size() + v] = sta[v].scope == VarScope::global ? global_sta[v] : draw(sta[v]);
            }
            for (std::size_t t = 0; t < span; ++t) {
                for (std::size_t v = 0; v < tvk.size(); ++v) {
                    double x = tvk[v].scope == VarScope::global ? global_tvk[t * tvk.size() + v] : draw(tvk[v]);
                    if (t < b.pad_len[s]) x = tvk[v].pad_value();
                    b.tvk[(row * span + t) * tvk.size() + v] = x;
                }
            }
        }
    }
    return b;
}

const std::vector<std::string>& grad_check_modules() {
    static const std::vector<std::string> names{"mrp",   "static",  "tvk.global", "tvk.specific",
                                                "mixer", "encoder", "head",       "model"};
    return names;
}

std::vector<ModuleGradReport> run_grad_checks(const ModelConfig& config, const Schema& schema,
                                              const std::vector<std::string>& modules,
                                              const GradCheckOptions& options, const GradTamper& tamper) {
    config.validate();
    for (const auto& m : modules) {
        if (std::find(grad_check_modules().begin(), grad_check_modules().end(), m) == grad_check_modules().end()) {
            throw ConfigError("gradcheck: unknown module '" + m + "'");
        }
    }
    Model<D> model(config, schema);
    if (model.parameter_count() > kGradCheckMaxParams) {
        throw ConfigError("gradcheck: model has " + std::to_string(model.parameter_count()) +
                          " parameters, the limit is " + std::to_string(kGradCheckMaxParams) +
                          "; shrink d_model, d_ff, blocks or K (see toy_config)");
    }
    const std::size_t B = 2, C = config.channels, l = config.lookback, d = config.d_model;
    const SeriesBatch batch = random_batch(schema, config, B, options.seed + 17, 1);
    const auto tvk = schema.tvk();
    const auto global_idx = scope_indices(tvk, VarScope::global);
    const auto specific_idx = scope_indices(tvk, VarScope::specific);
    Mode train_mode{true, nullptr};

    std::vector<ModuleGradReport> out;
    auto run = [&](const std::string& name, const std::function<Var<D>()>& f, const NamedVars& params) {
        std::function<void(const std::string&, Tensor<D>&)> t;
        if (tamper) t = [&](const std::string& entry, Tensor<D>& g) { tamper(name, entry, g); };
        out.push_back({name, grad_check(f, params, options, t)});
    };

    for (const auto& m : modules) {
        Rng rng(Rng::mix(options.seed, m));
        ParameterStore<D> store;
        if (m == "mrp") {
            MrpTokenizer<D> mrp(store, "mrp", config.K, l, d, rng);
            Var<D> x(random_tensor({B, C, l}, rng), true);
            const Tensor<D> w = random_tensor({B, C, mrp.n_tokens(), d}, rng);
            auto params = trainable(store);
            params.emplace_back("input", x);
            run(m, [&] { return weighted_mean(mrp(x), w); }, params);
        } else if (m == "static") {
            StaticTokenizer<D> st(store, "static", schema.statics(), d, config.n_static, rng);
            Tensor<D> values({B, C, batch.n_static}, std::vector<D>(batch.statics.begin(), batch.statics.end()));
            const Tensor<D> w = random_tensor({B, C, st.n_tokens(), d}, rng);
            run(m, [&] { return weighted_mean(st(values), w); }, trainable(store));
        } else if (m == "tvk.global" || m == "tvk.specific") {
            const bool global = m == "tvk.global";
            const auto& idx = global ? global_idx : specific_idx;
            if (idx.empty()) {
                out.push_back({m, GradCheckReport{options.tolerance, {}}});
                continue;
            }
            TvkTokenizer<D> tk(store, m, pick(tvk, idx), global, config.K, l + config.horizon, d, config.n_tvk, rng);
            const Tensor<D> values = tvk_tensor(batch, idx);
            const Tensor<D> w = random_tensor({B, C, tk.n_tokens(), d}, rng);
            run(m, [&] { return weighted_mean(tk(values), w); }, trainable(store));
        } else if (m == "mixer") {
            const std::size_t n_base = 5;
            ChannelMixer<D> mx(store, "mixer", C, n_base, config.n_cst, d, config.d_cross, 0.0, config.norm, rng);
            Var<D> x(random_tensor({B, C, n_base, d}, rng), true);
            const Tensor<D> w = random_tensor({B, C, config.n_cst, d}, rng);
            auto params = trainable(store);
            params.emplace_back("input", x);
            run(m, [&] { return weighted_mean(mx(x, train_mode), w); }, params);
        } else if (m == "encoder") {
            const std::size_t n = 5;
            Encoder<D> enc(store, "encoder", n, d, config.d_ff, config.heads, config.blocks, 0.0, config.norm, rng);
            Var<D> x(random_tensor({B, C, n, d}, rng), true);
            const Tensor<D> w = random_tensor({B, C, n, d}, rng);
            auto params = trainable(store);
            params.emplace_back("input", x);
            run(m, [&] { return weighted_mean(enc(x, train_mode), w); }, params);
        } else if (m == "head") {
            ReverseSplitter<D> head(store, "head", config.K, config.horizon, d, rng);
            TokenLayout layout;
            std::size_t n_mrp = 0;
            for (auto k : config.K) n_mrp += k;
            layout.append(TokenFamily::mrp, n_mrp);
            layout.append(TokenFamily::cst, 2);
            Var<D> x(random_tensor({B, C, layout.total(), d}, rng), true);
            const Tensor<D> w = random_tensor({B, C, config.horizon}, rng);
            auto params = trainable(store);
            params.emplace_back("input", x);
            run(m, [&] { return weighted_mean(head(x, layout), w); }, params);
        } else if (m == "model") {
            auto loss = [&] {
                auto r = model.forward(batch, train_mode);
                return rmse(r.pred_norm, Var<D>(r.target_norm));
            };
            run(m, loss, trainable(model.store()));
            Tensor<D> obs({B, C, l}, std::vector<D>(batch.observed.begin(), batch.observed.end()));
            Var<D> x(obs, true);
            const Tensor<D> w = random_tensor({B, C, config.horizon}, rng);
            run("model.input", [&] { return weighted_mean(model.forward(x, batch, train_mode).pred, w); }, {{"observed", x}});
        }
    }
    return out;
}

}  // namespace mrt
