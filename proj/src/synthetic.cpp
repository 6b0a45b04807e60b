#include "mrt/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "mrt/errors.hpp"
#include "mrt/rng.hpp"

namespace mrt {

void SynthParams::validate() const {
    auto fail = [](const std::string& field, const std::string& msg) { throw ConfigError("synth." + field + ": " + msg); };
    if (length < 2) fail("length", "must be >= 2");
    if (period_seconds <= 0) fail("period_seconds", "must be positive");
    if (discounts.empty()) fail("discounts", "must not be empty");
    for (double d : discounts) {
        if (!(d > 0.0 && d < 1.0)) fail("discounts", "each discount must lie in (0, 1)");
    }
    if (!(decay >= 0.0 && decay < 1.0)) fail("decay", "must lie in [0, 1)");
    if (!(dampening >= 0.0 && dampening <= 1.0)) fail("dampening", "must lie in [0, 1]");
    if (noise < 0.0) fail("noise", "must be >= 0");
    if (n_due_dates == 0 || n_products == 0 || n_stores == 0) fail("n_due_dates", "key ranges must be non-empty");
    if (n_product_groups == 0 || n_store_types == 0) fail("n_product_groups", "group counts must be >= 1");
    if (first_reduction_min >= length) fail("first_reduction_min", "must be below length");
    if (min_gap == 0) fail("min_gap", "must be >= 1");
}

void to_json(nlohmann::json& j, const SynthParams& p) {
    j = {{"length", p.length},
         {"period_seconds", p.period_seconds},
         {"base_demand", p.base_demand},
         {"level_spread", p.level_spread},
         {"spike_gain", p.spike_gain},
         {"decay", p.decay},
         {"dampening", p.dampening},
         {"cannibalization", p.cannibalization},
         {"noise", p.noise},
         {"discounts", p.discounts},
         {"max_reductions", p.max_reductions},
         {"min_gap", p.min_gap},
         {"first_reduction_min", p.first_reduction_min},
         {"n_due_dates", p.n_due_dates},
         {"n_products", p.n_products},
         {"n_stores", p.n_stores},
         {"n_product_groups", p.n_product_groups},
         {"n_store_types", p.n_store_types}};
}

void from_json(const nlohmann::json& j, SynthParams& p) {
    nlohmann::json defaults = SynthParams{};
    for (const auto& [k, v] : j.items()) {
        if (!defaults.contains(k)) throw ConfigError("synth." + k + ": unknown field");
    }
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(field);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(std::string("synth.") + key + ": wrong type");
        }
    };
    get("length", p.length);
    get("period_seconds", p.period_seconds);
    get("base_demand", p.base_demand);
    get("level_spread", p.level_spread);
    get("spike_gain", p.spike_gain);
    get("decay", p.decay);
    get("dampening", p.dampening);
    get("cannibalization", p.cannibalization);
    get("noise", p.noise);
    get("discounts", p.discounts);
    get("max_reductions", p.max_reductions);
    get("min_gap", p.min_gap);
    get("first_reduction_min", p.first_reduction_min);
    get("n_due_dates", p.n_due_dates);
    get("n_products", p.n_products);
    get("n_stores", p.n_stores);
    get("n_product_groups", p.n_product_groups);
    get("n_store_types", p.n_store_types);
}

Schema synthetic_schema(const SynthParams& p) {
    Schema s;
    s.key = {"product", "store", "due_date"};
    s.split_key = "due_date";
    s.group_key = {"product_group", "store_type"};
    auto var = [](std::string name, VarKind kind, std::size_t card, VarScope scope, VarGroup group) {
        VariableSchema v;
        v.name = std::move(name);
        v.kind = kind;
        v.cardinality = card;
        v.scope = scope;
        v.group = group;
        return v;
    };
    using K = VarKind;
    using S = VarScope;
    using G = VarGroup;
    s.variables = {
        var("sales_full", K::numerical, 0, S::specific, G::observed),
        var("sales_reduced", K::numerical, 0, S::specific, G::observed),
        var("price", K::numerical, 0, S::specific, G::tvk),
        var("reduction_count", K::numerical, 0, S::global, G::tvk),
        var("hour", K::numerical, 0, S::global, G::tvk),
        var("day_of_week", K::categorical, 7, S::global, G::tvk),
        var("product_group", K::categorical, p.n_product_groups, S::global, G::statics),
        var("store_type", K::categorical, p.n_store_types, S::global, G::statics),
        var("channel_kind", K::categorical, 2, S::specific, G::statics),
        var("stock", K::numerical, 0, S::global, G::statics),
    };
    s.validate();
    return s;
}

double synthetic_spike(const SynthParams& p, const SynthTruth& truth, std::size_t t) {
    double y = 0.0;
    for (std::size_t j = 0; j < truth.reduction_steps.size(); ++j) {
        const std::size_t tau = truth.reduction_steps[j];
        if (t < tau) continue;
        y += truth.level * p.spike_gain * truth.reduction_discounts[j] * std::pow(p.dampening, static_cast<double>(j)) *
             std::pow(p.decay, static_cast<double>(t - tau));
    }
    return y;
}

namespace {

double discount_at(const SynthTruth& truth, std::size_t t) {
    double d = 0.0;
    for (std::size_t j = 0; j < truth.reduction_steps.size(); ++j) {
        if (truth.reduction_steps[j] <= t) d = truth.reduction_discounts[j];
    }
    return d;
}

std::size_t count_at(const SynthTruth& truth, std::size_t t) {
    return static_cast<std::size_t>(
        std::count_if(truth.reduction_steps.begin(), truth.reduction_steps.end(), [t](std::size_t s) { return s <= t; }));
}

}  // namespace

SynthDataset generate_synthetic_markdown(std::size_t n_series, std::uint64_t seed, const SynthParams& p) {
    p.validate();
    SynthDataset out;
    out.data.schema = synthetic_schema(p);
    const Schema& schema = out.data.schema;
    Rng rng(seed);
    const Instant epoch = parse_iso8601("2024-01-01T00:00:00Z");
    const std::int64_t day = 86400;
    for (std::size_t i = 0; i < n_series; ++i) {
        const auto product = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(p.n_products) - 1));
        const auto store = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(p.n_stores) - 1));
        const std::size_t due = i % p.n_due_dates;
        const std::size_t group = product % p.n_product_groups;
        const std::size_t stype = store % p.n_store_types;

        SynthTruth truth;
        truth.level = std::exp(p.level_spread * rng.normal());
        const auto n_red = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(std::max<std::size_t>(p.max_reductions, 1))));
        std::size_t t = p.first_reduction_min;
        std::vector<double> ds;
        for (std::size_t j = 0; j < n_red && t < p.length; ++j) {
            const std::size_t room = p.length - t;
            const std::size_t step = t + static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(std::min<std::size_t>(room - 1, 12))));
            truth.reduction_steps.push_back(step);
            ds.push_back(p.discounts[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(p.discounts.size()) - 1))]);
            t = step + p.min_gap;
        }
        // Markdowns only deepen.
        std::sort(ds.begin(), ds.end());
        truth.reduction_discounts = ds;

        const std::string id = "p" + std::to_string(product) + "_s" + std::to_string(store) + "_d" + std::to_string(due) +
                               "_" + std::to_string(i);
        RawSeries s = make_series(schema, id, p.length);
        const Instant due_time = epoch + static_cast<Instant>(due) * day;
        s.attributes = {{"product", std::to_string(product)},
                        {"store", std::to_string(store)},
                        {"due_date", format_iso8601(due_time).substr(0, 10)}};
        const Instant start = due_time - static_cast<Instant>(p.length) * p.period_seconds;
        const double stock = std::round(20.0 + 80.0 * rng.uniform());
        for (std::size_t c = 0; c < 2; ++c) {
            s.stat(c, 0) = static_cast<double>(group);
            s.stat(c, 1) = static_cast<double>(stype);
            s.stat(c, 2) = static_cast<double>(c);
            s.stat(c, 3) = stock;
        }
        for (std::size_t k = 0; k < p.length; ++k) {
            const Instant ts = start + static_cast<Instant>(k) * p.period_seconds;
            s.timestamps[k] = ts;
            const double d = discount_at(truth, k);
            const double full = truth.level * p.base_demand * (1.0 - p.cannibalization * p.spike_gain * d);
            const double reduced = synthetic_spike(p, truth, k);
            s.obs(k, 0) = full + p.noise * rng.normal();
            s.obs(k, 1) = reduced + p.noise * rng.normal();
            const std::int64_t secs = ((ts % day) + day) % day;
            const double hour = static_cast<double>(secs) / 3600.0;
            // 1970-01-01 was a Thursday; 0 = Monday.
            const auto dow = static_cast<double>(((ts - secs) / day + 3) % 7);
            for (std::size_t c = 0; c < 2; ++c) {
                s.tvk_at(k, c, 0) = c == 0 ? 1.0 : 1.0 - d;
                s.tvk_at(k, c, 1) = static_cast<double>(count_at(truth, k));
                s.tvk_at(k, c, 2) = hour;
                s.tvk_at(k, c, 3) = dow;
            }
        }
        out.data.series.push_back(std::move(s));
        out.truth.push_back(std::move(truth));
    }
    return out;
}

}  // namespace mrt
