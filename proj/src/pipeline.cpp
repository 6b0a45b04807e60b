#include "mrt/pipeline.hpp"

#include <cmath>

#include "mrt/errors.hpp"

namespace mrt {

RawSeries window_as_series(const WindowRow& row, const Schema& schema, std::size_t l, std::size_t f) {
    const std::size_t C = schema.channels();
    const std::size_t V = schema.tvk().size();
    const std::size_t Vs = schema.statics().size();
    const std::size_t n = l - row.pad_len + f;
    RawSeries s = make_series(schema, row.series_id, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t t = row.pad_len + j;  // position within the l+f window
        s.timestamps[j] = static_cast<Instant>(j);
        for (std::size_t c = 0; c < C; ++c) {
            s.obs(j, c) = t < l ? row.observed[c * l + t] : row.target[c * f + (t - l)];
            for (std::size_t v = 0; v < V; ++v) s.tvk_at(j, c, v) = row.tvk[(c * (l + f) + t) * V + v];
        }
    }
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t v = 0; v < Vs; ++v) s.stat(c, v) = row.statics[c * Vs + v];
    return s;
}

void scale_window(WindowRow& row, const Schema& schema, const ScalerMap& scalers) {
    const auto obs = schema.observed();
    const auto tvk = schema.tvk();
    const auto sta = schema.statics();
    const std::size_t C = obs.size();
    const std::size_t V = tvk.size();
    const std::size_t Vs = sta.size();
    const std::size_t l = row.observed.size() / C;
    const std::size_t f = row.target.size() / C;
    row.scale.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        const Scaler& sc = scalers.lookup(row.group, obs[c].name);
        row.scale[c] = sc;
        for (std::size_t t = row.pad_len; t < l; ++t) row.observed[c * l + t] = sc.apply(row.observed[c * l + t]);
        for (std::size_t t = 0; t < f; ++t) row.target[c * f + t] = sc.apply(row.target[c * f + t]);
        for (std::size_t t = row.pad_len; t < l + f; ++t) {
            for (std::size_t v = 0; v < V; ++v) {
                if (tvk[v].kind != VarKind::numerical) continue;
                double& x = row.tvk[(c * (l + f) + t) * V + v];
                if (!std::isnan(x)) x = scalers.lookup(row.group, tvk[v].name).apply(x);
            }
        }
        for (std::size_t v = 0; v < Vs; ++v) {
            if (sta[v].kind != VarKind::numerical) continue;
            double& x = row.statics[c * Vs + v];
            if (!std::isnan(x)) x = scalers.lookup(row.group, sta[v].name).apply(x);
        }
    }
}

PreparedData prepare_data(const Dataset& data, const PrepareOptions& o) {
    const std::size_t stride = o.stride ? o.stride : o.horizon;
    PreparedData out;
    out.schema = data.schema;
    SplitSpec spec = o.split;
    spec.split_key = data.schema.split_key;
    std::vector<WindowRow> rows;
    for (std::size_t i = 0; i < data.series.size(); ++i) {
        const auto& s = data.series[i];
        auto w = window_series(s, data.schema, o.lookback, o.horizon, stride, i);
        out.skipped += w.skipped;
        const std::string group = group_of(s, data.schema, data.schema.group_key);
        for (auto& r : w.rows) {
            r.group = group;
            rows.push_back(std::move(r));
        }
    }
    if (rows.empty()) {
        throw SplitError("no windows: every series is shorter than horizon + 1");
    }
    std::vector<std::string> keys;
    keys.reserve(rows.size());
    for (const auto& r : rows) keys.push_back(r.split_key);
    const auto split = make_splits(keys, spec);
    out.split_report = split_report(split, keys);
    out.split_report["skipped_series"] = out.skipped;

    std::vector<RawSeries> fit_set;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (split.part[i] != SplitPart::train) continue;
        RawSeries s = window_as_series(rows[i], data.schema, o.lookback, o.horizon);
        s.attributes = data.series[rows[i].series_index].attributes;
        s.statics = data.series[rows[i].series_index].statics;
        fit_set.push_back(std::move(s));
    }
    out.scalers = fit_group_scalers(fit_set, data.schema, data.schema.group_key);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        scale_window(rows[i], data.schema, out.scalers);
        switch (split.part[i]) {
            case SplitPart::train: out.train.push_back(std::move(rows[i])); break;
            case SplitPart::val: out.val.push_back(std::move(rows[i])); break;
            case SplitPart::test: out.test.push_back(std::move(rows[i])); break;
        }
    }
    return out;
}

}  // namespace mrt
