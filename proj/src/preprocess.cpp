#include "mrt/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>
#include <sstream>

#include "mrt/errors.hpp"

namespace mrt {

namespace {

Instant round_to_period(Instant t, std::int64_t period) {
    // Nearest multiple, ties upward; floor division keeps negatives correct.
    const Instant shifted = t + period / 2;
    Instant q = shifted / period;
    if (shifted % period != 0 && shifted < 0) --q;
    return q * period;
}

bool in_closure(Instant t, const std::vector<std::pair<Instant, Instant>>& closures) {
    return std::any_of(closures.begin(), closures.end(),
                       [t](const auto& c) { return t >= c.first && t < c.second; });
}

std::string format_value(const VariableSchema& v, double x) {
    if (std::isnan(x)) return "NA";
    if (v.kind == VarKind::categorical) return std::to_string(static_cast<long long>(x));
    std::ostringstream os;
    os << x;
    return os.str();
}

Scaler fit_scaler(const std::vector<double>& values) {
    Scaler s;
    if (values.empty()) {
        s.flagged = true;
        return s;
    }
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(var / n);
    if (sd < 1e-12) {
        s.std = 1.0;
        s.flagged = true;
    } else {
        s.std = sd;
    }
    return s;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace

RawSeries quantise_series(const RawSeries& raw, std::int64_t period) {
    if (period <= 0) {
        throw ConfigError("quantisation period must be positive");
    }
    if (!raw.end_time) {
        throw SchemaError("series '" + raw.id + "': quantisation needs the closing boundary (end_time)");
    }
    const std::size_t n = raw.length();
    std::vector<Instant> bounds(raw.timestamps);
    bounds.push_back(*raw.end_time);
    std::vector<Instant> rounded(bounds.size());
    std::transform(bounds.begin(), bounds.end(), rounded.begin(), [&](Instant t) { return round_to_period(t, period); });

    RawSeries out = raw;
    out.timestamps.clear();
    out.observed.clear();
    out.tvk.clear();
    out.end_time = rounded.back();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Instant> periods;
        for (Instant p = rounded[i]; p < rounded[i + 1]; p += period) {
            if (!in_closure(p, raw.closures)) periods.push_back(p);
        }
        if (periods.empty()) {
            throw CollapseError("series '" + raw.id + "': aggregation block [" + format_iso8601(bounds[i]) + ", " +
                                format_iso8601(bounds[i + 1]) + ") spans zero periods after rounding");
        }
        const double count = static_cast<double>(periods.size());
        for (Instant p : periods) {
            out.timestamps.push_back(p);
            for (std::size_t c = 0; c < raw.channels; ++c) {
                out.observed.push_back(raw.obs(i, c) / count);
            }
            for (std::size_t c = 0; c < raw.channels; ++c) {
                for (std::size_t v = 0; v < raw.n_tvk; ++v) {
                    out.tvk.push_back(raw.tvk_at(i, c, v));
                }
            }
        }
    }
    return out;
}

std::vector<RawSeries> filter_longest(const std::vector<RawSeries>& series, double keep_fraction) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw ConfigError("keep fraction must lie in (0, 1]");
    }
    std::vector<std::size_t> order(series.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return series[a].length() > series[b].length(); });
    const auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(series.size()) - 1e-9));
    order.resize(std::min(keep, order.size()));
    std::sort(order.begin(), order.end());
    std::vector<RawSeries> out;
    out.reserve(order.size());
    for (auto i : order) out.push_back(series[i]);
    return out;
}

// ------------------------------------------------------------------- scalers

const Scaler& ScalerMap::lookup(const std::string& group, const std::string& variable) const {
    auto g = groups.find(group);
    if (g != groups.end()) {
        auto v = g->second.find(variable);
        if (v != g->second.end()) return v->second;
    }
    auto v = global.find(variable);
    if (v == global.end()) {
        throw SchemaError("no scaler fitted for variable '" + variable + "'");
    }
    return v->second;
}

void to_json(nlohmann::json& j, const ScalerMap& m) {
    auto enc = [](const std::map<std::string, Scaler>& s) {
        nlohmann::json o = nlohmann::json::object();
        for (const auto& [k, v] : s) o[k] = {{"mean", v.mean}, {"std", v.std}, {"flagged", v.flagged}};
        return o;
    };
    j["group_key"] = m.group_key;
    j["variables"] = m.variables;
    j["global"] = enc(m.global);
    j["groups"] = nlohmann::json::object();
    for (const auto& [g, s] : m.groups) j["groups"][g] = enc(s);
}

void from_json(const nlohmann::json& j, ScalerMap& m) {
    auto dec = [](const nlohmann::json& o) {
        std::map<std::string, Scaler> s;
        for (const auto& [k, v] : o.items()) {
            s[k] = Scaler{v.at("mean").get<double>(), v.at("std").get<double>(), v.at("flagged").get<bool>()};
        }
        return s;
    };
    m.group_key = j.at("group_key").get<std::vector<std::string>>();
    m.variables = j.at("variables").get<std::vector<std::string>>();
    m.global = dec(j.at("global"));
    m.groups.clear();
    for (const auto& [g, o] : j.at("groups").items()) m.groups[g] = dec(o);
}

std::string group_of(const RawSeries& series, const Schema& schema, const std::vector<std::string>& group_key) {
    std::string out;
    const auto statics = schema.statics();
    for (std::size_t i = 0; i < group_key.size(); ++i) {
        const auto& g = group_key[i];
        if (i) out += '|';
        auto a = series.attributes.find(g);
        if (a != series.attributes.end()) {
            out += a->second;
            continue;
        }
        bool found = false;
        for (std::size_t v = 0; v < statics.size(); ++v) {
            if (statics[v].name == g) {
                out += format_value(statics[v], series.stat(0, v));
                found = true;
                break;
            }
        }
        if (!found) {
            throw SchemaError("series '" + series.id + "' has no group attribute '" + g + "'");
        }
    }
    return out;
}

namespace {

// Calls sink(variable name, value) for every continuous, non-missing value.
template <class Sink>
void for_each_continuous(const RawSeries& s, const Schema& schema, Sink&& sink) {
    const auto obs = schema.observed();
    const auto tvk = schema.tvk();
    const auto sta = schema.statics();
    for (std::size_t t = 0; t < s.length(); ++t) {
        for (std::size_t c = 0; c < s.channels; ++c) {
            sink(obs[c].name, s.obs(t, c));
            for (std::size_t v = 0; v < tvk.size(); ++v) {
                if (tvk[v].kind == VarKind::numerical) sink(tvk[v].name, s.tvk_at(t, c, v));
            }
        }
    }
    for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t v = 0; v < sta.size(); ++v) {
            if (sta[v].kind == VarKind::numerical) sink(sta[v].name, s.stat(c, v));
        }
    }
}

}  // namespace

ScalerMap fit_group_scalers(const std::vector<RawSeries>& train, const Schema& schema,
                            const std::vector<std::string>& group_key) {
    ScalerMap m;
    m.group_key = group_key;
    for (const auto& v : schema.variables) {
        if (v.kind == VarKind::numerical) m.variables.push_back(v.name);
    }
    std::map<std::string, std::map<std::string, std::vector<double>>> per_group;
    std::map<std::string, std::vector<double>> all;
    for (const auto& s : train) {
        const auto g = group_of(s, schema, group_key);
        auto& bucket = per_group[g];
        for_each_continuous(s, schema, [&](const std::string& name, double x) {
            if (std::isnan(x)) return;
            bucket[name].push_back(x);
            all[name].push_back(x);
        });
    }
    for (const auto& name : m.variables) {
        m.global[name] = fit_scaler(all[name]);
        for (auto& [g, bucket] : per_group) {
            m.groups[g][name] = fit_scaler(bucket[name]);
        }
    }
    return m;
}

RawSeries apply_scalers(const RawSeries& series, const Schema& schema, const ScalerMap& scalers) {
    RawSeries out = series;
    const auto g = group_of(series, schema, scalers.group_key);
    const auto obs = schema.observed();
    const auto tvk = schema.tvk();
    const auto sta = schema.statics();
    for (std::size_t t = 0; t < out.length(); ++t) {
        for (std::size_t c = 0; c < out.channels; ++c) {
            out.obs(t, c) = scalers.lookup(g, obs[c].name).apply(out.obs(t, c));
            for (std::size_t v = 0; v < tvk.size(); ++v) {
                if (tvk[v].kind == VarKind::numerical) {
                    out.tvk_at(t, c, v) = scalers.lookup(g, tvk[v].name).apply(out.tvk_at(t, c, v));
                }
            }
        }
    }
    for (std::size_t c = 0; c < out.channels; ++c) {
        for (std::size_t v = 0; v < sta.size(); ++v) {
            if (sta[v].kind == VarKind::numerical) {
                out.stat(c, v) = scalers.lookup(g, sta[v].name).apply(out.stat(c, v));
            }
        }
    }
    return out;
}

// -------------------------------------------------------------------- splits

void SplitSpec::validate() const {
    if (!(test_fraction > 0.0) || !(val_fraction > 0.0) || test_fraction + val_fraction >= 1.0) {
        throw ConfigError("split fractions must be positive with test + val < 1");
    }
}

SplitAssignment make_splits(const std::vector<std::string>& keys, const SplitSpec& spec) {
    spec.validate();
    bool numeric = !keys.empty();
    std::map<std::string, double> as_number;
    for (const auto& k : keys) {
        double x = 0.0;
        if (!parse_number(k, x)) {
            numeric = false;
            break;
        }
        as_number[k] = x;
    }
    auto less = [&](const std::string& a, const std::string& b) {
        return numeric ? as_number.at(a) < as_number.at(b) : a < b;
    };
    std::vector<std::string> distinct(keys.begin(), keys.end());
    std::sort(distinct.begin(), distinct.end(), less);
    distinct.erase(std::unique(distinct.begin(), distinct.end(),
                               [&](const auto& a, const auto& b) { return !less(a, b) && !less(b, a); }),
                   distinct.end());
    const std::size_t n = distinct.size();
    if (n < 3) {
        throw SplitError("split needs at least 3 distinct '" + spec.split_key + "' values, got " + std::to_string(n));
    }
    const auto n_test = static_cast<std::size_t>(std::ceil(spec.test_fraction * static_cast<double>(n) - 1e-9));
    const auto n_val = static_cast<std::size_t>(std::ceil(spec.val_fraction * static_cast<double>(n) - 1e-9));
    if (n_test + n_val >= n) {
        throw SplitError("split leaves no training keys (" + std::to_string(n) + " distinct keys)");
    }
    SplitAssignment a;
    a.n_keys = n;
    a.n_test_keys = n_test;
    a.n_val_keys = n_val;
    a.n_train_keys = n - n_test - n_val;
    std::map<std::string, SplitPart> part_of;
    for (std::size_t i = 0; i < n; ++i) {
        SplitPart p = i < a.n_train_keys ? SplitPart::train
                      : i < a.n_train_keys + n_val ? SplitPart::val
                                                   : SplitPart::test;
        part_of[distinct[i]] = p;
        auto it = a.ranges.find(p);
        if (it == a.ranges.end()) {
            a.ranges[p] = {distinct[i], distinct[i]};
        } else {
            it->second.second = distinct[i];
        }
    }
    a.part.reserve(keys.size());
    for (const auto& k : keys) {
        if (numeric) {
            // Equal numbers may be spelled differently; resolve through the distinct list.
            auto it = std::lower_bound(distinct.begin(), distinct.end(), k, less);
            a.part.push_back(part_of.at(*it));
        } else {
            a.part.push_back(part_of.at(k));
        }
    }
    return a;
}

nlohmann::json split_report(const SplitAssignment& a, const std::vector<std::string>& keys) {
    (void)keys;
    nlohmann::json j;
    const std::pair<SplitPart, const char*> names[] = {
        {SplitPart::train, "train"}, {SplitPart::val, "val"}, {SplitPart::test, "test"}};
    for (const auto& [p, name] : names) {
        const auto count = static_cast<std::size_t>(std::count(a.part.begin(), a.part.end(), p));
        const auto& r = a.ranges.at(p);
        const std::size_t n_keys = p == SplitPart::train ? a.n_train_keys
                                   : p == SplitPart::val ? a.n_val_keys
                                                         : a.n_test_keys;
        j[name] = {{"rows", count}, {"keys", n_keys}, {"first_key", r.first}, {"last_key", r.second}};
    }
    j["distinct_keys"] = a.n_keys;
    return j;
}

// ----------------------------------------------------------------- windowing

WindowingResult window_series(const RawSeries& s, const Schema& schema, std::size_t lookback, std::size_t horizon,
                              std::size_t stride, std::size_t series_index) {
    if (lookback == 0 || horizon == 0 || stride == 0) {
        throw ConfigError("lookback, horizon and stride must be positive");
    }
    WindowingResult res;
    const std::size_t n = s.length();
    if (n < horizon + 1) {
        res.skipped = 1;
        return res;
    }
    const auto tvk = schema.tvk();
    const auto sta = schema.statics();
    const std::size_t C = s.channels;
    const std::size_t V = tvk.size();
    const std::size_t Vs = sta.size();
    const std::size_t span = lookback + horizon;

    // Window ends (exclusive), ascending.
    std::vector<std::size_t> ends;
    if (n < span) {
        ends.push_back(n);
    } else {
        for (std::size_t e = n;; e -= stride) {
            ends.push_back(e);
            if (e < span + stride) break;
        }
        std::reverse(ends.begin(), ends.end());
    }

    auto canon = [](const VariableSchema& v, double x) {
        if (v.kind == VarKind::categorical && std::isnan(x)) return v.missing_code();
        return x;
    };

    for (std::size_t end : ends) {
        WindowRow row;
        row.series_index = series_index;
        row.series_id = s.id;
        const std::size_t past = std::min(lookback, end - horizon);
        row.pad_len = lookback - past;
        const std::size_t first = end - horizon - past;  // first real past step
        row.start = s.timestamps[first];
        row.observed.assign(C * lookback, kNumericalPad);
        row.target.assign(C * horizon, 0.0);
        row.tvk.assign(C * span * V, 0.0);
        row.statics.assign(C * Vs, 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t j = row.pad_len; j < lookback; ++j) {
                row.observed[c * lookback + j] = s.obs(first + j - row.pad_len, c);
            }
            for (std::size_t j = 0; j < horizon; ++j) {
                row.target[c * horizon + j] = s.obs(end - horizon + j, c);
            }
            for (std::size_t j = 0; j < span; ++j) {
                for (std::size_t v = 0; v < V; ++v) {
                    row.tvk[(c * span + j) * V + v] =
                        j < row.pad_len ? tvk[v].pad_value() : canon(tvk[v], s.tvk_at(first + j - row.pad_len, c, v));
                }
            }
            for (std::size_t v = 0; v < Vs; ++v) {
                row.statics[c * Vs + v] = canon(sta[v], s.stat(c, v));
            }
        }
        if (schema.split_key == "window_start") {
            row.split_key = format_iso8601(row.start);
        } else {
            auto it = s.attributes.find(schema.split_key);
            if (it == s.attributes.end()) {
                throw SchemaError("series '" + s.id + "' lacks split key attribute '" + schema.split_key + "'");
            }
            row.split_key = it->second;
        }
        row.scale.assign(C, Scaler{});
        res.rows.push_back(std::move(row));
    }
    return res;
}

// ------------------------------------------------------------------- batches

SeriesBatch make_batch(const std::vector<WindowRow>& rows, const std::vector<std::size_t>& indices,
                       const Schema& schema, std::size_t lookback, std::size_t horizon) {
    SeriesBatch b;
    b.batch = indices.size();
    b.channels = schema.channels();
    b.lookback = lookback;
    b.horizon = horizon;
    b.n_tvk = schema.tvk().size();
    b.n_static = schema.statics().size();
    const std::size_t C = b.channels;
    b.observed.reserve(b.batch * C * lookback);
    b.tvk.reserve(b.batch * C * (lookback + horizon) * b.n_tvk);
    for (auto i : indices) {
        const auto& r = rows.at(i);
        if (r.observed.size() != C * lookback || r.target.size() != C * horizon ||
            r.tvk.size() != C * (lookback + horizon) * b.n_tvk || r.statics.size() != C * b.n_static) {
            throw DimensionError("window row " + std::to_string(i) + " does not match batch geometry");
        }
        if (r.pad_len >= lookback) {
            throw DimensionError("window row " + std::to_string(i) + " has no real observation");
        }
        b.observed.insert(b.observed.end(), r.observed.begin(), r.observed.end());
        b.tvk.insert(b.tvk.end(), r.tvk.begin(), r.tvk.end());
        b.statics.insert(b.statics.end(), r.statics.begin(), r.statics.end());
        b.target.insert(b.target.end(), r.target.begin(), r.target.end());
        b.pad_len.push_back(r.pad_len);
        if (r.scale.size() == C) {
            b.scale.insert(b.scale.end(), r.scale.begin(), r.scale.end());
        } else {
            b.scale.insert(b.scale.end(), C, Scaler{});
        }
        b.row_ids.push_back(i);
    }
    return b;
}

SeriesBatch instance_normalize(const SeriesBatch& in) {
    SeriesBatch b = in;
    const std::size_t l = b.lookback;
    const std::size_t f = b.horizon;
    b.norm_state.assign(b.batch * b.channels, NormState{});
    for (std::size_t s = 0; s < b.batch; ++s) {
        const std::size_t pad = b.pad_len[s];
        for (std::size_t c = 0; c < b.channels; ++c) {
            const std::size_t row = s * b.channels + c;
            const double* x = in.observed.data() + row * l;
            const double n = static_cast<double>(l - pad);
            double mean = 0.0;
            for (std::size_t t = pad; t < l; ++t) mean += x[t];
            mean /= n;
            double var = 0.0;
            for (std::size_t t = pad; t < l; ++t) var += (x[t] - mean) * (x[t] - mean);
            double sd = std::sqrt(var / n);
            NormState st{x[l - 1], sd, false};
            if (sd < kInstanceNormEps) {
                st.std = 1.0;
                st.flagged = true;
            }
            b.norm_state[row] = st;
            for (std::size_t t = 0; t < l; ++t) {
                b.observed[row * l + t] = t < pad ? 0.0 : (x[t] - st.last) / st.std;
            }
            for (std::size_t t = 0; t < f; ++t) {
                b.target[row * f + t] = (in.target[row * f + t] - st.last) / st.std;
            }
        }
    }
    return b;
}

std::vector<double> instance_denormalize(const std::vector<double>& pred, const std::vector<NormState>& state,
                                         std::size_t horizon) {
    if (pred.size() != state.size() * horizon) {
        throw DimensionError("denormalize: " + std::to_string(pred.size()) + " values for " +
                             std::to_string(state.size()) + " rows of horizon " + std::to_string(horizon));
    }
    std::vector<double> out(pred.size());
    for (std::size_t r = 0; r < state.size(); ++r) {
        for (std::size_t t = 0; t < horizon; ++t) {
            out[r * horizon + t] = pred[r * horizon + t] * state[r].std + state[r].last;
        }
    }
    return out;
}

}  // namespace mrt
