#include "mrt/schema.hpp"

#include <algorithm>
#include <set>

#include "mrt/errors.hpp"

namespace mrt {

namespace {

bool same_value(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

const char* kind_name(VarKind k) { return k == VarKind::categorical ? "categorical" : "numerical"; }
const char* scope_name(VarScope s) { return s == VarScope::global ? "global" : "specific"; }
const char* group_name(VarGroup g) {
    switch (g) {
        case VarGroup::statics: return "static";
        case VarGroup::tvk: return "tvk";
        case VarGroup::observed: return "observed";
    }
    return "?";
}

}  // namespace

void validate(const VariableSchema& v) {
    if (v.name.empty()) {
        throw SchemaError("variable with empty name");
    }
    if (v.kind == VarKind::categorical && v.cardinality < 1) {
        throw SchemaError("categorical variable '" + v.name + "' needs cardinality >= 1");
    }
    if (v.group == VarGroup::observed && v.kind != VarKind::numerical) {
        throw SchemaError("observed variable '" + v.name + "' must be numerical");
    }
}

std::vector<VariableSchema> Schema::in_group(VarGroup g) const {
    std::vector<VariableSchema> out;
    for (const auto& v : variables) {
        if (v.group == g) out.push_back(v);
    }
    return out;
}

const VariableSchema& Schema::variable(const std::string& name) const {
    for (const auto& v : variables) {
        if (v.name == name) return v;
    }
    throw SchemaError("unknown variable '" + name + "'");
}

bool Schema::has_variable(const std::string& name) const {
    for (const auto& v : variables) {
        if (v.name == name) return true;
    }
    return false;
}

void Schema::validate() const {
    std::set<std::string> names;
    for (const auto& v : variables) {
        mrt::validate(v);
        if (!names.insert(v.name).second) {
            throw SchemaError("duplicate variable '" + v.name + "'");
        }
    }
    if (observed().empty()) {
        throw SchemaError("schema declares no observed variables (channels)");
    }
    for (const auto& g : group_key) {
        const bool is_key = std::find(key.begin(), key.end(), g) != key.end();
        if (!is_key && !(has_variable(g) && variable(g).group == VarGroup::statics)) {
            throw SchemaError("group key '" + g + "' is neither a key attribute nor a static variable");
        }
    }
    if (split_key != "window_start" && std::find(key.begin(), key.end(), split_key) == key.end()) {
        throw SchemaError("split key '" + split_key + "' is not a key attribute");
    }
    if (quantise_period_seconds < 0) {
        throw SchemaError("quantise_period_seconds must be >= 0");
    }
}

void to_json(nlohmann::json& j, const VariableSchema& v) {
    j = {{"name", v.name}, {"kind", kind_name(v.kind)}, {"scope", scope_name(v.scope)}, {"group", group_name(v.group)}};
    if (v.kind == VarKind::categorical) j["cardinality"] = v.cardinality;
}

void from_json(const nlohmann::json& j, VariableSchema& v) {
    v.name = j.at("name").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "categorical") {
        v.kind = VarKind::categorical;
        v.cardinality = j.at("cardinality").get<std::size_t>();
    } else if (kind == "numerical") {
        v.kind = VarKind::numerical;
        v.cardinality = 0;
    } else {
        throw SchemaError("variable '" + v.name + "': unknown kind '" + kind + "'");
    }
    const auto scope = j.value("scope", std::string("specific"));
    if (scope == "global") {
        v.scope = VarScope::global;
    } else if (scope == "specific") {
        v.scope = VarScope::specific;
    } else {
        throw SchemaError("variable '" + v.name + "': unknown scope '" + scope + "'");
    }
    const auto group = j.at("group").get<std::string>();
    if (group == "static") {
        v.group = VarGroup::statics;
    } else if (group == "tvk") {
        v.group = VarGroup::tvk;
    } else if (group == "observed") {
        v.group = VarGroup::observed;
    } else {
        throw SchemaError("variable '" + v.name + "': unknown group '" + group + "'");
    }
    validate(v);
}

void to_json(nlohmann::json& j, const Schema& s) {
    j = {{"version", 1},
         {"key", s.key},
         {"split_key", s.split_key},
         {"group_key", s.group_key},
         {"quantise_period_seconds", s.quantise_period_seconds},
         {"end_time_column", s.end_time_column},
         {"variables", s.variables}};
}

void from_json(const nlohmann::json& j, Schema& s) {
    s.key = j.value("key", std::vector<std::string>{});
    s.split_key = j.value("split_key", std::string("window_start"));
    s.group_key = j.value("group_key", std::vector<std::string>{});
    s.quantise_period_seconds = j.value("quantise_period_seconds", std::int64_t{0});
    s.end_time_column = j.value("end_time_column", std::string("end_time"));
    s.variables = j.at("variables").get<std::vector<VariableSchema>>();
    s.validate();
}

void RawSeries::resize(std::size_t length) {
    timestamps.assign(length, 0);
    observed.assign(length * channels, kMissing);
    tvk.assign(length * channels * n_tvk, kMissing);
    statics.assign(channels * n_static, kMissing);
}

RawSeries make_series(const Schema& schema, std::string id, std::size_t length) {
    RawSeries s;
    s.id = std::move(id);
    s.channels = schema.channels();
    s.n_tvk = schema.tvk().size();
    s.n_static = schema.statics().size();
    s.resize(length);
    return s;
}

void validate_series(const RawSeries& s, const Schema& schema) {
    const auto obs = schema.observed();
    const auto tvk = schema.tvk();
    const auto sta = schema.statics();
    const std::string where = "series '" + s.id + "': ";
    if (s.channels != obs.size() || s.n_tvk != tvk.size() || s.n_static != sta.size()) {
        throw SchemaError(where + "variable counts do not match the schema");
    }
    const std::size_t n = s.length();
    if (s.observed.size() != n * s.channels || s.tvk.size() != n * s.channels * s.n_tvk ||
        s.statics.size() != s.channels * s.n_static) {
        throw SchemaError(where + "storage sizes do not match its length");
    }
    for (std::size_t t = 1; t < n; ++t) {
        if (s.timestamps[t] <= s.timestamps[t - 1]) {
            throw SchemaError(where + "timestamps not strictly increasing at " + format_iso8601(s.timestamps[t]));
        }
    }
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < s.channels; ++c) {
            if (std::isnan(s.obs(t, c))) {
                throw SchemaError(where + "missing observed value for '" + obs[c].name + "' at " +
                                  format_iso8601(s.timestamps[t]));
            }
        }
    }
    auto check_value = [&](const VariableSchema& v, double x) {
        if (v.kind != VarKind::categorical || std::isnan(x)) return;
        if (x < 0 || x > v.pad_code() || x != std::floor(x)) {
            throw SchemaError(where + "value " + std::to_string(x) + " out of range for categorical '" + v.name +
                              "' (cardinality " + std::to_string(v.cardinality) + ")");
        }
    };
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t v = 0; v < tvk.size(); ++v) {
            for (std::size_t c = 0; c < s.channels; ++c) {
                check_value(tvk[v], s.tvk_at(t, c, v));
                if (tvk[v].scope == VarScope::global && !same_value(s.tvk_at(t, c, v), s.tvk_at(t, 0, v))) {
                    throw SchemaError(where + "global variable '" + tvk[v].name + "' differs across channels at " +
                                      format_iso8601(s.timestamps[t]));
                }
            }
        }
    }
    for (std::size_t v = 0; v < sta.size(); ++v) {
        for (std::size_t c = 0; c < s.channels; ++c) {
            check_value(sta[v], s.stat(c, v));
            if (sta[v].scope == VarScope::global && !same_value(s.stat(c, v), s.stat(0, v))) {
                throw SchemaError(where + "global static '" + sta[v].name + "' differs across channels");
            }
        }
    }
}

}  // namespace mrt
