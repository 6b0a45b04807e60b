#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/timeutil.hpp"

namespace mrt {

enum class VarKind { categorical, numerical };
enum class VarScope { global, specific };
enum class VarGroup { statics, tvk, observed };

// Numerical pad value. Missing numerical values are NaN; categorical values are
// integer codes with two reserved symbols past the declared cardinality.
inline constexpr double kNumericalPad = 0.0;
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct VariableSchema {
    std::string name;
    VarKind kind = VarKind::numerical;
    std::size_t cardinality = 0;  // categorical only
    VarScope scope = VarScope::specific;
    VarGroup group = VarGroup::tvk;

    double missing_code() const { return static_cast<double>(cardinality); }
    double pad_code() const { return static_cast<double>(cardinality + 1); }
    double pad_value() const { return kind == VarKind::categorical ? pad_code() : kNumericalPad; }
    double missing_value() const { return kind == VarKind::categorical ? missing_code() : kMissing; }

    friend bool operator==(const VariableSchema&, const VariableSchema&) = default;
};

void validate(const VariableSchema& v);

/// Dataset manifest: variables by temporal group plus the series key, split
/// key, and scaler grouping attributes.
struct Schema {
    std::vector<std::string> key;
    std::string split_key = "window_start";
    std::vector<std::string> group_key;
    std::vector<VariableSchema> variables;
    // 0 when timestamps are already regular; otherwise the quantisation period
    // and the static.csv column holding each series' closing boundary.
    std::int64_t quantise_period_seconds = 0;
    std::string end_time_column = "end_time";

    std::vector<VariableSchema> in_group(VarGroup g) const;
    std::vector<VariableSchema> observed() const { return in_group(VarGroup::observed); }
    std::vector<VariableSchema> tvk() const { return in_group(VarGroup::tvk); }
    std::vector<VariableSchema> statics() const { return in_group(VarGroup::statics); }
    std::size_t channels() const { return observed().size(); }
    const VariableSchema& variable(const std::string& name) const;
    bool has_variable(const std::string& name) const;

    void validate() const;

    friend bool operator==(const Schema&, const Schema&) = default;
};

void to_json(nlohmann::json& j, const VariableSchema& v);
void from_json(const nlohmann::json& j, VariableSchema& v);
void to_json(nlohmann::json& j, const Schema& s);
void from_json(const nlohmann::json& j, Schema& s);

/// One series: values over time for every channel, plus per-channel statics.
/// Layouts: observed [T][C], tvk [T][C][V_tvk], statics [C][V_s], with
/// variables in schema order within each group.
struct RawSeries {
    std::string id;
    std::map<std::string, std::string> attributes;
    std::vector<Instant> timestamps;
    // Closing boundary of the last aggregation block (unquantised data).
    std::optional<Instant> end_time;
    // Closed intervals [start, end) excluded from quantisation period counts.
    std::vector<std::pair<Instant, Instant>> closures;
    std::size_t channels = 0;
    std::size_t n_tvk = 0;
    std::size_t n_static = 0;
    std::vector<double> observed;
    std::vector<double> tvk;
    std::vector<double> statics;

    std::size_t length() const { return timestamps.size(); }
    double& obs(std::size_t t, std::size_t c) { return observed[t * channels + c]; }
    double obs(std::size_t t, std::size_t c) const { return observed[t * channels + c]; }
    double& tvk_at(std::size_t t, std::size_t c, std::size_t v) { return tvk[(t * channels + c) * n_tvk + v]; }
    double tvk_at(std::size_t t, std::size_t c, std::size_t v) const { return tvk[(t * channels + c) * n_tvk + v]; }
    double& stat(std::size_t c, std::size_t v) { return statics[c * n_static + v]; }
    double stat(std::size_t c, std::size_t v) const { return statics[c * n_static + v]; }

    // Allocates storage for `length` steps, filled with missing values.
    void resize(std::size_t length);
};

RawSeries make_series(const Schema& schema, std::string id, std::size_t length);

/// Checks shapes, timestamp order, categorical ranges, observed completeness,
/// and cross-channel equality of global variables.
void validate_series(const RawSeries& series, const Schema& schema);

}  // namespace mrt
