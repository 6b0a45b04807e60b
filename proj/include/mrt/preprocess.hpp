#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/schema.hpp"

namespace mrt {

// ---------------------------------------------------------------- quantisation

/// Rounds aggregation boundaries (the timestamps plus `end_time`) to the
/// nearest multiple of `period_seconds` (ties round up) and expands each block
/// into one step per period. Observed (aggregated) values are divided evenly
/// across the block's open periods; every other column is copied. Periods
/// starting inside a closure interval are dropped.
RawSeries quantise_series(const RawSeries& raw, std::int64_t period_seconds);

/// Keeps the ceil(keep_fraction * n) longest series, preserving input order.
std::vector<RawSeries> filter_longest(const std::vector<RawSeries>& series, double keep_fraction);

// --------------------------------------------------------------------- scalers

struct Scaler {
    double mean = 0.0;
    double std = 1.0;
    bool flagged = false;  // zero variance: std replaced by 1

    double apply(double x) const { return (x - mean) / std; }
    double invert(double x) const { return x * std + mean; }
    friend bool operator==(const Scaler&, const Scaler&) = default;
};

/// Per-group affine scalers for every continuous variable, with a global
/// fallback for groups not seen during fitting.
struct ScalerMap {
    std::vector<std::string> group_key;
    std::vector<std::string> variables;
    std::map<std::string, std::map<std::string, Scaler>> groups;
    std::map<std::string, Scaler> global;

    bool has_group(const std::string& group) const { return groups.count(group) != 0; }
    const Scaler& lookup(const std::string& group, const std::string& variable) const;

    friend bool operator==(const ScalerMap&, const ScalerMap&) = default;
};

void to_json(nlohmann::json& j, const ScalerMap& m);
void from_json(const nlohmann::json& j, ScalerMap& m);

// Group identifier of a series: group-key values joined with '|'. Static
// variables are read from channel 0.
std::string group_of(const RawSeries& series, const Schema& schema, const std::vector<std::string>& group_key);

ScalerMap fit_group_scalers(const std::vector<RawSeries>& train, const Schema& schema,
                            const std::vector<std::string>& group_key);

RawSeries apply_scalers(const RawSeries& series, const Schema& schema, const ScalerMap& scalers);

// ---------------------------------------------------------------------- splits

struct SplitSpec {
    double test_fraction = 0.20;
    double val_fraction = 0.15;
    std::string split_key = "window_start";

    void validate() const;
};

enum class SplitPart { train, val, test };

struct SplitAssignment {
    std::vector<SplitPart> part;  // one per input key
    std::size_t n_keys = 0;
    std::size_t n_train_keys = 0;
    std::size_t n_val_keys = 0;
    std::size_t n_test_keys = 0;
    // Inclusive key ranges per part.
    std::map<SplitPart, std::pair<std::string, std::string>> ranges;
};

/// Chronological split over distinct key values: the last ceil(test * n)
/// keys go to test, the ceil(val * n) keys before them to validation, the
/// rest to train. Keys compare numerically when every key parses as a number.
SplitAssignment make_splits(const std::vector<std::string>& keys, const SplitSpec& spec);

nlohmann::json split_report(const SplitAssignment& a, const std::vector<std::string>& keys);

// ------------------------------------------------------------------- windowing

struct WindowRow {
    std::size_t series_index = 0;
    std::string series_id;
    std::string split_key;
    Instant start = 0;
    std::size_t pad_len = 0;
    std::vector<double> observed;  // [C][l]
    std::vector<double> tvk;       // [C][l+f][V_tvk]
    std::vector<double> statics;   // [C][V_s]
    std::vector<double> target;    // [C][f]
    std::vector<Scaler> scale;     // [C] observed scalers, for reverting to original units
    std::string group;
};

struct WindowingResult {
    std::vector<WindowRow> rows;
    std::size_t skipped = 0;
};

/// Cuts a series into windows of `lookback` past steps and `horizon` target
/// steps. Windows are anchored at the series end and step back by `stride`;
/// a series shorter than lookback + horizon yields one left-padded window.
/// Series shorter than horizon + 1 are skipped.
WindowingResult window_series(const RawSeries& series, const Schema& schema, std::size_t lookback,
                              std::size_t horizon, std::size_t stride, std::size_t series_index = 0);

// --------------------------------------------------------------------- batches

struct NormState {
    double last = 0.0;
    double std = 1.0;
    bool flagged = false;
    friend bool operator==(const NormState&, const NormState&) = default;
};

/// Aligned tensors for one batch, all row-major:
/// observed [B,C,l], tvk [B,C,l+f,V_tvk], statics [B,C,V_s], target [B,C,f].
struct SeriesBatch {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t n_tvk = 0;
    std::size_t n_static = 0;
    std::vector<double> observed;
    std::vector<double> tvk;
    std::vector<double> statics;
    std::vector<double> target;
    std::vector<std::size_t> pad_len;
    std::vector<NormState> norm_state;  // [B*C]; empty until normalized
    std::vector<Scaler> scale;          // [B*C]
    std::vector<std::size_t> row_ids;
};

SeriesBatch make_batch(const std::vector<WindowRow>& rows, const std::vector<std::size_t>& indices,
                       const Schema& schema, std::size_t lookback, std::size_t horizon);

inline constexpr double kInstanceNormEps = 1e-5;

/// Per sample and channel: y' = (y - y_last) / std over the non-pad past,
/// applied to the observed window and the target. Pad positions become 0.
SeriesBatch instance_normalize(const SeriesBatch& batch);

/// Inverse of instance_normalize for a [B,C,f] prediction.
std::vector<double> instance_denormalize(const std::vector<double>& pred, const std::vector<NormState>& state,
                                         std::size_t horizon);

}  // namespace mrt
