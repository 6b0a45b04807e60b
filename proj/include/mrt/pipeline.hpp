#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/dataset_io.hpp"
#include "mrt/preprocess.hpp"

namespace mrt {

struct PrepareOptions {
    std::size_t lookback = 32;
    std::size_t horizon = 16;
    std::size_t stride = 0;  // 0: use the horizon
    SplitSpec split;
};

struct PreparedData {
    Schema schema;
    ScalerMap scalers;
    std::vector<WindowRow> train;
    std::vector<WindowRow> val;
    std::vector<WindowRow> test;
    nlohmann::json split_report;
    std::size_t skipped = 0;
};

/// Windows every series, splits windows chronologically by the schema's split
/// key, fits grouped scalers on the training windows only, and scales every
/// window. Each window keeps its per-channel observed scalers.
PreparedData prepare_data(const Dataset& data, const PrepareOptions& options);

// The real (non-pad) steps of a window as a series, for scaler fitting.
RawSeries window_as_series(const WindowRow& row, const Schema& schema, std::size_t lookback, std::size_t horizon);

void scale_window(WindowRow& row, const Schema& schema, const ScalerMap& scalers);

}  // namespace mrt
