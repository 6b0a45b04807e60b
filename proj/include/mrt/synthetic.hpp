#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/dataset_io.hpp"

namespace mrt {

/// Spike-and-decay markdown simulator. Two channels: full-price and
/// reduced-price sales. The j-th reduction (0-based) at step tau with
/// discount d adds  level * gain * d * dampening^j * decay^(t - tau)  to the
/// reduced channel for t >= tau; the full-price channel sells
/// level * base * (1 - cannibalization * gain * D(t)), where D(t) is the
/// discount in force. Gaussian noise is added to both channels.
struct SynthParams {
    std::size_t length = 48;
    std::int64_t period_seconds = 1800;
    double base_demand = 5.0;
    double level_spread = 0.5;  // log-normal spread of the per-series level
    double spike_gain = 8.0;
    double decay = 0.7;
    double dampening = 0.6;
    double cannibalization = 0.03;
    double noise = 0.3;
    std::vector<double> discounts{0.25, 0.5, 0.75};
    std::size_t max_reductions = 3;
    std::size_t min_gap = 3;
    std::size_t first_reduction_min = 8;
    std::size_t n_due_dates = 40;
    std::size_t n_products = 50;
    std::size_t n_stores = 10;
    std::size_t n_product_groups = 5;
    std::size_t n_store_types = 3;

    void validate() const;
    friend bool operator==(const SynthParams&, const SynthParams&) = default;
};

void to_json(nlohmann::json& j, const SynthParams& p);
void from_json(const nlohmann::json& j, SynthParams& p);

// Ground truth of one generated series.
struct SynthTruth {
    double level = 1.0;
    std::vector<std::size_t> reduction_steps;
    std::vector<double> reduction_discounts;
};

struct SynthDataset {
    Dataset data;
    std::vector<SynthTruth> truth;
};

Schema synthetic_schema(const SynthParams& p);

SynthDataset generate_synthetic_markdown(std::size_t n_series, std::uint64_t seed, const SynthParams& params = {});

// Noise-free reduced-channel sales at step t for the given truth.
double synthetic_spike(const SynthParams& p, const SynthTruth& truth, std::size_t t);

}  // namespace mrt
