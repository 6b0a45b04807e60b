#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/model.hpp"
#include "mrt/optimizer.hpp"

namespace mrt {

struct TrainSpec {
    std::size_t batch_size = 128;
    double learning_rate = 3e-4;
    std::size_t max_epochs = 20;
    std::size_t patience = 3;
    // Stop after this many optimizer steps (0: no limit).
    std::size_t max_steps = 0;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const TrainSpec&, const TrainSpec&) = default;
};

void to_json(nlohmann::json& j, const TrainSpec& s);
void from_json(const nlohmann::json& j, TrainSpec& s);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    std::size_t steps = 0;  // cumulative optimizer steps
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::vector<double> step_losses;
    std::size_t best_epoch = 0;  // 0: no epoch completed
    double best_val = std::numeric_limits<double>::infinity();
    bool stopped_early = false;
    bool aborted = false;
    std::string abort_reason;

    // Delimited table without timing, so reruns compare byte for byte.
    void write_csv(const std::filesystem::path& path) const;
    void write_timing_csv(const std::filesystem::path& path) const;
    nlohmann::json summary() const;
};

/// Patience-based early stopping on a validation score (lower is better).
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    // Records the score of `epoch`; true when it is a new best.
    bool update(std::size_t epoch, double score);
    bool should_stop() const { return since_best_ >= patience_; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best() const { return best_; }

private:
    std::size_t patience_;
    std::size_t best_epoch_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t since_best_ = 0;
};

struct TrainHooks {
    // Replaces the computed validation loss of an epoch (1-based).
    std::function<double(std::size_t epoch)> val_loss;
    std::function<void(std::size_t step, double loss)> on_step;
    std::function<void(const EpochRecord&)> on_epoch;
};

// Consecutive batches over `n` rows; a trailing batch of one row is merged
// into the previous one (batch statistics need two samples).
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch_size);

/// Adam on the RMSE over all B*C*f elements in instance-normalized space,
/// validation each epoch, patience-based stopping, and restoration of the
/// best-validation parameters. A non-finite loss aborts training and restores
/// the best parameters seen so far (the initial ones if no epoch finished).
template <typename T>
TrainHistory train(Model<T>& model, const std::vector<WindowRow>& train_rows, const std::vector<WindowRow>& val_rows,
                   const TrainSpec& spec, const TrainHooks& hooks = {});

// Pooled normalized-space RMSE of the model in eval mode.
template <typename T>
double validation_loss(const Model<T>& model, const std::vector<WindowRow>& rows, std::size_t batch_size);

struct Metrics {
    std::vector<double> mse_per_channel;
    std::vector<double> mae_per_channel;
    double mse = 0.0;
    double mae = 0.0;
    double rmse = 0.0;              // pooled over all elements
    double rmse_series_mean = 0.0;  // mean over windows of each window's RMSE
    std::size_t rows = 0;

    nlohmann::json to_json(const std::vector<std::string>& channel_names) const;
};

// pred and target: [N,C,f] in original units.
Metrics compute_metrics(const std::vector<double>& pred, const std::vector<double>& target, std::size_t rows,
                        std::size_t channels, std::size_t horizon);

// Forecasts in original units, [N,C,f] in row order.
template <typename T>
std::vector<double> predict(const Model<T>& model, const std::vector<WindowRow>& rows, std::size_t batch_size);

// Targets of `rows` in original units, [N,C,f].
std::vector<double> original_targets(const std::vector<WindowRow>& rows);

template <typename T>
Metrics evaluate(const Model<T>& model, const std::vector<WindowRow>& rows, std::size_t batch_size);

// Last observed value repeated over the horizon, reported through the same
// descaling and metric path as the model.
std::vector<double> persistence_forecast(const std::vector<WindowRow>& rows);
Metrics evaluate_persistence(const std::vector<WindowRow>& rows);

}  // namespace mrt
