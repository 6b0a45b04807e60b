#include "mrt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace mrt {

void TrainSpec::validate() const {
    auto fail = [](const std::string& field, const std::string& msg) { throw ConfigError("train." + field + ": " + msg); };
    if (batch_size == 0) fail("batch_size", "must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be finite and >= 0");
    if (max_epochs == 0) fail("max_epochs", "must be >= 1");
    if (patience == 0 || patience >= max_epochs) fail("patience", "must lie in [1, max_epochs)");
}

void to_json(nlohmann::json& j, const TrainSpec& s) {
    j = {{"batch_size", s.batch_size}, {"learning_rate", s.learning_rate}, {"max_epochs", s.max_epochs},
         {"patience", s.patience},     {"max_steps", s.max_steps},         {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, TrainSpec& s) {
    static const std::vector<std::string> known{"batch_size", "learning_rate", "max_epochs", "patience", "max_steps", "seed"};
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("train." + k + ": unknown field");
    }
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(field);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(std::string("train.") + key + ": wrong type");
        }
    };
    get("batch_size", s.batch_size);
    get("learning_rate", s.learning_rate);
    get("max_epochs", s.max_epochs);
    get("patience", s.patience);
    get("max_steps", s.max_steps);
    get("seed", s.seed);
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,steps,train_loss,val_loss\n" << std::setprecision(17);
    for (const auto& e : epochs) out << e.epoch << ',' << e.steps << ',' << e.train_loss << ',' << e.val_loss << '\n';
}

void TrainHistory::write_timing_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,seconds\n";
    for (const auto& e : epochs) out << e.epoch << ',' << e.seconds << '\n';
}

nlohmann::json TrainHistory::summary() const {
    return {{"epochs", epochs.size()},
            {"steps", step_losses.size()},
            {"best_epoch", best_epoch},
            {"best_val_loss", std::isfinite(best_val) ? nlohmann::json(best_val) : nlohmann::json(nullptr)},
            {"stopped_early", stopped_early},
            {"aborted", aborted},
            {"abort_reason", abort_reason}};
}

bool EarlyStopping::update(std::size_t epoch, double score) {
    if (score < best_) {
        best_ = score;
        best_epoch_ = epoch;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    }
    if (out.size() >= 2 && out.back().size() == 1) {
        out[out.size() - 2].push_back(out.back().front());
        out.pop_back();
    }
    return out;
}

template <typename T>
double validation_loss(const Model<T>& model, const std::vector<WindowRow>& rows, std::size_t batch_size) {
    NoGradGuard no_grad;
    const auto& c = model.config();
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& idx : make_batches(order, batch_size)) {
        const auto batch = make_batch(rows, idx, model.schema(), c.lookback, c.horizon);
        const auto r = model.forward(batch, Mode{});
        const auto& p = r.pred_norm.value();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = static_cast<double>(p[i]) - static_cast<double>(r.target_norm[i]);
            sq += d * d;
        }
        n += p.size();
    }
    return n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
}

template <typename T>
TrainHistory train(Model<T>& model, const std::vector<WindowRow>& train_rows, const std::vector<WindowRow>& val_rows,
                   const TrainSpec& spec, const TrainHooks& hooks) {
    spec.validate();
    if (train_rows.empty()) {
        throw ConfigError("train: no training windows");
    }
    const auto& c = model.config();
    auto& store = model.store();
    Adam<T> opt(store, AdamOptions{spec.learning_rate});
    Rng shuffle(Rng::mix(spec.seed, "shuffle"));
    Rng drop(Rng::mix(spec.seed, "dropout"));
    TrainHistory h;
    EarlyStopping stopper(spec.patience);
    auto best = store.snapshot();
    std::vector<std::size_t> order(train_rows.size());
    std::size_t steps = 0;
    bool step_limit = false;
    for (std::size_t epoch = 1; epoch <= spec.max_epochs && !step_limit; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle.engine());
        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (const auto& idx : make_batches(order, spec.batch_size)) {
            const auto batch = make_batch(train_rows, idx, model.schema(), c.lookback, c.horizon);
            store.zero_grad();
            const auto r = model.forward(batch, Mode{true, &drop});
            Var<T> loss = rmse(r.pred_norm, Var<T>(r.target_norm));
            const double lv = static_cast<double>(loss.value()[0]);
            if (!std::isfinite(lv)) {
                h.aborted = true;
                h.abort_reason = "non-finite loss at step " + std::to_string(steps + 1);
                store.restore(best);
                return h;
            }
            backward(loss);
            opt.step();
            ++steps;
            h.step_losses.push_back(lv);
            if (hooks.on_step) hooks.on_step(steps, lv);
            loss_sum += lv;
            ++n_batches;
            if (spec.max_steps && steps >= spec.max_steps) {
                step_limit = true;
                break;
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.steps = steps;
        rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(n_batches, 1));
        if (hooks.val_loss) {
            rec.val_loss = hooks.val_loss(epoch);
        } else {
            rec.val_loss = val_rows.empty() ? rec.train_loss : validation_loss(model, val_rows, spec.batch_size);
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        h.epochs.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);
        if (!std::isfinite(rec.val_loss)) {
            h.aborted = true;
            h.abort_reason = "non-finite validation loss at epoch " + std::to_string(epoch);
            break;
        }
        if (stopper.update(epoch, rec.val_loss)) best = store.snapshot();
        if (stopper.should_stop()) {
            h.stopped_early = true;
            break;
        }
    }
    h.best_epoch = stopper.best_epoch();
    h.best_val = stopper.best();
    store.restore(best);
    return h;
}

nlohmann::json Metrics::to_json(const std::vector<std::string>& names) const {
    nlohmann::json j{{"mse", mse}, {"mae", mae}, {"rmse", rmse}, {"rmse_series_mean", rmse_series_mean}, {"rows", rows}};
    for (std::size_t c = 0; c < mse_per_channel.size(); ++c) {
        const std::string n = c < names.size() ? names[c] : "channel" + std::to_string(c);
        j["channels"][n] = {{"mse", mse_per_channel[c]}, {"mae", mae_per_channel[c]}};
    }
    return j;
}

Metrics compute_metrics(const std::vector<double>& pred, const std::vector<double>& target, std::size_t rows,
                        std::size_t channels, std::size_t horizon) {
    if (pred.size() != rows * channels * horizon || target.size() != pred.size()) {
        throw DimensionError("metrics: " + std::to_string(pred.size()) + " predictions and " +
                             std::to_string(target.size()) + " targets for " + std::to_string(rows) + "x" +
                             std::to_string(channels) + "x" + std::to_string(horizon));
    }
    Metrics m;
    m.rows = rows;
    m.mse_per_channel.assign(channels, 0.0);
    m.mae_per_channel.assign(channels, 0.0);
    double series_rmse_sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double row_sq = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t t = 0; t < horizon; ++t) {
                const std::size_t i = (r * channels + c) * horizon + t;
                const double d = pred[i] - target[i];
                m.mse_per_channel[c] += d * d;
                m.mae_per_channel[c] += std::abs(d);
                row_sq += d * d;
            }
        }
        series_rmse_sum += std::sqrt(row_sq / static_cast<double>(channels * horizon));
    }
    const double per_channel = static_cast<double>(rows * horizon);
    for (std::size_t c = 0; c < channels; ++c) {
        m.mse += m.mse_per_channel[c];
        m.mae += m.mae_per_channel[c];
        if (per_channel > 0) {
            m.mse_per_channel[c] /= per_channel;
            m.mae_per_channel[c] /= per_channel;
        }
    }
    const double total = per_channel * static_cast<double>(channels);
    if (total > 0) {
        m.mse /= total;
        m.mae /= total;
        m.rmse = std::sqrt(m.mse);
        m.rmse_series_mean = series_rmse_sum / static_cast<double>(rows);
    }
    return m;
}

template <typename T>
std::vector<double> predict(const Model<T>& model, const std::vector<WindowRow>& rows, std::size_t batch_size) {
    NoGradGuard no_grad;
    const auto& c = model.config();
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> out;
    out.reserve(rows.size() * c.channels * c.horizon);
    for (const auto& idx : make_batches(order, batch_size)) {
        const auto batch = make_batch(rows, idx, model.schema(), c.lookback, c.horizon);
        const auto r = model.forward(batch, Mode{});
        const auto& p = r.pred.value();
        for (std::size_t b = 0; b < idx.size(); ++b) {
            for (std::size_t ch = 0; ch < c.channels; ++ch) {
                const Scaler& sc = batch.scale[b * c.channels + ch];
                for (std::size_t t = 0; t < c.horizon; ++t) {
                    out.push_back(sc.invert(static_cast<double>(p[(b * c.channels + ch) * c.horizon + t])));
                }
            }
        }
    }
    return out;
}

std::vector<double> original_targets(const std::vector<WindowRow>& rows) {
    std::vector<double> out;
    for (const auto& r : rows) {
        const std::size_t C = r.scale.size();
        const std::size_t f = C ? r.target.size() / C : 0;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < f; ++t) out.push_back(r.scale[c].invert(r.target[c * f + t]));
    }
    return out;
}

template <typename T>
Metrics evaluate(const Model<T>& model, const std::vector<WindowRow>& rows, std::size_t batch_size) {
    const auto& c = model.config();
    return compute_metrics(predict(model, rows, batch_size), original_targets(rows), rows.size(), c.channels, c.horizon);
}

std::vector<double> persistence_forecast(const std::vector<WindowRow>& rows) {
    std::vector<double> out;
    for (const auto& r : rows) {
        const std::size_t C = r.scale.size();
        const std::size_t l = r.observed.size() / C;
        const std::size_t f = r.target.size() / C;
        for (std::size_t c = 0; c < C; ++c) {
            const double last = r.scale[c].invert(r.observed[c * l + l - 1]);
            out.insert(out.end(), f, last);
        }
    }
    return out;
}

Metrics evaluate_persistence(const std::vector<WindowRow>& rows) {
    if (rows.empty()) return Metrics{};
    const std::size_t C = rows.front().scale.size();
    const std::size_t f = rows.front().target.size() / C;
    return compute_metrics(persistence_forecast(rows), original_targets(rows), rows.size(), C, f);
}

template TrainHistory train(Model<float>&, const std::vector<WindowRow>&, const std::vector<WindowRow>&,
                            const TrainSpec&, const TrainHooks&);
template TrainHistory train(Model<double>&, const std::vector<WindowRow>&, const std::vector<WindowRow>&,
                            const TrainSpec&, const TrainHooks&);
template double validation_loss(const Model<float>&, const std::vector<WindowRow>&, std::size_t);
template double validation_loss(const Model<double>&, const std::vector<WindowRow>&, std::size_t);
template std::vector<double> predict(const Model<float>&, const std::vector<WindowRow>&, std::size_t);
template std::vector<double> predict(const Model<double>&, const std::vector<WindowRow>&, std::size_t);
template Metrics evaluate(const Model<float>&, const std::vector<WindowRow>&, std::size_t);
template Metrics evaluate(const Model<double>&, const std::vector<WindowRow>&, std::size_t);

}  // namespace mrt
