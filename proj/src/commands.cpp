#include "mrt/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>

#include "mrt/ablation.hpp"
#include "mrt/errors.hpp"
#include "mrt/training.hpp"
#include "mrt/verification.hpp"

namespace mrt {

namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::vector<std::string> channel_names(const Schema& schema) {
    std::vector<std::string> names;
    for (const auto& v : schema.observed()) names.push_back(v.name);
    return names;
}

const std::vector<WindowRow>& split_rows(const PreparedData& pd, const std::string& split) {
    if (split == "train") return pd.train;
    if (split == "val") return pd.val;
    return pd.test;
}

void check_channels(const ModelConfig& model, const Schema& schema, const std::string& field) {
    if (model.channels != schema.channels()) {
        throw ConfigError(field + ".channels: " + std::to_string(model.channels) + " but the dataset has " +
                          std::to_string(schema.channels()) + " observed channels");
    }
}

void write_metrics_csv(const fs::path& path, const Metrics& model, const Metrics& persistence,
                       const std::vector<std::string>& channels) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "forecaster,channel,mse,mae\n" << std::setprecision(17);
    auto rows = [&](const std::string& name, const Metrics& m) {
        for (std::size_t c = 0; c < channels.size(); ++c) {
            out << name << ',' << channels[c] << ',' << m.mse_per_channel[c] << ',' << m.mae_per_channel[c] << '\n';
        }
        out << name << ",all," << m.mse << ',' << m.mae << '\n';
    };
    rows("model", model);
    rows("persistence", persistence);
}

template <typename T>
int train_impl(const RunConfig& cfg, std::ostream& log) {
    const fs::path out = cfg.output_dir();
    fs::create_directories(out);
    const PreparedData pd = load_prepared(cfg);
    check_channels(cfg.model, pd.schema, "model");
    write_json(out / "split_report.json", pd.split_report);
    write_json(out / "scalers.json", pd.scalers);
    save_run_config(cfg, out / "config.json");
    log << "windows: train " << pd.train.size() << ", val " << pd.val.size() << ", test " << pd.test.size() << '\n';

    Model<T> model(cfg.model, pd.schema);
    log << "parameters: " << model.parameter_count() << ", tokens: " << model.layout().total() << '\n';
    TrainHooks hooks;
    hooks.on_epoch = [&log](const EpochRecord& e) {
        log << "epoch " << e.epoch << "  train " << e.train_loss << "  val " << e.val_loss << '\n';
    };
    const TrainHistory h = train(model, pd.train, pd.val, cfg.train, hooks);
    h.write_csv(out / "history.csv");
    h.write_timing_csv(out / "timing.csv");
    write_json(out / "train_summary.json", h.summary());
    model.save(cfg.checkpoint_dir());
    write_json(cfg.checkpoint_dir() / "scalers.json", pd.scalers);
    if (!pd.test.empty()) {
        const auto names = channel_names(pd.schema);
        const Metrics m = evaluate(model, pd.test, cfg.train.batch_size);
        const Metrics p = evaluate_persistence(pd.test);
        write_json(out / "metrics.json", {{"split", "test"}, {"model", m.to_json(names)}, {"persistence", p.to_json(names)}});
        write_metrics_csv(out / "metrics.csv", m, p, names);
        log << "test mse " << m.mse << " (persistence " << p.mse << ")\n";
    }
    if (h.aborted) {
        log << "training aborted: " << h.abort_reason << '\n';
        return kExitFailure;
    }
    return kExitOk;
}

template <typename T>
int evaluate_impl(const RunConfig& cfg, std::ostream& log, bool write_predictions) {
    const fs::path out = cfg.output_dir();
    fs::create_directories(out);
    const Model<T> model = Model<T>::load(cfg.checkpoint_dir());
    RunConfig effective = cfg;
    effective.model = model.config();
    const PreparedData pd = load_prepared(effective);
    if (!(pd.schema == model.schema())) {
        throw ConfigError("paths.dataset: schema differs from the checkpoint's schema");
    }
    const auto& rows = split_rows(pd, cfg.split);
    if (rows.empty()) throw SplitError("split '" + cfg.split + "' has no windows");
    const auto names = channel_names(pd.schema);
    const std::size_t C = names.size(), f = model.config().horizon;
    const auto pred = predict(model, rows, cfg.train.batch_size);
    const auto target = original_targets(rows);
    const Metrics m = compute_metrics(pred, target, rows.size(), C, f);
    if (write_predictions) {
        std::ofstream os(out / "predictions.csv");
        if (!os) throw IoError("cannot write " + (out / "predictions.csv").string());
        os << "row,series_id,window_start,channel,step,prediction,target\n" << std::setprecision(17);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t t = 0; t < f; ++t) {
                    const std::size_t i = (r * C + c) * f + t;
                    os << r << ',' << rows[r].series_id << ',' << format_iso8601(rows[r].start) << ',' << names[c] << ','
                       << t << ',' << pred[i] << ',' << target[i] << '\n';
                }
            }
        }
        log << "wrote " << rows.size() << " forecasts to " << (out / "predictions.csv").string() << '\n';
        return kExitOk;
    }
    const Metrics p = evaluate_persistence(rows);
    write_json(out / "metrics.json", {{"split", cfg.split}, {"model", m.to_json(names)}, {"persistence", p.to_json(names)}});
    write_metrics_csv(out / "metrics.csv", m, p, names);
    log << cfg.split << " mse " << m.mse << "  mae " << m.mae << "  (persistence mse " << p.mse << ")\n";
    return kExitOk;
}

template <typename T>
double ablation_run(const PreparedData& pd, const RunConfig& cfg, const AblationArm& arm, std::uint64_t seed,
                    const fs::path& dir) {
    ModelConfig c = arm.config;
    c.seed = seed;
    Model<T> model(c, pd.schema);
    TrainSpec ts = cfg.train;
    ts.seed = seed;
    const TrainHistory h = train(model, pd.train, pd.val, ts);
    h.write_csv(dir / (arm.study + "_" + arm.id + "_seed" + std::to_string(seed) + "_history.csv"));
    if (h.aborted) throw Error("training aborted: " + h.abort_reason);
    return evaluate(model, pd.test, ts.batch_size).rmse;
}

}  // namespace

PreparedData load_prepared(const RunConfig& cfg) {
    LoadOptions lo;
    lo.quantise = cfg.data.quantise;
    lo.keep_fraction = cfg.data.keep_fraction;
    const Dataset data = load_dataset(cfg.paths.dataset, lo);
    PrepareOptions po;
    po.lookback = cfg.model.lookback;
    po.horizon = cfg.model.horizon;
    po.stride = cfg.data.stride;
    po.split.test_fraction = cfg.data.test_fraction;
    po.split.val_fraction = cfg.data.val_fraction;
    return prepare_data(data, po);
}

int cmd_synth(const RunConfig& cfg, std::ostream& log) {
    cfg.validate("synth");
    const fs::path dir = cfg.paths.dataset.empty() ? cfg.output_dir() / "dataset" : fs::path(cfg.paths.dataset);
    const SynthDataset sd = generate_synthetic_markdown(cfg.synth.n_series, cfg.synth.seed, cfg.synth.params);
    save_dataset(sd.data, dir);
    const std::string hash = directory_hash(dir);
    fs::create_directories(cfg.output_dir());
    nlohmann::json truth = nlohmann::json::array();
    for (std::size_t i = 0; i < sd.truth.size(); ++i) {
        truth.push_back({{"series_id", sd.data.series[i].id},
                         {"level", sd.truth[i].level},
                         {"reduction_steps", sd.truth[i].reduction_steps},
                         {"reduction_discounts", sd.truth[i].reduction_discounts}});
    }
    write_json(cfg.output_dir() / "synth_truth.json", truth);
    write_json(cfg.output_dir() / "synth_summary.json", {{"dataset", dir.string()},
                                                         {"n_series", cfg.synth.n_series},
                                                         {"seed", cfg.synth.seed},
                                                         {"params", cfg.synth.params},
                                                         {"hash", hash}});
    log << "wrote " << cfg.synth.n_series << " series to " << dir.string() << "\nhash " << hash << '\n';
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
    cfg.validate("train");
    return cfg.precision == 64 ? train_impl<double>(cfg, log) : train_impl<float>(cfg, log);
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
    cfg.validate("evaluate");
    return cfg.precision == 64 ? evaluate_impl<double>(cfg, log, false) : evaluate_impl<float>(cfg, log, false);
}

int cmd_predict(const RunConfig& cfg, std::ostream& log) {
    cfg.validate("predict");
    return cfg.precision == 64 ? evaluate_impl<double>(cfg, log, true) : evaluate_impl<float>(cfg, log, true);
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& log, bool corrupt) {
    cfg.validate("gradcheck");
    const Schema schema = cfg.paths.dataset.empty() ? toy_schema() : load_dataset(cfg.paths.dataset).schema;
    check_channels(cfg.gradcheck.model, schema, "gradcheck.model");
    GradCheckOptions o;
    o.tolerance = cfg.gradcheck.tolerance;
    o.step = cfg.gradcheck.step;
    o.max_coords = cfg.gradcheck.max_coords;
    o.seed = cfg.train.seed;
    GradTamper tamper;
    if (corrupt) {
        tamper = [](const std::string&, const std::string&, Tensor<double>& g) {
            for (auto& v : g.data()) v = v * 1.01 + 1e-3;
        };
    }
    const auto reports = run_grad_checks(cfg.gradcheck.model, schema, cfg.gradcheck.modules, o, tamper);
    if (reports.empty()) log << "warning: no modules selected; nothing to check\n";
    bool ok = true;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : reports) {
        log << "[" << r.module << "] " << r.report.to_string() << '\n';
        ok = ok && r.report.passed();
        j.push_back({{"module", r.module}, {"passed", r.report.passed()}, {"max_rel_error", r.report.max_rel_error()}});
    }
    fs::create_directories(cfg.output_dir());
    write_json(cfg.output_dir() / "gradcheck.json", {{"tolerance", o.tolerance}, {"passed", ok}, {"modules", j}});
    log << (ok ? "gradient check passed" : "gradient check FAILED") << '\n';
    return ok ? kExitOk : kExitFailure;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& log) {
    cfg.validate("ablate");
    const fs::path out = cfg.output_dir() / "ablation";
    fs::create_directories(out);
    const PreparedData pd = load_prepared(cfg);
    check_channels(cfg.model, pd.schema, "model");
    std::vector<AblationArm> arms;
    for (const auto& study : cfg.ablation.studies) {
        std::vector<AblationArm> a;
        if (study == "resolution") a = resolution_arms(cfg.ablation.spec, cfg.model);
        if (study == "module") a = module_arms(cfg.ablation.spec, cfg.model);
        if (study == "scaling") a = scaling_arms(cfg.ablation.spec, cfg.model);
        arms.insert(arms.end(), a.begin(), a.end());
    }
    std::mutex log_mutex;
    const ArmRunner runner = [&](const AblationArm& arm, std::size_t repeat, std::uint64_t seed) {
        const double v = cfg.precision == 64 ? ablation_run<double>(pd, cfg, arm, seed, out)
                                             : ablation_run<float>(pd, cfg, arm, seed, out);
        std::lock_guard<std::mutex> lock(log_mutex);
        log << arm.study << '/' << arm.id << " repeat " << repeat << ": rmse " << v << '\n';
        return v;
    };
    const auto results = run_ablation(arms, runner, cfg.train.seed, cfg.jobs);
    write_report_csv(out / "report.csv", results);
    write_runs_csv(out / "runs.csv", results);
    const bool has_sweep = std::find(cfg.ablation.studies.begin(), cfg.ablation.studies.end(), "resolution") !=
                           cfg.ablation.studies.end();
    std::ofstream sweep;
    if (has_sweep) {
        sweep.open(out / "resolution_sweep.csv");
        sweep << "K,n_resolutions,n_mrp,mean,std,min,failed\n" << std::setprecision(17);
    }
    std::size_t failed = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        failed += results[i].failures.size();
        for (const auto& f : results[i].failures) log << "failed " << results[i].study << '/' << results[i].id << ' ' << f << '\n';
        if (results[i].study != "resolution") continue;
        std::size_t n_mrp = 0;
        for (auto k : arms[i].config.K) n_mrp += k;
        sweep << results[i].id.substr(2) << ',' << arms[i].config.K.size() << ',' << n_mrp << ',' << results[i].stats.mean
              << ',' << results[i].stats.std << ',' << results[i].stats.min << ',' << results[i].failures.size() << '\n';
    }
    log << arms.size() << " arms, " << failed << " failed repeats; report in " << (out / "report.csv").string() << '\n';
    return kExitOk;
}

int cmd_info(const RunConfig& cfg, std::ostream& log) {
    cfg.validate("info");
    const Schema schema = cfg.paths.dataset.empty() ? synthetic_schema(cfg.synth.params) : load_dataset(cfg.paths.dataset).schema;
    check_channels(cfg.model, schema, "model");
    const Model<float> model(cfg.model, schema);
    const auto& layout = model.layout();
    log << "tokens " << layout.total() << '\n';
    for (const auto& s : layout.spans) log << "  " << to_string(s.family) << " [" << s.start << ", " << s.start + s.length << ")\n";
    log << "parameters " << model.parameter_count() << '\n';
    for (const auto& [name, n] : model.module_parameter_counts()) log << "  " << name << ' ' << n << '\n';
    const auto hc = head_param_count(cfg.model.K, cfg.model.horizon, cfg.model.d_model);
    log << "head weights " << hc.weights << " (flattening head " << hc.flattening << ")\n";
    return kExitOk;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SchemaError*>(&e)) return kExitConfig;
    return kExitFailure;
}

}  // namespace mrt
