#include "mrt/run_config.hpp"

#include <algorithm>
#include <fstream>

#include "mrt/errors.hpp"
#include "mrt/verification.hpp"

namespace mrt {

namespace {

void reject_unknown(const nlohmann::json& j, const std::string& section, const std::vector<std::string>& known) {
    if (!j.is_object()) throw ConfigError(section + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw ConfigError(section + "." + k + ": unknown field");
        }
    }
}

template <typename F>
void get(const nlohmann::json& j, const std::string& section, const char* key, F& field) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(section + "." + key + ": wrong type");
    }
}

// Re-raises nested config errors with the section prefix when missing.
template <typename F>
void section(const nlohmann::json& j, const std::string& name, F&& parse) {
    if (!j.contains(name)) return;
    const auto& s = j.at(name);
    if (!s.is_object()) throw ConfigError(name + ": expected an object");
    try {
        parse(s);
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.rfind(name + ".", 0) == 0 || msg.rfind(name + ":", 0) == 0) throw;
        throw ConfigError(name + "." + msg);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(name + ": " + e.what());
    }
}

}  // namespace

RunConfig::RunConfig() {
    gradcheck.model = toy_config();
    gradcheck.modules = grad_check_modules();
}

std::filesystem::path RunConfig::checkpoint_dir() const {
    return paths.checkpoint.empty() ? std::filesystem::path(paths.output) / "checkpoint"
                                    : std::filesystem::path(paths.checkpoint);
}

void RunConfig::validate(const std::string& command) const {
    model.validate();
    train.validate();
    synth.params.validate();
    ablation.spec.validate();
    try {
        gradcheck.model.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("gradcheck.") + e.what());
    }
    if (precision != 32 && precision != 64) throw ConfigError("run.precision: must be 32 or 64");
    if (jobs == 0) throw ConfigError("run.jobs: must be >= 1");
    if (split != "train" && split != "val" && split != "test") throw ConfigError("run.split: must be train, val or test");
    if (!(data.test_fraction > 0.0 && data.val_fraction >= 0.0 && data.test_fraction + data.val_fraction < 1.0)) {
        throw ConfigError("data.test_fraction: test and validation fractions must be >= 0 and sum below 1");
    }
    if (!(data.keep_fraction > 0.0 && data.keep_fraction <= 1.0)) throw ConfigError("data.keep_fraction: must lie in (0, 1]");
    if (synth.n_series == 0) throw ConfigError("synth.n_series: must be >= 1");
    if (!(gradcheck.tolerance > 0.0)) throw ConfigError("gradcheck.tolerance: must be > 0");
    if (!(gradcheck.step > 0.0)) throw ConfigError("gradcheck.step: must be > 0");
    for (const auto& m : gradcheck.modules) {
        const auto& all = grad_check_modules();
        if (std::find(all.begin(), all.end(), m) == all.end()) throw ConfigError("gradcheck.modules: unknown module '" + m + "'");
    }
    for (const auto& s : ablation.studies) {
        if (s != "resolution" && s != "module" && s != "scaling") {
            throw ConfigError("ablation.studies: unknown study '" + s + "' (resolution, module, scaling)");
        }
    }
    if (paths.output.empty()) throw ConfigError("paths.output: required");
    const bool needs_dataset = command == "train" || command == "evaluate" || command == "predict" || command == "ablate";
    if (needs_dataset) {
        if (paths.dataset.empty()) throw ConfigError("paths.dataset: required by '" + command + "'");
        if (!std::filesystem::is_directory(paths.dataset)) {
            throw ConfigError("paths.dataset: directory '" + paths.dataset + "' does not exist");
        }
    }
    if (command == "evaluate" || command == "predict") {
        const auto ck = checkpoint_dir();
        if (!std::filesystem::exists(ck / "model.json")) {
            throw ConfigError("paths.checkpoint: no checkpoint at '" + ck.string() + "'");
        }
    }
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json::object();
    j["paths"] = {{"dataset", c.paths.dataset}, {"output", c.paths.output}, {"checkpoint", c.paths.checkpoint}};
    j["model"] = c.model;
    j["train"] = c.train;
    j["data"] = {{"stride", c.data.stride},
                 {"test_fraction", c.data.test_fraction},
                 {"val_fraction", c.data.val_fraction},
                 {"keep_fraction", c.data.keep_fraction},
                 {"quantise", c.data.quantise}};
    j["synth"] = {{"n_series", c.synth.n_series}, {"seed", c.synth.seed}, {"params", c.synth.params}};
    j["gradcheck"] = {{"model", c.gradcheck.model},
                      {"modules", c.gradcheck.modules},
                      {"tolerance", c.gradcheck.tolerance},
                      {"step", c.gradcheck.step},
                      {"max_coords", c.gradcheck.max_coords}};
    nlohmann::json spec = c.ablation.spec;
    spec["studies"] = c.ablation.studies;
    j["ablation"] = spec;
    j["run"] = {{"precision", c.precision}, {"jobs", c.jobs}, {"split", c.split}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    reject_unknown(j, "config", {"paths", "model", "train", "data", "synth", "gradcheck", "ablation", "run"});
    section(j, "paths", [&](const nlohmann::json& s) {
        reject_unknown(s, "paths", {"dataset", "output", "checkpoint"});
        get(s, "paths", "dataset", c.paths.dataset);
        get(s, "paths", "output", c.paths.output);
        get(s, "paths", "checkpoint", c.paths.checkpoint);
    });
    section(j, "model", [&](const nlohmann::json& s) { from_json(s, c.model); });
    section(j, "train", [&](const nlohmann::json& s) { from_json(s, c.train); });
    section(j, "data", [&](const nlohmann::json& s) {
        reject_unknown(s, "data", {"stride", "test_fraction", "val_fraction", "keep_fraction", "quantise"});
        get(s, "data", "stride", c.data.stride);
        get(s, "data", "test_fraction", c.data.test_fraction);
        get(s, "data", "val_fraction", c.data.val_fraction);
        get(s, "data", "keep_fraction", c.data.keep_fraction);
        get(s, "data", "quantise", c.data.quantise);
    });
    section(j, "synth", [&](const nlohmann::json& s) {
        reject_unknown(s, "synth", {"n_series", "seed", "params"});
        get(s, "synth", "n_series", c.synth.n_series);
        get(s, "synth", "seed", c.synth.seed);
        if (s.contains("params")) {
            try {
                from_json(s.at("params"), c.synth.params);
            } catch (const ConfigError& e) {
                std::string msg = e.what();
                if (msg.rfind("synth.", 0) == 0) msg = msg.substr(6);
                throw ConfigError("synth.params." + msg);
            }
        }
    });
    section(j, "gradcheck", [&](const nlohmann::json& s) {
        reject_unknown(s, "gradcheck", {"model", "modules", "tolerance", "step", "max_coords"});
        if (s.contains("model")) {
            c.gradcheck.model = toy_config();
            try {
                from_json(s.at("model"), c.gradcheck.model);
            } catch (const ConfigError& e) {
                throw ConfigError(std::string("gradcheck.") + e.what());
            }
        }
        get(s, "gradcheck", "modules", c.gradcheck.modules);
        get(s, "gradcheck", "tolerance", c.gradcheck.tolerance);
        get(s, "gradcheck", "step", c.gradcheck.step);
        get(s, "gradcheck", "max_coords", c.gradcheck.max_coords);
    });
    section(j, "ablation", [&](const nlohmann::json& s) {
        nlohmann::json spec = s;
        if (spec.contains("studies")) {
            get(s, "ablation", "studies", c.ablation.studies);
            spec.erase("studies");
        }
        from_json(spec, c.ablation.spec);
    });
    section(j, "run", [&](const nlohmann::json& s) {
        reject_unknown(s, "run", {"precision", "jobs", "split"});
        get(s, "run", "precision", c.precision);
        get(s, "run", "jobs", c.jobs);
        get(s, "run", "split", c.split);
    });
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config: " + path.string() + " is not valid JSON (" + e.what() + ")");
    }
    RunConfig c;
    from_json(j, c);
    return c;
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << nlohmann::json(config).dump(2) << '\n';
}

}  // namespace mrt
