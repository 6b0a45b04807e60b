#include "mrt/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "mrt/errors.hpp"
#include "mrt/rng.hpp"

namespace mrt {

namespace {

std::string join_ks(const std::vector<std::size_t>& ks) {
    std::string s;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (i) s += '-';
        s += std::to_string(ks[i]);
    }
    return s;
}

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

AblationArm checked_arm(std::string study, std::string id, ModelConfig config, std::size_t repeats) {
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw ConfigError("ablation arm " + study + "/" + id + ": " + e.what());
    }
    return {std::move(study), std::move(id), std::move(config), repeats};
}

}  // namespace

std::string to_string(ModuleArm arm) {
    switch (arm) {
        case ModuleArm::none: return "none";
        case ModuleArm::tvkt: return "tvkt";
        case ModuleArm::cst: return "cst";
        case ModuleArm::both: return "both";
    }
    return "?";
}

ModuleArm module_arm_from_string(const std::string& s) {
    if (s == "none") return ModuleArm::none;
    if (s == "tvkt") return ModuleArm::tvkt;
    if (s == "cst") return ModuleArm::cst;
    if (s == "both") return ModuleArm::both;
    throw ConfigError("ablation: unknown module arm '" + s + "' (none, tvkt, cst, both)");
}

void AblationSpec::validate() const {
    try {
        check_resolutions(base_set);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("ablation.base_set: ") + e.what());
    }
    if (base_set.size() > 20) throw ConfigError("ablation.base_set: more than 20 resolutions");
    if (resolution_repeats == 0) throw ConfigError("ablation.resolution_repeats: must be >= 1");
    if (module_repeats == 0) throw ConfigError("ablation.module_repeats: must be >= 1");
    if (scaling_repeats == 0) throw ConfigError("ablation.scaling_repeats: must be >= 1");
    for (auto d : scaling_sizes) {
        if (d == 0 || d % 8 != 0) {
            throw ConfigError("ablation.scaling_sizes: " + std::to_string(d) + " is not a positive multiple of 8");
        }
    }
}

void to_json(nlohmann::json& j, const AblationSpec& s) {
    std::vector<std::string> ma, sa;
    for (auto a : s.module_arms) ma.push_back(to_string(a));
    for (auto a : s.scaling_arms) sa.push_back(to_string(a));
    j = {{"base_set", s.base_set},           {"resolution_repeats", s.resolution_repeats},
         {"module_arms", ma},                {"module_repeats", s.module_repeats},
         {"scaling_sizes", s.scaling_sizes}, {"scaling_arms", sa},
         {"scaling_repeats", s.scaling_repeats}};
}

void from_json(const nlohmann::json& j, AblationSpec& s) {
    static const std::vector<std::string> known{"base_set",      "resolution_repeats", "module_arms",    "module_repeats",
                                                "scaling_sizes", "scaling_arms",       "scaling_repeats"};
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw ConfigError("ablation." + k + ": unknown field");
        }
    }
    try {
        if (j.contains("base_set")) j.at("base_set").get_to(s.base_set);
        if (j.contains("resolution_repeats")) j.at("resolution_repeats").get_to(s.resolution_repeats);
        if (j.contains("module_repeats")) j.at("module_repeats").get_to(s.module_repeats);
        if (j.contains("scaling_sizes")) j.at("scaling_sizes").get_to(s.scaling_sizes);
        if (j.contains("scaling_repeats")) j.at("scaling_repeats").get_to(s.scaling_repeats);
        if (j.contains("module_arms")) {
            s.module_arms.clear();
            for (const auto& a : j.at("module_arms")) s.module_arms.push_back(module_arm_from_string(a.get<std::string>()));
        }
        if (j.contains("scaling_arms")) {
            s.scaling_arms.clear();
            for (const auto& a : j.at("scaling_arms")) s.scaling_arms.push_back(module_arm_from_string(a.get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("ablation: wrong type (") + e.what() + ")");
    }
}

std::vector<std::vector<std::size_t>> nonempty_subsets(const std::vector<std::size_t>& base) {
    std::vector<std::size_t> sorted = base;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::vector<std::size_t>> out;
    const std::size_t n = sorted.size();
    for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
        std::vector<std::size_t> s;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::size_t{1} << i)) s.push_back(sorted[i]);
        }
        out.push_back(std::move(s));
    }
    return out;
}

void apply_module_arm(ModelConfig& config, ModuleArm arm) {
    config.include_tvkt = arm == ModuleArm::tvkt || arm == ModuleArm::both;
    config.include_cst = arm == ModuleArm::cst || arm == ModuleArm::both;
}

std::vector<AblationArm> resolution_arms(const AblationSpec& spec, const ModelConfig& base) {
    spec.validate();
    std::vector<AblationArm> arms;
    for (auto& ks : nonempty_subsets(spec.base_set)) {
        ModelConfig c = base;
        c.K = ks;
        arms.push_back(checked_arm("resolution", "K=" + join_ks(ks), std::move(c), spec.resolution_repeats));
    }
    return arms;
}

std::vector<AblationArm> module_arms(const AblationSpec& spec, const ModelConfig& base) {
    spec.validate();
    std::vector<AblationArm> arms;
    for (auto a : spec.module_arms) {
        ModelConfig c = base;
        apply_module_arm(c, a);
        arms.push_back(checked_arm("module", to_string(a), std::move(c), spec.module_repeats));
    }
    return arms;
}

std::vector<AblationArm> scaling_arms(const AblationSpec& spec, const ModelConfig& base) {
    spec.validate();
    std::vector<AblationArm> arms;
    for (auto d : spec.scaling_sizes) {
        for (auto a : spec.scaling_arms) {
            ModelConfig c = base;
            c.d_model = d;
            c.d_ff = 2 * d;
            c.d_cross = d / 4;
            c.heads = d / 8;
            c.blocks = 2;
            apply_module_arm(c, a);
            arms.push_back(
                checked_arm("scaling", "d" + std::to_string(d) + "-" + to_string(a), std::move(c), spec.scaling_repeats));
        }
    }
    return arms;
}

std::uint64_t arm_seed(std::uint64_t base_seed, const std::string& arm_id, std::size_t repeat) {
    return Rng::mix(base_seed, arm_id + "#" + std::to_string(repeat));
}

SummaryStats summarize(const std::vector<double>& values) {
    SummaryStats s;
    s.n = values.size();
    if (s.n == 0) {
        s.mean = s.std = s.min = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    s.min = *std::min_element(values.begin(), values.end());
    return s;
}

std::vector<ArmResult> run_ablation(const std::vector<AblationArm>& arms, const ArmRunner& runner,
                                    std::uint64_t base_seed, std::size_t jobs) {
    struct Task {
        std::size_t arm;
        std::size_t repeat;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    std::vector<std::vector<double>> values(arms.size());
    std::vector<std::vector<std::string>> errors(arms.size());
    for (std::size_t a = 0; a < arms.size(); ++a) {
        values[a].assign(arms[a].repeats, std::numeric_limits<double>::quiet_NaN());
        errors[a].assign(arms[a].repeats, "");
        for (std::size_t r = 0; r < arms[a].repeats; ++r) tasks.push_back({a, r, arm_seed(base_seed, arms[a].id, r)});
    }
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const Task& t = tasks[i];
            try {
                values[t.arm][t.repeat] = runner(arms[t.arm], t.repeat, t.seed);
                if (!std::isfinite(values[t.arm][t.repeat])) errors[t.arm][t.repeat] = "non-finite result";
            } catch (const std::exception& e) {
                errors[t.arm][t.repeat] = e.what();
                if (errors[t.arm][t.repeat].empty()) errors[t.arm][t.repeat] = "unknown error";
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    std::vector<ArmResult> out;
    for (std::size_t a = 0; a < arms.size(); ++a) {
        ArmResult r;
        r.study = arms[a].study;
        r.id = arms[a].id;
        for (std::size_t rep = 0; rep < arms[a].repeats; ++rep) {
            r.seeds.push_back(arm_seed(base_seed, arms[a].id, rep));
            if (errors[a][rep].empty()) {
                r.values.push_back(values[a][rep]);
            } else {
                r.failures.push_back("repeat " + std::to_string(rep) + ": " + errors[a][rep]);
            }
        }
        r.stats = summarize(r.values);
        out.push_back(std::move(r));
    }
    return out;
}

void write_report_csv(const std::filesystem::path& path, const std::vector<ArmResult>& results) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "study,arm,repeats,failed,mean,std,min\n";
    for (const auto& r : results) {
        os << r.study << ',' << r.id << ',' << r.seeds.size() << ',' << r.failures.size() << ',' << fmt(r.stats.mean)
           << ',' << fmt(r.stats.std) << ',' << fmt(r.stats.min) << '\n';
    }
}

void write_runs_csv(const std::filesystem::path& path, const std::vector<ArmResult>& results) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "study,arm,repeat,seed,rmse,error\n";
    for (const auto& r : results) {
        std::size_t ok = 0;
        for (std::size_t rep = 0; rep < r.seeds.size(); ++rep) {
            const std::string tag = "repeat " + std::to_string(rep) + ": ";
            auto it = std::find_if(r.failures.begin(), r.failures.end(),
                                   [&](const std::string& f) { return f.rfind(tag, 0) == 0; });
            os << r.study << ',' << r.id << ',' << rep << ',' << r.seeds[rep] << ',';
            if (it == r.failures.end()) {
                os << fmt(r.values[ok++]) << ",\n";
            } else {
                std::string msg = it->substr(tag.size());
                std::replace(msg.begin(), msg.end(), ',', ';');
                std::replace(msg.begin(), msg.end(), '\n', ' ');
                os << ",\"" << msg << "\"\n";
            }
        }
    }
}

}  // namespace mrt
