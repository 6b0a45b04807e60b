// mrt: train, evaluate and inspect multiple-resolution forecasters.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mrt/commands.hpp"
#include "mrt/errors.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> jobs;
    std::optional<int> precision;
    std::string dataset;
    std::string checkpoint;
    std::string split;
    std::optional<std::size_t> n_series;
    std::optional<std::size_t> max_epochs;
    std::vector<std::string> modules;
    bool modules_given = false;
    bool corrupt = false;
};

mrt::RunConfig resolve(const Overrides& o, const std::string& command) {
    mrt::RunConfig c = o.config.empty() ? mrt::RunConfig{} : mrt::load_run_config(o.config);
    if (o.seed) {
        if (command == "synth") {
            c.synth.seed = *o.seed;
        } else {
            c.model.seed = *o.seed;
            c.train.seed = *o.seed;
        }
    }
    if (!o.out.empty()) c.paths.output = o.out;
    if (o.jobs) c.jobs = *o.jobs;
    if (o.precision) c.precision = *o.precision;
    if (!o.dataset.empty()) c.paths.dataset = o.dataset;
    if (!o.checkpoint.empty()) c.paths.checkpoint = o.checkpoint;
    if (!o.split.empty()) c.split = o.split;
    if (o.n_series) c.synth.n_series = *o.n_series;
    if (o.max_epochs) c.train.max_epochs = *o.max_epochs;
    if (o.modules_given) c.gradcheck.modules = o.modules;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiple-resolution tokenization forecaster"};
    app.require_subcommand(1);
    Overrides o;
    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "seed for model init and shuffling (synth: generator seed)");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--jobs", o.jobs, "concurrent ablation runs");
        sub->add_option("--precision", o.precision, "32 or 64")->check(CLI::IsMember({32, 64}));
        sub->add_option("--dataset", o.dataset, "dataset directory");
    };
    auto* train = app.add_subcommand("train", "train a model; writes checkpoint, history, split report and metrics");
    auto* evaluate = app.add_subcommand("evaluate", "metrics of a checkpoint on one split");
    auto* predict = app.add_subcommand("predict", "forecasts of a checkpoint on one split, as CSV");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks of every module");
    auto* ablate = app.add_subcommand("ablate", "resolution, module and scaling ablations");
    auto* synth = app.add_subcommand("synth", "write a synthetic markdown dataset");
    auto* info = app.add_subcommand("info", "token layout and parameter counts of a config");
    for (auto* s : {train, evaluate, predict, gradcheck, ablate, synth, info}) common(s);
    train->add_option("--max-epochs", o.max_epochs, "override train.max_epochs");
    for (auto* s : {evaluate, predict}) {
        s->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
        s->add_option("--split", o.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    }
    train->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
    synth->add_option("--n-series", o.n_series, "number of series");
    gradcheck->add_option("--module", o.modules, "module to check (repeatable; default all)")
        ->each([&o](const std::string&) { o.modules_given = true; });
    gradcheck->add_flag("--corrupt", o.corrupt, "perturb analytic gradients (negative control)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mrt::kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const mrt::RunConfig cfg = resolve(o, command);
        if (command == "train") return mrt::cmd_train(cfg, std::cout);
        if (command == "evaluate") return mrt::cmd_evaluate(cfg, std::cout);
        if (command == "predict") return mrt::cmd_predict(cfg, std::cout);
        if (command == "gradcheck") return mrt::cmd_gradcheck(cfg, std::cout, o.corrupt);
        if (command == "ablate") return mrt::cmd_ablate(cfg, std::cout);
        if (command == "synth") return mrt::cmd_synth(cfg, std::cout);
        if (command == "info") return mrt::cmd_info(cfg, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return mrt::exit_code_for(e);
    }
    return mrt::kExitFailure;
}
