#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mrt/commands.hpp"
#include "mrt/dataset_io.hpp"
#include "mrt/errors.hpp"
#include "mrt/head.hpp"
#include "mrt/model.hpp"
#include "mrt/patch_plan.hpp"
#include "mrt/synthetic.hpp"
#include "mrt/verification.hpp"

namespace py = pybind11;
using namespace mrt;

namespace {

using json = nlohmann::json;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Python dicts cross the boundary as JSON text.
json to_json_value(const py::object& obj) {
    const auto dumps = py::module_::import("json").attr("dumps");
    return json::parse(dumps(obj).cast<std::string>());
}

py::object from_json_value(const json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

template <typename T>
T parse(const py::object& obj) {
    return to_json_value(obj).get<T>();
}

std::vector<double> flat(const Array& a, std::size_t expect, const char* what) {
    if (static_cast<std::size_t>(a.size()) != expect) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(expect) + " values, got " +
                             std::to_string(a.size()));
    }
    return {a.data(), a.data() + a.size()};
}

class PyModel {
public:
    PyModel(const py::object& config, const py::object& schema)
        : model_(parse<ModelConfig>(config), parse<Schema>(schema)) {}
    explicit PyModel(Model<double> m) : model_(std::move(m)) {}

    static PyModel load(const std::filesystem::path& dir) { return PyModel(Model<double>::load(dir)); }
    void save(const std::filesystem::path& dir) const { model_.save(dir); }

    std::size_t parameter_count() const { return model_.parameter_count(); }
    std::map<std::string, std::size_t> module_parameter_counts() const { return model_.module_parameter_counts(); }

    py::list layout() const {
        py::list out;
        for (const auto& s : model_.layout().spans) out.append(py::make_tuple(to_string(s.family), s.start, s.length));
        return out;
    }

    py::object config() const { return from_json_value(json(model_.config())); }

    // observed [B,C,l], tvk [B,C,l+f,V_tvk], statics [B,C,V_s] -> forecast [B,C,f]
    Array forecast(const Array& observed, const Array& tvk, const Array& statics,
                   const std::vector<std::size_t>& pad_len) const {
        const auto& c = model_.config();
        const auto& schema = model_.schema();
        if (observed.ndim() != 3) throw DimensionError("observed must be [B,C,l]");
        SeriesBatch b;
        b.batch = static_cast<std::size_t>(observed.shape(0));
        b.channels = c.channels;
        b.lookback = c.lookback;
        b.horizon = c.horizon;
        b.n_tvk = schema.tvk().size();
        b.n_static = schema.statics().size();
        b.observed = flat(observed, b.batch * b.channels * b.lookback, "observed");
        b.tvk = flat(tvk, b.batch * b.channels * (b.lookback + b.horizon) * b.n_tvk, "tvk");
        b.statics = flat(statics, b.batch * b.channels * b.n_static, "statics");
        b.target.assign(b.batch * b.channels * b.horizon, 0.0);
        b.pad_len = pad_len.empty() ? std::vector<std::size_t>(b.batch, 0) : pad_len;
        b.scale.assign(b.batch * b.channels, Scaler{});
        for (std::size_t i = 0; i < b.batch; ++i) b.row_ids.push_back(i);
        const auto r = model_.forward(b, Mode{});
        Array out({b.batch, b.channels, b.horizon});
        std::copy(r.pred.value().data().begin(), r.pred.value().data().end(), out.mutable_data());
        return out;
    }

private:
    Model<double> model_;
};

int run(const std::string& command, const py::object& config, bool corrupt, std::string* log_out) {
    std::ostringstream log;
    int code = kExitFailure;
    try {
        const auto c = parse<RunConfig>(config);
        if (command == "synth") code = cmd_synth(c, log);
        else if (command == "train") code = cmd_train(c, log);
        else if (command == "evaluate") code = cmd_evaluate(c, log);
        else if (command == "predict") code = cmd_predict(c, log);
        else if (command == "gradcheck") code = cmd_gradcheck(c, log, corrupt);
        else if (command == "ablate") code = cmd_ablate(c, log);
        else if (command == "info") code = cmd_info(c, log);
        else throw ConfigError("unknown command '" + command + "'");
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        code = exit_code_for(e);
    }
    *log_out = log.str();
    return code;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Multiple-resolution patch tokenization forecaster";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

    m.def("patch_plan", [](std::size_t h, std::size_t k) {
        const auto p = make_patch_plan(h, k);
        return py::make_tuple(p.lengths, p.offsets);
    }, py::arg("h"), py::arg("k"), "(lengths, offsets) of the k patches covering h steps.");

    m.def("head_param_count", [](const std::vector<std::size_t>& K, std::size_t horizon, std::size_t d_model) {
        const auto c = head_param_count(K, horizon, d_model);
        py::dict d;
        d["weights"] = c.weights;
        d["biases"] = c.biases;
        d["flattening"] = c.flattening;
        return d;
    }, py::arg("K"), py::arg("horizon"), py::arg("d_model"));

    m.def("default_config", [] { return from_json_value(json(RunConfig{})); });
    m.def("default_model_config", [] { return from_json_value(json(ModelConfig{})); });
    m.def("synthetic_schema", [] { return from_json_value(json(synthetic_schema({}))); });
    m.def("toy_config", [] { return from_json_value(json(toy_config())); });
    m.def("toy_schema", [] { return from_json_value(json(toy_schema())); });

    m.def("synthesize", [](std::size_t n_series, std::uint64_t seed, const std::filesystem::path& out) {
        save_dataset(generate_synthetic_markdown(n_series, seed).data, out);
        return directory_hash(out);
    }, py::arg("n_series"), py::arg("seed"), py::arg("out"), "Writes a synthetic dataset; returns its content hash.");

    m.def("grad_check", [](const py::object& config, const py::object& schema, std::vector<std::string> modules) {
        if (modules.empty()) modules = grad_check_modules();
        py::dict out;
        for (const auto& r : run_grad_checks(parse<ModelConfig>(config), parse<Schema>(schema), modules)) {
            out[py::str(r.module)] = py::make_tuple(r.report.passed(), r.report.max_rel_error());
        }
        return out;
    }, py::arg("config"), py::arg("schema"), py::arg("modules") = std::vector<std::string>{});

    m.def("run", [](const std::string& command, const py::object& config, bool corrupt) {
        std::string log;
        const int code = run(command, config, corrupt, &log);
        return py::make_tuple(code, log);
    }, py::arg("command"), py::arg("config"), py::arg("corrupt") = false,
       "Runs a CLI command with a config dict; returns (exit_code, log).");

    py::class_<PyModel>(m, "Model")
        .def(py::init<const py::object&, const py::object&>(), py::arg("config"), py::arg("schema"))
        .def_static("load", &PyModel::load)
        .def("save", &PyModel::save)
        .def("parameter_count", &PyModel::parameter_count)
        .def("module_parameter_counts", &PyModel::module_parameter_counts)
        .def("layout", &PyModel::layout)
        .def("config", &PyModel::config)
        .def("forecast", &PyModel::forecast, py::arg("observed"), py::arg("tvk"), py::arg("statics"),
             py::arg("pad_len") = std::vector<std::size_t>{});
}
