#include "mrt/model.hpp"

#include <fstream>
#include <numeric>

namespace mrt {

const char* to_string(NormFlavor f) { return f == NormFlavor::batch ? "batch" : "layer"; }

NormFlavor norm_flavor_from_string(const std::string& s) {
    if (s == "batch") return NormFlavor::batch;
    if (s == "layer") return NormFlavor::layer;
    throw ConfigError("norm: expected 'batch' or 'layer', got '" + s + "'");
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& msg) { throw ConfigError("model." + field + ": " + msg); };
    try {
        check_resolutions(K);
    } catch (const ConfigError& e) {
        fail("K", e.what());
    }
    if (lookback == 0) fail("lookback", "must be >= 1");
    if (horizon == 0) fail("horizon", "must be >= 1");
    if (channels == 0) fail("channels", "must be >= 1");
    if (d_model == 0) fail("d_model", "must be >= 1");
    if (d_ff == 0) fail("d_ff", "must be >= 1");
    if (blocks == 0) fail("blocks", "must be >= 1");
    if (heads == 0 || d_model % heads != 0) {
        fail("heads", std::to_string(heads) + " does not divide d_model=" + std::to_string(d_model));
    }
    if (K.back() > lookback) {
        fail("K", "largest resolution " + std::to_string(K.back()) + " exceeds lookback " + std::to_string(lookback));
    }
    if (K.back() > horizon) {
        fail("K", "largest resolution " + std::to_string(K.back()) + " exceeds horizon " + std::to_string(horizon));
    }
    if (include_tvkt && n_tvk == 0) fail("n_tvk", "must be >= 1 when include_tvkt is set");
    if (include_cst && n_cst == 0) fail("n_cst", "must be >= 1 when include_cst is set");
    if (include_cst && d_cross == 0) fail("d_cross", "must be >= 1 when include_cst is set");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout", "must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"K", c.K},
         {"lookback", c.lookback},
         {"horizon", c.horizon},
         {"channels", c.channels},
         {"d_model", c.d_model},
         {"d_ff", c.d_ff},
         {"d_cross", c.d_cross},
         {"heads", c.heads},
         {"blocks", c.blocks},
         {"n_tvk", c.n_tvk},
         {"n_static", c.n_static},
         {"n_cst", c.n_cst},
         {"dropout", c.dropout},
         {"norm", to_string(c.norm)},
         {"include_tvkt", c.include_tvkt},
         {"include_cst", c.include_cst},
         {"include_static", c.include_static},
         {"revin_affine", c.revin_affine},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    static const std::vector<std::string> known{"K",       "lookback",     "horizon",     "channels",       "d_model",
                                                "d_ff",    "d_cross",      "heads",       "blocks",         "n_tvk",
                                                "n_static", "n_cst",       "dropout",     "norm",           "include_tvkt",
                                                "include_cst", "include_static", "revin_affine", "seed"};
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw ConfigError("model." + k + ": unknown field");
        }
    }
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(field);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(std::string("model.") + key + ": wrong type");
        }
    };
    get("K", c.K);
    get("lookback", c.lookback);
    get("horizon", c.horizon);
    get("channels", c.channels);
    get("d_model", c.d_model);
    get("d_ff", c.d_ff);
    get("d_cross", c.d_cross);
    get("heads", c.heads);
    get("blocks", c.blocks);
    get("n_tvk", c.n_tvk);
    get("n_static", c.n_static);
    get("n_cst", c.n_cst);
    get("dropout", c.dropout);
    if (j.contains("norm")) c.norm = norm_flavor_from_string(j.at("norm").get<std::string>());
    get("include_tvkt", c.include_tvkt);
    get("include_cst", c.include_cst);
    get("include_static", c.include_static);
    get("revin_affine", c.revin_affine);
    get("seed", c.seed);
}

template <typename T>
const std::vector<std::string>& Model<T>::module_names() {
    static const std::vector<std::string> names{"revin",        "mrp",   "static",  "tvk.global",
                                                "tvk.specific", "mixer", "encoder", "head"};
    return names;
}

template <typename T>
Model<T>::Model(ModelConfig config, Schema schema)
    : config_(std::move(config)), schema_(std::move(schema)), store_(std::make_unique<ParameterStore<T>>()) {
    config_.validate();
    schema_.validate();
    if (schema_.channels() != config_.channels) {
        throw ConfigError("model.channels: " + std::to_string(config_.channels) + " but the schema declares " +
                          std::to_string(schema_.channels()) + " observed channels");
    }
    const auto& c = config_;
    Rng rng(c.seed);
    auto& store = *store_;
    if (c.revin_affine) {
        revin_gamma_ = store.add("revin.gamma", Tensor<T>({1, c.channels, 1}, T{1}));
        revin_beta_ = store.add("revin.beta", Tensor<T>({1, c.channels, 1}));
    }
    mrp_ = MrpTokenizer<T>(store, "mrp", c.K, c.lookback, c.d_model, rng);
    layout_.append(TokenFamily::mrp, mrp_.n_tokens());

    const auto statics = schema_.statics();
    if (c.include_static && !statics.empty()) {
        static_.emplace(store, "static", statics, c.d_model, c.n_static, rng);
        layout_.append(TokenFamily::st, static_->n_tokens());
    }
    const auto tvk = schema_.tvk();
    std::vector<VariableSchema> gvars, svars;
    for (std::size_t v = 0; v < tvk.size(); ++v) {
        if (tvk[v].scope == VarScope::global) {
            global_vars_.push_back(v);
            gvars.push_back(tvk[v]);
        } else {
            specific_vars_.push_back(v);
            svars.push_back(tvk[v]);
        }
    }
    const std::size_t span = c.lookback + c.horizon;
    if (c.include_tvkt && !gvars.empty()) {
        tvk_global_.emplace(store, "tvk.global", gvars, true, c.K, span, c.d_model, c.n_tvk, rng);
        layout_.append(TokenFamily::tvkt_global, c.n_tvk);
    }
    if (c.include_tvkt && !svars.empty()) {
        tvk_specific_.emplace(store, "tvk.specific", svars, false, c.K, span, c.d_model, c.n_tvk, rng);
        layout_.append(TokenFamily::tvkt_specific, c.n_tvk);
    }
    if (c.include_cst) {
        mixer_.emplace(store, "mixer", c.channels, layout_.total(), c.n_cst, c.d_model, c.d_cross, c.dropout, c.norm,
                       rng);
        layout_.append(TokenFamily::cst, c.n_cst);
    }
    encoder_ = Encoder<T>(store, "encoder", layout_.total(), c.d_model, c.d_ff, c.heads, c.blocks, c.dropout, c.norm,
                          rng);
    head_ = ReverseSplitter<T>(store, "head", c.K, c.horizon, c.d_model, rng);
    audit();
}

template <typename T>
std::map<std::string, std::size_t> Model<T>::module_parameter_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& m : module_names()) out[m] = store_->parameter_count(m + ".");
    return out;
}

template <typename T>
void Model<T>::audit() const {
    for (const auto& e : store_->entries()) {
        const bool owned = std::any_of(module_names().begin(), module_names().end(),
                                       [&](const std::string& m) { return e.name.rfind(m + ".", 0) == 0; });
        if (!owned) {
            throw ConfigError("parameter '" + e.name + "' belongs to no module");
        }
    }
    const auto counts = module_parameter_counts();
    const std::size_t sum = std::accumulate(counts.begin(), counts.end(), std::size_t{0},
                                            [](std::size_t a, const auto& kv) { return a + kv.second; });
    if (sum != store_->parameter_count()) {
        throw ConfigError("module parameter counts sum to " + std::to_string(sum) + ", store holds " +
                          std::to_string(store_->parameter_count()));
    }
}

template <typename T>
void Model<T>::check_batch(const SeriesBatch& b) const {
    const auto& c = config_;
    auto mismatch = [&](const std::string& what, std::size_t got, std::size_t want) {
        throw DimensionError("forward (input check): batch " + what + " is " + std::to_string(got) + ", model expects " +
                             std::to_string(want));
    };
    if (b.channels != c.channels) mismatch("channels", b.channels, c.channels);
    if (b.lookback != c.lookback) mismatch("lookback", b.lookback, c.lookback);
    if (b.horizon != c.horizon) mismatch("horizon", b.horizon, c.horizon);
    if (b.n_tvk != schema_.tvk().size()) mismatch("tvk variable count", b.n_tvk, schema_.tvk().size());
    if (b.n_static != schema_.statics().size()) mismatch("static variable count", b.n_static, schema_.statics().size());
    if (b.batch == 0) throw DimensionError("forward (input check): empty batch");
    if (b.pad_len.size() != b.batch) mismatch("pad_len entries", b.pad_len.size(), b.batch);
    if (b.target.size() != b.batch * c.channels * c.horizon) {
        mismatch("target size", b.target.size(), b.batch * c.channels * c.horizon);
    }
}

template <typename T>
Tensor<T> Model<T>::tvk_scope(const SeriesBatch& b, const std::vector<std::size_t>& vars) const {
    const std::size_t span = b.lookback + b.horizon;
    const std::size_t rows = b.batch * b.channels * span;
    Tensor<T> out({b.batch, b.channels, span, vars.size()});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < vars.size(); ++i) {
            out[r * vars.size() + i] = static_cast<T>(b.tvk[r * b.n_tvk + vars[i]]);
        }
    }
    return out;
}

template <typename T>
Var<T> Model<T>::tokens(const Var<T>& normalized, const SeriesBatch& b, const Mode& mode) const {
    Var<T> mrp = mrp_(normalized);
    Var<T> st, tg, ts;
    if (static_) {
        Tensor<T> s({b.batch, b.channels, b.n_static});
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<T>(b.statics[i]);
        st = (*static_)(s);
    }
    if (tvk_global_) tg = (*tvk_global_)(tvk_scope(b, global_vars_));
    if (tvk_specific_) ts = (*tvk_specific_)(tvk_scope(b, specific_vars_));
    TokenLayout base_layout;
    Var<T> base = assemble_base_tokens(mrp, st, tg, ts, &base_layout);
    if (!mixer_) return base;
    return append_cst(base, (*mixer_)(base, mode));
}

template <typename T>
ForwardResult<T> Model<T>::forward(const SeriesBatch& b, const Mode& mode) const {
    Tensor<T> obs({b.batch, b.channels, b.lookback});
    for (std::size_t i = 0; i < obs.size(); ++i) obs[i] = static_cast<T>(b.observed.at(i));
    return forward(Var<T>(std::move(obs)), b, mode);
}

template <typename T>
ForwardResult<T> Model<T>::forward(const Var<T>& observed, const SeriesBatch& b, const Mode& mode) const {
    check_batch(b);
    const auto& c = config_;
    const std::size_t B = b.batch, C = c.channels, l = c.lookback, f = c.horizon;
    if (observed.shape() != Shape{B, C, l}) {
        throw DimensionError("forward (input check): observed " + shape_str(observed.shape()) + ", expected " +
                             shape_str({B, C, l}));
    }
    if (mode.train && c.norm == NormFlavor::batch && B < 2) {
        throw StatisticsError("forward: batch-norm training needs at least 2 samples, got B=1");
    }
    Tensor<T> mask({B, C, l});
    for (std::size_t s = 0; s < B; ++s) {
        if (b.pad_len[s] >= l) {
            throw DimensionError("forward (input check): sample " + std::to_string(s) + " is all padding");
        }
        for (std::size_t ch = 0; ch < C; ++ch)
            for (std::size_t t = b.pad_len[s]; t < l; ++t) mask[(s * C + ch) * l + t] = T{1};
    }
    Var<T> maskv(mask);
    Var<T> last = slice(observed, 2, l - 1, 1);
    std::vector<bool> flat;
    Var<T> sd = masked_row_std(observed, mask, static_cast<T>(kInstanceNormEps), &flat);
    Var<T> xn = mul(div(sub(observed, last), sd), maskv);
    if (c.revin_affine) xn = mul(add(mul(xn, revin_gamma_), revin_beta_), maskv);

    Var<T> toks = tokens(xn, b, mode);
    if (toks.shape()[2] != layout_.total()) {
        throw ConfigError("forward (tokenize): produced " + std::to_string(toks.shape()[2]) + " tokens, layout has " +
                          std::to_string(layout_.total()));
    }
    Var<T> enc = encoder_override_ ? encoder_override_(toks) : encoder_(toks, mode);
    Var<T> y = head_(enc, layout_);
    if (c.revin_affine) y = div(sub(y, revin_beta_), revin_gamma_);

    ForwardResult<T> r;
    r.pred_norm = y;
    r.pred = add(mul(y, sd), last);
    r.target_norm = Tensor<T>({B, C, f});
    r.norm_state.resize(B * C);
    for (std::size_t row = 0; row < B * C; ++row) {
        const T lv = last.value()[row];
        const T sv = sd.value()[row];
        r.norm_state[row] = NormState{static_cast<double>(lv), static_cast<double>(sv), static_cast<bool>(flat[row])};
        for (std::size_t t = 0; t < f; ++t) {
            r.target_norm[row * f + t] = (static_cast<T>(b.target[row * f + t]) - lv) / sv;
        }
    }
    return r;
}

template <typename T>
void Model<T>::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    store_->save(dir / "params.bin", dir / "params.json");
    nlohmann::json j{{"format", "mrt-model"},
                     {"version", 1},
                     {"config", config_},
                     {"schema", schema_},
                     {"layout", layout_},
                     {"parameter_count", parameter_count()}};
    std::ofstream out(dir / "model.json");
    if (!out) throw IoError("cannot write " + (dir / "model.json").string());
    out << j.dump(2) << '\n';
}

template <typename T>
Model<T> Model<T>::load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "model.json");
    if (!in) throw IoError("cannot open " + (dir / "model.json").string());
    nlohmann::json j;
    in >> j;
    if (j.value("format", std::string()) != "mrt-model" || j.value("version", 0) != 1) {
        throw IoError((dir / "model.json").string() + ": not a version-1 model checkpoint");
    }
    Model m(j.at("config").get<ModelConfig>(), j.at("schema").get<Schema>());
    if (j.at("layout").get<TokenLayout>() != m.layout()) {
        throw IoError((dir / "model.json").string() + ": stored token layout does not match the rebuilt model");
    }
    m.store().load(dir / "params.bin", dir / "params.json");
    return m;
}

template class Model<float>;
template class Model<double>;

}  // namespace mrt
