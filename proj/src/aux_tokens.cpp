#include "mrt/aux_tokens.hpp"

#include <cmath>

namespace mrt {

const char* to_string(TokenFamily f) {
    switch (f) {
        case TokenFamily::mrp: return "mrp";
        case TokenFamily::st: return "st";
        case TokenFamily::tvkt_global: return "tvkt_global";
        case TokenFamily::tvkt_specific: return "tvkt_specific";
        case TokenFamily::cst: return "cst";
    }
    return "?";
}

TokenFamily token_family_from_string(const std::string& s) {
    for (auto f : {TokenFamily::mrp, TokenFamily::st, TokenFamily::tvkt_global, TokenFamily::tvkt_specific,
                   TokenFamily::cst}) {
        if (s == to_string(f)) return f;
    }
    throw ConfigError("unknown token family '" + s + "'");
}

void TokenLayout::append(TokenFamily family, std::size_t length) {
    if (length == 0) return;
    spans.push_back({family, total(), length});
}

std::size_t TokenLayout::total() const {
    return spans.empty() ? 0 : spans.back().start + spans.back().length;
}

std::size_t TokenLayout::count(TokenFamily family) const {
    std::size_t n = 0;
    for (const auto& s : spans) {
        if (s.family == family) n += s.length;
    }
    return n;
}

const TokenSpan& TokenLayout::span(TokenFamily family) const {
    for (const auto& s : spans) {
        if (s.family == family) return s;
    }
    throw ConfigError(std::string("token layout has no '") + to_string(family) + "' tokens");
}

TokenFamily TokenLayout::family_at(std::size_t pos) const {
    for (const auto& s : spans) {
        if (pos >= s.start && pos < s.start + s.length) return s.family;
    }
    throw DimensionError("token position " + std::to_string(pos) + " outside layout of " + std::to_string(total()));
}

void to_json(nlohmann::json& j, const TokenLayout& l) {
    j = nlohmann::json::array();
    for (const auto& s : l.spans) {
        j.push_back({{"family", to_string(s.family)}, {"start", s.start}, {"length", s.length}});
    }
}

void from_json(const nlohmann::json& j, TokenLayout& l) {
    l.spans.clear();
    for (const auto& e : j) {
        l.spans.push_back({token_family_from_string(e.at("family").get<std::string>()), e.at("start").get<std::size_t>(),
                           e.at("length").get<std::size_t>()});
    }
}

// ------------------------------------------------------------ base embedding

template <typename T>
BaseEmbedding<T>::BaseEmbedding(ParameterStore<T>& store, const std::string& prefix, std::vector<VariableSchema> vars,
                                std::size_t d_model, Rng& rng)
    : vars_(std::move(vars)), d_model_(d_model) {
    for (const auto& v : vars_) {
        const std::string name = prefix + "." + v.name;
        if (v.kind == VarKind::categorical) {
            Tensor<T> table = normal_init<T>({v.cardinality + 2, d_model}, 0.02, rng);
            const std::size_t pad_row = v.cardinality + 1;
            std::vector<std::size_t> frozen;
            for (std::size_t j = 0; j < d_model; ++j) {
                table[pad_row * d_model + j] = T{0};
                frozen.push_back(pad_row * d_model + j);
            }
            primary_.push_back(store.add(name + ".table", std::move(table)));
            store.freeze(name + ".table", std::move(frozen));
            missing_.emplace_back();
        } else {
            primary_.push_back(store.add(name + ".direction", normal_init<T>({d_model}, 0.02, rng)));
            missing_.push_back(store.add(name + ".missing", normal_init<T>({d_model}, 0.02, rng)));
        }
    }
}

template <typename T>
Var<T> BaseEmbedding<T>::operator()(const Tensor<T>& values) const {
    const Shape& vs = values.shape();
    const std::size_t V = vars_.size();
    if (vs.empty() || vs.back() != V) {
        throw DimensionError("embedding: values " + shape_str(vs) + " for " + std::to_string(V) + " variables");
    }
    const std::size_t d = d_model_;
    const std::size_t rows = V ? values.size() / V : 0;
    Shape out_shape = vs;
    out_shape.push_back(d);
    Tensor<T> out(out_shape);
    // Resolved source per (row, variable): table row for categoricals, -1 for
    // numerical missing, -2 for numerical values.
    std::vector<std::ptrdiff_t> src(values.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t v = 0; v < V; ++v) {
            const auto& var = vars_[v];
            const T x = values[r * V + v];
            T* o = &out[(r * V + v) * d];
            if (var.kind == VarKind::categorical) {
                const double code = std::isnan(static_cast<double>(x)) ? var.missing_code() : static_cast<double>(x);
                if (code < 0 || code > var.pad_code() || code != std::floor(code)) {
                    throw SchemaError("embedding: value " + std::to_string(code) + " out of range for categorical '" +
                                      var.name + "'");
                }
                const auto row = static_cast<std::size_t>(code);
                src[r * V + v] = static_cast<std::ptrdiff_t>(row);
                const auto& tab = primary_[v].value();
                for (std::size_t j = 0; j < d; ++j) o[j] = tab[row * d + j];
            } else if (std::isnan(static_cast<double>(x))) {
                src[r * V + v] = -1;
                const auto& m = missing_[v].value();
                for (std::size_t j = 0; j < d; ++j) o[j] = m[j];
            } else {
                src[r * V + v] = -2;
                const auto& dir = primary_[v].value();
                for (std::size_t j = 0; j < d; ++j) o[j] = x * dir[j];
            }
        }
    }
    std::vector<Var<T>> inputs;
    std::vector<std::shared_ptr<Node<T>>> prim;
    std::vector<std::shared_ptr<Node<T>>> miss;
    for (std::size_t v = 0; v < V; ++v) {
        inputs.push_back(primary_[v]);
        prim.push_back(primary_[v].node());
        miss.push_back(missing_[v].defined() ? missing_[v].node() : nullptr);
        if (missing_[v].defined()) inputs.push_back(missing_[v]);
    }
    return make_result<T>(std::move(out), inputs, [prim, miss, src, values, rows, V, d](Node<T>& o) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t v = 0; v < V; ++v) {
                const T* g = &o.grad[(r * V + v) * d];
                const auto s = src[r * V + v];
                if (s >= 0) {
                    if (!prim[v]->requires_grad) continue;
                    auto& gt = prim[v]->grad_buffer();
                    for (std::size_t j = 0; j < d; ++j) gt[static_cast<std::size_t>(s) * d + j] += g[j];
                } else if (s == -1) {
                    if (!miss[v]->requires_grad) continue;
                    auto& gm = miss[v]->grad_buffer();
                    for (std::size_t j = 0; j < d; ++j) gm[j] += g[j];
                } else {
                    if (!prim[v]->requires_grad) continue;
                    auto& gd = prim[v]->grad_buffer();
                    const T x = values[r * V + v];
                    for (std::size_t j = 0; j < d; ++j) gd[j] += x * g[j];
                }
            }
        }
    });
}

// ---------------------------------------------------------------------- tvk

template <typename T>
TvkTokenizer<T>::TvkTokenizer(ParameterStore<T>& store, const std::string& prefix, std::vector<VariableSchema> vars,
                              bool global, std::vector<std::size_t> K, std::size_t span, std::size_t d_model,
                              std::size_t n_tvk, Rng& rng)
    : global_(global), K_(std::move(K)), span_(span), d_model_(d_model), n_tvk_(n_tvk) {
    if (vars.empty()) {
        throw ConfigError("tvk tokenizer '" + prefix + "' has no variables");
    }
    if (n_tvk == 0) {
        throw ConfigError("tvk tokenizer '" + prefix + "': n_tvk must be >= 1");
    }
    check_resolutions(K_);
    const std::size_t V = vars.size();
    embed_ = BaseEmbedding<T>(store, prefix + ".embed", std::move(vars), d_model, rng);
    mix_ = store.add(prefix + ".mix.weight", uniform_init<T>({V, 1}, V, rng));
    for (auto k : K_) {
        plans_.push_back(make_patch_plan(span_, k));
        index_.push_back(left_padded_index(plans_.back()));
        const std::size_t w = plans_.back().base() + 1;
        basis_.push_back(store.add(prefix + ".basis.k" + std::to_string(k) + ".weight", uniform_init<T>({w, 1}, w, rng)));
        n_mrp_ += k;
    }
    compress_ = Linear<T>(store, prefix + ".compress", n_mrp_, n_tvk_, true, rng);
}

namespace {

template <typename T>
Tensor<T> first_channel(const Tensor<T>& tvk) {
    const Shape& s = tvk.shape();
    const std::size_t B = s[0], C = s[1];
    const std::size_t inner = s[2] * s[3];
    Tensor<T> out({B, 1, s[2], s[3]});
    for (std::size_t b = 0; b < B; ++b) {
        const T* c0 = &tvk[b * C * inner];
        for (std::size_t i = 0; i < inner; ++i) out[b * inner + i] = c0[i];
        for (std::size_t c = 1; c < C; ++c) {
            const T* cc = &tvk[(b * C + c) * inner];
            for (std::size_t i = 0; i < inner; ++i) {
                const bool same = (std::isnan(static_cast<double>(c0[i])) && std::isnan(static_cast<double>(cc[i]))) ||
                                  c0[i] == cc[i];
                if (!same) {
                    throw SchemaError("global tvk input differs across channels (sample " + std::to_string(b) +
                                      ", channel " + std::to_string(c) + ")");
                }
            }
        }
    }
    return out;
}

}  // namespace

template <typename T>
Var<T> TvkTokenizer<T>::latent_tokens(const Tensor<T>& tvk) const {
    const Shape& s = tvk.shape();
    if (s.size() != 4 || s[2] != span_ || s[3] != embed_.variables().size()) {
        throw DimensionError("tvk: expected [B,C," + std::to_string(span_) + "," +
                             std::to_string(embed_.variables().size()) + "], got " + shape_str(s));
    }
    const Tensor<T> input = global_ ? first_channel(tvk) : tvk;
    const std::size_t B = s[0], Cin = input.shape()[1], d = d_model_;
    Var<T> e = embed_(input);                                 // [B,C',h,V,d]
    Var<T> mixed = linear(permute(e, {0, 1, 2, 4, 3}), mix_);  // [B,C',h,d,1]
    Var<T> latent = permute(reshape(mixed, {B, Cin, span_, d}), {0, 1, 3, 2});  // [B,C',d,h]
    std::vector<Var<T>> parts;
    for (std::size_t i = 0; i < K_.size(); ++i) {
        const std::size_t w = plans_[i].base() + 1;
        Var<T> patches = reshape(gather_last(latent, index_[i]), {B, Cin, d, K_[i], w});
        parts.push_back(reshape(linear(patches, basis_[i]), {B, Cin, d, K_[i]}));
    }
    return parts.size() == 1 ? parts.front() : concat(parts, 3);  // [B,C',d,n_MRP]
}

template <typename T>
Var<T> TvkTokenizer<T>::basis_tokens(const Tensor<T>& tvk) const {
    Var<T> tokens = permute(latent_tokens(tvk), {0, 1, 3, 2});
    return global_ ? expand(tokens, 1, tvk.shape()[1]) : tokens;
}

template <typename T>
Var<T> TvkTokenizer<T>::operator()(const Tensor<T>& tvk) const {
    Var<T> out = permute(compress_(latent_tokens(tvk)), {0, 1, 3, 2});  // [B,C',n_TVK,d]
    return global_ ? expand(out, 1, tvk.shape()[1]) : out;
}

// ------------------------------------------------------------------- static

template <typename T>
StaticTokenizer<T>::StaticTokenizer(ParameterStore<T>& store, const std::string& prefix,
                                    std::vector<VariableSchema> vars, std::size_t d_model, std::size_t n_condensed,
                                    Rng& rng) {
    const std::size_t V = vars.size();
    embed_ = BaseEmbedding<T>(store, prefix + ".embed", std::move(vars), d_model, rng);
    if (V <= kStaticDirectMax) {
        n_tokens_ = V;
    } else {
        if (n_condensed == 0) {
            throw ConfigError("static tokenizer: n_S must be >= 1 when condensing " + std::to_string(V) + " variables");
        }
        n_tokens_ = n_condensed;
        condense_ = Linear<T>(store, prefix + ".condense", V, n_condensed, true, rng);
    }
}

template <typename T>
Var<T> StaticTokenizer<T>::operator()(const Tensor<T>& statics) const {
    Var<T> e = embed_(statics);  // [B,C,V_s,d]
    if (!condensed()) return e;
    return permute(condense_(permute(e, {0, 1, 3, 2})), {0, 1, 3, 2});
}

// ----------------------------------------------------------------- assembly

template <typename T>
Var<T> assemble_base_tokens(const Var<T>& mrp, const Var<T>& st, const Var<T>& tvkt_global,
                            const Var<T>& tvkt_specific, TokenLayout* layout) {
    if (!mrp.defined()) {
        throw ConfigError("assemble: MRP tokens are required");
    }
    TokenLayout l;
    std::vector<Var<T>> parts;
    const std::pair<const Var<T>*, TokenFamily> order[] = {{&mrp, TokenFamily::mrp},
                                                           {&st, TokenFamily::st},
                                                           {&tvkt_global, TokenFamily::tvkt_global},
                                                           {&tvkt_specific, TokenFamily::tvkt_specific}};
    for (const auto& [v, fam] : order) {
        if (!v->defined() || v->shape()[2] == 0) continue;
        const Shape& s = v->shape();
        const Shape& m = mrp.shape();
        if (s.size() != 4 || s[0] != m[0] || s[1] != m[1] || s[3] != m[3]) {
            throw DimensionError(std::string("assemble: ") + to_string(fam) + " tokens " + shape_str(s) +
                                 " do not match MRP tokens " + shape_str(m));
        }
        parts.push_back(*v);
        l.append(fam, s[2]);
    }
    if (layout) *layout = l;
    return parts.size() == 1 ? parts.front() : concat(parts, 2);
}

template Var<float> assemble_base_tokens(const Var<float>&, const Var<float>&, const Var<float>&, const Var<float>&,
                                         TokenLayout*);
template Var<double> assemble_base_tokens(const Var<double>&, const Var<double>&, const Var<double>&,
                                          const Var<double>&, TokenLayout*);

template class BaseEmbedding<float>;
template class BaseEmbedding<double>;
template class TvkTokenizer<float>;
template class TvkTokenizer<double>;
template class StaticTokenizer<float>;
template class StaticTokenizer<double>;

}  // namespace mrt
