#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/layers.hpp"
#include "mrt/patch_plan.hpp"
#include "mrt/schema.hpp"

namespace mrt {

enum class TokenFamily { mrp, st, tvkt_global, tvkt_specific, cst };

const char* to_string(TokenFamily f);
TokenFamily token_family_from_string(const std::string& s);

struct TokenSpan {
    TokenFamily family = TokenFamily::mrp;
    std::size_t start = 0;
    std::size_t length = 0;
    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// Positions of each token family along the token dimension.
struct TokenLayout {
    std::vector<TokenSpan> spans;

    void append(TokenFamily family, std::size_t length);
    std::size_t total() const;
    // Length of `family`, 0 when absent.
    std::size_t count(TokenFamily family) const;
    const TokenSpan& span(TokenFamily family) const;
    // Family of token position `pos`.
    TokenFamily family_at(std::size_t pos) const;

    friend bool operator==(const TokenLayout&, const TokenLayout&) = default;
};

void to_json(nlohmann::json& j, const TokenLayout& l);
void from_json(const nlohmann::json& j, TokenLayout& l);

/// Base tokenization of auxiliary variables. Categorical variables look up a
/// [cardinality+2, d_m] table whose last two rows are the missing and pad
/// symbols (the pad row is zero and frozen); numerical variables scale a
/// learned direction by the value, with a separate vector for missing (NaN).
template <typename T>
class BaseEmbedding {
public:
    BaseEmbedding() = default;
    BaseEmbedding(ParameterStore<T>& store, const std::string& prefix, std::vector<VariableSchema> vars,
                  std::size_t d_model, Rng& rng);

    // values [..., V] -> [..., V, d_m]
    Var<T> operator()(const Tensor<T>& values) const;

    const std::vector<VariableSchema>& variables() const { return vars_; }
    std::size_t d_model() const { return d_model_; }
    // Categorical: the table. Numerical: the direction.
    const Var<T>& primary(std::size_t v) const { return primary_[v]; }
    // Numerical only: the missing vector.
    const Var<T>& missing(std::size_t v) const { return missing_[v]; }

private:
    std::vector<VariableSchema> vars_;
    std::size_t d_model_ = 0;
    std::vector<Var<T>> primary_;
    std::vector<Var<T>> missing_;
};

/// Time-varying-known tokens of one scope: base embedding, variable mix to a
/// single latent series [V->1], multi-resolution patching over l+f steps with
/// a learned basis vector per resolution (one token per patch), then a
/// compression of the n_MRP tokens to n_TVK.
template <typename T>
class TvkTokenizer {
public:
    TvkTokenizer() = default;
    TvkTokenizer(ParameterStore<T>& store, const std::string& prefix, std::vector<VariableSchema> vars, bool global,
                 std::vector<std::size_t> K, std::size_t span, std::size_t d_model, std::size_t n_tvk, Rng& rng);

    // tvk [B,C,l+f,V] (this scope's variables only) -> [B,C,n_TVK,d_m]
    Var<T> operator()(const Tensor<T>& tvk) const;
    // Tokens before compression: [B,C,n_MRP,d_m].
    Var<T> basis_tokens(const Tensor<T>& tvk) const;

    std::size_t n_tokens() const { return n_tvk_; }
    bool global() const { return global_; }
    const BaseEmbedding<T>& embedding() const { return embed_; }
    const Var<T>& mix() const { return mix_; }
    const std::vector<Var<T>>& basis() const { return basis_; }

private:
    // [B,C',d_m,n_MRP] with C' = 1 for the global scope.
    Var<T> latent_tokens(const Tensor<T>& tvk) const;

    bool global_ = false;
    std::vector<std::size_t> K_;
    std::size_t span_ = 0;
    std::size_t d_model_ = 0;
    std::size_t n_tvk_ = 0;
    std::size_t n_mrp_ = 0;
    BaseEmbedding<T> embed_;
    Var<T> mix_;
    std::vector<PatchPlan> plans_;
    std::vector<std::vector<std::ptrdiff_t>> index_;
    std::vector<Var<T>> basis_;
    Linear<T> compress_;
};

inline constexpr std::size_t kStaticDirectMax = 8;

/// Static tokens: per-variable base embeddings used directly when V_s <= 8,
/// otherwise condensed over the variable dimension to n_S tokens.
template <typename T>
class StaticTokenizer {
public:
    StaticTokenizer() = default;
    StaticTokenizer(ParameterStore<T>& store, const std::string& prefix, std::vector<VariableSchema> vars,
                    std::size_t d_model, std::size_t n_condensed, Rng& rng);

    // statics [B,C,V_s] -> [B,C,n_S,d_m]
    Var<T> operator()(const Tensor<T>& statics) const;

    std::size_t n_tokens() const { return n_tokens_; }
    bool condensed() const { return condense_.in() != 0; }
    const BaseEmbedding<T>& embedding() const { return embed_; }
    const Linear<T>& condenser() const { return condense_; }

private:
    std::size_t n_tokens_ = 0;
    BaseEmbedding<T> embed_;
    Linear<T> condense_;
};

/// Concatenates [MRP | ST | TVKT_global | TVKT_specific] along the token
/// dimension; undefined inputs are skipped. Fills `layout`.
template <typename T>
Var<T> assemble_base_tokens(const Var<T>& mrp, const Var<T>& st, const Var<T>& tvkt_global,
                            const Var<T>& tvkt_specific, TokenLayout* layout = nullptr);

extern template class BaseEmbedding<float>;
extern template class BaseEmbedding<double>;
extern template class TvkTokenizer<float>;
extern template class TvkTokenizer<double>;
extern template class StaticTokenizer<float>;
extern template class StaticTokenizer<double>;

}  // namespace mrt
