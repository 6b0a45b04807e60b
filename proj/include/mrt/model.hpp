#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrt/aux_tokens.hpp"
#include "mrt/encoder.hpp"
#include "mrt/head.hpp"
#include "mrt/mixer.hpp"
#include "mrt/mrp.hpp"
#include "mrt/preprocess.hpp"

namespace mrt {

struct ModelConfig {
    std::vector<std::size_t> K{1, 2, 3, 4, 6, 8};
    std::size_t lookback = 32;
    std::size_t horizon = 16;
    std::size_t channels = 2;
    std::size_t d_model = 64;
    std::size_t d_ff = 128;
    std::size_t d_cross = 16;
    std::size_t heads = 8;
    std::size_t blocks = 2;
    std::size_t n_tvk = 8;     // per scope
    std::size_t n_static = 4;  // condensed count, used when more than 8 static variables
    std::size_t n_cst = 8;
    double dropout = 0.0;
    NormFlavor norm = NormFlavor::batch;
    bool include_tvkt = true;
    bool include_cst = true;
    bool include_static = true;
    bool revin_affine = true;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

template <typename T>
struct ForwardResult {
    Var<T> pred_norm;        // [B,C,f], instance-normalized space
    Var<T> pred;             // [B,C,f], input (scaled) space
    Tensor<T> target_norm;   // [B,C,f], target in instance-normalized space
    std::vector<NormState> norm_state;  // [B*C]
};

/// The full forecaster: instance normalization (with optional per-channel
/// affine), MRP / static / TVK tokenizers, channel mixer, positional bias and
/// encoder, reverse-splitting head, and the inverse normalization.
template <typename T>
class Model {
public:
    Model(ModelConfig config, Schema schema);

    ForwardResult<T> forward(const SeriesBatch& batch, const Mode& mode) const;
    // Same, with the raw observed window supplied as a graph input [B,C,l].
    ForwardResult<T> forward(const Var<T>& observed, const SeriesBatch& batch, const Mode& mode) const;

    // Base tokens [B,C,n_B,d_m] followed by CST when enabled; no positional bias.
    Var<T> tokens(const Var<T>& normalized, const SeriesBatch& batch, const Mode& mode) const;

    const ModelConfig& config() const { return config_; }
    const Schema& schema() const { return schema_; }
    const TokenLayout& layout() const { return layout_; }
    ParameterStore<T>& store() { return *store_; }
    const ParameterStore<T>& store() const { return *store_; }
    std::size_t parameter_count() const { return store_->parameter_count(); }

    // Trainable scalars per module prefix (revin, mrp, static, tvk.global,
    // tvk.specific, mixer, encoder, head).
    std::map<std::string, std::size_t> module_parameter_counts() const;
    // Throws when an entry belongs to no module or module counts do not sum
    // to the total.
    void audit() const;

    const MrpTokenizer<T>& mrp() const { return mrp_; }
    const StaticTokenizer<T>* statics() const { return static_ ? &*static_ : nullptr; }
    const TvkTokenizer<T>* tvk_global() const { return tvk_global_ ? &*tvk_global_ : nullptr; }
    const TvkTokenizer<T>* tvk_specific() const { return tvk_specific_ ? &*tvk_specific_ : nullptr; }
    const ChannelMixer<T>* mixer() const { return mixer_ ? &*mixer_ : nullptr; }
    const Encoder<T>& encoder() const { return encoder_; }
    const ReverseSplitter<T>& head() const { return head_; }

    // Replaces the encoder stage (tests).
    void set_encoder_override(std::function<Var<T>(const Var<T>&)> f) { encoder_override_ = std::move(f); }

    // Checkpoint directory: params.bin, params.json, model.json.
    void save(const std::filesystem::path& dir) const;
    static Model load(const std::filesystem::path& dir);

    static const std::vector<std::string>& module_names();

private:
    void check_batch(const SeriesBatch& batch) const;
    Tensor<T> tvk_scope(const SeriesBatch& batch, const std::vector<std::size_t>& vars) const;

    ModelConfig config_;
    Schema schema_;
    std::unique_ptr<ParameterStore<T>> store_;
    TokenLayout layout_;
    Var<T> revin_gamma_;
    Var<T> revin_beta_;
    MrpTokenizer<T> mrp_;
    std::optional<StaticTokenizer<T>> static_;
    std::optional<TvkTokenizer<T>> tvk_global_;
    std::optional<TvkTokenizer<T>> tvk_specific_;
    std::vector<std::size_t> global_vars_;
    std::vector<std::size_t> specific_vars_;
    std::optional<ChannelMixer<T>> mixer_;
    Encoder<T> encoder_;
    ReverseSplitter<T> head_;
    std::function<Var<T>(const Var<T>&)> encoder_override_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace mrt
