#include "mrt/parameter_store.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include <nlohmann/json.hpp>

namespace mrt {

template <typename T>
Var<T> ParameterStore<T>::add(const std::string& name, Tensor<T> init, bool trainable) {
    if (contains(name)) {
        throw ConfigError("duplicate parameter name '" + name + "'");
    }
    Entry e{name, Var<T>(std::move(init), trainable), trainable, {}};
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
    return entries_.back().var;
}

template <typename T>
void ParameterStore<T>::freeze(const std::string& name, std::vector<std::size_t> indices) {
    auto& e = entries_.at(index_.at(name));
    for (auto i : indices) {
        if (i >= e.var.size()) {
            throw DimensionError("freeze index " + std::to_string(i) + " out of range for '" + name + "'");
        }
    }
    e.frozen = std::move(indices);
}

template <typename T>
Var<T>& ParameterStore<T>::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ConfigError("unknown parameter '" + name + "'");
    }
    return entries_[it->second].var;
}

template <typename T>
const Var<T>& ParameterStore<T>::get(const std::string& name) const {
    return entry(name).var;
}

template <typename T>
const typename ParameterStore<T>::Entry& ParameterStore<T>::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ConfigError("unknown parameter '" + name + "'");
    }
    return entries_[it->second];
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        if (e.trainable) n += e.var.size();
    }
    return n;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        if (e.trainable && e.name.rfind(prefix, 0) == 0) n += e.var.size();
    }
    return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
    for (auto& e : entries_) {
        e.var.zero_grad();
    }
}

template <typename T>
std::vector<Tensor<T>> ParameterStore<T>::snapshot() const {
    std::vector<Tensor<T>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.var.value());
    return out;
}

template <typename T>
void ParameterStore<T>::restore(const std::vector<Tensor<T>>& values) {
    if (values.size() != entries_.size()) {
        throw DimensionError("snapshot has " + std::to_string(values.size()) + " entries, store has " +
                             std::to_string(entries_.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].shape() != entries_[i].var.shape()) {
            throw DimensionError("snapshot shape mismatch for '" + entries_[i].name + "'");
        }
        entries_[i].var.mutable_value() = values[i];
    }
}

namespace {

void put_le(std::ofstream& os, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    os.write(bytes, 8);
}

double get_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}

}  // namespace

template <typename T>
void ParameterStore<T>::save(const std::filesystem::path& data_path, const std::filesystem::path& index_path) const {
    std::ofstream data(data_path, std::ios::binary | std::ios::trunc);
    if (!data) throw IoError("cannot write " + data_path.string());
    nlohmann::json idx;
    idx["format"] = "mrt-params";
    idx["version"] = 1;
    idx["dtype"] = "float64-le";
    idx["entries"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& e : entries_) {
        for (T v : e.var.value().data()) put_le(data, static_cast<double>(v));
        idx["entries"].push_back({{"name", e.name},
                                  {"shape", e.var.shape()},
                                  {"offset", offset},
                                  {"trainable", e.trainable}});
        offset += e.var.size() * 8;
    }
    if (!data) throw IoError("write failed for " + data_path.string());
    std::ofstream index(index_path, std::ios::trunc);
    if (!index) throw IoError("cannot write " + index_path.string());
    index << idx.dump(2) << '\n';
}

template <typename T>
void ParameterStore<T>::load(const std::filesystem::path& data_path, const std::filesystem::path& index_path) {
    std::ifstream index(index_path);
    if (!index) throw IoError("cannot read " + index_path.string());
    nlohmann::json idx;
    try {
        index >> idx;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed parameter index " + index_path.string() + ": " + e.what());
    }
    std::ifstream data(data_path, std::ios::binary);
    if (!data) throw IoError("cannot read " + data_path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(data)), std::istreambuf_iterator<char>());
    std::size_t matched = 0;
    for (const auto& item : idx.at("entries")) {
        const auto name = item.at("name").get<std::string>();
        const auto shape = item.at("shape").get<Shape>();
        const auto offset = item.at("offset").get<std::size_t>();
        if (!contains(name)) {
            throw ConfigError("checkpoint entry '" + name + "' has no matching parameter");
        }
        auto& var = get(name);
        if (var.shape() != shape) {
            throw DimensionError("checkpoint shape " + shape_str(shape) + " for '" + name + "' expected " +
                                 shape_str(var.shape()));
        }
        if (offset + var.size() * 8 > bytes.size()) {
            throw IoError("checkpoint data truncated at '" + name + "'");
        }
        auto& dst = var.mutable_value();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] = static_cast<T>(get_le(bytes.data() + offset + 8 * i));
        }
        ++matched;
    }
    if (matched != entries_.size()) {
        throw ConfigError("checkpoint covers " + std::to_string(matched) + " of " + std::to_string(entries_.size()) +
                          " parameters");
    }
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace mrt
