#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mrt/autograd.hpp"

namespace mrt {

/// Named parameters and buffers of a model. Trainable entries are graph
/// leaves that accumulate gradients; buffers (e.g. running statistics) are
/// saved with checkpoints but never trained.
template <typename T>
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Var<T> var;
        bool trainable = true;
        // Flat element indices held fixed by the optimizer (e.g. pad rows).
        std::vector<std::size_t> frozen;
    };

    Var<T> add(const std::string& name, Tensor<T> init, bool trainable = true);
    void freeze(const std::string& name, std::vector<std::size_t> indices);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Var<T>& get(const std::string& name);
    const Var<T>& get(const std::string& name) const;
    const Entry& entry(const std::string& name) const;

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::vector<Entry>& entries() noexcept { return entries_; }

    // Number of trainable scalars.
    std::size_t parameter_count() const;
    // Trainable scalars whose name starts with `prefix`.
    std::size_t parameter_count(const std::string& prefix) const;

    void zero_grad();

    std::vector<Tensor<T>> snapshot() const;
    void restore(const std::vector<Tensor<T>>& values);

    // Checkpoint: flat file of little-endian float64 arrays plus a JSON index
    // (name, shape, byte offset, trainable).
    void save(const std::filesystem::path& data_path, const std::filesystem::path& index_path) const;
    void load(const std::filesystem::path& data_path, const std::filesystem::path& index_path);

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace mrt
