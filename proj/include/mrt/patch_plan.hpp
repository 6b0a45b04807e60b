#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mrt {

/// Partition of a length-h window into k contiguous patches of length b or
/// b+1 (b = floor(h/k)); the h - b*k longer patches come first.
struct PatchPlan {
    std::size_t h = 0;
    std::size_t k = 0;
    std::vector<std::size_t> lengths;
    std::vector<std::size_t> offsets;

    std::size_t base() const { return h / k; }
    std::size_t n_long() const { return h - base() * k; }
};

PatchPlan make_patch_plan(std::size_t h, std::size_t k);

// Gather index of width k*(b+1): each patch preceded by (b+1 - length) pad
// slots (index -1), so every patch has length b+1.
std::vector<std::ptrdiff_t> left_padded_index(const PatchPlan& plan);

// Index into k rows of b+1 values that keeps the first `length` values of
// each row, concatenating to h values.
std::vector<std::ptrdiff_t> truncating_index(const PatchPlan& plan);

// Validates a resolution set: non-empty, distinct, ascending, each >= 1.
void check_resolutions(const std::vector<std::size_t>& K);

}  // namespace mrt
