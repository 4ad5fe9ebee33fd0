#pragma once

#include <cstddef>

namespace clide::detail {

// Dot products with a fixed 8-lane accumulation order. Element j always lands
// in lane j % 8 and lanes are combined pairwise in a fixed tree, so a result
// depends only on the operands, never on the caller (single or batched path).
// The lane structure also lets the compiler vectorize without reassociation.

template <typename A, typename B>
inline double dot_lanes(const A* a, const B* b, std::size_t n) noexcept {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        for (std::size_t l = 0; l < 8; ++l) {
            acc[l] += static_cast<double>(a[j + l]) * static_cast<double>(b[j + l]);
        }
    }
    for (std::size_t l = 0; j + l < n; ++l) {
        acc[l] += static_cast<double>(a[j + l]) * static_cast<double>(b[j + l]);
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename A>
inline double squared_norm_lanes(const A* a, std::size_t n) noexcept {
    return dot_lanes(a, a, n);
}

} // namespace clide::detail
