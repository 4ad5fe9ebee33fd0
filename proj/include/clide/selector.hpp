#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "clide/detail/kernels.hpp"
#include "clide/embedding.hpp"
#include "clide/error.hpp"

namespace clide {

/// a.b / (|a| |b|), clamped to [-1, 1].
template <std::floating_point A, std::floating_point B>
double cosine_similarity(std::span<const A> a, std::span<const B> b) {
    if (a.size() != b.size()) {
        throw ValidationError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                              " vs " + std::to_string(b.size()) + ")");
    }
    const double na = std::sqrt(detail::squared_norm_lanes(a.data(), a.size()));
    const double nb = std::sqrt(detail::squared_norm_lanes(b.data(), b.size()));
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine_similarity: zero-norm vector");
    return std::clamp(detail::dot_lanes(a.data(), b.data(), a.size()) / (na * nb), -1.0, 1.0);
}

/// Rows of the representative set nearest to a query, by descending cosine
/// similarity; equal similarities are ordered by lower row index.
struct NeighborSet {
    std::vector<std::size_t> indices;
    std::vector<double> similarities;
    bool truncated = false;  // k exceeded the representative set size
    std::vector<std::string> warnings;

    std::size_t size() const noexcept { return indices.size(); }
};

/// Representative set with row norms computed once. Holds a reference to the
/// matrix, which must outlive it.
class RepresentativeIndex {
public:
    explicit RepresentativeIndex(const EmbeddingMatrix& rep) : rep_(&rep), norms_(rep.rows()) {
        for (std::size_t i = 0; i < rep.rows(); ++i) {
            auto r = rep.row(i);
            norms_[i] = std::sqrt(detail::squared_norm_lanes(r.data(), r.size()));
            if (norms_[i] == 0.0) {
                throw DegenerateInputError("representative set row " + std::to_string(i) +
                                           " has zero norm");
            }
        }
    }

    const EmbeddingMatrix& matrix() const noexcept { return *rep_; }
    std::span<const double> norms() const noexcept { return norms_; }

    /// |query|; throws on a dimension mismatch or a zero-norm query.
    template <std::floating_point T>
    double query_norm(std::span<const T> query) const {
        const std::size_t d = rep_->dim();
        if (query.size() != d) {
            throw ValidationError("top_k: query d=" + std::to_string(query.size()) +
                                  " does not match representative d=" + std::to_string(d));
        }
        const double qn = std::sqrt(detail::squared_norm_lanes(query.data(), d));
        if (qn == 0.0) throw DegenerateInputError("top_k: query has zero norm");
        return qn;
    }

    /// Cosine similarity of the query to every row.
    template <std::floating_point T>
    std::vector<double> similarities(std::span<const T> query) const {
        const T* q = query.data();
        return similarities_many(std::span<const T* const>(&q, 1), {query_norm(query)}).front();
    }

    /// Similarities for several queries in one pass over the rows, so each
    /// row is read from memory once. Result q is bit-identical to
    /// similarities() of query q. Queries must already be checked with
    /// query_norm(); `norms` holds the values it returned.
    template <std::floating_point T>
    std::vector<std::vector<double>> similarities_many(std::span<const T* const> queries,
                                                       const std::vector<double>& norms) const {
        const std::size_t d = rep_->dim();
        const std::size_t n = rep_->rows();
        std::vector<std::vector<double>> sims(queries.size(), std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const float* row = rep_->row(i).data();
            for (std::size_t q = 0; q < queries.size(); ++q) {
                const double dot = detail::dot_lanes(row, queries[q], d);
                sims[q][i] = std::clamp(dot / (norms_[i] * norms[q]), -1.0, 1.0);
            }
        }
        return sims;
    }

    /// The k best rows by similarity, best first.
    static NeighborSet select(const std::vector<double>& sims, std::size_t k) {
        if (k < 1) throw ValidationError("top_k: k must be >= 1");
        NeighborSet out;
        const std::size_t n = sims.size();
        if (k > n) {
            out.truncated = true;
            out.warnings.push_back("k=" + std::to_string(k) + " exceeds representative set size " +
                                   std::to_string(n) + "; using k=" + std::to_string(n));
            k = n;
        }
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        auto better = [&](std::size_t a, std::size_t b) {
            return sims[a] > sims[b] || (sims[a] == sims[b] && a < b);
        };
        if (k < n) {
            std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), better);
            idx.resize(k);
        }
        std::sort(idx.begin(), idx.end(), better);
        out.similarities.reserve(k);
        for (std::size_t i : idx) out.similarities.push_back(sims[i]);
        out.indices = std::move(idx);
        return out;
    }

    template <std::floating_point T>
    NeighborSet top_k(std::span<const T> query, std::size_t k) const {
        if (k < 1) throw ValidationError("top_k: k must be >= 1");
        return select(similarities(query), k);
    }

private:
    const EmbeddingMatrix* rep_;
    std::vector<double> norms_;
};

/// One-shot selection; prefer RepresentativeIndex when scoring many queries.
template <std::floating_point T>
NeighborSet top_k(const EmbeddingMatrix& rep, std::span<const T> query, std::size_t k) {
    return RepresentativeIndex(rep).top_k(query, k);
}

inline NeighborSet top_k(const EmbeddingMatrix& rep, const EmbeddingVector& query, std::size_t k) {
    return top_k(rep, query.values(), k);
}

} // namespace clide
