#pragma once

#include <bit>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "clide/error.hpp"

namespace clide {

/// N embedding vectors of dimension d, stored row-major as float32 (the
/// precision embeddings are produced at). Every computation promotes rows to
/// double. Immutable after construction; share it read-only across threads.
///
/// Invariants: n >= 1, d >= 1, every element finite, ids either absent or
/// exactly n unique strings.
class EmbeddingMatrix {
public:
    EmbeddingMatrix(std::size_t n, std::size_t d, std::vector<float> data,
                    std::vector<std::string> ids = {})
        : n_(n), d_(d), data_(std::move(data)), ids_(std::move(ids)) {
        validate();
    }

    /// Rounds double values to float32 storage.
    template <std::floating_point T>
    static EmbeddingMatrix from_values(std::size_t n, std::size_t d, std::span<const T> values,
                                       std::vector<std::string> ids = {}) {
        if (values.size() != n * d) {
            throw ValidationError("embedding matrix: expected " + std::to_string(n * d) +
                                  " values, got " + std::to_string(values.size()));
        }
        std::vector<float> data(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            data[i] = static_cast<float>(values[i]);
        }
        return EmbeddingMatrix(n, d, std::move(data), std::move(ids));
    }

    static EmbeddingMatrix from_rows(const std::vector<std::vector<double>>& rows,
                                     std::vector<std::string> ids = {}) {
        if (rows.empty()) {
            throw ValidationError("embedding matrix: no rows");
        }
        const std::size_t d = rows.front().size();
        std::vector<float> data;
        data.reserve(rows.size() * d);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != d) {
                throw ValidationError("embedding matrix: row " + std::to_string(i) + " has " +
                                      std::to_string(rows[i].size()) + " values, expected " +
                                      std::to_string(d));
            }
            for (double v : rows[i]) data.push_back(static_cast<float>(v));
        }
        return EmbeddingMatrix(rows.size(), d, std::move(data), std::move(ids));
    }

    std::size_t rows() const noexcept { return n_; }
    std::size_t dim() const noexcept { return d_; }

    std::span<const float> row(std::size_t i) const noexcept {
        return {data_.data() + i * d_, d_};
    }
    std::span<const float> values() const noexcept { return data_; }
    float operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * d_ + j]; }

    bool has_ids() const noexcept { return !ids_.empty(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

    /// Row label for outputs: the stored id, or the zero-based row index.
    std::string id(std::size_t i) const { return has_ids() ? ids_[i] : std::to_string(i); }

    /// New matrix holding the given rows in the given order (ids follow).
    EmbeddingMatrix select(std::span<const std::size_t> indices) const {
        std::vector<float> data;
        data.reserve(indices.size() * d_);
        std::vector<std::string> ids;
        for (std::size_t idx : indices) {
            if (idx >= n_) {
                throw ValidationError("embedding matrix: row index " + std::to_string(idx) +
                                      " out of range");
            }
            auto r = row(idx);
            data.insert(data.end(), r.begin(), r.end());
            if (has_ids()) ids.push_back(ids_[idx]);
        }
        return EmbeddingMatrix(indices.size(), d_, std::move(data), std::move(ids));
    }

    EmbeddingMatrix slice(std::size_t first, std::size_t count) const {
        std::vector<std::size_t> idx(count);
        for (std::size_t i = 0; i < count; ++i) idx[i] = first + i;
        return select(idx);
    }

    /// Bit-level equality of the payload plus equal ids.
    friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) noexcept {
        if (a.n_ != b.n_ || a.d_ != b.d_ || a.ids_ != b.ids_) return false;
        for (std::size_t i = 0; i < a.data_.size(); ++i) {
            if (std::bit_cast<std::uint32_t>(a.data_[i]) != std::bit_cast<std::uint32_t>(b.data_[i]))
                return false;
        }
        return true;
    }

private:
    void validate() const {
        if (n_ == 0 || d_ == 0) {
            throw ValidationError("embedding matrix: n and d must be >= 1 (got n=" +
                                  std::to_string(n_) + ", d=" + std::to_string(d_) + ")");
        }
        if (data_.size() != n_ * d_) {
            throw ValidationError("embedding matrix: payload size " + std::to_string(data_.size()) +
                                  " != n*d = " + std::to_string(n_ * d_));
        }
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i])) {
                throw ValidationError("embedding matrix: non-finite value at row " +
                                      std::to_string(i / d_) + ", column " +
                                      std::to_string(i % d_));
            }
        }
        if (!ids_.empty()) {
            if (ids_.size() != n_) {
                throw ValidationError("embedding matrix: " + std::to_string(ids_.size()) +
                                      " ids for " + std::to_string(n_) + " rows");
            }
            std::unordered_set<std::string> seen;
            for (const auto& id : ids_) {
                if (!seen.insert(id).second) {
                    throw ValidationError("embedding matrix: duplicate id '" + id + "'");
                }
            }
        }
    }

    std::size_t n_;
    std::size_t d_;
    std::vector<float> data_;
    std::vector<std::string> ids_;
};

/// A single finite embedding (or its centered form) in working precision.
class EmbeddingVector {
public:
    explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) throw ValidationError("embedding vector: empty");
        for (std::size_t j = 0; j < values_.size(); ++j) {
            if (!std::isfinite(values_[j])) {
                throw ValidationError("embedding vector: non-finite value at index " +
                                      std::to_string(j));
            }
        }
    }

    template <std::floating_point T>
    static EmbeddingVector from(std::span<const T> values) {
        return EmbeddingVector(std::vector<double>(values.begin(), values.end()));
    }

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t j) const noexcept { return values_[j]; }

private:
    std::vector<double> values_;
};

} // namespace clide
