#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sparj/error.hpp"

namespace sparj {

/// Zero-based (row, col) position in the transition matrix.
struct MatrixIndex {
    int row = 0;
    int col = 0;

    friend constexpr bool operator==(MatrixIndex, MatrixIndex) = default;
    friend constexpr auto operator<=>(MatrixIndex, MatrixIndex) = default;
};

/// Sparsity pattern of a dx-by-dx transition matrix: the set of entries that
/// are free to take non-zero values. Everything outside the set is pinned to
/// exactly 0.
///
/// Stored as a row-major membership mask plus the sorted list of dense
/// positions, so both lookup and ordered iteration are cheap.
class SparsityModel {
public:
    SparsityModel() = default;

    /// Model with no dense entries.
    static SparsityModel fully_sparse(int dx)
    {
        if (dx <= 0) {
            throw DimensionError("sparsity model dimension must be positive");
        }
        SparsityModel m;
        m.dx_ = dx;
        m.mask_.assign(static_cast<std::size_t>(dx) * dx, 0);
        return m;
    }

    static SparsityModel fully_dense(int dx)
    {
        SparsityModel m = fully_sparse(dx);
        std::fill(m.mask_.begin(), m.mask_.end(), std::uint8_t{1});
        m.rebuild_list();
        return m;
    }

    static SparsityModel from_indices(int dx, const std::vector<MatrixIndex>& dense)
    {
        SparsityModel m = fully_sparse(dx);
        for (const auto& idx : dense) {
            m.check_index(idx);
            m.mask_[m.flat(idx)] = 1;
        }
        m.rebuild_list();
        return m;
    }

    /// Parses a row-major 0/1 string of length dx^2, e.g. "1101" for dx = 2.
    static SparsityModel from_bitstring(std::string_view bits)
    {
        int dx = 0;
        while (static_cast<std::size_t>(dx) * dx < bits.size()) {
            ++dx;
        }
        if (dx == 0 || static_cast<std::size_t>(dx) * dx != bits.size()) {
            throw ParseError("mask bitstring length " + std::to_string(bits.size()) +
                             " is not a positive perfect square");
        }
        SparsityModel m = fully_sparse(dx);
        for (std::size_t k = 0; k < bits.size(); ++k) {
            if (bits[k] != '0' && bits[k] != '1') {
                throw ParseError("mask bitstring may only contain '0' and '1'");
            }
            m.mask_[k] = bits[k] == '1' ? 1 : 0;
        }
        m.rebuild_list();
        return m;
    }

    std::string to_bitstring() const
    {
        std::string s(mask_.size(), '0');
        for (std::size_t k = 0; k < mask_.size(); ++k) {
            if (mask_[k]) {
                s[k] = '1';
            }
        }
        return s;
    }

    int dim() const noexcept { return dx_; }
    int size() const noexcept { return dx_ * dx_; }

    /// D: number of dense entries.
    int dense_count() const noexcept { return static_cast<int>(dense_.size()); }
    /// S: number of sparse entries.
    int sparse_count() const noexcept { return size() - dense_count(); }

    bool is_dense(int row, int col) const { return mask_[flat({row, col})] != 0; }
    bool is_dense(MatrixIndex idx) const { return mask_[flat(idx)] != 0; }

    /// Dense positions in row-major order.
    const std::vector<MatrixIndex>& dense_indices() const noexcept { return dense_; }

    /// Sparse positions in row-major order.
    std::vector<MatrixIndex> sparse_indices() const
    {
        std::vector<MatrixIndex> out;
        out.reserve(static_cast<std::size_t>(sparse_count()));
        for (int i = 0; i < dx_; ++i) {
            for (int j = 0; j < dx_; ++j) {
                if (!is_dense(i, j)) {
                    out.push_back({i, j});
                }
            }
        }
        return out;
    }

    SparsityModel with_dense(const std::vector<MatrixIndex>& added) const
    {
        SparsityModel m = *this;
        for (const auto& idx : added) {
            m.check_index(idx);
            m.mask_[m.flat(idx)] = 1;
        }
        m.rebuild_list();
        return m;
    }

    SparsityModel with_sparse(const std::vector<MatrixIndex>& removed) const
    {
        SparsityModel m = *this;
        for (const auto& idx : removed) {
            m.check_index(idx);
            m.mask_[m.flat(idx)] = 0;
        }
        m.rebuild_list();
        return m;
    }

    friend bool operator==(const SparsityModel& a, const SparsityModel& b)
    {
        return a.dx_ == b.dx_ && a.mask_ == b.mask_;
    }

private:
    std::size_t flat(MatrixIndex idx) const
    {
        return static_cast<std::size_t>(idx.row) * static_cast<std::size_t>(dx_) +
               static_cast<std::size_t>(idx.col);
    }

    void check_index(MatrixIndex idx) const
    {
        if (idx.row < 0 || idx.row >= dx_ || idx.col < 0 || idx.col >= dx_) {
            throw DimensionError("index (" + std::to_string(idx.row) + ", " + std::to_string(idx.col) +
                                 ") outside a " + std::to_string(dx_) + "x" + std::to_string(dx_) + " model");
        }
    }

    void rebuild_list()
    {
        dense_.clear();
        for (int i = 0; i < dx_; ++i) {
            for (int j = 0; j < dx_; ++j) {
                if (mask_[flat({i, j})]) {
                    dense_.push_back({i, j});
                }
            }
        }
    }

    int dx_ = 0;
    std::vector<std::uint8_t> mask_;
    std::vector<MatrixIndex> dense_;
};

} // namespace sparj
