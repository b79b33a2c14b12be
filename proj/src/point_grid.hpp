#pragma once

// Uniform bucket grid over 2-D points. Bin of point (x, y) is
// (floor(y / bin), floor(x / bin)). Points are stored bucket-sorted
// (ascending original index within a bucket) as structure-of-arrays, so a
// run of columns within one row is a single contiguous range.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "cellcloud/core.hpp"
#include "cellcloud/error.hpp"

namespace cellcloud::detail {

class PointGrid {
public:
    PointGrid() = default;

    PointGrid(std::span<const Point2> points, double bin_size) : bin_(bin_size) {
        if (!(bin_size > 0.0) || !std::isfinite(bin_size))
            throw Error(ErrorCode::InvalidArgument, "bin_size must be positive and finite");
        const std::size_t n = points.size();
        std::vector<std::int64_t> rows(n), cols(n);
        if (n > 0) {
            row_lo_ = col_lo_ = std::numeric_limits<std::int64_t>::max();
            row_hi_ = col_hi_ = std::numeric_limits<std::int64_t>::min();
        }
        for (std::size_t i = 0; i < n; ++i) {
            rows[i] = coord_bin(points[i].y);
            cols[i] = coord_bin(points[i].x);
            row_lo_ = std::min(row_lo_, rows[i]);
            row_hi_ = std::max(row_hi_, rows[i]);
            col_lo_ = std::min(col_lo_, cols[i]);
            col_hi_ = std::max(col_hi_, cols[i]);
        }

        order_.resize(n);
        xs_.resize(n);
        ys_.resize(n);
        if (n == 0) return;

        const double span_rows = static_cast<double>(row_hi_ - row_lo_ + 1);
        const double span_cols = static_cast<double>(col_hi_ - col_lo_ + 1);
        const double dense_limit = std::max(4.0 * static_cast<double>(n), 65536.0);
        dense_ = span_rows * span_cols <= dense_limit;

        std::vector<std::uint64_t> slot(n);
        if (dense_) {
            ncols_ = col_hi_ - col_lo_ + 1;
            const auto nbins = static_cast<std::size_t>((row_hi_ - row_lo_ + 1) * ncols_);
            offsets_.assign(nbins + 1, 0);
            for (std::size_t i = 0; i < n; ++i) {
                slot[i] = static_cast<std::uint64_t>((rows[i] - row_lo_) * ncols_ + (cols[i] - col_lo_));
                ++offsets_[slot[i] + 1];
            }
        } else {
            // Sparse: number the occupied bins in (row, col) order.
            std::vector<std::pair<std::pair<std::int64_t, std::int64_t>, std::size_t>> keyed(n);
            for (std::size_t i = 0; i < n; ++i) keyed[i] = {{rows[i], cols[i]}, i};
            std::sort(keyed.begin(), keyed.end());
            std::size_t next = 0;
            for (std::size_t k = 0; k < n; ++k) {
                if (k == 0 || keyed[k].first != keyed[k - 1].first) {
                    sparse_.emplace(keyed[k].first, next);
                    ++next;
                }
                slot[keyed[k].second] = next - 1;
            }
            offsets_.assign(next + 1, 0);
            for (std::size_t i = 0; i < n; ++i) ++offsets_[slot[i] + 1];
        }
        for (std::size_t b = 1; b < offsets_.size(); ++b) offsets_[b] += offsets_[b - 1];
        std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
        for (std::size_t i = 0; i < n; ++i) {
            const auto pos = fill[slot[i]]++;
            order_[pos] = static_cast<std::uint32_t>(i);
            xs_[pos] = points[i].x;
            ys_[pos] = points[i].y;
        }
    }

    double bin_size() const noexcept { return bin_; }
    std::size_t size() const noexcept { return order_.size(); }
    bool empty() const noexcept { return order_.empty(); }
    bool dense() const noexcept { return dense_; }

    std::int64_t coord_bin(double v) const noexcept { return static_cast<std::int64_t>(std::floor(v / bin_)); }

    std::int64_t row_lo() const noexcept { return row_lo_; }
    std::int64_t row_hi() const noexcept { return row_hi_; }
    std::int64_t col_lo() const noexcept { return col_lo_; }
    std::int64_t col_hi() const noexcept { return col_hi_; }

    // Sorted-position range [begin, end) of one bin; empty if unoccupied.
    std::pair<std::uint32_t, std::uint32_t> bin_range(std::int64_t row, std::int64_t col) const {
        if (empty() || row < row_lo_ || row > row_hi_ || col < col_lo_ || col > col_hi_) return {0, 0};
        if (dense_) {
            const auto s = static_cast<std::size_t>((row - row_lo_) * ncols_ + (col - col_lo_));
            return {offsets_[s], offsets_[s + 1]};
        }
        auto it = sparse_.find({row, col});
        if (it == sparse_.end()) return {0, 0};
        return {offsets_[it->second], offsets_[it->second + 1]};
    }

    // fn(begin, end) for every occupied part of the inclusive bin rectangle.
    template <class Fn>
    void for_each_range(std::int64_t r0, std::int64_t r1, std::int64_t c0, std::int64_t c1, Fn&& fn) const {
        if (empty()) return;
        r0 = std::max(r0, row_lo_);
        r1 = std::min(r1, row_hi_);
        c0 = std::max(c0, col_lo_);
        c1 = std::min(c1, col_hi_);
        if (r0 > r1 || c0 > c1) return;
        for (auto r = r0; r <= r1; ++r) {
            if (dense_) {
                const auto base = static_cast<std::size_t>((r - row_lo_) * ncols_);
                const auto b = offsets_[base + static_cast<std::size_t>(c0 - col_lo_)];
                const auto e = offsets_[base + static_cast<std::size_t>(c1 - col_lo_) + 1];
                if (b < e) fn(b, e);
            } else {
                for (auto c = c0; c <= c1; ++c) {
                    auto [b, e] = bin_range(r, c);
                    if (b < e) fn(b, e);
                }
            }
        }
    }

    bool covers_all(std::int64_t r0, std::int64_t r1, std::int64_t c0, std::int64_t c1) const noexcept {
        return r0 <= row_lo_ && r1 >= row_hi_ && c0 <= col_lo_ && c1 >= col_hi_;
    }

    std::span<const std::uint32_t> order() const noexcept { return order_; }
    std::span<const double> xs() const noexcept { return xs_; }
    std::span<const double> ys() const noexcept { return ys_; }

private:
    struct BinHash {
        std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& b) const noexcept {
            std::uint64_t z = static_cast<std::uint64_t>(b.first) * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(b.second);
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
            return static_cast<std::size_t>(z ^ (z >> 31));
        }
    };

    double bin_ = 1.0;
    std::int64_t row_lo_ = 0, row_hi_ = -1, col_lo_ = 0, col_hi_ = -1;
    std::int64_t ncols_ = 0;
    bool dense_ = true;
    std::vector<std::uint32_t> offsets_;
    std::unordered_map<std::pair<std::int64_t, std::int64_t>, std::size_t, BinHash> sparse_;
    std::vector<std::uint32_t> order_;
    std::vector<double> xs_;
    std::vector<double> ys_;
};

}  // namespace cellcloud::detail
