#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "cellcloud/core.hpp"

namespace cellcloud::detail {
class PointGrid;
}

namespace cellcloud::spatial {

// Exact bucket index over a CellCloud. The cloud must outlive the index.
class SpatialIndex {
public:
    SpatialIndex(const CellCloud& cloud, double bin_size);
    ~SpatialIndex();
    SpatialIndex(SpatialIndex&&) noexcept;
    SpatialIndex& operator=(SpatialIndex&&) noexcept;

    double bin_size() const noexcept;
    const CellCloud& source() const noexcept { return *source_; }

    // Cell indices in bin (row, col) = (floor(y / bin), floor(x / bin)), ascending.
    std::vector<std::size_t> bin(std::int64_t row, std::int64_t col) const;
    std::size_t occupied_bins() const;

    const detail::PointGrid& grid() const noexcept { return *grid_; }
    // Cell types in the grid's sorted order.
    std::span<const std::uint8_t> sorted_types() const noexcept { return types_; }

private:
    const CellCloud* source_;
    std::unique_ptr<detail::PointGrid> grid_;
    std::vector<std::uint8_t> types_;
};

SpatialIndex build_index(const CellCloud& cloud, double bin_size);

// counts(i, j, t): type-t cells other than i with dx^2 + dy^2 <= r_j^2.
struct NeighborCounts {
    std::size_t n_cells = 0;
    std::vector<double> radii;
    std::vector<std::uint32_t> counts;  // (i, j, t) row-major

    std::size_t n_radii() const noexcept { return radii.size(); }
    std::uint32_t at(std::size_t i, std::size_t j, std::size_t t) const noexcept {
        return counts[(i * radii.size() + j) * kNumTypes + t];
    }

    friend bool operator==(const NeighborCounts&, const NeighborCounts&) = default;
};

// radii strictly ascending and positive. Queries scan every bin that can
// hold a point within the largest radius, so any bin_size gives exact counts.
NeighborCounts count_in_radii(const SpatialIndex& index, std::span<const double> radii, unsigned threads = 1);

// "CCNC", u32 version = 1, u64 n_cells, u8 N_d, u8 T, f64 radii, u32 counts.
std::vector<std::uint8_t> encode_neighbor_counts(const NeighborCounts& counts);
NeighborCounts decode_neighbor_counts(std::span<const std::uint8_t> bytes);

// Mean over points of the distance to the nearest other point. Throws
// TooFewCells for fewer than two points.
double mean_nn_distance(std::span<const Point2> points);
double mean_nn_distance(const CellCloud& cloud);

// Greedy farthest point sampling in [x, y, gamma * onehot(label)]. Starts at
// the lexicographically smallest (x, y, type tag); ties go to the smaller
// index. `labels` may be empty when gamma == 0.
std::vector<std::size_t> fps(std::span<const Point2> points, std::span<const CellType> labels, std::size_t n,
                             double gamma, unsigned threads = 1);

// k nearest points per anchor, ascending by (distance, index).
struct KnnGroups {
    std::size_t anchors = 0;
    std::size_t k = 0;
    std::vector<std::size_t> members;  // anchors × k

    std::size_t size() const noexcept { return anchors; }
    std::span<const std::size_t> operator[](std::size_t a) const noexcept { return {members.data() + a * k, k}; }
};

KnnGroups knn_group(std::span<const Point2> anchors, std::span<const Point2> points, std::size_t k,
                    unsigned threads = 1);

}  // namespace cellcloud::spatial
