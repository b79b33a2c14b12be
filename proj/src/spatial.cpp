#include "cellcloud/spatial.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "byte_io.hpp"
#include "cellcloud/error.hpp"
#include "cellcloud/parallel.hpp"
#include "point_grid.hpp"

namespace cellcloud::spatial {

using detail::PointGrid;

SpatialIndex::SpatialIndex(const CellCloud& cloud, double bin_size) : source_(&cloud) {
    const auto coords = cloud.coordinates();
    grid_ = std::make_unique<PointGrid>(coords, bin_size);
    types_.resize(cloud.size());
    const auto order = grid_->order();
    for (std::size_t p = 0; p < order.size(); ++p) types_[p] = static_cast<std::uint8_t>(cloud[order[p]].kind);
}

SpatialIndex::~SpatialIndex() = default;
SpatialIndex::SpatialIndex(SpatialIndex&&) noexcept = default;
SpatialIndex& SpatialIndex::operator=(SpatialIndex&&) noexcept = default;

double SpatialIndex::bin_size() const noexcept { return grid_->bin_size(); }

std::vector<std::size_t> SpatialIndex::bin(std::int64_t row, std::int64_t col) const {
    auto [b, e] = grid_->bin_range(row, col);
    const auto order = grid_->order();
    return {order.begin() + b, order.begin() + e};
}

std::size_t SpatialIndex::occupied_bins() const {
    if (grid_->empty()) return 0;
    std::size_t n = 1;
    const auto order = grid_->order();
    const auto& src = *source_;
    for (std::size_t p = 1; p < order.size(); ++p) {
        const auto& a = src[order[p - 1]];
        const auto& b = src[order[p]];
        if (grid_->coord_bin(a.y) != grid_->coord_bin(b.y) || grid_->coord_bin(a.x) != grid_->coord_bin(b.x)) ++n;
    }
    return n;
}

SpatialIndex build_index(const CellCloud& cloud, double bin_size) { return SpatialIndex(cloud, bin_size); }

NeighborCounts count_in_radii(const SpatialIndex& index, std::span<const double> radii, unsigned threads) {
    if (radii.empty()) throw Error(ErrorCode::InvalidArgument, "radii must be non-empty");
    for (std::size_t j = 0; j < radii.size(); ++j) {
        if (!(radii[j] > 0.0) || !std::isfinite(radii[j]) || (j > 0 && !(radii[j] > radii[j - 1])))
            throw Error(ErrorCode::InvalidArgument, "radii must be positive, finite and strictly ascending");
    }

    const auto& grid = index.grid();
    const std::size_t n = grid.size();
    const std::size_t nd = radii.size();
    std::vector<double> r2(nd);
    for (std::size_t j = 0; j < nd; ++j) r2[j] = radii[j] * radii[j];
    const double rmax2 = r2.back();
    const double reach = radii.back() * (1.0 + 1e-9);

    NeighborCounts out;
    out.n_cells = n;
    out.radii.assign(radii.begin(), radii.end());
    out.counts.assign(n * nd * kNumTypes, 0);

    const auto xs = grid.xs();
    const auto ys = grid.ys();
    const auto order = grid.order();
    const auto types = index.sorted_types();

    // Query positions are walked in grid order (cache friendly); results land
    // at the original cell index, so chunking never changes the output.
    parallel_for(n, resolve_threads(threads), [&](std::size_t begin, std::size_t end) {
        std::vector<std::uint32_t> shell(nd * kNumTypes);
        for (std::size_t p = begin; p < end; ++p) {
            std::fill(shell.begin(), shell.end(), 0u);
            const double x = xs[p];
            const double y = ys[p];
            grid.for_each_range(grid.coord_bin(y - reach), grid.coord_bin(y + reach), grid.coord_bin(x - reach),
                                grid.coord_bin(x + reach), [&](std::uint32_t b, std::uint32_t e) {
                                    for (std::uint32_t q = b; q < e; ++q) {
                                        const double dx = xs[q] - x;
                                        const double dy = ys[q] - y;
                                        const double d2 = dx * dx + dy * dy;
                                        if (d2 > rmax2 || q == p) continue;
                                        std::size_t j = 0;
                                        while (d2 > r2[j]) ++j;
                                        ++shell[j * kNumTypes + types[q]];
                                    }
                                });
            std::uint32_t* dst = out.counts.data() + static_cast<std::size_t>(order[p]) * nd * kNumTypes;
            for (std::size_t t = 0; t < kNumTypes; ++t) {
                std::uint32_t run = 0;
                for (std::size_t j = 0; j < nd; ++j) {
                    run += shell[j * kNumTypes + t];
                    dst[j * kNumTypes + t] = run;
                }
            }
        }
    });
    return out;
}

std::vector<std::uint8_t> encode_neighbor_counts(const NeighborCounts& counts) {
    detail::ByteWriter w;
    w.magic("CCNC");
    w.u32(1);
    w.u64(counts.n_cells);
    w.u8(static_cast<std::uint8_t>(counts.radii.size()));
    w.u8(static_cast<std::uint8_t>(kNumTypes));
    for (double r : counts.radii) w.f64(r);
    for (auto c : counts.counts) w.u32(c);
    return w.take();
}

NeighborCounts decode_neighbor_counts(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "CCNC");
    r.expect_magic("CCNC");
    if (auto v = r.u32(); v != 1) throw Error(ErrorCode::BadFormat, "CCNC: unsupported version " + std::to_string(v));
    NeighborCounts out;
    out.n_cells = r.u64();
    const auto nd = r.u8();
    const auto t = r.u8();
    if (t != kNumTypes) throw Error(ErrorCode::BadFormat, "CCNC: expected 3 cell types");
    out.radii.resize(nd);
    for (auto& v : out.radii) v = r.f64();
    if (nd != 0 && out.n_cells > r.remaining() / 4 / nd / t) throw Error(ErrorCode::BadFormat, "CCNC: truncated");
    out.counts.resize(out.n_cells * nd * t);
    for (auto& c : out.counts) c = r.u32();
    r.expect_end();
    return out;
}

namespace {

struct Extent {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
};

Extent extent_of(std::span<const Point2> pts) {
    Extent e{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
    for (const auto& p : pts) {
        e.x0 = std::min(e.x0, p.x);
        e.y0 = std::min(e.y0, p.y);
        e.x1 = std::max(e.x1, p.x);
        e.y1 = std::max(e.y1, p.y);
    }
    return e;
}

// Bin side giving roughly `per_bin` points per occupied bin.
double auto_bin(std::span<const Point2> pts, double per_bin) {
    const auto e = extent_of(pts);
    const double n = static_cast<double>(pts.size());
    const double longest = std::max(e.width(), e.height());
    if (!(longest > 0.0)) return 1.0;
    double bin = std::sqrt(e.width() * e.height() * per_bin / n);
    // Degenerate (near-collinear) extents: fall back to a 1-D spacing.
    bin = std::max(bin, longest * per_bin / n);
    return bin;
}

// Calls fn(begin, end) for the bins at Chebyshev ring distance `ring`
// around (r0, c0).
template <class Fn>
void for_each_ring(const PointGrid& grid, std::int64_t r0, std::int64_t c0, std::int64_t ring, Fn&& fn) {
    if (ring == 0) {
        grid.for_each_range(r0, r0, c0, c0, fn);
        return;
    }
    grid.for_each_range(r0 - ring, r0 - ring, c0 - ring, c0 + ring, fn);
    grid.for_each_range(r0 + ring, r0 + ring, c0 - ring, c0 + ring, fn);
    grid.for_each_range(r0 - ring + 1, r0 + ring - 1, c0 - ring, c0 - ring, fn);
    grid.for_each_range(r0 - ring + 1, r0 + ring - 1, c0 + ring, c0 + ring, fn);
}

// Lower bound on the distance from (x, y) to any point outside the block of
// rings 0..ring around its own bin.
double block_gap(const PointGrid& grid, double x, double y, std::int64_t r0, std::int64_t c0, std::int64_t ring) {
    const double b = grid.bin_size();
    const double gx = std::min(x - static_cast<double>(c0 - ring) * b, static_cast<double>(c0 + ring + 1) * b - x);
    const double gy = std::min(y - static_cast<double>(r0 - ring) * b, static_cast<double>(r0 + ring + 1) * b - y);
    // Shrunk slightly so rounding can never overstate the bound.
    return std::max(0.0, std::min(gx, gy) * (1.0 - 1e-12));
}

}  // namespace

double mean_nn_distance(std::span<const Point2> points) {
    if (points.size() < 2) throw Error(ErrorCode::TooFewCells, "mean_nn_distance needs at least 2 points");
    const PointGrid grid(points, auto_bin(points, 2.0));
    const auto xs = grid.xs();
    const auto ys = grid.ys();
    const auto order = grid.order();

    std::vector<double> nn(points.size());
    for (std::size_t p = 0; p < grid.size(); ++p) {
        const double x = xs[p];
        const double y = ys[p];
        const auto r0 = grid.coord_bin(y);
        const auto c0 = grid.coord_bin(x);
        double best = std::numeric_limits<double>::infinity();
        for (std::int64_t ring = 0;; ++ring) {
            for_each_ring(grid, r0, c0, ring, [&](std::uint32_t b, std::uint32_t e) {
                for (std::uint32_t q = b; q < e; ++q) {
                    if (q == p) continue;
                    const double dx = xs[q] - x;
                    const double dy = ys[q] - y;
                    best = std::min(best, dx * dx + dy * dy);
                }
            });
            const double gap = block_gap(grid, x, y, r0, c0, ring);
            if (best <= gap * gap) break;
            if (grid.covers_all(r0 - ring, r0 + ring, c0 - ring, c0 + ring)) break;
        }
        nn[order[p]] = std::sqrt(best);
    }
    double sum = 0.0;
    for (double d : nn) sum += d;
    return sum / static_cast<double>(nn.size());
}

double mean_nn_distance(const CellCloud& cloud) {
    const auto coords = cloud.coordinates();
    return mean_nn_distance(std::span<const Point2>(coords));
}

std::vector<std::size_t> fps(std::span<const Point2> points, std::span<const CellType> labels, std::size_t n,
                             double gamma, unsigned threads) {
    const std::size_t count = points.size();
    if (n > count) throw Error(ErrorCode::InvalidArgument, "fps: n exceeds number of points");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error(ErrorCode::InvalidArgument, "fps: gamma must be >= 0");
    if (!labels.empty() && labels.size() != count) throw Error(ErrorCode::DimMismatch, "fps: labels size mismatch");
    if (labels.empty() && gamma > 0.0) throw Error(ErrorCode::InvalidArgument, "fps: gamma > 0 needs labels");
    std::vector<std::size_t> picked;
    if (n == 0) return picked;
    picked.reserve(n);

    auto tag = [&](std::size_t i) { return labels.empty() ? 0 : static_cast<int>(labels[i]); };
    std::size_t start = 0;
    for (std::size_t i = 1; i < count; ++i) {
        if (std::tuple(points[i].x, points[i].y, tag(i)) < std::tuple(points[start].x, points[start].y, tag(start)))
            start = i;
    }

    // Distinct one-hot vectors sit sqrt(2) * gamma apart.
    const double semantic2 = 2.0 * gamma * gamma;
    auto dist2 = [&](std::size_t a, std::size_t b) {
        const double dx = points[a].x - points[b].x;
        const double dy = points[a].y - points[b].y;
        double d = dx * dx + dy * dy;
        if (semantic2 > 0.0 && labels[a] != labels[b]) d += semantic2;
        return d;
    };

    std::vector<double> mind(count, std::numeric_limits<double>::infinity());
    std::vector<char> taken(count, 0);
    const unsigned workers = resolve_threads(threads);
    const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(workers, count / 4096 + 1));
    std::vector<std::pair<double, std::size_t>> local(chunks);

    std::size_t current = start;
    for (std::size_t step = 0; step < n; ++step) {
        picked.push_back(current);
        taken[current] = 1;
        if (step + 1 == n) break;
        // Fused min-distance update and argmax over unselected points.
        const std::size_t span = (count + chunks - 1) / chunks;
        parallel_for(chunks, static_cast<unsigned>(chunks), [&](std::size_t cb, std::size_t ce) {
            for (std::size_t c = cb; c < ce; ++c) {
                const std::size_t b = c * span;
                const std::size_t e = std::min(count, b + span);
                double best = -1.0;
                std::size_t best_i = count;
                for (std::size_t i = b; i < e; ++i) {
                    if (taken[i]) continue;
                    const double d = dist2(i, current);
                    if (d < mind[i]) mind[i] = d;
                    if (mind[i] > best) {
                        best = mind[i];
                        best_i = i;
                    }
                }
                local[c] = {best, best_i};
            }
        });
        double best = -1.0;
        std::size_t best_i = count;
        for (const auto& [d, i] : local) {
            if (i < count && d > best) {
                best = d;
                best_i = i;
            }
        }
        current = best_i;
    }
    return picked;
}

KnnGroups knn_group(std::span<const Point2> anchors, std::span<const Point2> points, std::size_t k, unsigned threads) {
    if (k > points.size()) throw Error(ErrorCode::InvalidArgument, "knn_group: k exceeds number of points");
    KnnGroups out;
    out.anchors = anchors.size();
    out.k = k;
    out.members.assign(anchors.size() * k, 0);
    if (k == 0 || anchors.empty()) return out;

    const PointGrid grid(points, auto_bin(points, std::max<double>(2.0, static_cast<double>(k) / 3.0)));
    const auto xs = grid.xs();
    const auto ys = grid.ys();
    const auto order = grid.order();

    parallel_for(anchors.size(), resolve_threads(threads), [&](std::size_t begin, std::size_t end) {
        std::vector<std::pair<double, std::uint32_t>> cand;
        for (std::size_t a = begin; a < end; ++a) {
            const double x = anchors[a].x;
            const double y = anchors[a].y;
            const auto r0 = grid.coord_bin(y);
            const auto c0 = grid.coord_bin(x);
            cand.clear();
            // Rings closer than the grid rectangle are empty.
            const std::int64_t first_ring = std::max<std::int64_t>(
                {0, grid.row_lo() - r0, r0 - grid.row_hi(), grid.col_lo() - c0, c0 - grid.col_hi()});
            for (std::int64_t ring = first_ring;; ++ring) {
                for_each_ring(grid, r0, c0, ring, [&](std::uint32_t b, std::uint32_t e) {
                    for (std::uint32_t q = b; q < e; ++q) {
                        const double dx = xs[q] - x;
                        const double dy = ys[q] - y;
                        cand.emplace_back(dx * dx + dy * dy, order[q]);
                    }
                });
                if (grid.covers_all(r0 - ring, r0 + ring, c0 - ring, c0 + ring)) break;
                if (cand.size() >= k) {
                    std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
                    const double gap = block_gap(grid, x, y, r0, c0, ring);
                    // Strict: a point outside the block could tie the k-th otherwise.
                    if (cand[k - 1].first < gap * gap) break;
                }
            }
            std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
            auto* dst = out.members.data() + a * k;
            for (std::size_t m = 0; m < k; ++m) dst[m] = cand[m].second;
        }
    });
    return out;
}

}  // namespace cellcloud::spatial
