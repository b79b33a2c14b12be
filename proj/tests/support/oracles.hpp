#pragma once

// Brute-force references used by the unit and acceptance tests. Everything
// here is written for clarity, not speed, and shares no code with src/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <tuple>
#include <vector>

#include "cellcloud/core.hpp"
#include "cellcloud/hsp.hpp"
#include "cellcloud/rng.hpp"
#include "cellcloud/spatial.hpp"

namespace oracle {

using cellcloud::Cell;
using cellcloud::CellCloud;
using cellcloud::CellType;
using cellcloud::Point2;

// ---- generators -----------------------------------------------------------

// Uniform cells on [0, side)^2; with `snap`, coordinates land on a coarse
// lattice so that exact distance ties and radius-boundary hits are common.
// Duplicate (x, y, type) triples are dropped.
inline CellCloud random_cloud(std::uint64_t seed, std::size_t n, double side, double snap = 0.0) {
    cellcloud::RngStream rng(seed, 9001);
    std::vector<Cell> cells;
    cells.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double x = rng.uniform(0.0, side);
        double y = rng.uniform(0.0, side);
        if (snap > 0.0) {
            x = std::floor(x / snap) * snap;
            y = std::floor(y / snap) * snap;
        }
        cells.push_back({x, y, static_cast<CellType>(rng.below(3))});
    }
    std::vector<std::size_t> order(cells.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
        return std::tuple(cells[a].x, cells[a].y, cells[a].kind, a) < std::tuple(cells[b].x, cells[b].y, cells[b].kind, b);
    });
    std::vector<char> drop(cells.size(), 0);
    for (std::size_t i = 1; i < order.size(); ++i)
        if (cells[order[i]] == cells[order[i - 1]]) drop[order[i]] = 1;
    std::vector<Cell> kept;
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (!drop[i]) kept.push_back(cells[i]);
    return CellCloud(std::move(kept));
}

// A few Gaussian clumps on top of a sparse uniform background.
inline CellCloud clustered_cloud(std::uint64_t seed, std::size_t n, double side) {
    cellcloud::RngStream rng(seed, 9002);
    const std::size_t clumps = 1 + rng.below(5);
    std::vector<Point2> centres;
    for (std::size_t c = 0; c < clumps; ++c) centres.push_back({rng.uniform(0.2, 0.8) * side, rng.uniform(0.2, 0.8) * side});
    std::vector<Cell> cells;
    for (std::size_t i = 0; i < n; ++i) {
        double x, y;
        if (rng.uniform() < 0.2) {
            x = rng.uniform(0.0, side);
            y = rng.uniform(0.0, side);
        } else {
            const auto& c = centres[rng.below(clumps)];
            x = std::abs(c.x + 0.05 * side * rng.normal());
            y = std::abs(c.y + 0.05 * side * rng.normal());
        }
        cells.push_back({x, y, static_cast<CellType>(rng.below(3))});
    }
    return CellCloud(std::move(cells));
}

inline std::vector<Point2> random_points(std::uint64_t seed, std::size_t n, double side) {
    cellcloud::RngStream rng(seed, 9003);
    std::vector<Point2> p(n);
    for (auto& q : p) q = {rng.uniform(0.0, side), rng.uniform(0.0, side)};
    return p;
}

// ---- spatial --------------------------------------------------------------

inline cellcloud::spatial::NeighborCounts brute_counts(const CellCloud& cloud, const std::vector<double>& radii) {
    cellcloud::spatial::NeighborCounts out;
    out.n_cells = cloud.size();
    out.radii = radii;
    out.counts.assign(cloud.size() * radii.size() * 3, 0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (std::size_t q = 0; q < cloud.size(); ++q) {
            if (q == i) continue;
            const double dx = cloud[q].x - cloud[i].x;
            const double dy = cloud[q].y - cloud[i].y;
            const double d2 = dx * dx + dy * dy;
            for (std::size_t j = 0; j < radii.size(); ++j)
                if (d2 <= radii[j] * radii[j]) ++out.counts[(i * radii.size() + j) * 3 + static_cast<std::size_t>(cloud[q].kind)];
        }
    }
    return out;
}

inline double brute_mean_nn(const std::vector<Point2>& p) {
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (i == j) continue;
            best = std::min(best, std::hypot(p[i].x - p[j].x, p[i].y - p[j].y));
        }
        sum += best;
    }
    return sum / static_cast<double>(p.size());
}

// Textbook O(n * N) farthest point sampling in the augmented space.
inline std::vector<std::size_t> brute_fps(const std::vector<Point2>& p, const std::vector<CellType>& labels,
                                          std::size_t n, double gamma) {
    auto tag = [&](std::size_t i) { return labels.empty() ? 0 : static_cast<int>(labels[i]); };
    auto d2 = [&](std::size_t a, std::size_t b) {
        const double dx = p[a].x - p[b].x, dy = p[a].y - p[b].y;
        double d = dx * dx + dy * dy;
        if (!labels.empty() && labels[a] != labels[b]) d += 2.0 * gamma * gamma;
        return d;
    };
    std::vector<std::size_t> out;
    if (n == 0) return out;
    std::size_t first = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (std::make_tuple(p[i].x, p[i].y, tag(i)) < std::make_tuple(p[first].x, p[first].y, tag(first))) first = i;
    out.push_back(first);
    while (out.size() < n) {
        std::size_t best = p.size();
        double best_d = -1.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (std::find(out.begin(), out.end(), i) != out.end()) continue;
            double m = std::numeric_limits<double>::infinity();
            for (auto s : out) m = std::min(m, d2(i, s));
            if (m > best_d) {
                best_d = m;
                best = i;
            }
        }
        out.push_back(best);
    }
    return out;
}

inline std::vector<std::vector<std::size_t>> brute_knn(const std::vector<Point2>& anchors, const std::vector<Point2>& p,
                                                       std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& a : anchors) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double dx = p[i].x - a.x, dy = p[i].y - a.y;
            all.push_back({dx * dx + dy * dy, i});
        }
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < k; ++i) ids.push_back(all[i].second);
        out.push_back(ids);
    }
    return out;
}

// ---- clustering -----------------------------------------------------------

inline double silhouette(const cellcloud::FeatureMatrix& f, const std::vector<std::size_t>& labels) {
    const std::size_t n = f.rows();
    const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::size_t> size(k, 0);
    for (auto l : labels) ++size[l];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sum(k, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double d = 0.0;
            for (std::size_t c = 0; c < f.dim(); ++c) {
                const double e = static_cast<double>(f.at(i, c)) - f.at(j, c);
                d += e * e;
            }
            sum[labels[j]] += std::sqrt(d);
        }
        if (size[labels[i]] < 2) continue;  // singleton: s = 0
        const double a = sum[labels[i]] / static_cast<double>(size[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
            if (c != labels[i] && size[c] > 0) b = std::min(b, sum[c] / static_cast<double>(size[c]));
        if (!std::isfinite(b)) continue;
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

// ---- hierarchical forward pass -------------------------------------------

using Vec = std::vector<double>;

inline Vec affine(const cellcloud::hsp::Affine& a, const Vec& x) {
    Vec y(a.out);
    for (std::size_t o = 0; o < a.out; ++o) {
        double s = a.bias[o];
        for (std::size_t i = 0; i < a.in; ++i) s += static_cast<double>(a.weight[o * a.in + i]) * x[i];
        y[o] = s;
    }
    return y;
}

struct RefTrace {
    std::vector<std::vector<std::vector<char>>> masks;  // per level, per group
    double max_weight_sum_error = 0.0;
};

// Direct pairwise evaluation of one attention block over the retained
// members; nothing is factored or batched.
inline std::vector<Vec> ref_attention(const std::vector<Vec>& f, const std::vector<Point2>& c,
                                      const std::vector<char>& mask, const cellcloud::hsp::AttentionBlock& blk,
                                      double* worst) {
    const std::size_t m = f.size();
    const std::size_t D = f.empty() ? 0 : f[0].size();
    auto lift = [&](std::size_t i, std::size_t j) {
        return affine(blk.position, {c[i].x - c[j].x, c[i].y - c[j].y});
    };
    std::vector<Vec> out = f;
    for (std::size_t i = 0; i < m; ++i) {
        if (!mask[i]) continue;
        const Vec q = affine(blk.query, f[i]);
        std::vector<Vec> logits, values;
        for (std::size_t j = 0; j < m; ++j) {
            if (!mask[j]) continue;
            const Vec k = affine(blk.key, f[j]);
            const Vec p = lift(i, j);
            Vec x(D);
            for (std::size_t d = 0; d < D; ++d) x[d] = q[d] - k[d] + p[d];
            Vec h = affine(blk.att_hidden, x);
            for (auto& v : h) v = std::max(v, 0.0);
            logits.push_back(affine(blk.att_out, h));
            Vec v = affine(blk.value, f[j]);
            for (std::size_t d = 0; d < D; ++d) v[d] += p[d];
            values.push_back(v);
        }
        Vec res(D, 0.0);
        for (std::size_t d = 0; d < D; ++d) {
            double peak = -std::numeric_limits<double>::infinity();
            for (const auto& l : logits) peak = std::max(peak, l[d]);
            double z = 0.0;
            for (const auto& l : logits) z += std::exp(l[d] - peak);
            double wsum = 0.0;
            for (std::size_t j = 0; j < logits.size(); ++j) {
                const double w = std::exp(logits[j][d] - peak) / z;
                wsum += w;
                res[d] += w * values[j][d];
            }
            if (worst) *worst = std::max(*worst, std::abs(wsum - 1.0));
        }
        out[i] = res;
    }
    return out;
}

inline std::vector<double> reference_forward(const std::vector<Point2>& coords, const cellcloud::FeatureMatrix& x,
                                             const std::vector<CellType>& types,
                                             const cellcloud::hsp::HspConfig& cfg,
                                             const cellcloud::hsp::HspWeights& w, RefTrace* trace = nullptr) {
    std::vector<Vec> feats;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        Vec r(x.dim());
        for (std::size_t c = 0; c < x.dim(); ++c) r[c] = x.at(i, c);
        feats.push_back(affine(w.encoder, r));
    }
    std::vector<Point2> pts = coords;
    std::size_t scheduled = cfg.initial_anchors;
    for (std::size_t level = 0; level < cfg.levels; ++level) {
        const std::size_t np = pts.size();
        const std::size_t nk = std::min(scheduled, np);
        const std::size_t k = std::min(np, std::max<std::size_t>(1, (2 * np) / nk));
        const bool semantic = level == 0 && !types.empty();
        const double gamma = semantic ? brute_mean_nn(pts) : 0.0;
        const auto ids = brute_fps(pts, semantic ? types : std::vector<CellType>{}, nk, gamma);
        std::vector<Point2> anchors;
        for (auto i : ids) anchors.push_back(pts[i]);
        const auto groups = brute_knn(anchors, pts, k);

        const auto& lw = w.levels[level];
        std::vector<Vec> next;
        if (trace) trace->masks.emplace_back();
        for (std::size_t g = 0; g < nk; ++g) {
            std::vector<Vec> f;
            std::vector<Point2> c;
            for (auto id : groups[g]) {
                f.push_back(feats[id]);
                c.push_back(pts[id]);
            }
            const std::size_t m = f.size();
            const std::size_t D = f[0].size();
            Vec ref(D, 0.0);
            for (const auto& r : f)
                for (std::size_t d = 0; d < D; ++d) ref[d] += r[d];
            for (auto& v : ref) v = static_cast<double>(static_cast<float>(v / static_cast<double>(m)));

            std::vector<double> dist(m);
            double mean = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                dist[i] = std::hypot(c[i].x - anchors[g].x, c[i].y - anchors[g].y);
                mean += dist[i];
            }
            mean /= static_cast<double>(m);
            const double unit = mean > 0.0 ? mean : 1.0;
            std::vector<char> mask(m, 0);
            bool any = false;
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t d = 0; d < D; ++d) dot += f[i][d] * ref[d];
                const double s = std::exp(-dist[i] / unit) * dot / static_cast<double>(D);
                mask[i] = s > cfg.lambda_sim;
                any = any || mask[i];
            }
            if (!any) mask[static_cast<std::size_t>(std::min_element(dist.begin(), dist.end()) - dist.begin())] = 1;
            if (trace) trace->masks.back().push_back(mask);

            for (const auto& blk : lw.blocks) f = ref_attention(f, c, mask, blk, trace ? &trace->max_weight_sum_error : nullptr);

            Vec pooled(lw.aggregate.out, 0.0);
            std::size_t kept = 0;
            for (std::size_t i = 0; i < m; ++i) {
                if (!mask[i]) continue;
                const Vec y = affine(lw.aggregate, f[i]);
                for (std::size_t d = 0; d < y.size(); ++d) pooled[d] += y[d];
                ++kept;
            }
            for (auto& v : pooled) v /= static_cast<double>(kept);
            next.push_back(pooled);
        }
        pts = anchors;
        feats = next;
        scheduled /= cfg.n_basic;
    }
    Vec out(feats[0].size(), -std::numeric_limits<double>::infinity());
    for (const auto& r : feats)
        for (std::size_t d = 0; d < out.size(); ++d) out[d] = std::max(out[d], r[d]);
    return out;
}

}  // namespace oracle
