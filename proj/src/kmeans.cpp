#include <algorithm>
#include <limits>

#include "cellcloud/clinical.hpp"
#include "cellcloud/error.hpp"
#include "cellcloud/rng.hpp"

namespace cellcloud::clinical {

namespace {

double dist2(std::span<const float> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = static_cast<double>(a[j]) - b[j];
        s += d * d;
    }
    return s;
}

}  // namespace

KMeansResult kmeans(const FeatureMatrix& features, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
    const std::size_t n = features.rows();
    const std::size_t dim = features.dim();
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "kmeans: k must be >= 1");
    if (n < k) throw Error(ErrorCode::InvalidArgument, "kmeans: fewer rows than clusters");

    std::vector<double> centers(k * dim);
    auto center = [&](std::size_t c) { return std::span<double>(centers.data() + c * dim, dim); };
    auto set_center = [&](std::size_t c, std::size_t row) {
        const auto r = features.row(row);
        std::copy(r.begin(), r.end(), center(c).begin());
    };

    RngStream rng(seed, 0);
    set_center(0, static_cast<std::size_t>(rng.below(n)));
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
        std::size_t best = 0;
        double best_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], dist2(features.row(i), center(c - 1)));
            if (nearest[i] > best_d) {
                best_d = nearest[i];
                best = i;
            }
        }
        set_center(c, best);
    }

    KMeansResult res;
    res.labels.assign(n, k);  // sentinel: first pass always counts as a change
    std::vector<double> sums(k * dim);
    std::vector<std::size_t> sizes(k);
    for (std::size_t it = 0; it < std::max<std::size_t>(max_iter, 1); ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = dist2(features.row(i), center(c));
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (res.labels[i] != best) {
                res.labels[i] = best;
                changed = true;
            }
        }
        res.iterations = it + 1;
        if (!changed) break;

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(sizes.begin(), sizes.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = features.row(i);
            double* s = sums.data() + res.labels[i] * dim;
            for (std::size_t j = 0; j < dim; ++j) s[j] += r[j];
            ++sizes[res.labels[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] == 0) continue;  // empty cluster keeps its centre
            for (std::size_t j = 0; j < dim; ++j) centers[c * dim + j] = sums[c * dim + j] / static_cast<double>(sizes[c]);
        }
    }

    res.centroids = FeatureMatrix(k, dim);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < dim; ++j) res.centroids.at(c, j) = static_cast<float>(centers[c * dim + j]);
    return res;
}

}  // namespace cellcloud::clinical
