#include "cellcloud/nie.hpp"

#include <array>
#include <algorithm>
#include <cmath>

#include "cellcloud/error.hpp"

namespace cellcloud::nie {

namespace {

void check_params(const NieParams& p) {
    if (!(p.lambda_r > 0.0) || !std::isfinite(p.lambda_r))
        throw Error(ErrorCode::InvalidArgument, "lambda_r must be positive");
    if (p.n_d < 1 || p.n_d > 255) throw Error(ErrorCode::InvalidArgument, "n_d must be in [1, 255]");
}

// Shell j of type t: N(r_j) - N(r_{j-1}), with N(r_0) = 0.
double shell_count(const spatial::NeighborCounts& c, std::size_t i, std::size_t j, std::size_t t) {
    const double outer = c.at(i, j, t);
    return j == 0 ? outer : outer - static_cast<double>(c.at(i, j - 1, t));
}

}  // namespace

RadiiSchedule radii_schedule(double d_mean, const NieParams& params) {
    check_params(params);
    if (!(d_mean > 0.0) || !std::isfinite(d_mean)) throw Error(ErrorCode::InvalidArgument, "d_mean must be positive");
    const double r_max = params.lambda_r * d_mean;
    const auto nd = static_cast<double>(params.n_d);
    RadiiSchedule s;
    s.r.resize(params.n_d);
    for (std::size_t j = 0; j < params.n_d; ++j) s.r[j] = static_cast<double>(j + 1) * r_max / nd;
    s.r.back() = r_max;
    return s;
}

FeatureMatrix local_density(const spatial::NeighborCounts& counts) {
    const std::size_t nd = counts.n_radii();
    FeatureMatrix out(counts.n_cells, nd * kNumTypes);
    for (std::size_t i = 0; i < counts.n_cells; ++i) {
        auto row = out.row(i);
        for (std::size_t t = 0; t < kNumTypes; ++t) {
            const double total = counts.at(i, nd - 1, t);
            if (total == 0.0) continue;
            for (std::size_t j = 0; j < nd; ++j)
                row[t * nd + j] = static_cast<float>(shell_count(counts, i, j, t) / total);
        }
    }
    return out;
}

FeatureMatrix global_density(const spatial::NeighborCounts& counts) {
    const std::size_t nd = counts.n_radii();
    std::array<double, kNumTypes> peak{};
    for (std::size_t i = 0; i < counts.n_cells; ++i)
        for (std::size_t t = 0; t < kNumTypes; ++t)
            peak[t] = std::max(peak[t], static_cast<double>(counts.at(i, nd - 1, t)));

    FeatureMatrix out(counts.n_cells, nd * kNumTypes);
    for (std::size_t i = 0; i < counts.n_cells; ++i) {
        auto row = out.row(i);
        for (std::size_t t = 0; t < kNumTypes; ++t) {
            if (peak[t] == 0.0) continue;
            for (std::size_t j = 0; j < nd; ++j)
                row[t * nd + j] = static_cast<float>(shell_count(counts, i, j, t) / peak[t]);
        }
    }
    return out;
}

Embedding embed_with_counts(const CellCloud& cloud, const NieParams& params, const EmbedOptions& options) {
    check_params(params);
    if (cloud.size() < 2) throw Error(ErrorCode::TooFewCells, "embedding needs at least 2 cells");
    const double d_mean = options.d_mean ? *options.d_mean : spatial::mean_nn_distance(cloud);
    if (!(d_mean > 0.0))
        throw Error(ErrorCode::InvalidArgument, "mean nearest-neighbour distance is 0 (all cells coincide)");

    Embedding e;
    e.radii = radii_schedule(d_mean, params);
    const auto index = spatial::build_index(cloud, e.radii.r_max());
    e.counts = spatial::count_in_radii(index, e.radii.r, options.threads);

    const auto ld = local_density(e.counts);
    const auto gd = global_density(e.counts);
    const std::size_t block = params.n_d * kNumTypes;
    e.features = FeatureMatrix(cloud.size(), embedding_dim(params));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto row = e.features.row(i);
        std::copy(ld.row(i).begin(), ld.row(i).end(), row.begin());
        std::copy(gd.row(i).begin(), gd.row(i).end(), row.begin() + static_cast<std::ptrdiff_t>(block));
        row[2 * block + type_index(cloud[i].kind)] = 1.0f;
    }
    return e;
}

FeatureMatrix embed(const CellCloud& cloud, const NieParams& params, const EmbedOptions& options) {
    return embed_with_counts(cloud, params, options).features;
}

}  // namespace cellcloud::nie
