#pragma once

#include <optional>
#include <vector>

#include "cellcloud/core.hpp"
#include "cellcloud/spatial.hpp"

namespace cellcloud::nie {

struct NieParams {
    double lambda_r = 4.0;  // r_max = lambda_r * d_mean
    std::size_t n_d = 3;    // number of radius shells
};

// r[j] = (j + 1) * r_max / n_d, with r.back() == r_max exactly.
struct RadiiSchedule {
    std::vector<double> r;
    double r_max() const noexcept { return r.back(); }
};

RadiiSchedule radii_schedule(double d_mean, const NieParams& params = {});

// Both density blocks share the layout [t][j], column t * n_d + j.
FeatureMatrix local_density(const spatial::NeighborCounts& counts);
FeatureMatrix global_density(const spatial::NeighborCounts& counts);

inline constexpr std::size_t embedding_dim(const NieParams& p) noexcept { return 2 * p.n_d * kNumTypes + kNumTypes; }

struct EmbedOptions {
    // Dataset-wide d_mean; the slide's own mean NN distance when unset.
    std::optional<double> d_mean;
    unsigned threads = 1;
};

// Rows: [local density | global density | one-hot type].
FeatureMatrix embed(const CellCloud& cloud, const NieParams& params = {}, const EmbedOptions& options = {});

// Same as embed, also returning the intermediate counts (for caching).
struct Embedding {
    RadiiSchedule radii;
    spatial::NeighborCounts counts;
    FeatureMatrix features;
};
Embedding embed_with_counts(const CellCloud& cloud, const NieParams& params = {}, const EmbedOptions& options = {});

}  // namespace cellcloud::nie
