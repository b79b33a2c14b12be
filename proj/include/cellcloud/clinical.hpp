#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cellcloud/core.hpp"
#include "cellcloud/survival.hpp"

namespace cellcloud::clinical {

// Weights on [N_neo / N_total, N_inf / N_total, N_neo / N_inf].
struct AlphaWeights {
    std::array<double, 3> alpha{1.0 / 3, 1.0 / 3, 1.0 / 3};
};

void validate_alpha(const AlphaWeights& a);

// Named presets: hnsc = equal weights, kirc = inflammatory emphasis,
// paad = ratio only. The "-prose" variants swap the hnsc and kirc weights,
// for readers who associate the inflammatory emphasis with HNSC.
std::optional<AlphaWeights> alpha_preset(std::string_view name);
std::vector<std::string> alpha_preset_names();

// Throws EmptyCloud when there are no cells and DegenerateRatio when
// alpha[2] > 0 but the cloud has no inflammatory cells.
double cps(const TypeTally& counts, const AlphaWeights& alpha);
double cps(const CellCloud& cloud, const AlphaWeights& alpha);

struct BoxSpec {
    std::size_t n_box = 20;
    double ratio_low = 0.6;
    double ratio_high = 1.0;
    std::uint64_t seed = 0;
};

void validate_boxes(const BoxSpec& b);

// Mean CPS over n_box axis-aligned boxes inside the cloud's bounding box.
// Per axis the side is ratio * extent with ratio ~ U[low, high]; the origin is
// uniform over admissible positions. Box i draws from sub-stream (seed, i);
// boxes whose CPS is undefined are redrawn, and 100 * n_box consecutive
// undefined draws raise ExhaustedResampling.
double mcps(const CellCloud& cloud, const AlphaWeights& alpha, const BoxSpec& boxes = {});

struct KMeansResult {
    std::vector<std::size_t> labels;
    FeatureMatrix centroids;
    std::size_t iterations = 0;
};

// Lloyd iterations from a farthest-point initialisation whose first centre
// is picked by the seed. Ties go to the lower cluster id. Stops when labels
// are stable or after max_iter rounds.
KMeansResult kmeans(const FeatureMatrix& features, std::size_t k, std::uint64_t seed, std::size_t max_iter = 100);

struct GaussianComponent {
    Point2 center;
    double stdev = 1.0;
    std::size_t count = 0;
    CellType type = CellType::Other;
};

// Isotropic Gaussian blobs; samples landing at negative coordinates are
// redrawn so every cell is valid.
CellCloud synth_gaussian_cloud(std::span<const GaussianComponent> components, std::uint64_t seed);

// Three partially overlapping typed blobs plus scattered outliers of each
// type; used for the neighbourhood-embedding clustering demo.
struct ToySet {
    CellCloud cloud;
    std::vector<std::size_t> component;  // 0..2 for blobs, 3 for outliers
    std::vector<GaussianComponent> blobs;
};
ToySet synth_toy_set(std::uint64_t seed);

struct SyntheticPatient {
    CellCloud cloud;
    double core_ratio = 0.0;  // N_neo / N_inf of the tumour bed, drives the hazard
    double rate = 0.0;
};

struct SyntheticCohort {
    std::vector<SyntheticPatient> patients;
    SurvivalCohort cohort;  // score = core_ratio
};

// n patients on a 2048 px square. Each patient has a latent N_neo / N_inf
// ratio rho, log-uniform on [0.25, 6]; event times are exponential with rate
// 0.1 * (1 + rho); 20% of patients are censored at a uniform time before
// their event. Clouds hold a uniform tumour bed of 3000 cells at ratio rho
// plus 800 other cells, and a band of inflammatory infiltrate along the slide
// margin whose size (0 to 4 times the bed) does not depend on the hazard.
SyntheticCohort synth_cohort(std::size_t n, std::uint64_t seed);

}  // namespace cellcloud::clinical
