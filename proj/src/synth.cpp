#include <algorithm>
#include <cmath>
#include <limits>

#include "cellcloud/clinical.hpp"
#include "cellcloud/error.hpp"
#include "cellcloud/rng.hpp"

namespace cellcloud::clinical {

CellCloud synth_gaussian_cloud(std::span<const GaussianComponent> components, std::uint64_t seed) {
    std::vector<Cell> cells;
    for (std::size_t c = 0; c < components.size(); ++c) {
        const auto& g = components[c];
        if (g.count == 0) throw Error(ErrorCode::InvalidArgument, "gaussian component needs a positive count");
        if (!(g.stdev > 0.0) || !std::isfinite(g.stdev))
            throw Error(ErrorCode::InvalidArgument, "gaussian component needs a positive stdev");
        if (!(g.center.x >= 0.0) || !(g.center.y >= 0.0))
            throw Error(ErrorCode::InvalidArgument, "gaussian centre must be non-negative");
        RngStream rng(seed, c);
        for (std::size_t i = 0; i < g.count; ++i) {
            double x, y;
            do {
                x = g.center.x + g.stdev * rng.normal();
                y = g.center.y + g.stdev * rng.normal();
            } while (x < 0.0 || y < 0.0);
            cells.push_back({x, y, g.type});
        }
    }
    return CellCloud(std::move(cells));
}

ToySet synth_toy_set(std::uint64_t seed) {
    ToySet out;
    out.blobs = {
        {{400.0, 400.0}, 50.0, 400, CellType::Neoplastic},
        {{560.0, 400.0}, 50.0, 400, CellType::Inflammatory},
        {{480.0, 540.0}, 50.0, 400, CellType::Other},
    };
    auto blobs = synth_gaussian_cloud(out.blobs, seed);
    std::vector<Cell> cells(blobs.cells().begin(), blobs.cells().end());
    for (std::size_t c = 0; c < out.blobs.size(); ++c) out.component.insert(out.component.end(), out.blobs[c].count, c);

    // Outliers scattered over a wider window, independent of the blobs.
    RngStream rng(seed, out.blobs.size());
    constexpr std::size_t kOutliers = 60;
    for (std::size_t i = 0; i < kOutliers; ++i) {
        const double x = rng.uniform(100.0, 860.0);
        const double y = rng.uniform(100.0, 840.0);
        cells.push_back({x, y, static_cast<CellType>(i % kNumTypes)});
        out.component.push_back(3);
    }
    out.cloud = CellCloud(std::move(cells), "toy-" + std::to_string(seed));
    return out;
}

SyntheticCohort synth_cohort(std::size_t n, std::uint64_t seed) {
    constexpr double kSide = 2048.0;
    constexpr double kBand = 0.03 * kSide;  // margin infiltrate width
    constexpr std::size_t kBedCells = 3000;  // neoplastic + inflammatory in the bed
    constexpr std::size_t kOtherCells = 800;

    SyntheticCohort out;
    out.patients.reserve(n);
    out.cohort.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
        RngStream rng(seed, 2 * p);
        // Log-uniform bed ratio; the band size is drawn independently of it.
        const double rho = std::exp(rng.uniform(std::log(0.25), std::log(6.0)));
        const double infiltrate = rng.uniform(0.0, 4.0);  // band cells per bed cell

        const auto neo = static_cast<std::size_t>(std::llround(kBedCells * rho / (1.0 + rho)));
        const std::size_t inf = kBedCells - neo;
        const auto band = static_cast<std::size_t>(std::llround(infiltrate * kBedCells));

        RngStream pos(seed, 2 * p + 1);
        std::vector<Cell> cells;
        cells.reserve(kBedCells + kOtherCells + band);
        auto bed_cell = [&](CellType t) {
            cells.push_back({pos.uniform(kBand, kSide - kBand), pos.uniform(kBand, kSide - kBand), t});
        };
        for (std::size_t i = 0; i < neo; ++i) bed_cell(CellType::Neoplastic);
        for (std::size_t i = 0; i < inf; ++i) bed_cell(CellType::Inflammatory);
        for (std::size_t i = 0; i < kOtherCells; ++i) bed_cell(CellType::Other);
        // Band cells: uniform over the frame of width kBand, by rejection.
        for (std::size_t i = 0; i < band;) {
            const double x = pos.uniform(0.0, kSide);
            const double y = pos.uniform(0.0, kSide);
            if (x >= kBand && x <= kSide - kBand && y >= kBand && y <= kSide - kBand) continue;
            cells.push_back({x, y, CellType::Inflammatory});
            ++i;
        }

        SyntheticPatient patient;
        patient.core_ratio = static_cast<double>(neo) / static_cast<double>(inf);
        patient.rate = 0.1 * (1.0 + patient.core_ratio);
        const double event_time = rng.exponential(patient.rate);
        const bool censored = rng.uniform() < 0.2;
        const double u = rng.uniform();

        SurvivalRecord rec;
        rec.patient_id = "P" + std::to_string(p);
        rec.score = patient.core_ratio;
        rec.event = !censored;
        rec.time = censored ? std::max(u * event_time, std::numeric_limits<double>::min()) : event_time;
        if (!(rec.time > 0.0)) rec.time = std::numeric_limits<double>::min();

        patient.cloud = CellCloud(std::move(cells), rec.patient_id);
        out.patients.push_back(std::move(patient));
        out.cohort.push_back(std::move(rec));
    }
    return out;
}

}  // namespace cellcloud::clinical
