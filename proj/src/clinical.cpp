#include "cellcloud/clinical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cellcloud/error.hpp"
#include "cellcloud/rng.hpp"

namespace cellcloud::clinical {

void validate_alpha(const AlphaWeights& a) {
    for (double v : a.alpha)
        if (!std::isfinite(v) || v < 0.0)
            throw Error(ErrorCode::InvalidArgument, "alpha weights must be finite and non-negative");
}

namespace {

struct Preset {
    const char* name;
    AlphaWeights weights;
};

const Preset kPresets[] = {
    {"hnsc", {{0.33, 0.33, 0.33}}},
    {"kirc", {{0.25, 0.50, 0.25}}},
    {"paad", {{0.0, 0.0, 1.0}}},
    {"hnsc-prose", {{0.25, 0.50, 0.25}}},
    {"kirc-prose", {{0.33, 0.33, 0.33}}},
};

// Returns NaN when the score is undefined for this tally.
double cps_or_nan(std::size_t neo, std::size_t inf, std::size_t total, const AlphaWeights& a) {
    if (total == 0) return std::numeric_limits<double>::quiet_NaN();
    if (a.alpha[2] > 0.0 && inf == 0) return std::numeric_limits<double>::quiet_NaN();
    const double n_total = static_cast<double>(total);
    const double n_neo = static_cast<double>(neo);
    const double n_inf = static_cast<double>(inf);
    double s = a.alpha[0] * (n_neo / n_total) + a.alpha[1] * (n_inf / n_total);
    if (a.alpha[2] > 0.0) s += a.alpha[2] * (n_neo / n_inf);
    return s;
}

}  // namespace

std::optional<AlphaWeights> alpha_preset(std::string_view name) {
    for (const auto& p : kPresets)
        if (name == p.name) return p.weights;
    return std::nullopt;
}

std::vector<std::string> alpha_preset_names() {
    std::vector<std::string> out;
    for (const auto& p : kPresets) out.emplace_back(p.name);
    return out;
}

double cps(const TypeTally& counts, const AlphaWeights& alpha) {
    validate_alpha(alpha);
    const std::size_t neo = counts[type_index(CellType::Neoplastic)];
    const std::size_t inf = counts[type_index(CellType::Inflammatory)];
    const std::size_t total = neo + inf + counts[type_index(CellType::Other)];
    if (total == 0) throw Error(ErrorCode::EmptyCloud, "cps: cloud has no cells");
    if (alpha.alpha[2] > 0.0 && inf == 0)
        throw Error(ErrorCode::DegenerateRatio, "cps: ratio term needs at least one inflammatory cell");
    return cps_or_nan(neo, inf, total, alpha);
}

double cps(const CellCloud& cloud, const AlphaWeights& alpha) { return cps(cloud.counts_by_type(), alpha); }

void validate_boxes(const BoxSpec& b) {
    if (b.n_box < 1) throw Error(ErrorCode::InvalidArgument, "n_box must be >= 1");
    if (!(b.ratio_low > 0.0) || !(b.ratio_low <= b.ratio_high) || !(b.ratio_high <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "box ratios must satisfy 0 < low <= high <= 1");
}

double mcps(const CellCloud& cloud, const AlphaWeights& alpha, const BoxSpec& boxes) {
    validate_alpha(alpha);
    validate_boxes(boxes);
    if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, "mcps: cloud has no cells");

    const auto cells = cloud.cells();
    double min_x = cells[0].x, max_x = cells[0].x, min_y = cells[0].y, max_y = cells[0].y;
    for (const auto& c : cells) {
        min_x = std::min(min_x, c.x);
        max_x = std::max(max_x, c.x);
        min_y = std::min(min_y, c.y);
        max_y = std::max(max_y, c.y);
    }
    const double width = max_x - min_x;
    const double height = max_y - min_y;

    // A full-extent side reuses the exact bounds so that ratio 1 selects the
    // whole cloud regardless of rounding.
    auto side = [&](RngStream& rng, double lo, double extent, double hi, double& a, double& b) {
        const double ratio = rng.uniform(boxes.ratio_low, boxes.ratio_high);
        const double u = rng.uniform();
        const double len = ratio * extent;
        if (ratio >= 1.0 || len >= extent) {
            a = lo;
            b = hi;
            return;
        }
        a = lo + u * (extent - len);
        b = a + len;
    };

    const std::size_t max_failures = 100 * boxes.n_box;
    std::size_t failures = 0;
    double mean = 0.0;
    for (std::size_t i = 0; i < boxes.n_box; ++i) {
        RngStream rng(boxes.seed, i);
        for (;;) {
            double x0, x1, y0, y1;
            side(rng, min_x, width, max_x, x0, x1);
            side(rng, min_y, height, max_y, y0, y1);
            TypeTally t{};
            for (const auto& c : cells)
                if (c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1) ++t[type_index(c.kind)];
            const double s = cps_or_nan(t[0], t[1], t[0] + t[1] + t[2], alpha);
            if (std::isnan(s)) {
                if (++failures >= max_failures)
                    throw Error(ErrorCode::ExhaustedResampling,
                                "mcps: " + std::to_string(failures) + " consecutive boxes had an undefined score");
                continue;
            }
            failures = 0;
            mean += (s - mean) / static_cast<double>(i + 1);
            break;
        }
    }
    return mean;
}

}  // namespace cellcloud::clinical
