#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cellcloud::clinical {

struct SurvivalRecord {
    std::string patient_id;
    double score = 0.0;
    double time = 0.0;   // > 0
    bool event = false;  // true: death observed; false: censored
};

using SurvivalCohort = std::vector<SurvivalRecord>;

// CSV `patient_id,score,time,event`, event in {0, 1}.
SurvivalCohort parse_cohort_csv(std::string_view text);
SurvivalCohort read_cohort(const std::filesystem::path& path);
std::string format_cohort_csv(std::span<const SurvivalRecord> cohort);

struct KmPoint {
    double time = 0.0;
    double survival = 1.0;
    std::size_t at_risk = 0;
};

// Product-limit estimate. First point is (0, 1, n); then one point per
// distinct event time, carrying the number at risk just before it.
std::vector<KmPoint> km_curve(std::span<const SurvivalRecord> cohort);
// Right-continuous evaluation of a curve from km_curve.
double survival_at(std::span<const KmPoint> curve, double t);
std::string format_km_csv(std::span<const KmPoint> curve);

struct LogRankResult {
    double statistic = 0.0;  // chi-square, 1 degree of freedom
    double p_value = 1.0;
    double observed_a = 0.0;
    double expected_a = 0.0;
};

// Two-group log-rank test with hypergeometric variance. The statistic is
// computed in a form that is bit-identical under swapping the groups.
LogRankResult logrank(std::span<const SurvivalRecord> a, std::span<const SurvivalRecord> b);

// Harrell's C: over pairs where the earlier time is an event (tied times are
// not comparable), a higher score on the earlier event counts 1, tied scores
// count 0.5. O(n log n).
double c_index(std::span<const SurvivalRecord> cohort);

// Regularised upper incomplete gamma Q(a, x): series for x < a + 1,
// Lentz continued fraction otherwise. Absolute error below 1e-10.
double regularized_gamma_q(double a, double x);
double chi_square_sf(double statistic, double dof);

}  // namespace cellcloud::clinical
