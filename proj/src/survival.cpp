#include "cellcloud/survival.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "cellcloud/core.hpp"
#include "cellcloud/error.hpp"

namespace cellcloud::clinical {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size() && std::isfinite(out);
}

void append_number(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

void check_cohort(std::span<const SurvivalRecord> cohort) {
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (!(cohort[i].time > 0.0) || !std::isfinite(cohort[i].time))
            throw Error(ErrorCode::InvalidArgument, "survival time must be finite and positive (record " +
                                                        std::to_string(i) + ")");
        if (!std::isfinite(cohort[i].score))
            throw Error(ErrorCode::InvalidArgument, "score must be finite (record " + std::to_string(i) + ")");
    }
}

}  // namespace

SurvivalCohort parse_cohort_csv(std::string_view text) {
    SurvivalCohort out;
    std::size_t line_no = 0;
    bool header = false;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!header) {
            if (line != "patient_id,score,time,event")
                throw Error(ErrorCode::MalformedRow, "expected header patient_id,score,time,event", line_no);
            header = true;
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            fields.push_back(trim(line.substr(start, comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 4) throw Error(ErrorCode::MalformedRow, "expected 4 fields", line_no);
        SurvivalRecord r;
        r.patient_id = std::string(fields[0]);
        if (!parse_double(fields[1], r.score) || !parse_double(fields[2], r.time) || !(r.time > 0.0))
            throw Error(ErrorCode::MalformedRow, "bad score or time", line_no);
        if (fields[3] == "1")
            r.event = true;
        else if (fields[3] == "0")
            r.event = false;
        else
            throw Error(ErrorCode::MalformedRow, "event must be 0 or 1", line_no);
        out.push_back(std::move(r));
    }
    if (!header) throw Error(ErrorCode::MalformedRow, "empty cohort file", 1);
    return out;
}

SurvivalCohort read_cohort(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return parse_cohort_csv({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

std::string format_cohort_csv(std::span<const SurvivalRecord> cohort) {
    std::string out = "patient_id,score,time,event\n";
    for (const auto& r : cohort) {
        out += r.patient_id;
        out.push_back(',');
        append_number(out, r.score);
        out.push_back(',');
        append_number(out, r.time);
        out += r.event ? ",1\n" : ",0\n";
    }
    return out;
}

std::vector<KmPoint> km_curve(std::span<const SurvivalRecord> cohort) {
    if (cohort.empty()) throw Error(ErrorCode::EmptyCohort, "km_curve: empty cohort");
    check_cohort(cohort);
    std::vector<std::size_t> order(cohort.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return cohort[a].time < cohort[b].time; });

    std::vector<KmPoint> curve{{0.0, 1.0, cohort.size()}};
    double s = 1.0;
    std::size_t at_risk = cohort.size();
    for (std::size_t p = 0; p < order.size();) {
        const double t = cohort[order[p]].time;
        std::size_t deaths = 0, leaving = 0;
        while (p < order.size() && cohort[order[p]].time == t) {
            deaths += cohort[order[p]].event ? 1 : 0;
            ++leaving;
            ++p;
        }
        if (deaths > 0) {
            s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
            curve.push_back({t, s, at_risk});
        }
        at_risk -= leaving;
    }
    return curve;
}

double survival_at(std::span<const KmPoint> curve, double t) {
    double s = 1.0;
    for (const auto& p : curve) {
        if (p.time > t) break;
        s = p.survival;
    }
    return s;
}

std::string format_km_csv(std::span<const KmPoint> curve) {
    std::string out = "time,survival,at_risk\n";
    for (const auto& p : curve) {
        append_number(out, p.time);
        out.push_back(',');
        append_number(out, p.survival);
        out.push_back(',');
        out += std::to_string(p.at_risk);
        out.push_back('\n');
    }
    return out;
}

LogRankResult logrank(std::span<const SurvivalRecord> a, std::span<const SurvivalRecord> b) {
    check_cohort(a);
    check_cohort(b);
    struct Entry {
        double time;
        bool in_a;
        bool event;
    };
    std::vector<Entry> all;
    all.reserve(a.size() + b.size());
    for (const auto& r : a) all.push_back({r.time, true, r.event});
    for (const auto& r : b) all.push_back({r.time, false, r.event});
    std::sort(all.begin(), all.end(), [](const Entry& x, const Entry& y) { return x.time < y.time; });

    double risk_a = static_cast<double>(a.size());
    double risk_b = static_cast<double>(b.size());
    double u_a = 0.0, u_b = 0.0, var = 0.0, obs_a = 0.0, exp_a = 0.0, total_events = 0.0;
    for (std::size_t p = 0; p < all.size();) {
        const double t = all[p].time;
        double d_a = 0, d_b = 0, left_a = 0, left_b = 0;
        while (p < all.size() && all[p].time == t) {
            const auto& e = all[p];
            (e.in_a ? left_a : left_b) += 1;
            if (e.event) (e.in_a ? d_a : d_b) += 1;
            ++p;
        }
        const double d = d_a + d_b;
        if (d > 0) {
            const double n = risk_a + risk_b;
            u_a += d_a - d * risk_a / n;
            u_b += d_b - d * risk_b / n;
            if (n > 1) var += d * (risk_a * risk_b) * (n - d) / (n * n * (n - 1));
            obs_a += d_a;
            exp_a += d * risk_a / n;
            total_events += d;
        }
        risk_a -= left_a;
        risk_b -= left_b;
    }
    if (total_events == 0) throw Error(ErrorCode::NoEvents, "logrank: no events in either group");

    LogRankResult res;
    res.observed_a = obs_a;
    res.expected_a = exp_a;
    // u_a == -u_b in exact arithmetic; the half-difference makes the
    // statistic exactly antisymmetric under swapping the groups.
    const double u = 0.5 * (u_a - u_b);
    if (var > 0.0) {
        res.statistic = u * u / var;
        res.p_value = chi_square_sf(res.statistic, 1.0);
    }
    return res;
}

double c_index(std::span<const SurvivalRecord> cohort) {
    check_cohort(cohort);
    const std::size_t n = cohort.size();
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = cohort[i].score;
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    auto rank_of = [&](double s) {
        return static_cast<std::size_t>(std::lower_bound(scores.begin(), scores.end(), s) - scores.begin());
    };

    // Fenwick tree over score ranks of subjects with strictly later times.
    std::vector<std::uint64_t> tree(scores.size() + 1, 0);
    auto add = [&](std::size_t r) {
        for (++r; r < tree.size(); r += r & (~r + 1)) ++tree[r];
    };
    auto prefix = [&](std::size_t r) {  // count with rank < r
        std::uint64_t s = 0;
        for (; r > 0; r -= r & (~r + 1)) s += tree[r];
        return s;
    };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return cohort[x].time > cohort[y].time; });

    std::uint64_t concordant = 0, tied = 0, comparable = 0, inserted = 0;
    for (std::size_t p = 0; p < n;) {
        std::size_t q = p;
        while (q < n && cohort[order[q]].time == cohort[order[p]].time) ++q;
        for (std::size_t s = p; s < q; ++s) {
            const auto& r = cohort[order[s]];
            if (!r.event) continue;
            const auto rank = rank_of(r.score);
            const auto lower = prefix(rank);
            const auto lower_eq = prefix(rank + 1);
            comparable += inserted;
            concordant += lower;
            tied += lower_eq - lower;
        }
        for (std::size_t s = p; s < q; ++s) {
            add(rank_of(cohort[order[s]].score));
            ++inserted;
        }
        p = q;
    }
    if (comparable == 0) throw Error(ErrorCode::NoComparablePairs, "c_index: no comparable pairs");
    return (2.0 * static_cast<double>(concordant) + static_cast<double>(tied)) / (2.0 * static_cast<double>(comparable));
}

double regularized_gamma_q(double a, double x) {
    if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "regularized_gamma_q: a must be positive");
    if (x <= 0.0) return 1.0;
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);
    if (x < a + 1.0) {
        // P(a, x) by series; Q = 1 - P.
        double ap = a, del = 1.0 / a, sum = del;
        for (int n = 0; n < kMaxIter; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * kEps) break;
        }
        return 1.0 - sum * std::exp(log_prefactor);
    }
    // Modified Lentz continued fraction for Q directly.
    constexpr double kTiny = std::numeric_limits<double>::min() / kEps;
    double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return std::exp(log_prefactor) * h;
}

double chi_square_sf(double statistic, double dof) {
    if (!(dof > 0.0)) throw Error(ErrorCode::InvalidArgument, "chi_square_sf: dof must be positive");
    if (!(statistic > 0.0)) return 1.0;
    return regularized_gamma_q(0.5 * dof, 0.5 * statistic);
}

}  // namespace cellcloud::clinical
