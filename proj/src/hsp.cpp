#include "cellcloud/hsp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cellcloud/error.hpp"
#include "cellcloud/parallel.hpp"
#include "cellcloud/spatial.hpp"

namespace cellcloud::hsp {

namespace {

// Weights and features are stored as float; arithmetic runs in double so
// that outputs carrying pixel-scale position terms keep float accuracy.
using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVecF = Eigen::Matrix<float, 1, Eigen::Dynamic>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

Mat weight_of(const Affine& a) {
    return Eigen::Map<const MatF>(a.weight.data(), static_cast<Eigen::Index>(a.out), static_cast<Eigen::Index>(a.in))
        .cast<double>();
}

RowVec bias_of(const Affine& a) {
    return Eigen::Map<const RowVecF>(a.bias.data(), static_cast<Eigen::Index>(a.out)).cast<double>();
}

Mat rows_of(const FeatureMatrix& f, std::span<const std::size_t> rows) {
    Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(f.dim()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = f.row(rows[i]);
        for (std::size_t c = 0; c < src.size(); ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = src[c];
    }
    return m;
}

void store_row(const RowVec& v, std::span<float> dst) {
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = static_cast<float>(v(static_cast<Eigen::Index>(c)));
}

Mat apply_affine(const Mat& x, const Affine& a) {
    Mat y = x * weight_of(a).transpose();
    y.rowwise() += bias_of(a);
    return y;
}

std::vector<double> distances_to(Point2 anchor, std::span<const Point2> coords) {
    std::vector<double> d(coords.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::hypot(coords[i].x - anchor.x, coords[i].y - anchor.y);
    return d;
}

std::vector<std::size_t> retained(std::span<const char> mask) {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) r.push_back(i);
    return r;
}

Mat to_mat(const FeatureMatrix& f) {
    std::vector<std::size_t> all(f.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return rows_of(f, all);
}

FeatureMatrix to_features(const Mat& m) {
    FeatureMatrix f(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) store_row(m.row(i), f.row(static_cast<std::size_t>(i)));
    return f;
}

// Mean member feature, stored as float like GroupView::f_ref.
std::vector<float> mean_feature(const Mat& f) {
    std::vector<float> ref(static_cast<std::size_t>(f.cols()), 0.0f);
    if (f.rows() == 0) return ref;
    const RowVec mean = f.colwise().sum() / static_cast<double>(f.rows());
    for (std::size_t c = 0; c < ref.size(); ++c) ref[c] = static_cast<float>(mean(static_cast<Eigen::Index>(c)));
    return ref;
}

std::vector<double> scores_of(const Mat& f, std::span<const float> f_ref, std::span<const double> dist) {
    const std::size_t m = dist.size();
    double mean = 0.0;
    for (double d : dist) mean += d;
    mean = m == 0 ? 0.0 : mean / static_cast<double>(m);
    const double unit = mean > 0.0 ? mean : 1.0;
    const auto dim = static_cast<double>(f.cols());

    std::vector<double> s(m);
    for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (Eigen::Index c = 0; c < f.cols(); ++c) dot += f(static_cast<Eigen::Index>(i), c) * f_ref[static_cast<std::size_t>(c)];
        s[i] = std::exp(-dist[i] / unit) * dot / dim;
    }
    return s;
}

// One attention update of every retained row of `f`; other rows pass through.
Mat attend(const Mat& f_all, std::span<const Point2> coords, Point2 anchor, std::span<const std::size_t> keep,
           const AttentionBlock& block, AttentionStats* stats) {
    const auto D = f_all.cols();
    const auto r = static_cast<Eigen::Index>(keep.size());

    Mat f(r, D);
    Mat rel(r, 2);
    for (Eigen::Index i = 0; i < r; ++i) {
        const auto k = keep[static_cast<std::size_t>(i)];
        f.row(i) = f_all.row(static_cast<Eigen::Index>(k));
        rel(i, 0) = coords[k].x - anchor.x;
        rel(i, 1) = coords[k].y - anchor.y;
    }

    // position(c_i - c_j) = Pc_i - Pc_j + b_pos, with Pc = W_pos * c.
    const Mat pc = rel * weight_of(block.position).transpose();
    const RowVec pb = bias_of(block.position);
    const Mat a = apply_affine(f, block.query) + pc;
    const Mat b = apply_affine(f, block.key) + pc;
    const Mat v = apply_affine(f, block.value) - pc;

    // The first perceptron layer is affine, so it distributes over the
    // pairwise difference: W1 (a_i - b_j + pb) + b1.
    const Mat w1 = weight_of(block.att_hidden);
    const RowVec shift = pb * w1.transpose() + bias_of(block.att_hidden);
    Mat u = a * w1.transpose();
    u.rowwise() += shift;
    const Mat bw = b * w1.transpose();

    Mat hidden(r * r, D);
    for (Eigen::Index i = 0; i < r; ++i) hidden.middleRows(i * r, r) = ((-bw).rowwise() + u.row(i)).cwiseMax(0.0);
    Mat logits = hidden * weight_of(block.att_out).transpose();
    logits.rowwise() += bias_of(block.att_out);

    Mat out = f_all;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < r; ++i) {
        auto w = logits.middleRows(i * r, r);
        const RowVec peak = w.colwise().maxCoeff();
        w.rowwise() -= peak;
        w = w.array().exp().matrix();
        const RowVec total = w.colwise().sum();
        w.array().rowwise() /= total.array();
        if (stats) {
            const RowVec check = w.colwise().sum();
            for (Eigen::Index c = 0; c < D; ++c) worst = std::max(worst, std::abs(check(c) - 1.0));
        }
        out.row(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(i)])) =
            (w.array() * v.array()).colwise().sum().matrix() + pc.row(i) + pb;
    }
    if (stats) {
        stats->max_weight_sum_error = std::max(stats->max_weight_sum_error, worst);
        stats->rows_checked += static_cast<std::size_t>(r);
    }
    return out;
}

void check_shapes(const HspConfig& config, const HspWeights& w, std::size_t input_dim) {
    const auto& wc = w.config;
    if (wc.levels != config.levels || wc.updates_per_level != config.updates_per_level ||
        wc.encode_dim != config.encode_dim || wc.dim_multiplier != config.dim_multiplier)
        throw Error(ErrorCode::DimMismatch, "hsp: weights were built for a different layer layout");
    if (w.input_dim != input_dim)
        throw Error(ErrorCode::DimMismatch, "hsp: weights expect input width " + std::to_string(w.input_dim) +
                                                " but features have " + std::to_string(input_dim));
}

}  // namespace

GroupView make_group(Point2 anchor, std::span<const std::size_t> members, std::span<const Point2> coords,
                     const FeatureMatrix& features) {
    GroupView g;
    g.anchor = anchor;
    g.members.assign(members.begin(), members.end());
    g.coords.reserve(members.size());
    for (auto m : members) g.coords.push_back(coords[m]);
    const Mat f = rows_of(features, members);
    g.features = to_features(f);
    g.f_ref = mean_feature(f);
    g.mask.assign(members.size(), 1);
    return g;
}

std::vector<double> similarity_scores(const GroupView& group) {
    return scores_of(to_mat(group.features), group.f_ref, distances_to(group.anchor, group.coords));
}

std::vector<char> filter_mask(std::span<const double> scores, double lambda_sim, std::span<const double> anchor_distances) {
    if (anchor_distances.size() != scores.size())
        throw Error(ErrorCode::DimMismatch, "filter_mask: scores and distances differ in length");
    std::vector<char> mask(scores.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        mask[i] = scores[i] > lambda_sim ? 1 : 0;
        any = any || mask[i];
    }
    if (!any && !scores.empty()) {
        std::size_t nearest = 0;
        for (std::size_t i = 1; i < anchor_distances.size(); ++i)
            if (anchor_distances[i] < anchor_distances[nearest]) nearest = i;
        mask[nearest] = 1;
    }
    return mask;
}

std::vector<char> filter_mask(const GroupView& group, std::span<const double> scores, double lambda_sim) {
    return filter_mask(scores, lambda_sim, distances_to(group.anchor, group.coords));
}

FeatureMatrix vector_attention(const GroupView& group, const AttentionBlock& block, AttentionStats* stats) {
    const auto keep = retained(group.mask);
    if (keep.empty()) throw Error(ErrorCode::EmptyGroup, "vector_attention: no retained members");
    if (block.query.in != group.features.dim())
        throw Error(ErrorCode::DimMismatch, "vector_attention: block width disagrees with features");
    return to_features(attend(to_mat(group.features), group.coords, group.anchor, keep, block, stats));
}

std::vector<float> hsp_forward(std::span<const Point2> coords, const FeatureMatrix& features,
                               std::span<const CellType> types, const HspConfig& config, const HspWeights& weights,
                               ForwardTrace* trace, unsigned threads) {
    validate_config(config);
    check_shapes(config, weights, features.dim());
    if (features.rows() != coords.size()) throw Error(ErrorCode::DimMismatch, "hsp: feature rows != coordinates");
    if (!types.empty() && types.size() != coords.size()) throw Error(ErrorCode::DimMismatch, "hsp: types != coordinates");
    if (coords.size() < 2) throw Error(ErrorCode::TooFewPoints, "hsp: need at least 2 points");
    threads = resolve_threads(threads);

    // Level features stay in double until the final pooling.
    Mat feats = apply_affine(to_mat(features), weights.encoder);
    std::vector<Point2> points(coords.begin(), coords.end());
    if (trace) *trace = ForwardTrace{};

    for (std::size_t level = 0; level < config.levels; ++level) {
        const std::size_t np = points.size();
        const std::size_t nk = std::min(scheduled_anchors(config, level), np);
        const std::size_t k = std::min(np, std::max<std::size_t>(1, 2 * np / nk));

        // Cell types only exist at the first level.
        const bool semantic = level == 0 && !types.empty();
        const double gamma = semantic ? spatial::mean_nn_distance(points) : 0.0;
        const auto anchor_idx = spatial::fps(points, semantic ? types : std::span<const CellType>{}, nk, gamma, threads);
        std::vector<Point2> anchors(nk);
        for (std::size_t a = 0; a < nk; ++a) anchors[a] = points[anchor_idx[a]];
        const auto groups = spatial::knn_group(anchors, points, k, threads);

        const auto& lw = weights.levels[level];
        Mat next(static_cast<Eigen::Index>(nk), static_cast<Eigen::Index>(lw.aggregate.out));
        std::vector<AttentionStats> group_stats(nk);
        std::vector<std::size_t> kept(nk, 0);

        parallel_for(nk, threads, [&](std::size_t begin, std::size_t end) {
            std::vector<Point2> member_coords(k);
            for (std::size_t g = begin; g < end; ++g) {
                const auto members = groups[g];
                Mat f(static_cast<Eigen::Index>(k), feats.cols());
                for (std::size_t i = 0; i < k; ++i) {
                    f.row(static_cast<Eigen::Index>(i)) = feats.row(static_cast<Eigen::Index>(members[i]));
                    member_coords[i] = points[members[i]];
                }
                const auto dist = distances_to(anchors[g], member_coords);
                const auto mask = filter_mask(scores_of(f, mean_feature(f), dist), config.lambda_sim, dist);
                const auto keep = retained(mask);
                for (const auto& block : lw.blocks)
                    f = attend(f, member_coords, anchors[g], keep, block, trace ? &group_stats[g] : nullptr);

                kept[g] = keep.size();
                Mat sel(static_cast<Eigen::Index>(keep.size()), f.cols());
                for (std::size_t i = 0; i < keep.size(); ++i)
                    sel.row(static_cast<Eigen::Index>(i)) = f.row(static_cast<Eigen::Index>(keep[i]));
                next.row(static_cast<Eigen::Index>(g)) = apply_affine(sel, lw.aggregate).colwise().mean();
            }
        });

        if (trace) {
            trace->points_per_level.push_back(np);
            trace->anchors_per_level.push_back(nk);
            trace->group_size_per_level.push_back(k);
            const auto total_kept = std::accumulate(kept.begin(), kept.end(), std::size_t{0});
            trace->retained_fraction_per_level.push_back(static_cast<double>(total_kept) /
                                                         static_cast<double>(nk * k));
            for (const auto& s : group_stats) {
                trace->attention.max_weight_sum_error =
                    std::max(trace->attention.max_weight_sum_error, s.max_weight_sum_error);
                trace->attention.rows_checked += s.rows_checked;
            }
        }
        points = std::move(anchors);
        feats = std::move(next);
    }

    const RowVec peak = feats.colwise().maxCoeff();
    if (trace) trace->pooled_rows = static_cast<std::size_t>(feats.rows());
    std::vector<float> out(static_cast<std::size_t>(peak.size()));
    store_row(peak, out);
    return out;
}

std::vector<float> combine_appearance(std::span<const float> f_cell_wsi, std::span<const float> f_app, double beta) {
    if (f_cell_wsi.size() != f_app.size())
        throw Error(ErrorCode::DimMismatch, "combine_appearance: descriptor widths differ (" +
                                                std::to_string(f_cell_wsi.size()) + " vs " +
                                                std::to_string(f_app.size()) + ")");
    std::vector<float> out(f_cell_wsi.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(f_cell_wsi[i]) + beta * static_cast<double>(f_app[i]));
    return out;
}

}  // namespace cellcloud::hsp
