#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cellcloud/core.hpp"

namespace cellcloud::hsp {

struct HspConfig {
    std::size_t levels = 3;
    std::size_t initial_anchors = 2048;
    std::size_t n_basic = 16;
    double lambda_sim = 0.5;
    std::size_t updates_per_level = 2;
    std::size_t encode_dim = 64;
    std::size_t dim_multiplier = 2;

    friend bool operator==(const HspConfig&, const HspConfig&) = default;
};

// Throws InvalidArgument; requires initial_anchors divisible by n_basic^(levels-1).
void validate_config(const HspConfig& config);

// Feature width entering level `level` (0-based).
std::size_t level_dim(const HspConfig& config, std::size_t level);
std::size_t output_dim(const HspConfig& config);
// Configured anchor count of level `level` before clamping to the point count.
std::size_t scheduled_anchors(const HspConfig& config, std::size_t level);

// y = W x + b with W stored out × in, row-major.
struct Affine {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<float> weight;
    std::vector<float> bias;

    void apply(std::span<const float> x, std::span<float> y) const;
    friend bool operator==(const Affine&, const Affine&) = default;
};

struct AttentionBlock {
    Affine query;       // D -> D
    Affine key;         // D -> D
    Affine value;       // D -> D
    Affine position;    // 2 -> D, lifts relative coordinates
    Affine att_hidden;  // D -> D, followed by ReLU
    Affine att_out;     // D -> D

    friend bool operator==(const AttentionBlock&, const AttentionBlock&) = default;
};

struct LevelWeights {
    std::vector<AttentionBlock> blocks;
    Affine aggregate;  // D -> D * dim_multiplier

    friend bool operator==(const LevelWeights&, const LevelWeights&) = default;
};

struct HspWeights {
    HspConfig config;
    std::size_t input_dim = 0;
    Affine encoder;  // input_dim -> encode_dim
    std::vector<LevelWeights> levels;

    // Every tensor in serialisation order: encoder, then per level each
    // block's (query, key, value, position, att_hidden, att_out), then the
    // level's aggregate; weight before bias for every affine map.
    std::vector<const Affine*> affines() const;

    friend bool operator==(const HspWeights&, const HspWeights&) = default;
};

// Entries uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn from a
// counter-based generator keyed by (seed, tensor ordinal, element index).
HspWeights init_weights(const HspConfig& config, std::size_t input_dim, std::uint64_t seed);

// "CCWT", u32 version = 1, config (u32 levels, u32 initial_anchors,
// u32 n_basic, f64 lambda_sim, u32 updates_per_level, u32 encode_dim,
// u32 dim_multiplier, u32 input_dim), then each tensor of affines() as
// u32 rank, u32 dims[rank], f32 data. Little-endian.
std::vector<std::uint8_t> encode_weights(const HspWeights& weights);
HspWeights decode_weights(std::span<const std::uint8_t> bytes);
void write_weights(const HspWeights& weights, const std::filesystem::path& path);
HspWeights read_weights(const std::filesystem::path& path);

// One group: members are ordered by distance to the anchor.
struct GroupView {
    Point2 anchor;
    std::vector<std::size_t> members;
    std::vector<Point2> coords;
    FeatureMatrix features;
    std::vector<float> f_ref;  // mean member feature, pre-filter
    std::vector<char> mask;    // retained members
};

GroupView make_group(Point2 anchor, std::span<const std::size_t> members, std::span<const Point2> coords,
                     const FeatureMatrix& features);

// exp(-|c_i - c_ref| / mean_i |c_i - c_ref|) * <f_i, f_ref> / dim. Distances
// are in units of the group's mean member-to-anchor distance (raw when that
// mean is 0).
std::vector<double> similarity_scores(const GroupView& group);

// mask_i = score_i > lambda_sim; when nothing survives, the member with the
// smallest anchor distance (first on ties) is kept.
std::vector<char> filter_mask(std::span<const double> scores, double lambda_sim,
                              std::span<const double> anchor_distances);
std::vector<char> filter_mask(const GroupView& group, std::span<const double> scores, double lambda_sim);

struct AttentionStats {
    double max_weight_sum_error = 0.0;  // max |sum_j delta_ij - 1| over (i, channel)
    std::size_t rows_checked = 0;
};

// One vector-attention update over the retained members. Masked members keep
// their input feature and are invisible to retained ones.
FeatureMatrix vector_attention(const GroupView& group, const AttentionBlock& block, AttentionStats* stats = nullptr);

struct ForwardTrace {
    std::vector<std::size_t> points_per_level;
    std::vector<std::size_t> anchors_per_level;
    std::vector<std::size_t> group_size_per_level;
    std::vector<double> retained_fraction_per_level;
    AttentionStats attention;
    std::size_t pooled_rows = 0;
};

// Full hierarchical pass; returns f_cell^WSI of width output_dim(config).
// Shape fields of `config` must agree with `weights.config`; lambda_sim and
// the anchor schedule are taken from `config`.
std::vector<float> hsp_forward(std::span<const Point2> coords, const FeatureMatrix& features,
                               std::span<const CellType> types, const HspConfig& config, const HspWeights& weights,
                               ForwardTrace* trace = nullptr, unsigned threads = 1);

std::vector<float> combine_appearance(std::span<const float> f_cell_wsi, std::span<const float> f_app, double beta);

}  // namespace cellcloud::hsp
