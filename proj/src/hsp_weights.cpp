#include <cmath>
#include <limits>

#include "byte_io.hpp"
#include "cellcloud/error.hpp"
#include "cellcloud/hsp.hpp"
#include "cellcloud/rng.hpp"

namespace cellcloud::hsp {

void validate_config(const HspConfig& c) {
    auto fail = [](const char* what) { throw Error(ErrorCode::InvalidArgument, std::string("hsp config: ") + what); };
    if (c.levels < 1) fail("levels must be >= 1");
    if (c.initial_anchors < 1) fail("initial_anchors must be >= 1");
    if (c.n_basic < 1) fail("n_basic must be >= 1");
    if (c.encode_dim < 1) fail("encode_dim must be >= 1");
    if (c.dim_multiplier < 1) fail("dim_multiplier must be >= 1");
    if (std::isnan(c.lambda_sim)) fail("lambda_sim must not be NaN");
    std::size_t divisor = 1;
    for (std::size_t l = 1; l < c.levels; ++l) {
        if (divisor > c.initial_anchors / c.n_basic) fail("initial_anchors must be divisible by n_basic^(levels-1)");
        divisor *= c.n_basic;
    }
    if (c.initial_anchors % divisor != 0) fail("initial_anchors must be divisible by n_basic^(levels-1)");
    double width = static_cast<double>(c.encode_dim);
    for (std::size_t l = 0; l < c.levels; ++l) width *= static_cast<double>(c.dim_multiplier);
    if (width > 1 << 20) fail("feature width grows beyond 2^20");
}

std::size_t level_dim(const HspConfig& c, std::size_t level) {
    std::size_t d = c.encode_dim;
    for (std::size_t l = 0; l < level; ++l) d *= c.dim_multiplier;
    return d;
}

std::size_t output_dim(const HspConfig& c) { return level_dim(c, c.levels); }

std::size_t scheduled_anchors(const HspConfig& c, std::size_t level) {
    std::size_t n = c.initial_anchors;
    for (std::size_t l = 0; l < level; ++l) n /= c.n_basic;
    return n;
}

void Affine::apply(std::span<const float> x, std::span<float> y) const {
    for (std::size_t o = 0; o < out; ++o) {
        const float* w = weight.data() + o * in;
        float acc = bias[o];
        for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
        y[o] = acc;
    }
}

namespace {

Affine shaped(std::size_t in, std::size_t out) {
    Affine a;
    a.in = in;
    a.out = out;
    a.weight.assign(in * out, 0.0f);
    a.bias.assign(out, 0.0f);
    return a;
}

HspWeights skeleton(const HspConfig& config, std::size_t input_dim) {
    validate_config(config);
    if (input_dim < 1) throw Error(ErrorCode::InvalidArgument, "input_dim must be >= 1");
    HspWeights w;
    w.config = config;
    w.input_dim = input_dim;
    w.encoder = shaped(input_dim, config.encode_dim);
    for (std::size_t l = 0; l < config.levels; ++l) {
        const std::size_t d = level_dim(config, l);
        LevelWeights lw;
        for (std::size_t b = 0; b < config.updates_per_level; ++b) {
            lw.blocks.push_back({shaped(d, d), shaped(d, d), shaped(d, d), shaped(2, d), shaped(d, d), shaped(d, d)});
        }
        lw.aggregate = shaped(d, d * config.dim_multiplier);
        w.levels.push_back(std::move(lw));
    }
    return w;
}

template <class W, class Fn>
void visit_affines(W& w, Fn&& fn) {
    fn(w.encoder);
    for (auto& level : w.levels) {
        for (auto& b : level.blocks) {
            fn(b.query);
            fn(b.key);
            fn(b.value);
            fn(b.position);
            fn(b.att_hidden);
            fn(b.att_out);
        }
        fn(level.aggregate);
    }
}

}  // namespace

std::vector<const Affine*> HspWeights::affines() const {
    std::vector<const Affine*> out;
    visit_affines(*this, [&](const Affine& a) { out.push_back(&a); });
    return out;
}

HspWeights init_weights(const HspConfig& config, std::size_t input_dim, std::uint64_t seed) {
    auto w = skeleton(config, input_dim);
    std::uint64_t ordinal = 0;
    visit_affines(w, [&](Affine& a) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(a.in));
        std::uint64_t e = 0;
        for (auto& v : a.weight) v = static_cast<float>((2.0 * to_unit(counter_draw(seed, 2 * ordinal, e++)) - 1.0) * bound);
        e = 0;
        for (auto& v : a.bias) v = static_cast<float>((2.0 * to_unit(counter_draw(seed, 2 * ordinal + 1, e++)) - 1.0) * bound);
        ++ordinal;
    });
    return w;
}

std::vector<std::uint8_t> encode_weights(const HspWeights& w) {
    detail::ByteWriter out;
    out.magic("CCWT");
    out.u32(1);
    const auto& c = w.config;
    out.u32(static_cast<std::uint32_t>(c.levels));
    out.u32(static_cast<std::uint32_t>(c.initial_anchors));
    out.u32(static_cast<std::uint32_t>(c.n_basic));
    out.f64(c.lambda_sim);
    out.u32(static_cast<std::uint32_t>(c.updates_per_level));
    out.u32(static_cast<std::uint32_t>(c.encode_dim));
    out.u32(static_cast<std::uint32_t>(c.dim_multiplier));
    out.u32(static_cast<std::uint32_t>(w.input_dim));
    for (const Affine* a : w.affines()) {
        out.u32(2);
        out.u32(static_cast<std::uint32_t>(a->out));
        out.u32(static_cast<std::uint32_t>(a->in));
        for (float v : a->weight) out.f32(v);
        out.u32(1);
        out.u32(static_cast<std::uint32_t>(a->out));
        for (float v : a->bias) out.f32(v);
    }
    return out.take();
}

HspWeights decode_weights(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "CCWT");
    r.expect_magic("CCWT");
    if (auto v = r.u32(); v != 1) throw Error(ErrorCode::BadFormat, "CCWT: unsupported version " + std::to_string(v));
    HspConfig c;
    c.levels = r.u32();
    c.initial_anchors = r.u32();
    c.n_basic = r.u32();
    c.lambda_sim = r.f64();
    c.updates_per_level = r.u32();
    c.encode_dim = r.u32();
    c.dim_multiplier = r.u32();
    const std::size_t input_dim = r.u32();
    HspWeights w;
    try {
        w = skeleton(c, input_dim);
    } catch (const Error& e) {
        throw Error(ErrorCode::BadFormat, std::string("CCWT: ") + e.what());
    }

    auto read_tensor = [&](std::vector<float>& data, std::initializer_list<std::size_t> dims) {
        if (r.u32() != dims.size()) throw Error(ErrorCode::BadFormat, "CCWT: unexpected tensor rank");
        for (auto d : dims)
            if (r.u32() != d) throw Error(ErrorCode::BadFormat, "CCWT: tensor shape disagrees with config");
        r.need(data.size() * 4);
        for (auto& v : data) {
            v = r.f32();
            if (!std::isfinite(v)) throw Error(ErrorCode::BadFormat, "CCWT: non-finite weight");
        }
    };
    visit_affines(w, [&](Affine& a) {
        read_tensor(a.weight, {a.out, a.in});
        read_tensor(a.bias, {a.out});
    });
    r.expect_end();
    return w;
}

void write_weights(const HspWeights& weights, const std::filesystem::path& path) {
    write_file_bytes(path, encode_weights(weights));
}

HspWeights read_weights(const std::filesystem::path& path) { return decode_weights(read_file_bytes(path)); }

}  // namespace cellcloud::hsp
