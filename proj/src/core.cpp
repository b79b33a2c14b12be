#include "cellcloud/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <tuple>

#include "byte_io.hpp"
#include "cellcloud/error.hpp"

namespace cellcloud {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::UnknownType: return "UnknownType";
        case ErrorCode::DuplicateCell: return "DuplicateCell";
        case ErrorCode::InvalidPatch: return "InvalidPatch";
        case ErrorCode::OverlappingPatches: return "OverlappingPatches";
        case ErrorCode::TooFewCells: return "TooFewCells";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::EmptyGroup: return "EmptyGroup";
        case ErrorCode::EmptyCloud: return "EmptyCloud";
        case ErrorCode::DegenerateRatio: return "DegenerateRatio";
        case ErrorCode::ExhaustedResampling: return "ExhaustedResampling";
        case ErrorCode::EmptyCohort: return "EmptyCohort";
        case ErrorCode::NoEvents: return "NoEvents";
        case ErrorCode::NoComparablePairs: return "NoComparablePairs";
        case ErrorCode::BadFormat: return "BadFormat";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::optional<std::size_t> line)
    : std::runtime_error(message), code_(code), line_(line) {}

std::string_view type_name(CellType t) noexcept {
    switch (t) {
        case CellType::Neoplastic: return "neoplastic";
        case CellType::Inflammatory: return "inflammatory";
        case CellType::Other: return "other";
    }
    return "other";
}

std::optional<CellType> parse_type(std::string_view token) noexcept {
    auto iequals = [&](std::string_view ref) {
        return token.size() == ref.size() &&
               std::equal(token.begin(), token.end(), ref.begin(), [](char a, char b) {
                   return static_cast<char>(a | 0x20) == b;
               });
    };
    if (iequals("neoplastic")) return CellType::Neoplastic;
    if (iequals("inflammatory")) return CellType::Inflammatory;
    if (iequals("other")) return CellType::Other;
    return std::nullopt;
}

std::optional<CellType> type_from_tag(std::uint8_t tag) noexcept {
    if (tag >= kNumTypes) return std::nullopt;
    return static_cast<CellType>(tag);
}

TypeTally tally_types(std::span<const Cell> cells) noexcept {
    TypeTally tally{};
    for (const auto& c : cells) ++tally[type_index(c.kind)];
    return tally;
}

CellCloud::CellCloud(std::vector<Cell> cells, std::string slide_id)
    : cells_(std::move(cells)), counts_(tally_types(cells_)), slide_id_(std::move(slide_id)) {}

std::vector<Point2> CellCloud::coordinates() const {
    std::vector<Point2> out;
    out.reserve(cells_.size());
    for (const auto& c : cells_) out.push_back({c.x, c.y});
    return out;
}

std::vector<CellType> CellCloud::types() const {
    std::vector<CellType> out;
    out.reserve(cells_.size());
    for (const auto& c : cells_) out.push_back(c.kind);
    return out;
}

std::vector<std::string> validate_cloud(const CellCloud& cloud) {
    std::vector<std::string> out;
    const auto cells = cloud.cells();

    std::vector<std::size_t> finite;
    finite.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        if (!std::isfinite(c.x) || !std::isfinite(c.y)) {
            out.push_back("non-finite coordinate at index " + std::to_string(i));
            continue;
        }
        if (c.x < 0.0 || c.y < 0.0) out.push_back("negative coordinate at index " + std::to_string(i));
        finite.push_back(i);
    }

    // Sort by (x, y, kind, index); every non-first member of an equal run is a duplicate.
    std::sort(finite.begin(), finite.end(), [&](std::size_t a, std::size_t b) {
        const auto& ca = cells[a];
        const auto& cb = cells[b];
        return std::tie(ca.x, ca.y, ca.kind, a) < std::tie(cb.x, cb.y, cb.kind, b);
    });
    std::vector<std::size_t> dups;
    for (std::size_t k = 1; k < finite.size(); ++k) {
        if (cells[finite[k]] == cells[finite[k - 1]]) dups.push_back(finite[k]);
    }
    std::sort(dups.begin(), dups.end());
    for (auto i : dups) out.push_back("duplicate cell at index " + std::to_string(i));

    if (tally_types(cells) != cloud.counts_by_type()) out.push_back("counts_by_type does not match cells");
    return out;
}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim, 0.0f) {}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t dim, std::vector<float> data)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
    if (data_.size() != rows_ * dim_)
        throw Error(ErrorCode::DimMismatch, "feature data length does not equal rows * dim");
}

bool FeatureMatrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

namespace {

void append_number(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

}  // namespace

std::string format_cloud_csv(const CellCloud& cloud) {
    std::string out = "x,y,type\n";
    out.reserve(out.size() + cloud.size() * 24);
    for (const auto& c : cloud.cells()) {
        append_number(out, c.x);
        out.push_back(',');
        append_number(out, c.y);
        out.push_back(',');
        out.append(type_name(c.kind));
        out.push_back('\n');
    }
    return out;
}

void write_cloud_csv(const CellCloud& cloud, const std::filesystem::path& path) {
    const auto text = format_cloud_csv(cloud);
    write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<std::uint8_t> encode_cloud_binary(const CellCloud& cloud) {
    detail::ByteWriter w;
    w.bytes().reserve(16 + cloud.size() * 17);
    w.magic("CC5B");
    w.u32(1);
    w.u64(cloud.size());
    for (const auto& c : cloud.cells()) {
        w.f64(c.x);
        w.f64(c.y);
        w.u8(static_cast<std::uint8_t>(c.kind));
    }
    return w.take();
}

CellCloud decode_cloud_binary(std::span<const std::uint8_t> bytes, std::string slide_id) {
    detail::ByteReader r(bytes, "CC5B");
    r.expect_magic("CC5B");
    if (auto v = r.u32(); v != 1) throw Error(ErrorCode::BadFormat, "CC5B: unsupported version " + std::to_string(v));
    const auto n = r.u64();
    if (n > r.remaining() / 17) throw Error(ErrorCode::BadFormat, "CC5B: truncated");
    std::vector<Cell> cells;
    cells.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Cell c;
        c.x = r.f64();
        c.y = r.f64();
        auto kind = type_from_tag(r.u8());
        if (!kind) throw Error(ErrorCode::BadFormat, "CC5B: bad type tag at record " + std::to_string(i));
        c.kind = *kind;
        cells.push_back(c);
    }
    r.expect_end();
    return CellCloud(std::move(cells), std::move(slide_id));
}

void write_cloud_binary(const CellCloud& cloud, const std::filesystem::path& path) {
    write_file_bytes(path, encode_cloud_binary(cloud));
}

CellCloud read_cloud_binary(const std::filesystem::path& path) {
    return decode_cloud_binary(read_file_bytes(path), path.stem().string());
}

std::vector<std::uint8_t> encode_features(const FeatureMatrix& features) {
    detail::ByteWriter w;
    w.bytes().reserve(20 + features.data().size() * 4);
    w.magic("CCEM");
    w.u32(1);
    w.u64(features.rows());
    w.u32(static_cast<std::uint32_t>(features.dim()));
    for (float v : features.data()) w.f32(v);
    return w.take();
}

FeatureMatrix decode_features(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "CCEM");
    r.expect_magic("CCEM");
    if (auto v = r.u32(); v != 1) throw Error(ErrorCode::BadFormat, "CCEM: unsupported version " + std::to_string(v));
    const auto rows = r.u64();
    const auto dim = r.u32();
    if (dim != 0 && rows > r.remaining() / 4 / dim) throw Error(ErrorCode::BadFormat, "CCEM: truncated");
    std::vector<float> data(rows * dim);
    for (auto& v : data) v = r.f32();
    r.expect_end();
    return FeatureMatrix(rows, dim, std::move(data));
}

void write_features(const FeatureMatrix& features, const std::filesystem::path& path) {
    write_file_bytes(path, encode_features(features));
}

FeatureMatrix read_features(const std::filesystem::path& path) { return decode_features(read_file_bytes(path)); }

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace cellcloud
