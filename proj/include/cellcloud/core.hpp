#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cellcloud {

// Integer tags are part of every file format; do not reorder.
enum class CellType : std::uint8_t { Neoplastic = 0, Inflammatory = 1, Other = 2 };

inline constexpr std::size_t kNumTypes = 3;

inline constexpr std::size_t type_index(CellType t) noexcept { return static_cast<std::size_t>(t); }

std::string_view type_name(CellType t) noexcept;
// Case-insensitive; nullopt for anything outside {neoplastic, inflammatory, other}.
std::optional<CellType> parse_type(std::string_view token) noexcept;
std::optional<CellType> type_from_tag(std::uint8_t tag) noexcept;

// Pixel coordinates at 40x magnification.
struct Cell {
    double x = 0.0;
    double y = 0.0;
    CellType kind = CellType::Other;

    friend bool operator==(const Cell&, const Cell&) = default;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

using TypeTally = std::array<std::size_t, kNumTypes>;

TypeTally tally_types(std::span<const Cell> cells) noexcept;

// All cells of one slide. Immutable once built; the tally is derived from the
// cells at construction.
class CellCloud {
public:
    CellCloud() = default;
    explicit CellCloud(std::vector<Cell> cells, std::string slide_id = {});

    std::span<const Cell> cells() const noexcept { return cells_; }
    const Cell& operator[](std::size_t i) const noexcept { return cells_[i]; }
    std::size_t size() const noexcept { return cells_.size(); }
    bool empty() const noexcept { return cells_.empty(); }

    const TypeTally& counts_by_type() const noexcept { return counts_; }
    std::size_t count(CellType t) const noexcept { return counts_[type_index(t)]; }
    const std::string& slide_id() const noexcept { return slide_id_; }

    std::vector<Point2> coordinates() const;
    std::vector<CellType> types() const;

private:
    std::vector<Cell> cells_;
    TypeTally counts_{};
    std::string slide_id_;
};

// One entry per violated invariant, e.g. "duplicate cell at index 1".
std::vector<std::string> validate_cloud(const CellCloud& cloud);

// Dense row-major f32 features, one row per point.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t dim);
    FeatureMatrix(std::size_t rows, std::size_t dim, std::vector<float> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t dim() const noexcept { return dim_; }

    std::span<float> row(std::size_t i) noexcept { return {data_.data() + i * dim_, dim_}; }
    std::span<const float> row(std::size_t i) const noexcept { return {data_.data() + i * dim_, dim_}; }
    float& at(std::size_t i, std::size_t j) noexcept { return data_[i * dim_ + j]; }
    float at(std::size_t i, std::size_t j) const noexcept { return data_[i * dim_ + j]; }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    bool all_finite() const noexcept;

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

// Canonical CSV: header `x,y,type`, shortest round-trip decimal coordinates,
// lower-case type names, '\n' line endings.
std::string format_cloud_csv(const CellCloud& cloud);
void write_cloud_csv(const CellCloud& cloud, const std::filesystem::path& path);

// CC5B binary cache: "CC5B", u32 version = 1, u64 count, then per cell
// f64 x, f64 y, u8 type. Little-endian.
std::vector<std::uint8_t> encode_cloud_binary(const CellCloud& cloud);
CellCloud decode_cloud_binary(std::span<const std::uint8_t> bytes, std::string slide_id = {});
void write_cloud_binary(const CellCloud& cloud, const std::filesystem::path& path);
CellCloud read_cloud_binary(const std::filesystem::path& path);

// CCEM embedding cache: "CCEM", u32 version = 1, u64 rows, u32 dim, f32 data.
std::vector<std::uint8_t> encode_features(const FeatureMatrix& features);
FeatureMatrix decode_features(std::span<const std::uint8_t> bytes);
void write_features(const FeatureMatrix& features, const std::filesystem::path& path);
FeatureMatrix read_features(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace cellcloud
