#include "cellcloud/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <regex>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "cellcloud/error.hpp"

namespace cellcloud::ingest {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_coordinate(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return false;
    out += 0.0;  // folds -0 into +0
    return std::isfinite(out) && out >= 0.0;
}

struct CellKeyHash {
    std::size_t operator()(const Cell& c) const noexcept {
        auto h = std::hash<double>{}(c.x);
        h ^= std::hash<double>{}(c.y) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
        return h ^ static_cast<std::size_t>(c.kind);
    }
};

}  // namespace

CellCloud parse_cells_csv_text(std::string_view text, std::string slide_id) {
    std::vector<Cell> cells;
    std::unordered_set<Cell, CellKeyHash> seen;
    std::size_t line_no = 0;
    bool header_seen = false;

    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto raw = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        const auto line = trim(raw);

        if (!header_seen) {
            std::string lowered(line);
            std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                           [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
            lowered.erase(std::remove(lowered.begin(), lowered.end(), ' '), lowered.end());
            if (lowered != "x,y,type") throw Error(ErrorCode::MalformedRow, "expected header x,y,type", line_no);
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;

        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos)
            throw Error(ErrorCode::MalformedRow, "expected 3 fields", line_no);

        Cell cell;
        if (!parse_coordinate(line.substr(0, c1), cell.x) || !parse_coordinate(line.substr(c1 + 1, c2 - c1 - 1), cell.y))
            throw Error(ErrorCode::MalformedRow, "bad coordinate", line_no);
        const auto kind = parse_type(trim(line.substr(c2 + 1)));
        if (!kind)
            throw Error(ErrorCode::UnknownType, "unknown cell type '" + std::string(trim(line.substr(c2 + 1))) + "'",
                        line_no);
        cell.kind = *kind;
        if (!seen.insert(cell).second) throw Error(ErrorCode::DuplicateCell, "duplicate cell", line_no);
        cells.push_back(cell);
    }
    if (!header_seen) throw Error(ErrorCode::MalformedRow, "empty file, expected header x,y,type", 1);
    return CellCloud(std::move(cells), std::move(slide_id));
}

CellCloud parse_cells_csv(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return parse_cells_csv_text({reinterpret_cast<const char*>(bytes.data()), bytes.size()}, path.stem().string());
}

CellCloud load_cloud(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "CC5B"))
        return decode_cloud_binary(bytes, path.stem().string());
    return parse_cells_csv_text({reinterpret_cast<const char*>(bytes.data()), bytes.size()}, path.stem().string());
}

std::vector<PatchDetections> load_patch_directory(const std::filesystem::path& dir, double patch_size) {
    static const std::regex name_re(R"(patch_(\d+(?:\.\d+)?)_(\d+(?:\.\d+)?)\.csv)");
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
    std::vector<PatchDetections> patches;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        std::smatch m;
        if (!std::regex_match(name, m, name_re)) continue;
        PatchDetections p;
        p.x0 = std::stod(m[1].str());
        p.y0 = std::stod(m[2].str());
        p.patch_size = patch_size;
        const auto cloud = parse_cells_csv(entry.path());
        p.cells.assign(cloud.cells().begin(), cloud.cells().end());
        patches.push_back(std::move(p));
    }
    std::sort(patches.begin(), patches.end(),
              [](const auto& a, const auto& b) { return std::tie(a.y0, a.x0) < std::tie(b.y0, b.x0); });
    return patches;
}

namespace {

void check_patches(std::span<const PatchDetections> patches) {
    for (std::size_t p = 0; p < patches.size(); ++p) {
        const auto& patch = patches[p];
        if (!(patch.patch_size > 0.0) || !std::isfinite(patch.x0) || !std::isfinite(patch.y0))
            throw Error(ErrorCode::InvalidPatch, "patch " + std::to_string(p) + " has invalid geometry");
        for (std::size_t i = 0; i < patch.cells.size(); ++i) {
            const auto& c = patch.cells[i];
            if (!(c.x >= 0.0 && c.x < patch.patch_size && c.y >= 0.0 && c.y < patch.patch_size))
                throw Error(ErrorCode::InvalidPatch, "patch " + std::to_string(p) + " cell " + std::to_string(i) +
                                                         " lies outside [0, patch_size)");
        }
    }

    // Sweep over x: only patches whose x-ranges intersect are compared.
    std::vector<std::size_t> order(patches.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return patches[a].x0 < patches[b].x0; });
    for (std::size_t a = 0; a < order.size(); ++a) {
        const auto& pa = patches[order[a]];
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            const auto& pb = patches[order[b]];
            if (pb.x0 >= pa.x0 + pa.patch_size) break;
            const bool y_overlap = pb.y0 < pa.y0 + pa.patch_size && pa.y0 < pb.y0 + pb.patch_size;
            if (y_overlap)
                throw Error(ErrorCode::OverlappingPatches, "patches " + std::to_string(order[a]) + " and " +
                                                               std::to_string(order[b]) + " overlap");
        }
    }
}

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    // Smaller index becomes the root.
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent_[b] = a;
    }

private:
    std::vector<std::size_t> parent_;
};

std::uint64_t pack_bin(std::int64_t row, std::int64_t col) {
    return (static_cast<std::uint64_t>(row) << 32) ^ static_cast<std::uint64_t>(col & 0xffffffff);
}

}  // namespace

CellCloud merge_boundary_cells(std::span<const PatchDetections> patches, MergeParams params, std::string slide_id) {
    if (!(params.d_boundary >= 0.0) || !(params.d_merge > 0.0))
        throw Error(ErrorCode::InvalidArgument, "merge distances must be positive");
    check_patches(patches);

    std::vector<Cell> slide;
    std::vector<std::size_t> candidates;
    for (const auto& patch : patches) {
        for (const auto& c : patch.cells) {
            const double edge = std::min({c.x, c.y, patch.patch_size - c.x, patch.patch_size - c.y});
            if (edge < params.d_boundary) candidates.push_back(slide.size());
            slide.push_back({patch.x0 + c.x, patch.y0 + c.y, c.kind});
        }
    }

    // Hash candidates into d_merge bins; linked pairs are at most one bin apart.
    const double bin = params.d_merge;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> bins;
    std::vector<std::pair<std::int64_t, std::int64_t>> cand_bin(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const auto& c = slide[candidates[k]];
        const auto row = static_cast<std::int64_t>(std::floor(c.y / bin));
        const auto col = static_cast<std::int64_t>(std::floor(c.x / bin));
        cand_bin[k] = {row, col};
        bins[pack_bin(row, col)].push_back(k);
    }

    DisjointSets sets(candidates.size());
    const double limit2 = params.d_merge * params.d_merge;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const auto& a = slide[candidates[k]];
        const auto [row, col] = cand_bin[k];
        for (std::int64_t dr = -1; dr <= 1; ++dr) {
            for (std::int64_t dc = -1; dc <= 1; ++dc) {
                auto it = bins.find(pack_bin(row + dr, col + dc));
                if (it == bins.end()) continue;
                for (auto m : it->second) {
                    if (m <= k) continue;
                    const auto& b = slide[candidates[m]];
                    if (a.kind != b.kind) continue;
                    const double dx = a.x - b.x;
                    const double dy = a.y - b.y;
                    if (dx * dx + dy * dy < limit2) sets.unite(k, m);
                }
            }
        }
    }

    struct Accum {
        double sx = 0.0, sy = 0.0;
        std::size_t n = 0;
    };
    std::vector<Accum> acc(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        auto& a = acc[sets.find(k)];
        a.sx += slide[candidates[k]].x;
        a.sy += slide[candidates[k]].y;
        ++a.n;
    }

    // drop[i]: cell i was absorbed into an earlier member of its component.
    std::vector<char> drop(slide.size(), 0);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const auto root = sets.find(k);
        if (root != k) {
            drop[candidates[k]] = 1;
            continue;
        }
        const auto& a = acc[k];
        if (a.n > 1) {
            auto& c = slide[candidates[k]];
            c.x = a.sx / static_cast<double>(a.n);
            c.y = a.sy / static_cast<double>(a.n);
        }
    }

    std::vector<Cell> out;
    out.reserve(slide.size());
    for (std::size_t i = 0; i < slide.size(); ++i)
        if (!drop[i]) out.push_back(slide[i]);
    return CellCloud(std::move(out), std::move(slide_id));
}

CellCloud grid_sample(const CellCloud& cloud, double grid_size) {
    if (!(grid_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "grid_size must be positive");
    const auto cells = cloud.cells();

    struct Key {
        std::int64_t row, col;
        std::uint8_t type;
        auto operator<=>(const Key&) const = default;
    };
    std::vector<Key> keys(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        keys[i] = {static_cast<std::int64_t>(std::floor(cells[i].y / grid_size)),
                   static_cast<std::int64_t>(std::floor(cells[i].x / grid_size)),
                   static_cast<std::uint8_t>(cells[i].kind)};
    }
    std::vector<std::size_t> order(cells.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return keys[a] < keys[b]; });

    std::vector<Cell> out;
    for (std::size_t s = 0; s < order.size();) {
        std::size_t e = s;
        double sx = 0.0, sy = 0.0;
        while (e < order.size() && keys[order[e]] == keys[order[s]]) {
            sx += cells[order[e]].x;
            sy += cells[order[e]].y;
            ++e;
        }
        const auto n = static_cast<double>(e - s);
        out.push_back({sx / n, sy / n, cells[order[s]].kind});
        s = e;
    }
    return CellCloud(std::move(out), cloud.slide_id());
}

}  // namespace cellcloud::ingest
