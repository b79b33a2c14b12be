#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "cellcloud/core.hpp"

namespace cellcloud::ingest {

// Detections of one patch, in patch-local pixel coordinates.
struct PatchDetections {
    double x0 = 0.0;
    double y0 = 0.0;
    double patch_size = 512.0;
    std::vector<Cell> cells;
};

// Canonical `x,y,type` CSV. Errors carry the 1-based line number (the header
// is line 1). Blank lines are skipped; duplicate (x, y, type) rows are rejected.
CellCloud parse_cells_csv_text(std::string_view text, std::string slide_id = {});
CellCloud parse_cells_csv(const std::filesystem::path& path);

// CSV or CC5B, decided by content (the binary starts with "CC5B").
CellCloud load_cloud(const std::filesystem::path& path);

// Reads every `patch_{x0}_{y0}.csv` in `dir`, sorted by (y0, x0).
std::vector<PatchDetections> load_patch_directory(const std::filesystem::path& dir, double patch_size = 512.0);

struct MergeParams {
    double d_boundary = 24.0;
    double d_merge = 12.0;
};

// Translates patches to slide coordinates and collapses duplicate detections
// along patch seams. Candidates are cells closer than d_boundary to an edge of
// their own patch; same-type candidates closer than d_merge are linked, and
// each linked component is replaced by its centroid. A merged cell takes the
// output position of its first member; all other cells keep input order.
CellCloud merge_boundary_cells(std::span<const PatchDetections> patches, MergeParams params = {},
                               std::string slide_id = {});

// One centroid per occupied (bin, type), ordered by (bin row, bin col, type).
CellCloud grid_sample(const CellCloud& cloud, double grid_size = 256.0);

}  // namespace cellcloud::ingest
