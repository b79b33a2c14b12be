#include <fstream>

#include "cellcloud/error.hpp"
#include "cellcloud/ingest.hpp"
#include "doctest.h"
#include "support/helpers.hpp"
#include "support/merge_fixtures.hpp"
#include "support/oracles.hpp"

using namespace cellcloud;
using namespace cellcloud::ingest;
using testing_support::error_line;
using testing_support::error_of;

TEST_CASE("csv parsing") {
    SUBCASE("single row") {
        const auto c = parse_cells_csv_text("x,y,type\n1,2,neoplastic");
        REQUIRE(c.size() == 1);
        CHECK(c[0] == Cell{1, 2, CellType::Neoplastic});
    }
    SUBCASE("whitespace, CRLF, blank lines, case") {
        const auto c = parse_cells_csv_text("X, Y, Type\r\n 1.5 , 2e1 , Inflammatory\r\n\r\n3,4,OTHER\r\n");
        REQUIRE(c.size() == 2);
        CHECK(c[0] == Cell{1.5, 20, CellType::Inflammatory});
        CHECK(c[1] == Cell{3, 4, CellType::Other});
    }
    SUBCASE("errors carry line numbers") {
        CHECK(error_of([] { parse_cells_csv_text("x,y,type\n1,2,tumour"); }) == ErrorCode::UnknownType);
        CHECK(error_line([] { parse_cells_csv_text("x,y,type\n1,2,tumour"); }) == 2u);
        CHECK(error_of([] { parse_cells_csv_text("x,y,type\n1,2,other\n1,other\n"); }) == ErrorCode::MalformedRow);
        CHECK(error_line([] { parse_cells_csv_text("x,y,type\n1,2,other\n1,other\n"); }) == 3u);
        CHECK(error_of([] { parse_cells_csv_text("x,y,type\n1,2,other,4\n"); }) == ErrorCode::MalformedRow);
        CHECK(error_of([] { parse_cells_csv_text("x,y,type\nabc,2,other\n"); }) == ErrorCode::MalformedRow);
        CHECK(error_of([] { parse_cells_csv_text("x,y,type\n-1,2,other\n"); }) == ErrorCode::MalformedRow);
        CHECK(error_of([] { parse_cells_csv_text("x,y,type\nnan,2,other\n"); }) == ErrorCode::MalformedRow);
        CHECK(error_of([] { parse_cells_csv_text("x,y,type\ninf,2,other\n"); }) == ErrorCode::MalformedRow);
        CHECK(error_of([] { parse_cells_csv_text("a,b,c\n1,2,other\n"); }) == ErrorCode::MalformedRow);
        CHECK(error_line([] { parse_cells_csv_text("a,b,c\n1,2,other\n"); }) == 1u);
        CHECK(error_of([] { parse_cells_csv_text(""); }) == ErrorCode::MalformedRow);
        CHECK(error_of([] { parse_cells_csv_text("x,y,type\n1,2,other\n1,2,other\n"); }) == ErrorCode::DuplicateCell);
        CHECK(error_line([] { parse_cells_csv_text("x,y,type\n1,2,other\n1,2,other\n"); }) == 3u);
    }
    SUBCASE("same position, different type is allowed") {
        CHECK(parse_cells_csv_text("x,y,type\n1,2,other\n1,2,neoplastic\n").size() == 2);
    }
    SUBCASE("negative zero folds to zero") {
        const auto c = parse_cells_csv_text("x,y,type\n-0,0,other\n");
        CHECK_FALSE(std::signbit(c[0].x));
    }
}

TEST_CASE("generated csv matches generator tallies and round-trips") {
    const auto cloud = oracle::random_cloud(11, 1000, 5000);
    const auto text = format_cloud_csv(cloud);
    const auto back = parse_cells_csv_text(text);
    CHECK(back.counts_by_type() == cloud.counts_by_type());
    REQUIRE(back.size() == cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(back[i] == cloud[i]);
}

TEST_CASE("load_cloud sniffs format; patch directories") {
    testing_support::TempDir dir("ingest");
    const auto cloud = oracle::random_cloud(12, 40, 500);
    write_cloud_csv(cloud, dir / "s.csv");
    write_cloud_binary(cloud, dir / "s.cc5b");
    CHECK(load_cloud(dir / "s.csv").size() == cloud.size());
    CHECK(load_cloud(dir / "s.cc5b").size() == cloud.size());
    CHECK(load_cloud(dir / "s.cc5b").slide_id() == "s");

    const auto pdir = dir.path() / "patches";
    std::filesystem::create_directories(pdir);
    auto put = [&](const std::string& name, const std::string& body) { std::ofstream(pdir / name) << body; };
    put("patch_512_0.csv", "x,y,type\n5,200,neoplastic\n");
    put("patch_0_0.csv", "x,y,type\n507,200,neoplastic\n");
    put("patch_0_512.csv", "x,y,type\n10,10,other\n");
    put("notes.txt", "ignored");
    const auto patches = load_patch_directory(pdir);
    REQUIRE(patches.size() == 3);
    CHECK(patches[0].x0 == 0);
    CHECK(patches[0].y0 == 0);
    CHECK(patches[1].x0 == 512);
    CHECK(patches[2].y0 == 512);
    const auto merged = merge_boundary_cells(patches);
    REQUIRE(merged.size() == 2);
    CHECK(merged[0] == Cell{512, 200, CellType::Neoplastic});
    CHECK(merged[1] == Cell{10, 522, CellType::Other});

    CHECK(error_of([&] { load_patch_directory(dir / "nope"); }) == ErrorCode::Io);
}

TEST_CASE("boundary merge fixtures") {
    for (const auto& fx : fixtures::merge_cases()) {
        CAPTURE(fx.name);
        const auto out = merge_boundary_cells(fx.patches);
        REQUIRE(out.size() == fx.expected.size());
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == fx.expected[i]);
    }
}

TEST_CASE("merge matches an exhaustive pairwise oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        cellcloud::RngStream rng(seed, 1);
        std::vector<PatchDetections> patches;
        std::size_t total = 0;
        TypeTally before{};
        for (int py = 0; py < 2; ++py)
            for (int px = 0; px < 3; ++px) {
                PatchDetections p{px * 512.0, py * 512.0, 512.0, {}};
                for (int i = 0; i < 60; ++i) {
                    const bool edge = rng.uniform() < 0.5;
                    double x = rng.uniform(0, 512), y = rng.uniform(0, 512);
                    if (edge) x = rng.uniform() < 0.5 ? rng.uniform(0, 20) : rng.uniform(492, 511.9);
                    const auto t = static_cast<CellType>(rng.below(3));
                    p.cells.push_back({x, y, t});
                    ++before[type_index(t)];
                }
                total += p.cells.size();
                patches.push_back(p);
            }
        const auto out = merge_boundary_cells(patches);
        CHECK(out.size() <= total);
        for (std::size_t t = 0; t < kNumTypes; ++t) CHECK(out.counts_by_type()[t] <= before[t]);

        const auto expect = fixtures::brute_merge(patches);
        REQUIRE(out.size() == expect.size());
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == expect[i]);
    }
}

TEST_CASE("merge rejects bad patches") {
    CHECK(error_of([] {
              std::vector<PatchDetections> p{{0, 0, 512, {{512, 3, CellType::Other}}}};
              merge_boundary_cells(p);
          }) == ErrorCode::InvalidPatch);
    CHECK(error_of([] {
              std::vector<PatchDetections> p{{0, 0, 512, {}}, {256, 0, 512, {}}};
              merge_boundary_cells(p);
          }) == ErrorCode::OverlappingPatches);
    CHECK(error_of([] {
              std::vector<PatchDetections> p{{0, 0, 512, {}}, {0, 0, 512, {}}};
              merge_boundary_cells(p);
          }) == ErrorCode::OverlappingPatches);
    // Touching edges are fine.
    std::vector<PatchDetections> ok{{0, 0, 512, {}}, {512, 0, 512, {}}, {0, 512, 512, {}}};
    CHECK(merge_boundary_cells(ok).empty());
}

TEST_CASE("grid sampling") {
    SUBCASE("collinear centroid") {
        const auto out = grid_sample(CellCloud({{0, 0, CellType::Other}, {10, 0, CellType::Other}, {20, 0, CellType::Other}}));
        REQUIRE(out.size() == 1);
        CHECK(out[0] == Cell{10, 0, CellType::Other});
    }
    SUBCASE("types are kept apart") {
        const auto out = grid_sample(CellCloud({{5, 5, CellType::Inflammatory}, {6, 6, CellType::Neoplastic}}));
        REQUIRE(out.size() == 2);
        CHECK(out[0].kind == CellType::Neoplastic);
        CHECK(out[1].kind == CellType::Inflammatory);
    }
    SUBCASE("empty") { CHECK(grid_sample(CellCloud{}).empty()); }
    SUBCASE("matches per-bin oracle") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto cloud = oracle::random_cloud(seed, 5000, 4000);
            const auto out = grid_sample(cloud, 256);
            const auto expect = fixtures::grid_oracle(cloud, 256);
            REQUIRE(out.size() == expect.size());
            for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == expect[i]);
        }
    }
    SUBCASE("idempotent once every bin holds one cell per type") {
        const auto once = grid_sample(oracle::random_cloud(3, 3000, 3000), 256);
        const auto twice = grid_sample(once, 256);
        REQUIRE(twice.size() == once.size());
        for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == once[i]);
    }
    SUBCASE("type proportions survive on a dense uniform cloud") {
        const auto cloud = oracle::random_cloud(8, 20000, 4096);
        const auto out = grid_sample(cloud, 256);
        for (std::size_t t = 0; t < kNumTypes; ++t) {
            const double before = static_cast<double>(cloud.counts_by_type()[t]) / static_cast<double>(cloud.size());
            const double after = static_cast<double>(out.counts_by_type()[t]) / static_cast<double>(out.size());
            CHECK(std::abs(after - before) <= 0.1 * before);
        }
    }
    CHECK(error_of([] { grid_sample(CellCloud{}, 0); }) == ErrorCode::InvalidArgument);
}
