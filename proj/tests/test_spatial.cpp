#include <set>

#include "cellcloud/error.hpp"
#include "cellcloud/spatial.hpp"
#include "doctest.h"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace cellcloud;
using namespace cellcloud::spatial;
using testing_support::error_of;

TEST_CASE("index buckets hold every cell exactly once") {
    const auto cloud = oracle::random_cloud(1, 800, 1000);
    const auto index = build_index(cloud, 37.5);
    std::multiset<std::size_t> seen;
    for (std::int64_t r = 0; r <= 1000 / 37; ++r)
        for (std::int64_t c = 0; c <= 1000 / 37; ++c)
            for (auto i : index.bin(r, c)) {
                CHECK(static_cast<std::int64_t>(std::floor(cloud[i].y / 37.5)) == r);
                CHECK(static_cast<std::int64_t>(std::floor(cloud[i].x / 37.5)) == c);
                seen.insert(i);
            }
    CHECK(seen.size() == cloud.size());
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == cloud.size());
    CHECK(index.bin(-5, -5).empty());
    CHECK(index.occupied_bins() <= cloud.size());
    CHECK(error_of([&] { build_index(cloud, 0.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("count_in_radii against brute force") {
    const std::vector<double> radii{3.0, 7.5, 15.0};
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        for (double bin : {1.0, 15.0, 40.0, 1e5}) {
            const auto cloud = seed % 2 ? oracle::random_cloud(seed, 600, 200, 1.5) : oracle::clustered_cloud(seed, 600, 300);
            const auto got = count_in_radii(build_index(cloud, bin), radii);
            const auto want = oracle::brute_counts(cloud, radii);
            CHECK(got == want);
        }
    }
}

TEST_CASE("boundary points are counted inclusively") {
    CellCloud c({{0, 0, CellType::Neoplastic}, {3, 4, CellType::Inflammatory}, {5, 0, CellType::Other}, {6, 0, CellType::Other}});
    const std::vector<double> radii{5.0};
    const auto n = count_in_radii(build_index(c, 5.0), radii);
    CHECK(n.at(0, 0, 0) == 0);  // self excluded
    CHECK(n.at(0, 0, 1) == 1);
    CHECK(n.at(0, 0, 2) == 1);
}

TEST_CASE("extreme and degenerate layouts") {
    SUBCASE("sparse huge extent uses the hashed path") {
        std::vector<Cell> cells;
        for (int i = 0; i < 50; ++i) cells.push_back({i * 1e6, (i % 7) * 1e6 + (i % 3), static_cast<CellType>(i % 3)});
        cells.push_back({1e6 + 1, 0, CellType::Other});
        CellCloud cloud(cells);
        const std::vector<double> radii{2.0, 5.0};
        CHECK(count_in_radii(build_index(cloud, 5.0), radii) == oracle::brute_counts(cloud, radii));
    }
    SUBCASE("coincident positions of different types") {
        CellCloud cloud({{10, 10, CellType::Neoplastic}, {10, 10, CellType::Other}, {10, 10, CellType::Inflammatory}});
        const std::vector<double> radii{1.0};
        CHECK(count_in_radii(build_index(cloud, 1.0), radii) == oracle::brute_counts(cloud, radii));
    }
    SUBCASE("empty cloud") {
        const std::vector<double> radii{1.0};
        const auto n = count_in_radii(build_index(CellCloud{}, 1.0), radii);
        CHECK(n.n_cells == 0);
        CHECK(n.counts.empty());
    }
}

TEST_CASE("count_in_radii validates radii and is thread-count independent") {
    const auto cloud = oracle::random_cloud(3, 3000, 500);
    const auto index = build_index(cloud, 10.0);
    const std::vector<double> bad{2.0, 1.0};
    CHECK(error_of([&] { count_in_radii(index, bad); }) == ErrorCode::InvalidArgument);
    const std::vector<double> none;
    CHECK(error_of([&] { count_in_radii(index, none); }) == ErrorCode::InvalidArgument);
    const std::vector<double> radii{4.0, 8.0, 12.0};
    const auto one = count_in_radii(index, radii, 1);
    for (unsigned t : {2u, 3u, 8u}) CHECK(count_in_radii(index, radii, t) == one);
}

TEST_CASE("CCNC round-trip") {
    const auto cloud = oracle::random_cloud(4, 300, 100);
    const std::vector<double> radii{2.0, 4.0, 6.0};
    const auto counts = count_in_radii(build_index(cloud, 6.0), radii);
    CHECK(decode_neighbor_counts(encode_neighbor_counts(counts)) == counts);
    auto bytes = encode_neighbor_counts(counts);
    bytes[0] = 'Z';
    CHECK(error_of([&] { decode_neighbor_counts(bytes); }) == ErrorCode::BadFormat);
}

TEST_CASE("mean nearest-neighbour distance") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto cloud = seed % 2 ? oracle::random_cloud(seed, 700, 400) : oracle::clustered_cloud(seed, 700, 400);
        const auto pts = cloud.coordinates();
        CHECK(mean_nn_distance(pts) == doctest::Approx(oracle::brute_mean_nn(pts)).epsilon(1e-12));
    }
    const std::vector<Point2> two{{0, 0}, {3, 4}};
    CHECK(mean_nn_distance(two) == 5.0);
    const std::vector<Point2> one{{0, 0}};
    CHECK(error_of([&] { mean_nn_distance(one); }) == ErrorCode::TooFewCells);
}

TEST_CASE("fps against brute force") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto cloud = seed % 3 == 0 ? oracle::random_cloud(seed, 400, 60, 2.0) : oracle::clustered_cloud(seed, 400, 300);
        const auto pts = cloud.coordinates();
        const auto types = cloud.types();
        CHECK(fps(pts, {}, 50, 0.0) == oracle::brute_fps(pts, {}, 50, 0.0));
        const double gamma = oracle::brute_mean_nn(pts);
        CHECK(fps(pts, types, 50, gamma) == oracle::brute_fps(pts, types, 50, gamma));
        CHECK(fps(pts, types, 50, 25.0, 4) == oracle::brute_fps(pts, types, 50, 25.0));
    }
}

TEST_CASE("fps edge cases") {
    const std::vector<Point2> pts{{5, 5}, {1, 9}, {1, 2}, {7, 7}};
    const auto all = fps(pts, {}, 4, 0.0);
    CHECK(all.front() == 2);
    CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 4);
    CHECK(fps(pts, {}, 0, 0.0).empty());
    CHECK(error_of([&] { fps(pts, {}, 5, 0.0); }) == ErrorCode::InvalidArgument);
    CHECK(error_of([&] { fps(pts, {}, 2, 1.0); }) == ErrorCode::InvalidArgument);

    // Coincident points: the type tag breaks the start tie, then smallest index wins.
    const std::vector<Point2> same{{0, 0}, {0, 0}, {0, 0}};
    const std::vector<CellType> t{CellType::Other, CellType::Neoplastic, CellType::Neoplastic};
    CHECK(fps(same, t, 3, 0.0) == std::vector<std::size_t>{1, 0, 2});
    CHECK(fps(same, t, 2, 1.0) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("knn against brute force") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto cloud = seed % 2 ? oracle::random_cloud(seed, 500, 80, 2.0) : oracle::clustered_cloud(seed, 500, 400);
        const auto pts = cloud.coordinates();
        const auto anchor_ids = oracle::brute_fps(pts, {}, 40, 0.0);
        std::vector<Point2> anchors;
        for (auto i : anchor_ids) anchors.push_back(pts[i]);
        anchors.push_back({-1000, 5000});  // far outside the cloud
        // Snapping drops duplicates, so the last k is the whole cloud.
        for (std::size_t k : {std::size_t{1}, std::size_t{7}, std::size_t{25}, pts.size()}) {
            const auto got = knn_group(anchors, pts, k, seed % 3 + 1);
            const auto want = oracle::brute_knn(anchors, pts, k);
            REQUIRE(got.size() == anchors.size());
            for (std::size_t a = 0; a < anchors.size(); ++a) {
                const auto g = got[a];
                CHECK(std::vector<std::size_t>(g.begin(), g.end()) == want[a]);
            }
        }
    }
    const std::vector<Point2> pts{{0, 0}, {1, 0}};
    CHECK(error_of([&] { knn_group(pts, pts, 3); }) == ErrorCode::InvalidArgument);
    CHECK(knn_group(pts, pts, 0).size() == 2);
}
