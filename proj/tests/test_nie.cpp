#include <numbers>

#include "cellcloud/error.hpp"
#include "cellcloud/nie.hpp"
#include "doctest.h"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace cellcloud;
using namespace cellcloud::nie;
using testing_support::error_of;

namespace {

spatial::NeighborCounts hand_counts(std::size_t n_cells, std::vector<double> radii, std::vector<std::uint32_t> counts) {
    spatial::NeighborCounts c;
    c.n_cells = n_cells;
    c.radii = std::move(radii);
    c.counts = std::move(counts);
    return c;
}

}  // namespace

TEST_CASE("radii schedule") {
    const auto s = radii_schedule(2.5);
    REQUIRE(s.r.size() == 3);
    CHECK(s.r[0] == doctest::Approx(10.0 / 3));
    CHECK(s.r[1] == doctest::Approx(20.0 / 3));
    CHECK(s.r[2] == 10.0);
    CHECK(s.r_max() == 10.0);
    CHECK(radii_schedule(1.0, {2.0, 1}).r == std::vector<double>{2.0});
    CHECK(error_of([] { radii_schedule(0.0); }) == ErrorCode::InvalidArgument);
    CHECK(error_of([] { radii_schedule(1.0, {0.0, 3}); }) == ErrorCode::InvalidArgument);
    CHECK(error_of([] { radii_schedule(1.0, {4.0, 0}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("local density telescopes over shells") {
    // One cell; type 0 cumulative counts [2, 3, 6]; types 1 and 2 empty.
    const auto c = hand_counts(1, {1, 2, 3}, {2, 0, 0, 3, 0, 0, 6, 0, 0});
    const auto ld = local_density(c);
    REQUIRE(ld.dim() == 9);
    CHECK(ld.at(0, 0) == doctest::Approx(2.0 / 6));
    CHECK(ld.at(0, 1) == doctest::Approx(1.0 / 6));
    CHECK(ld.at(0, 2) == doctest::Approx(3.0 / 6));
    for (std::size_t j = 3; j < 9; ++j) CHECK(ld.at(0, j) == 0.0f);
}

TEST_CASE("global density normalises by the per-type peak") {
    // Three cells, two radii; layout (i, j, t).
    const auto c = hand_counts(3, {1, 2},
                               {1, 0, 0, 2, 1, 0,    // cell 0
                                0, 0, 0, 4, 2, 0,    // cell 1
                                3, 1, 0, 3, 1, 0});  // cell 2
    const auto gd = global_density(c);
    // peaks: type0 = 4, type1 = 2, type2 = 0
    CHECK(gd.at(0, 0) == doctest::Approx(1.0 / 4));
    CHECK(gd.at(0, 1) == doctest::Approx(1.0 / 4));
    CHECK(gd.at(1, 0) == 0.0f);
    CHECK(gd.at(1, 1) == doctest::Approx(1.0));
    CHECK(gd.at(2, 0) == doctest::Approx(3.0 / 4));
    CHECK(gd.at(2, 1) == 0.0f);
    CHECK(gd.at(0, 2) == 0.0f);
    CHECK(gd.at(0, 3) == doctest::Approx(1.0 / 2));
    CHECK(gd.at(1, 2) == 0.0f);
    CHECK(gd.at(1, 3) == doctest::Approx(1.0));
    CHECK(gd.at(2, 2) == doctest::Approx(1.0 / 2));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(gd.at(i, 4) == 0.0f);
        CHECK(gd.at(i, 5) == 0.0f);
    }
}

TEST_CASE("embedding layout and normalisation") {
    CHECK(embedding_dim({}) == 21);
    CHECK(embedding_dim({4.0, 5}) == 33);

    const auto cloud = oracle::clustered_cloud(5, 2000, 800);
    const auto e = embed_with_counts(cloud);
    REQUIRE(e.features.dim() == 21);
    REQUIRE(e.features.rows() == cloud.size());
    CHECK(e.features.all_finite());
    CHECK(e.counts == oracle::brute_counts(cloud, e.radii.r));
    const double d = oracle::brute_mean_nn(cloud.coordinates());
    CHECK(e.radii.r_max() == doctest::Approx(4.0 * d).epsilon(1e-12));

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto row = e.features.row(i);
        for (std::size_t t = 0; t < 3; ++t) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 3; ++j) sum += row[t * 3 + j];
            CHECK((sum == 0.0 || std::abs(sum - 1.0) <= 1e-6));
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(row[9 + t * 3 + j] >= 0.0f);
                CHECK(row[9 + t * 3 + j] <= 1.0f);
            }
        }
        float onehot = 0;
        for (std::size_t t = 0; t < 3; ++t) onehot += row[18 + t];
        CHECK(onehot == 1.0f);
        CHECK(row[18 + type_index(cloud[i].kind)] == 1.0f);
    }
}

TEST_CASE("explicit d_mean overrides the slide estimate") {
    const auto cloud = oracle::random_cloud(6, 500, 300);
    EmbedOptions opt;
    opt.d_mean = 5.0;
    const auto e = embed_with_counts(cloud, {}, opt);
    CHECK(e.radii.r_max() == 20.0);
    CHECK(e.counts == oracle::brute_counts(cloud, e.radii.r));
}

TEST_CASE("embedding is unchanged by rigid motion and thread count") {
    const auto cloud = oracle::random_cloud(7, 1500, 600);
    const auto base = embed(cloud);
    const double th = 0.7;
    std::vector<Cell> moved;
    for (const auto& c : cloud.cells()) {
        const double x = c.x - 300, y = c.y - 300;
        moved.push_back({std::cos(th) * x - std::sin(th) * y + 2000, std::sin(th) * x + std::cos(th) * y + 2000, c.kind});
    }
    const auto other = embed(CellCloud(moved));
    // Rotating can move a neighbour across a shell boundary only within rounding;
    // the oracle counts on the moved cloud must agree with the library on that cloud.
    CHECK(embed_with_counts(CellCloud(moved)).counts ==
          oracle::brute_counts(CellCloud(moved), embed_with_counts(CellCloud(moved)).radii.r));
    double worst = 0.0;
    for (std::size_t i = 0; i < base.data().size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(base.data()[i]) - other.data()[i]));
    CHECK(worst <= 1e-6);

    EmbedOptions four;
    four.threads = 4;
    CHECK(embed(cloud, {}, four) == base);
}

TEST_CASE("embedding errors") {
    CHECK(error_of([] { embed(CellCloud({{1, 1, CellType::Other}})); }) == ErrorCode::TooFewCells);
    CHECK(error_of([] { embed(CellCloud({{1, 1, CellType::Other}, {1, 1, CellType::Neoplastic}})); }) ==
          ErrorCode::InvalidArgument);
}
