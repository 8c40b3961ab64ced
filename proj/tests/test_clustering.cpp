#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slic/clustering.hpp"
#include "slic/metrics.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace slic;

namespace {

Matrix from_rows(const std::vector<Vec>& rows) {
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int i = 0; i < m.rows(); ++i) std::copy(rows[i].begin(), rows[i].end(), m.row(i));
    return m;
}

const Matrix kFivePoints = from_rows({{1.0, 0.0},
                                      {0.99, 0.14},
                                      {0.0, 1.0},
                                      {0.14, 0.99},
                                      {-1.0, 0.0}});

// two tight blobs far apart on the unit circle neighborhood
Matrix two_blobs(int per_blob, int dim, RngStream& rng) {
    Matrix m(2 * per_blob, dim);
    for (int i = 0; i < 2 * per_blob; ++i) {
        const bool second = i >= per_blob;
        for (int j = 0; j < dim; ++j)
            m.at(i, j) = (second ? -5.0 : 5.0) * (j == 0 ? 1.0 : 0.1) + rng.normal() * 0.05;
    }
    return m;
}

// two chains on the unit circle whose within-chain gaps grow geometrically,
// so each point's first neighbor is its predecessor and every chain collapses
// into a single link component (mutual-neighbor-closed blobs)
Matrix closed_blobs(int per_blob) {
    Matrix m(2 * per_blob, 2);
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < per_blob; ++k) {
            const double angle = (b == 0 ? 0.0 : 3.0) + 1e-3 * std::pow(1.6, k);
            m.at(b * per_blob + k, 0) = std::cos(angle);
            m.at(b * per_blob + k, 1) = std::sin(angle);
        }
    return m;
}

} // namespace

TEST_CASE("first_neighbors hand cases") {
    Matrix two(2, 2);
    two.at(0, 0) = 1.0;
    two.at(1, 0) = 0.5;
    two.at(1, 1) = 0.5;
    CHECK(first_neighbors(two).kappa == std::vector<int>{1, 0});

    // duplicated rows resolve ties toward the smallest index
    Matrix dup = from_rows({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}});
    CHECK(first_neighbors(dup).kappa == std::vector<int>{1, 0, 0});

    CHECK(first_neighbors(kFivePoints).kappa == std::vector<int>{1, 0, 3, 2, 2});

    Matrix one(1, 2);
    one.at(0, 0) = 1.0;
    CHECK_THROWS_AS(first_neighbors(one), std::invalid_argument);
}

TEST_CASE("link_components hand cases") {
    FirstNeighborArray mutual{{1, 0}};
    Partition p = link_components(mutual);
    CHECK(p.num_clusters == 1);
    CHECK(p.assignment == std::vector<int>{0, 0});

    FirstNeighborArray five{{1, 0, 3, 2, 2}};
    Partition q = link_components(five);
    CHECK(q.num_clusters == 2);
    CHECK(q.assignment == std::vector<int>{0, 0, 1, 1, 1});
}

TEST_CASE("link_components matches the brute-force adjacency + BFS oracle") {
    RngStream rng(101, 0);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(199));
        const int d = 1 + static_cast<int>(rng.below(16));
        Matrix emb = slic_test::random_matrix(n, d, rng);
        Partition impl = link_components(first_neighbors(emb));
        Partition oracle = slic_test::brute_force_p1(emb);
        CHECK(slic_test::partitions_equal(impl, oracle));
    }
}

TEST_CASE("every sample shares a cluster with its first neighbor") {
    RngStream rng(303, 0);
    Matrix emb = slic_test::random_matrix(60, 4, rng);
    FirstNeighborArray fn = first_neighbors(emb);
    Partition p = link_components(fn);
    for (int i = 0; i < 60; ++i) CHECK(p.assignment[i] == p.assignment[fn.kappa[i]]);
}

TEST_CASE("finch on the five-point example") {
    PartitionHierarchy h = finch(kFivePoints);
    REQUIRE(h.partitions.size() == 2);
    CHECK(h.partitions[0].num_clusters == 2);
    CHECK(h.partitions[0].assignment == std::vector<int>{0, 0, 1, 1, 1});
    CHECK(h.partitions[1].num_clusters == 1);
}

TEST_CASE("finch on two points yields exactly one all-in-one partition") {
    Matrix two(2, 2);
    two.at(0, 0) = 1.0;
    two.at(1, 1) = 1.0;
    PartitionHierarchy h = finch(two);
    REQUIRE(h.partitions.size() == 1);
    CHECK(h.partitions[0].num_clusters == 1);
}

TEST_CASE("finch hierarchy laws on random inputs") {
    RngStream rng(404, 0);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(120));
        const int d = 1 + static_cast<int>(rng.below(10));
        Matrix emb = slic_test::random_matrix(n, d, rng);
        PartitionHierarchy h = finch(emb);
        REQUIRE(!h.partitions.empty());
        for (std::size_t level = 0; level + 1 < h.partitions.size(); ++level) {
            const Partition& fine = h.partitions[level];
            const Partition& coarse = h.partitions[level + 1];
            CHECK(coarse.num_clusters < fine.num_clusters);
            // refinement: a fine cluster maps into exactly one coarse cluster
            std::vector<int> image(fine.num_clusters, -1);
            for (int i = 0; i < fine.size(); ++i) {
                int& img = image[fine.assignment[i]];
                if (img < 0) img = coarse.assignment[i];
                CHECK(img == coarse.assignment[i]);
            }
        }
    }
}

TEST_CASE("finch is scale invariant") {
    RngStream rng(505, 0);
    Matrix emb = slic_test::random_matrix(80, 6, rng);
    Matrix scaled(80, 6);
    for (int i = 0; i < 80; ++i)
        for (int j = 0; j < 6; ++j) scaled.at(i, j) = 37.5 * emb.at(i, j);
    PartitionHierarchy a = finch(emb);
    PartitionHierarchy b = finch(scaled);
    REQUIRE(a.partitions.size() == b.partitions.size());
    for (std::size_t i = 0; i < a.partitions.size(); ++i)
        CHECK(slic_test::partitions_equal(a.partitions[i], b.partitions[i]));
}

TEST_CASE("finch partition 1 recovers mutual-neighbor-closed blobs exactly") {
    const int per_blob = 12;
    Matrix emb = closed_blobs(per_blob);
    Partition p1 = pseudo_labels(finch(emb), 0);
    Partition truth;
    truth.assignment.assign(2 * per_blob, 0);
    for (int i = per_blob; i < 2 * per_blob; ++i) truth.assignment[i] = 1;
    truth.num_clusters = 2;
    CHECK(p1.num_clusters == 2);
    CHECK(nmi(p1, truth) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pseudo_labels selects partitions and rejects bad indices") {
    PartitionHierarchy h = finch(kFivePoints);
    CHECK(&pseudo_labels(h, 0) == &h.partitions[0]);
    CHECK(pseudo_labels(h, 1).num_clusters == 1);
    CHECK_THROWS_AS(pseudo_labels(h, 5), std::invalid_argument);
    CHECK_THROWS_AS(pseudo_labels(h, -1), std::invalid_argument);
}

TEST_CASE("kmeans with K = N puts every point in its own cluster") {
    RngStream data_rng(707, 0);
    Matrix emb = slic_test::random_matrix(12, 3, data_rng);
    RngStream rng(707, 1);
    KMeansDiagnostics diag;
    Partition p = kmeans(emb, 12, rng, {}, &diag);
    CHECK(p.num_clusters == 12);
    std::set<int> ids(p.assignment.begin(), p.assignment.end());
    CHECK(ids.size() == 12);
    CHECK(diag.inertia_per_iter.back() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kmeans and spherical kmeans recover two blobs") {
    RngStream data_rng(808, 0);
    Matrix emb = two_blobs(25, 6, data_rng);
    Partition truth;
    truth.assignment.assign(50, 0);
    for (int i = 25; i < 50; ++i) truth.assignment[i] = 1;
    truth.num_clusters = 2;

    RngStream rng1(808, 1), rng2(808, 2);
    CHECK(nmi(kmeans(emb, 2, rng1), truth) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nmi(spherical_kmeans(emb, 2, rng2), truth) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kmeans inertia is non-increasing and spherical centroids are unit norm") {
    RngStream data_rng(909, 0);
    Matrix emb = slic_test::random_matrix(100, 5, data_rng);

    RngStream rng(909, 1);
    KMeansDiagnostics diag;
    kmeans(emb, 7, rng, {}, &diag);
    for (std::size_t i = 1; i < diag.inertia_per_iter.size(); ++i)
        CHECK(diag.inertia_per_iter[i] <= diag.inertia_per_iter[i - 1] + 1e-12);

    RngStream rng2(909, 2);
    KMeansDiagnostics sdiag;
    spherical_kmeans(emb, 7, rng2, {}, &sdiag);
    for (int c = 0; c < sdiag.centroids.rows(); ++c) {
        double ss = 0.0;
        for (int j = 0; j < sdiag.centroids.cols(); ++j) ss += sdiag.centroids.at(c, j) * sdiag.centroids.at(c, j);
        CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-12);
    }
    for (std::size_t i = 1; i < sdiag.inertia_per_iter.size(); ++i)
        CHECK(sdiag.inertia_per_iter[i] <= sdiag.inertia_per_iter[i - 1] + 1e-12);
}

TEST_CASE("kmeans rejects K out of range") {
    RngStream data_rng(111, 0);
    Matrix emb = slic_test::random_matrix(5, 2, data_rng);
    RngStream rng(111, 1);
    CHECK_THROWS_AS(kmeans(emb, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(kmeans(emb, 6, rng), std::invalid_argument);
}

#ifdef _OPENMP
TEST_CASE("neighbor search and kmeans results are independent of the thread count") {
    RngStream rng(777, 0);
    Matrix emb = slic_test::random_matrix(300, 9, rng);

    omp_set_num_threads(1);
    FirstNeighborArray fn1 = first_neighbors(emb);
    RngStream ka(777, 1);
    Partition pa = kmeans(emb, 7, ka);
    Matrix da = pairwise_cosine_distances(emb, emb);

    omp_set_num_threads(2);
    FirstNeighborArray fn2 = first_neighbors(emb);
    RngStream kb(777, 1);
    Partition pb = kmeans(emb, 7, kb);
    Matrix db = pairwise_cosine_distances(emb, emb);

    omp_set_num_threads(omp_get_num_procs());
    CHECK(fn1.kappa == fn2.kappa);
    CHECK(slic_test::partitions_equal(pa, pb));
    CHECK(da.data() == db.data());
}
#endif

TEST_CASE("compact_partition relabels by smallest member index") {
    std::vector<int> raw = {5, 2, 5, 9, 2};
    Partition p = compact_partition(raw);
    CHECK(p.assignment == std::vector<int>{0, 1, 0, 2, 1});
    CHECK(p.num_clusters == 3);
}
