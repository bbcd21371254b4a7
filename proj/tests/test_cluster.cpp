#include <catch2/catch_amalgamated.hpp>

#include "contracluster/cluster.hpp"

#include "support/oracles.hpp"

using namespace contracluster;
namespace ts = testsupport;

TEST_CASE("kmeans on identical points collapses to that point") {
    Array<float> pts({6, 3});
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j) pts.at2(i, j) = 2.5f;
    auto res = kmeans_fit(pts, 2, 17);
    CHECK(res.inertia == Catch::Approx(0.0).margin(1e-12));
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < 3; ++j) CHECK(res.centroids.at2(c, j) == Catch::Approx(2.5f));
}

TEST_CASE("kmeans separates two far blobs") {
    Rng rng(61);
    Array<float> pts({40, 4});
    for (std::size_t i = 0; i < 40; ++i) {
        const float base = i < 20 ? 10.0f : -10.0f;
        pts.at2(i, 0) = base + static_cast<float>(rng.normal(0.0, 0.3));
        for (std::size_t j = 1; j < 4; ++j)
            pts.at2(i, j) = static_cast<float>(rng.normal(0.0, 0.3));
    }
    auto res = kmeans_fit(pts, 2, 62);
    // one centroid near (+10,0,0,0), the other near (-10,0,0,0)
    const bool c0_pos = res.centroids.at2(0, 0) > 0;
    const float pos = res.centroids.at2(c0_pos ? 0 : 1, 0);
    const float neg = res.centroids.at2(c0_pos ? 1 : 0, 0);
    CHECK(std::abs(pos - 10.0f) < 0.5f);
    CHECK(std::abs(neg + 10.0f) < 0.5f);
}

TEST_CASE("kmeans matches the exhaustive optimum on tiny instances") {
    Rng rng(63);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 6;
        Array<float> pts({n, 2});
        for (std::size_t i = 0; i < pts.size(); ++i)
            pts[i] = static_cast<float>(rng.uniform(-3.0, 3.0));
        auto res = kmeans_fit(pts, 2, 1000 + trial, 300, 1e-7, 10);
        const double brute = ts::kmeans2_brute_force(pts);
        CHECK(res.inertia == Catch::Approx(brute).margin(1e-6));
    }
}

TEST_CASE("kmeans invariants") {
    Rng rng(64);
    Array<float> pts({50, 5});
    for (std::size_t i = 0; i < pts.size(); ++i)
        pts[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    auto res = kmeans_fit(pts, 4, 65);

    SECTION("inertia trace is non-increasing") {
        for (std::size_t t = 1; t < res.inertia_trace.size(); ++t)
            CHECK(res.inertia_trace[t] <= res.inertia_trace[t - 1] + 1e-9);
    }

    SECTION("labels are exactly argmin squared distance to returned centroids") {
        for (std::size_t i = 0; i < 50; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::size_t c = 0; c < 4; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < 5; ++j) {
                    const double diff = pts.at2(i, j) - res.centroids.at2(c, j);
                    acc += diff * diff;
                }
                if (acc < best) {
                    best = acc;
                    best_c = static_cast<int>(c);
                }
            }
            CHECK(res.labels[i] == best_c);
        }
    }

    SECTION("N < k raises") {
        Array<float> tiny({2, 5}, 0.0f);
        CHECK_THROWS_AS(kmeans_fit(tiny, 3, 1), argument_error);
    }

    SECTION("deterministic under a fixed seed") {
        auto res2 = kmeans_fit(pts, 4, 65);
        CHECK(res.inertia == res2.inertia);
        CHECK(res.labels == res2.labels);
    }
}

TEST_CASE("elbow recovers planted cluster counts") {
    auto blobs = ts::make_blobs(40, 3, 16, 20.0, 0.5, Rng(66));
    auto res = elbow_select(blobs.points, 2, 8, 67);
    CHECK(res.knee_found);
    CHECK(res.selected_k == 3);
}

TEST_CASE("knee_from_curve handles a monotone linear curve") {
    std::vector<int> ks = {2, 3, 4, 5, 6};
    std::vector<double> inertias = {100.0, 80.0, 60.0, 40.0, 20.0};
    auto res = knee_from_curve(ks, inertias);
    CHECK_FALSE(res.knee_found);
    CHECK(res.selected_k == 2);
}

TEST_CASE("soft assignment") {
    PrototypeMatrix protos;
    protos.assignment_temperature = 1.0;

    SECTION("angle-equidistant latent gets the uniform assignment") {
        protos.prototypes = Array<float>({3, 3}, 0.0f);
        for (std::size_t c = 0; c < 3; ++c) protos.prototypes.at2(c, c) = 1.0f;
        Array<float> h({1, 3}, 1.0f); // equal cosine to each basis prototype
        auto s = soft_assign(h, protos);
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(s.at2(0, c) == Catch::Approx(1.0 / 3.0).margin(1e-6));
    }

    SECTION("similarities [1,0] at T=1 give [0.7311, 0.2689]") {
        protos.prototypes = Array<float>({2, 4}, 0.0f);
        protos.prototypes.at2(0, 0) = 1.0f; // cos(h, p0) = 1
        protos.prototypes.at2(1, 1) = 1.0f; // cos(h, p1) = 0
        Array<float> h({1, 4}, 0.0f);
        h.at2(0, 0) = 1.0f;
        auto s = soft_assign(h, protos);
        const double e = std::exp(1.0);
        CHECK(s.at2(0, 0) == Catch::Approx(e / (e + 1.0)).margin(1e-4));
        CHECK(s.at2(0, 1) == Catch::Approx(1.0 / (e + 1.0)).margin(1e-4));
    }

    SECTION("rows sum to one and T -> 0 sharpens to one-hot") {
        Rng rng(68);
        protos.prototypes = Array<float>({4, 8});
        for (std::size_t i = 0; i < protos.prototypes.size(); ++i)
            protos.prototypes[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
        Array<float> h({5, 8});
        for (std::size_t i = 0; i < h.size(); ++i)
            h[i] = static_cast<float>(rng.uniform(-1.0, 1.0));

        auto s = soft_assign(h, protos);
        for (std::size_t i = 0; i < 5; ++i) {
            double row = 0.0;
            for (std::size_t c = 0; c < 4; ++c) {
                row += s.at2(i, c);
                CHECK(s.at2(i, c) > 0.0f);
                CHECK(s.at2(i, c) < 1.0f);
            }
            CHECK(row == Catch::Approx(1.0).margin(1e-5));
        }

        protos.assignment_temperature = 1e-3;
        auto sharp = soft_assign(h, protos);
        for (std::size_t i = 0; i < 5; ++i) {
            float max_w = 0.0f;
            for (std::size_t c = 0; c < 4; ++c) max_w = std::max(max_w, sharp.at2(i, c));
            CHECK(max_w > 0.99f);
        }
    }
}

TEST_CASE("hard labels") {
    PrototypeMatrix protos;
    protos.prototypes = Array<float>({3, 4}, 0.0f);
    for (std::size_t c = 0; c < 3; ++c) protos.prototypes.at2(c, c) = 1.0f;

    SECTION("latent equal to a prototype maps to its index") {
        Array<float> h({1, 4}, 0.0f);
        h.at2(0, 2) = 1.0f;
        CHECK(hard_labels(h, protos) == std::vector<int>{2});
    }

    SECTION("equidistant ties break to the lowest index") {
        Array<float> h({1, 4}, 1.0f);
        CHECK(hard_labels(h, protos) == std::vector<int>{0});
    }

    SECTION("agrees with argmax of soft assignment and is scale invariant") {
        Rng rng(69);
        Array<float> h({20, 4});
        for (std::size_t i = 0; i < h.size(); ++i)
            h[i] = static_cast<float>(rng.uniform(-2.0, 2.0));
        auto hl = hard_labels(h, protos);
        for (double temp : {0.05, 0.5, 5.0}) {
            protos.assignment_temperature = temp;
            auto s = soft_assign(h, protos);
            for (std::size_t i = 0; i < 20; ++i) {
                int arg = 0;
                for (std::size_t c = 1; c < 3; ++c)
                    if (s.at2(i, c) > s.at2(i, arg)) arg = static_cast<int>(c);
                CHECK(arg == hl[i]);
            }
        }
        Array<float> scaled = h;
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= 123.0f;
        CHECK(hard_labels(scaled, protos) == hl);
    }
}
