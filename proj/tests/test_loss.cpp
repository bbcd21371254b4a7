#include <catch2/catch_amalgamated.hpp>

#include "contracluster/loss.hpp"
#include "contracluster/rng.hpp"

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace contracluster;
namespace ts = testsupport;

TEST_CASE("cosine similarity") {
    std::vector<float> v = {0.3f, -0.8f, 0.5f};
    std::vector<float> neg = {-0.3f, 0.8f, -0.5f};
    CHECK(cosine_sim(v, v) == Catch::Approx(1.0).margin(1e-9));
    CHECK(cosine_sim(v, neg) == Catch::Approx(-1.0).margin(1e-9));
    CHECK(cosine_sim({1.0f, 0.0f}, {0.0f, 1.0f}) == Catch::Approx(0.0).margin(1e-12));
    // zero vector guarded, no NaN
    CHECK(std::isfinite(cosine_sim({0.0f, 0.0f}, {1.0f, 0.0f})));
}

TEST_CASE("ntxent degenerate and hand-computed cases") {
    SECTION("B=1 has no negatives: loss is exactly 0 for any tau") {
        auto z1 = Tensor<float>::constant(Array<float>::from_data({1, 2}, {0.6f, -0.2f}));
        auto z2 = Tensor<float>::constant(Array<float>::from_data({1, 2}, {0.1f, 0.9f}));
        CHECK(ntxent(z1, z2, 0.5).item() == 0.0f);
        CHECK(ntxent(z1, z2, 3.0).item() == 0.0f);
    }

    SECTION("B=2 identical pairs, orthogonal cross-pairs, tau=1") {
        auto z1 = Tensor<double>::constant(Array<double>::from_data({2, 2}, {1, 0, 0, 1}));
        auto z2 = Tensor<double>::constant(Array<double>::from_data({2, 2}, {1, 0, 0, 1}));
        // each anchor: -log(e / (e + 2)) = 0.551444713932051
        const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
        CHECK(ntxent(z1, z2, 1.0).item() == Catch::Approx(expected).margin(1e-6));
    }

    SECTION("empty batch raises") {
        auto z = Tensor<float>::constant(Array<float>({0, 2}));
        CHECK_THROWS_AS(ntxent(z, z, 1.0), argument_error);
    }
}

TEST_CASE("ntxent matches the double-loop oracle on random batches") {
    Rng rng(51);
    for (std::size_t b : {2u, 3u, 5u, 8u}) {
        auto z1v = ts::random_array({b, 6}, rng, -2.0, 2.0);
        auto z2v = ts::random_array({b, 6}, rng, -2.0, 2.0);
        const double got = ntxent(Tensor<double>::constant(z1v),
                                  Tensor<double>::constant(z2v), 0.5)
                               .item();
        const double want = ts::ntxent_naive(z1v, z2v, 0.5);
        CHECK(std::abs(got - want) < 1e-6);
        CHECK(got >= 0.0);
    }
}

TEST_CASE("ntxent invariances") {
    Rng rng(52);
    const std::size_t b = 6;
    auto z1v = ts::random_array({b, 8}, rng);
    auto z2v = ts::random_array({b, 8}, rng);
    const double base = ntxent(Tensor<double>::constant(z1v),
                               Tensor<double>::constant(z2v), 0.7)
                            .item();

    SECTION("common permutation of the pairs leaves the mean unchanged") {
        auto perm = rng.permutation(b);
        Array<double> p1({b, 8}), p2({b, 8});
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t d = 0; d < 8; ++d) {
                p1.at2(i, d) = z1v.at2(perm[i], d);
                p2.at2(i, d) = z2v.at2(perm[i], d);
            }
        const double permuted = ntxent(Tensor<double>::constant(p1),
                                       Tensor<double>::constant(p2), 0.7)
                                    .item();
        CHECK(permuted == Catch::Approx(base).margin(1e-6));
    }

    SECTION("positive rescaling of all rows is a no-op (cosine similarity)") {
        Array<double> s1 = z1v, s2 = z2v;
        for (std::size_t i = 0; i < s1.size(); ++i) s1[i] *= 37.5;
        for (std::size_t i = 0; i < s2.size(); ++i) s2[i] *= 0.004;
        const double scaled = ntxent(Tensor<double>::constant(s1),
                                     Tensor<double>::constant(s2), 0.7)
                                  .item();
        CHECK(scaled == Catch::Approx(base).margin(1e-6));
    }
}

TEST_CASE("mse") {
    Rng rng(53);
    auto xv = ts::random_array({2, 1, 4, 4}, rng, 0.0, 1.0);

    SECTION("mse(x,x) = 0") {
        auto x = Tensor<double>::constant(xv);
        CHECK(mse(x, x).item() == 0.0);
    }

    SECTION("all-zero vs all-one is 1") {
        auto a = Tensor<float>::constant(Array<float>({3, 5}, 0.0f));
        auto b = Tensor<float>::constant(Array<float>({3, 5}, 1.0f));
        CHECK(mse(a, b).item() == Catch::Approx(1.0f));
    }

    SECTION("random pair matches the elementwise loop") {
        auto yv = ts::random_array({2, 1, 4, 4}, rng, 0.0, 1.0);
        const double got =
            mse(Tensor<double>::constant(xv), Tensor<double>::constant(yv)).item();
        CHECK(std::abs(got - ts::mse_naive(xv, yv)) < 1e-7);
    }

    SECTION("shape mismatch raises") {
        auto a = Tensor<float>::constant(Array<float>({3, 5}, 0.0f));
        auto b = Tensor<float>::constant(Array<float>({5, 3}, 0.0f));
        CHECK_THROWS_AS(mse(a, b), shape_error);
    }
}

TEST_CASE("combined objective") {
    LossConfig cfg; // tau 0.5, alpha 0.1
    auto z1 = Tensor<double>::constant(Array<double>::from_data({2, 2}, {1, 0, 0, 1}));
    auto z2 = Tensor<double>::constant(Array<double>::from_data({2, 2}, {1, 0, 0, 1}));

    SECTION("alpha 0 reduces to ntxent alone") {
        LossConfig c0 = cfg;
        c0.alpha = 0.0;
        Rng rng(54);
        auto x = Tensor<double>::constant(ts::random_array({2, 1, 3, 3}, rng, 0.0, 1.0));
        auto y = Tensor<double>::constant(ts::random_array({2, 1, 3, 3}, rng, 0.0, 1.0));
        CHECK(combined(z1, z2, x, y, x, y, c0).item() ==
              Catch::Approx(ntxent(z1, z2, c0.temperature).item()));
    }

    SECTION("perfect reconstruction reduces to ntxent alone") {
        Rng rng(55);
        auto x = Tensor<double>::constant(ts::random_array({2, 1, 3, 3}, rng, 0.0, 1.0));
        CHECK(combined(z1, z2, x, x, x, x, cfg).item() ==
              Catch::Approx(ntxent(z1, z2, cfg.temperature).item()));
    }

    SECTION("ntxent 0.5514 with recon sum 0.2 gives 0.5714 at alpha 0.1") {
        LossConfig c1;
        c1.temperature = 1.0;
        c1.alpha = 0.1;
        // mse(x1,y1) = 0.1, mse(x2,y2) = 0.1
        auto x = Tensor<double>::constant(Array<double>({1, 1, 2, 2}, 0.0));
        auto y = Tensor<double>::constant(Array<double>({1, 1, 2, 2}, std::sqrt(0.1)));
        const double got = combined(z1, z2, x, y, x, y, c1).item();
        CHECK(got == Catch::Approx(0.5714).margin(1e-4));
    }
}

TEST_CASE("loss gradients pass finite-difference checks") {
    Rng rng(56);

    SECTION("ntxent") {
        auto res = ts::gradcheck(
            {ts::random_array({3, 4}, rng), ts::random_array({3, 4}, rng)},
            [](const std::vector<Tensor<double>>& p) { return ntxent(p[0], p[1], 0.5); });
        CHECK(res.max_rel_error < 1e-4);
    }

    SECTION("combined") {
        LossConfig cfg;
        auto res = ts::gradcheck(
            {ts::random_array({2, 4}, rng), ts::random_array({2, 4}, rng),
             ts::random_array({2, 1, 3, 3}, rng, 0.0, 1.0),
             ts::random_array({2, 1, 3, 3}, rng, 0.0, 1.0)},
            [&cfg](const std::vector<Tensor<double>>& p) {
                return combined(p[0], p[1], p[2], p[3], p[2], p[3], cfg);
            });
        CHECK(res.max_rel_error < 1e-4);
    }
}
