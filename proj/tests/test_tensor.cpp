#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gqe/rng.hpp"
#include "gqe/tensor.hpp"

using namespace gqe;

TEST_CASE("matvec computes the standard product", "[tensor]") {
    Mat id3 = Mat::identity(3);
    Vec x{1.0, 2.0, 3.0};
    CHECK(matvec(id3, x) == x);

    Mat zero(3, 3);
    CHECK(matvec(zero, x) == Vec{0.0, 0.0, 0.0});

    Mat m(2, 2);
    m.at(0, 0) = 1; m.at(0, 1) = 2;
    m.at(1, 0) = 3; m.at(1, 1) = 4;
    CHECK(matvec(m, Vec{1.0, 1.0}) == Vec{3.0, 7.0});
}

TEST_CASE("matvec rejects mismatched shapes", "[tensor]") {
    Mat m(2, 3);
    CHECK_THROWS_AS(matvec(m, Vec{1.0, 2.0}), ShapeError);
}

TEST_CASE("matvec is linear", "[tensor]") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Mat m(4, 5);
        for (double& v : m.a) v = rng.uniform_range(-1.0, 1.0);
        Vec x(5), y(5);
        for (double& v : x) v = rng.uniform_range(-1.0, 1.0);
        for (double& v : y) v = rng.uniform_range(-1.0, 1.0);
        const double a = rng.uniform_range(-2.0, 2.0);
        const double b = rng.uniform_range(-2.0, 2.0);
        Vec lhs = matvec(m, add(scale(x, a), scale(y, b)));
        Vec rhs = add(scale(matvec(m, x), a), scale(matvec(m, y), b));
        for (std::size_t i = 0; i < lhs.size(); ++i)
            CHECK(std::fabs(lhs[i] - rhs[i]) < 1e-12);
    }
}

TEST_CASE("elementwise primitives", "[tensor]") {
    std::vector<Vec> ab{{1.0, 0.0, 1.0}, {1.0, 1.0, 0.0}};
    CHECK(min_across(ab) == Vec{1.0, 0.0, 0.0});

    std::vector<Vec> cd{{2.0, 0.0}, {0.0, 2.0}};
    CHECK(mean_across(cd) == Vec{1.0, 1.0});

    CHECK(relu(Vec{-1.0, 0.0, 2.0}) == Vec{0.0, 0.0, 2.0});
    CHECK(add(Vec{1.0, 2.0}, Vec{3.0, 4.0}) == Vec{4.0, 6.0});
    CHECK(scale(Vec{1.0, -2.0}, -3.0) == Vec{-3.0, 6.0});
}

TEST_CASE("reductions reject empty input and are permutation invariant", "[tensor]") {
    CHECK_THROWS_AS(min_across({}), ArgumentError);
    CHECK_THROWS_AS(mean_across({}), ArgumentError);

    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec> xs(3, Vec(6));
        for (Vec& v : xs)
            for (double& x : v) x = rng.uniform_range(-5.0, 5.0);
        std::vector<Vec> perm{xs[2], xs[0], xs[1]};
        CHECK(min_across(xs) == min_across(perm));
        CHECK(mean_across(xs) == mean_across(perm));
    }
}

TEST_CASE("cosine similarity", "[tensor]") {
    Vec x{0.3, -1.2, 4.0};
    CHECK(cosine(x, x) == Catch::Approx(1.0));
    CHECK(cosine(Vec{1.0, 0.0}, Vec{0.0, 1.0}) == 0.0);
    CHECK(cosine(Vec{1.0, 1.0}, Vec{1.0, 0.0}) == Catch::Approx(1.0 / std::sqrt(2.0)));
    CHECK_THROWS_AS(cosine(Vec{0.0, 0.0}, Vec{1.0, 0.0}), NumericError);

    // Always inside [-1, 1] up to rounding.
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        Vec a(4), b(4);
        for (double& v : a) v = rng.uniform_range(-3.0, 3.0);
        for (double& v : b) v = rng.uniform_range(-3.0, 3.0);
        if (norm(a) == 0.0 || norm(b) == 0.0) continue;
        const double c = cosine(a, b);
        CHECK(c >= -1.0 - 1e-12);
        CHECK(c <= 1.0 + 1e-12);
    }
}

TEST_CASE("deterministic rng streams", "[rng]") {
    Rng a = Rng::stream(42, "sampler", 3);
    Rng b = Rng::stream(42, "sampler", 3);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    // Distinct tags and indices give distinct streams.
    Rng c = Rng::stream(42, "sampler", 4);
    Rng d = Rng::stream(42, "train", 3);
    CHECK(Rng::stream(42, "sampler", 3).next_u64() != c.next_u64());
    CHECK(Rng::stream(42, "sampler", 3).next_u64() != d.next_u64());
}

TEST_CASE("uniform_int covers its range without bias at the edges", "[rng]") {
    Rng rng(99);
    int lo_seen = 0, hi_seen = 0;
    for (int i = 0; i < 10000; ++i) {
        const int v = static_cast<int>(rng.uniform_int(7));
        REQUIRE(v >= 0);
        REQUIRE(v <= 6);
        if (v == 0) ++lo_seen;
        if (v == 6) ++hi_seen;
    }
    CHECK(lo_seen > 1000);
    CHECK(hi_seen > 1000);
}

TEST_CASE("shuffle is a permutation", "[rng]") {
    Rng rng(5);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<int> orig = v;
    rng.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == orig);
}
