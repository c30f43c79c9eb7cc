#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flowcouple/data.hpp"
#include "flowcouple/flow.hpp"
#include "flowcouple/rng.hpp"

using namespace flowcouple;

namespace {

CoupledBatch seeded_batch(Eigen::Index n, uint64_t seed) {
    CoupledBatch b;
    const MoonsSample m = sample_moons(n, derive_seed(seed, "x1"));
    b.x0 = sample_eight_gaussians(n, derive_seed(seed, "x0"));
    b.x1 = m.points;
    b.cond = make_conditions(ConditionMode::Binary, m.points, &m.labels);
    return b;
}

}  // namespace

TEST_CASE("interpolate") {
    PointBatch x0(2, 2), x1(2, 2);
    x0 << 0, 0, 1, 1;
    x1 << 2, 4, -1, 3;

    SUBCASE("endpoints are bitwise exact") {
        CHECK(interpolate(x0, x1, 0.0) == x0);
        CHECK(interpolate(x0, x1, 1.0) == x1);
        Vector t0 = Vector::Zero(2), t1 = Vector::Ones(2);
        CHECK(interpolate(x0, x1, t0) == x0);
        CHECK(interpolate(x0, x1, t1) == x1);
    }

    SUBCASE("midpoint") {
        const PointBatch mid = interpolate(x0, x1, 0.5);
        CHECK(mid(0, 0) == 1.0);
        CHECK(mid(0, 1) == 2.0);
    }

    SUBCASE("t outside [0,1] rejected") {
        CHECK_THROWS_AS(interpolate(x0, x1, -0.1), std::invalid_argument);
        CHECK_THROWS_AS(interpolate(x0, x1, 1.1), std::invalid_argument);
        Vector bad(2);
        bad << 0.5, 1.5;
        CHECK_THROWS_AS(interpolate(x0, x1, bad), std::invalid_argument);
    }

    SUBCASE("shape mismatch rejected") {
        PointBatch x2(3, 2);
        x2.setZero();
        CHECK_THROWS_AS(interpolate(x0, x2, 0.5), std::invalid_argument);
    }
}

TEST_CASE("target_velocity") {
    PointBatch a(2, 2), b(2, 2);
    a << 1, 1, 0, 0;
    b << 4, 5, 0, 0;

    SUBCASE("examples") {
        const PointBatch u = target_velocity(a, b);
        CHECK(u(0, 0) == 3.0);
        CHECK(u(0, 1) == 4.0);
        CHECK(u.row(1).norm() == 0.0);
    }

    SUBCASE("antisymmetry") { CHECK(target_velocity(a, b) == -target_velocity(b, a)); }
}

TEST_CASE("make_training_batch") {
    const CoupledBatch coupled = seeded_batch(64, 5);

    SUBCASE("derived fields satisfy the interpolant identities exactly") {
        const FlowBatch fb = make_training_batch(coupled, 9);
        for (Eigen::Index i = 0; i < 64; ++i) {
            const double t = fb.t[i];
            REQUIRE(t >= 0.0);
            REQUIRE(t < 1.0);
            for (Eigen::Index k = 0; k < 2; ++k) {
                CHECK(fb.xt(i, k) == t * fb.x1(i, k) + (1.0 - t) * fb.x0(i, k));
                CHECK(fb.u(i, k) == fb.x1(i, k) - fb.x0(i, k));
            }
            // xt lies on the segment [x0, x1]
            const double split = (fb.xt.row(i) - fb.x0.row(i)).norm() +
                                 (fb.xt.row(i) - fb.x1.row(i)).norm();
            CHECK(split == doctest::Approx((fb.x1.row(i) - fb.x0.row(i)).norm()).epsilon(1e-12));
        }
    }

    SUBCASE("time draws are uniform") {
        const CoupledBatch big = seeded_batch(100000, 6);
        const FlowBatch fb = make_training_batch(big, 10);
        CHECK(fb.t.mean() == doctest::Approx(0.5).epsilon(0.01));
        CHECK(fb.t.minCoeff() >= 0.0);
        CHECK(fb.t.maxCoeff() < 1.0);
    }

    SUBCASE("same seed gives identical draws") {
        CHECK(make_training_batch(coupled, 11).t == make_training_batch(coupled, 11).t);
        CHECK(make_training_batch(coupled, 11).t != make_training_batch(coupled, 12).t);
    }

    SUBCASE("empty batch rejected") {
        CoupledBatch empty;
        empty.x0.resize(0, 2);
        empty.x1.resize(0, 2);
        empty.cond = ConditionBatch::none(0);
        CHECK_THROWS_AS(make_training_batch(empty, 1), std::invalid_argument);
    }
}
