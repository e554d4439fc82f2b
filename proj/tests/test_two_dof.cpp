#include "fixtures.hpp"

#include "vibro/two_dof.hpp"
#include "vibro/variational.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace vibro;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("grazing amplitude", "[two_dof]") {
    TwoDofParams p;
    p.p = 0.0;
    CHECK_THAT(two_dof::b_star(p), WithinAbs(7.0 / 9.0, 1e-15));
    p.p = 0.05;
    CHECK_THAT(two_dof::b_star(p), WithinAbs(0.78913, 1e-5));
    TwoDofParams p2 = p;
    p2.a = 2.0;
    CHECK_THAT(two_dof::b_star(p2), WithinRel(2.0 * two_dof::b_star(p), 1e-15));
    TwoDofParams bad;
    bad.q = 0.001;
    CHECK_THROWS_AS(two_dof::b_star(bad), VibroError);
}

TEST_CASE("vartheta root", "[two_dof]") {
    TwoDofParams p;
    p.p = 0.0;
    p.omega = 1.0;
    p.q = 1.0 / 16.0;  // omega0 T = pi / 2
    const double w0 = two_dof::omega0(p);
    CHECK_THAT(two_dof::solve_vartheta(p), WithinAbs(M_PI / (4.0 * w0), 1e-12));

    for (const auto& q : {fixture::reference_set(), fixture::bend_set()}) {
        const double v = two_dof::solve_vartheta(q);
        CHECK(v > 0.0);
        CHECK(v < M_PI / two_dof::omega0(q));
        CHECK(std::abs(two_dof::vartheta_residual(q, v)) < 1e-12);
    }

    TwoDofParams res;
    res.p = 0.0;
    res.omega = 1.0;
    res.q = 0.25;  // omega0 T = pi
    CHECK_THROWS_AS(two_dof::solve_vartheta(res), VibroError);
}

TEST_CASE("frequency window", "[two_dof]") {
    const auto w = two_dof::check_frequency_window(fixture::reference_set());
    CHECK(w.ok);
    REQUIRE(w.k.has_value());
    CHECK(*w.k == 1);
    CHECK_THAT(w.ratio, WithinAbs(1.3317, 1e-4));

    TwoDofParams p;
    p.p = 0.0;
    p.omega = 1.0;
    p.q = 1.0;
    CHECK_FALSE(two_dof::check_frequency_window(p).ok);
    p.q = 1.26 * 1.26;
    const auto w2 = two_dof::check_frequency_window(p);
    CHECK(w2.ok);
    CHECK(w2.k == 1);
}

TEST_CASE("family of (1,1) orbits", "[two_dof]") {
    const auto p = fixture::reference_set();
    const double bs = two_dof::b_star(p);
    // solvability B^2 (1 + D^2) >= A^2 holds below b* too; those roots are not admissible
    const auto coef = two_dof::coefficients(p, bs);
    const double b_eq = bs / std::sqrt(1.0 + coef.D * coef.D);
    CHECK(two_dof::periodic_family_11(p, b_eq * (1.0 - 1e-6)).empty());
    const auto tangent = two_dof::periodic_family_11(p, b_eq);
    CHECK(tangent.size() == 1);
    CHECK(tangent[0].branch == 0);
    const auto below = two_dof::periodic_family_11(p, 0.9 * bs);
    CHECK(below.size() == 2);
    for (const auto& o : below) CHECK_FALSE(o.admissible);
    for (const auto& o : two_dof::periodic_family_11(p, 1.01 * bs)) CHECK(o.admissible == (o.branch == -1));

    const auto two = two_dof::periodic_family_11(p, 1.1 * bs);
    REQUIRE(two.size() == 2);
    CHECK(two[0].branch == -two[1].branch);
    for (const auto& o : two) {
        CHECK(o.residual < 1e-10);
        CHECK(o.vartheta > 0.0);
        CHECK(o.vartheta < M_PI / two_dof::omega0(p));
        CHECK(two_dof::boundary_residual(p, 1.1 * bs, o).norm() < 1e-10);
    }

    // the admissible branch slows down towards b*, the other keeps a reversed speed
    for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
        const auto f = two_dof::periodic_family_11(p, bs * (1.0 + eps));
        REQUIRE(f.size() == 2);
        for (const auto& o : f) {
            if (o.branch == -1) {
                CHECK(o.Y0 > 0.0);
                CHECK(o.Y0 < 5.0 * eps);
            } else {
                CHECK(o.Y0 < -1.0);
            }
        }
    }
}

TEST_CASE("steady response at b* touches the wall once", "[two_dof]") {
    const auto p = fixture::reference_set();
    const double bs = two_dof::b_star(p);
    const double T = two_dof::period(p);
    const int n = 10000;
    double lo = 1e300;
    double far_min = 1e300;
    for (int i = 0; i < n; ++i) {
        const double t = T * i / n;
        const double x = two_dof::steady_response(p, bs, t);
        lo = std::min(lo, x);
        if (std::abs(std::remainder(t, T)) > 0.05) far_min = std::min(far_min, x);
    }
    CHECK(lo > -1e-12);
    // the phase puts the single touching point at t = 0
    CHECK(far_min > 1e-4);
    CHECK(std::abs(two_dof::steady_response(p, bs, 0.0)) < 1e-12);
}

TEST_CASE("closed-form monodromy", "[two_dof]") {
    TwoDofParams p0;
    p0.p = 0.0;
    const auto m0 = two_dof::closed_form_monodromy(p0);
    CHECK_THAT(m0.det, WithinAbs(1.0, 1e-15));
    CHECK_THAT(m0.trace, WithinAbs(2.0 * std::cos(two_dof::omega0(p0) * two_dof::period(p0)), 1e-14));

    const auto p = fixture::reference_set();
    const auto m = two_dof::closed_form_monodromy(p);
    CHECK_THAT(m.det, WithinRel(std::exp(-2.0 * p.p * two_dof::period(p)), 1e-15));

    IntegratorConfig cfg;
    cfg.rel_tol = 1e-12;
    cfg.abs_tol = 1e-14;
    const auto sys = make_two_dof_system(p);
    Vec z0(4);
    z0 << 3.0, 0.0, 2.0, 0.0;
    const Mat phi = smooth_variational(sys, 0.8, 0.0, z0, two_dof::period(p), cfg);
    const Mat blk = phi.topLeftCorner(2, 2);
    CHECK_THAT(blk.trace(), WithinAbs(m.trace, 1e-8));
    CHECK_THAT(blk.determinant(), WithinAbs(m.det, 1e-8));
}

TEST_CASE("shooting reproduces the closed-form orbits", "[two_dof]") {
    const auto p = fixture::reference_set();
    const double b = 1.1 * two_dof::b_star(p);
    for (const auto& cf : two_dof::periodic_family_11(p, b)) {
        const auto mode = cf.admissible ? ShootingMode::hybrid : ShootingMode::formal;
        const auto orbit = fixture::two_dof_orbit(p, b, cf.branch, 0.01, {}, mode);
        const auto back = two_dof::orbit_from_impact(p, b, orbit.tau0, orbit.post_impact(1));
        CHECK(std::abs(back.C1 - cf.C1) < 1e-6);
        CHECK(std::abs(back.vartheta - cf.vartheta) < 1e-6);
        const double T = two_dof::period(p);
        const double dt = std::remainder(back.tau0 - cf.tau0, T);
        CHECK(std::abs(dt) < 1e-6);
        CHECK(orbit.admissible == cf.admissible);
    }
}
