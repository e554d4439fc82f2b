#include "fixtures.hpp"
#include "oracles.hpp"

#include "vibro/grazing.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace vibro;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

GrazingOrbit grazing_of(const VibroImpactSystem& sys, double mu_guess, double theta,
                        ShootingMode mode = ShootingMode::hybrid) {
    GrazingGuess gg;
    gg.mu = mu_guess;
    gg.tau0 = 0.0;
    ShootingOptions so;
    so.mode = mode;
    return find_grazing_orbit(sys, theta, gg, so, IntegratorConfig{});
}

}  // namespace

TEST_CASE("shooting residual jacobian matches differences", "[grazing]") {
    const auto p = fixture::reference_set();
    const auto sys = make_two_dof_system(p);
    const double b = 1.1 * two_dof::b_star(p);
    const auto orbit = fixture::two_dof_orbit(p, b, -1, 0.01);
    ShootingOptions so;
    const auto ev = evaluate_shooting(sys, b, [&] {
        Vec u(2);
        u << orbit.tau0, orbit.post_impact(1);
        return u;
    }(), so, IntegratorConfig{});
    CHECK(ev.residual.norm() < 1e-9);
    const Mat fd = oracle::fd_jacobian(
        [&](const Vec& u) { return evaluate_shooting(sys, b, u, so, IntegratorConfig{}).residual; }, ev.unknowns, 1e-6);
    CHECK(oracle::rel_err(ev.jacobian, fd) < 1e-5);
}

TEST_CASE("shooting lands on the admissible closed-form orbit", "[grazing]") {
    const auto p = fixture::reference_set();
    const double b = 1.1 * two_dof::b_star(p);
    const auto orbit = fixture::two_dof_orbit(p, b, -1, 0.01);
    CHECK(orbit.admissible);
    CHECK(orbit.anchored);
    CHECK(orbit.impact_count == 1);
    CHECK(orbit.peterka.m == 1);
    CHECK(orbit.peterka.n == 1);
    CHECK(orbit.residual < 1e-10);
    const auto fam = two_dof::periodic_family_11(p, b);
    double best = 1e300;
    for (const auto& o : fam) best = std::min(best, std::abs(o.Y0 - orbit.closing_speed()));
    CHECK(best < 1e-8);
}

TEST_CASE("grazing parameter of the two-dof system", "[grazing]") {
    const auto p = fixture::reference_set();
    const auto sys = make_two_dof_system(p);
    const double bs = two_dof::b_star(p);
    for (const auto& g : {grazing_of(sys, 0.99 * bs, 0.01), grazing_of(sys, 1.1 * bs, 0.01, ShootingMode::formal),
                          grazing_of(sys, 1.02 * bs, 0.01)}) {
        CHECK_THAT(g.mu_star, WithinAbs(bs, 1e-8));
        CHECK(g.phi0 > 0.0);
        CHECK(g.intermediate_impacts == 0);
        CHECK(std::abs(std::remainder(g.tau0, two_dof::period(p))) < 1e-6);
        CHECK(g.contact_state(0) == 0.0);
        CHECK(std::abs(g.contact_state(1)) < 1e-12);
    }
}

TEST_CASE("verdicts on the built-in systems", "[grazing]") {
    const auto p = fixture::reference_set();
    const auto two = make_two_dof_system(p);
    const auto g2 = grazing_of(two, 0.99 * two_dof::b_star(p), 0.01);
    const auto r2 = classify_grazing(two, 0.01, g2, ClassifyOptions{}, IntegratorConfig{});
    CHECK(r2.verdict == "continuous");
    CHECK(r2.reduced);
    CHECK(r2.test7 < 0.0);
    CHECK(r2.test11 > 0.0);
    CHECK(r2.test13 == r2.test11);

    const auto osc = make_remark2_system();
    const auto go = grazing_of(osc, 0.05, 0.01);
    const auto ro = classify_grazing(osc, 0.01, go, ClassifyOptions{}, IntegratorConfig{});
    CHECK(ro.verdict == "discontinuous");
    CHECK(ro.single_dof);
    CHECK((ro.test7 < 0.0) == (ro.test8 < 0.0));
    CHECK((ro.test11 > 0.0) == (ro.test12 < 0.0));
}

TEST_CASE("single-degree-of-freedom shortcuts on synthetic matrices", "[grazing]") {
    const auto osc = make_remark2_system();
    GrazingOrbit g;
    g.mu_star = 0.0;
    g.phi0 = 0.7;
    g.contact_state = Vec::Zero(2);
    struct Case {
        double a11, a12, a21, a22, b1, b2;
    };
    for (const Case c : {Case{0.5, 0.3, -0.2, 0.4, 0.0, -0.5}, Case{0.5, -0.3, 0.2, 0.4, 0.0, -0.5},
                         Case{-0.6, 0.8, -0.5, 0.1, 0.0, -0.2}, Case{0.3, 0.4, 0.1, 0.2, 0.0, 0.7}}) {
        Mat A(2, 2);
        A << c.a11, c.a12, c.a21, c.a22;
        Vec B(2);
        B << c.b1, c.b2;
        const auto rep = classify_from_matrices(osc, g, A, B, 1e-10, false);
        const double detAE = (A - Mat::Identity(2, 2)).determinant();
        CHECK_THAT(rep.test8, WithinAbs(c.b2, 1e-14));
        CHECK_THAT(rep.test12, WithinAbs(c.a12 * c.b2 * detAE, 1e-14));
        CHECK((rep.test7 < 0.0) == (rep.test8 < 0.0));
        CHECK((rep.test11 > 0.0) == (rep.test12 < 0.0));
        if (rep.test7 < 0.0) {
            CHECK(rep.verdict == (rep.test11 > 0.0 ? "continuous" : "discontinuous"));
        } else {
            CHECK(rep.verdict == "degenerate");
        }
    }
}

TEST_CASE("degenerate sign tests are reported", "[grazing]") {
    const auto osc = make_remark2_system();
    GrazingOrbit g;
    g.phi0 = 0.7;
    g.contact_state = Vec::Zero(2);
    Mat A(2, 2);
    A << 0.5, 0.0, -0.2, 0.4;  // a12 = 0 kills the second test
    Vec B(2);
    B << 0.0, -0.5;
    const auto rep = classify_from_matrices(osc, g, A, B, 1e-10, false);
    CHECK(rep.verdict == "degenerate");
    CHECK_FALSE(rep.degeneracy_reason.empty());
}

TEST_CASE("verdict does not depend on the scale of the parameter", "[grazing]") {
    const auto osc = make_remark2_system();
    const auto base = classify_grazing(osc, 0.01, grazing_of(osc, 0.05, 0.01), ClassifyOptions{}, IntegratorConfig{});
    for (double scale : {10.0, 0.1}) {
        const auto sys = oracle::rescaled(osc, scale);
        ClassifyOptions co;
        co.mu_bar *= scale;
        const auto rep = classify_grazing(sys, 0.01, grazing_of(sys, 0.05 * scale, 0.01), co, IntegratorConfig{});
        CHECK(rep.verdict == base.verdict);
        CHECK_THAT(rep.mu_star, WithinAbs(base.mu_star * scale, 1e-8 * scale));
        CHECK_THAT(rep.B(1), WithinRel(base.B(1) / scale, 1e-3));
    }
}

TEST_CASE("degenerate-impact surface is quadratic in the velocity", "[grazing]") {
    const auto osc = make_remark2_system();
    const double theta = 0.01;
    const double mu = 0.05;
    std::vector<double> grid;
    for (int i = 0; i < 9; ++i) grid.push_back(-1e-3 * std::pow(10.0, i / 8.0));
    const Vec tan(0);
    Vec ref = Vec::Zero(2);
    const auto fit = fit_grazing_surface(osc, mu, theta, tan, grid, ref, IntegratorConfig{});
    REQUIRE(fit.samples.size() == grid.size());
    CHECK_THAT(fit.fitted_exponent, WithinAbs(2.0, 0.02));
    // gamma = y1^2 / (2 f1) to leading order
    CHECK_THAT(fit.fitted_coefficient / fit.reference_inverse_f1, WithinAbs(0.5, 0.02));
    for (const auto& s : fit.samples) {
        CHECK(s.gamma > 0.0);
        CHECK(std::abs(first_flight_minimum(osc, mu, theta, (Vec(2) << s.gamma, s.y1).finished(), IntegratorConfig{})) <
              1e-10);
    }
}

TEST_CASE("continuation towards grazing", "[grazing]") {
    const auto p = fixture::reference_set();
    const auto sys = make_two_dof_system(p);
    const double bs = two_dof::b_star(p);
    const auto orbit = fixture::two_dof_orbit(p, 1.1 * bs, -1, 0.01);
    const auto fam = approach_family(sys, 0.01, orbit, bs, 2.0, 9, ShootingOptions{}, IntegratorConfig{});
    REQUIRE(fam.orbits.size() == 9);
    for (std::size_t i = 1; i < fam.orbits.size(); ++i) {
        CHECK(fam.orbits[i].closing_speed() < fam.orbits[i - 1].closing_speed());
        CHECK(fam.orbits[i].admissible);
    }
    CHECK_THAT(fam.orbits.back().mu - bs, WithinRel(0.1 * bs * 1e-2, 1e-9));
    CHECK_THROWS_AS(approach_family(sys, 0.01, orbit, bs, 2.0, 1, ShootingOptions{}, IntegratorConfig{}), VibroError);
}
