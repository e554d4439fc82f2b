#include "fixtures.hpp"
#include "oracles.hpp"

#include "vibro/builtin_systems.hpp"
#include "vibro/variational.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace vibro;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

IntegratorConfig tight() {
    IntegratorConfig c;
    c.rel_tol = 1e-13;
    c.abs_tol = 1e-15;
    c.event_tol = 1e-14;
    return c;
}

ImpactEvent first_reflection(const VibroImpactSystem& sys, double mu, const Vec& z0) {
    const auto traj = simulate_hybrid(sys, mu, 0.0, z0, 40.0, tight());
    for (const auto& ev : traj.events) {
        if (ev.kind == EventKind::reflection) return ev;
    }
    throw std::runtime_error("no reflection");
}

}  // namespace

TEST_CASE("saltation determinant is r squared and matches differences", "[variational]") {
    for (double r : {0.5, 0.8, 1.0}) {
        Remark2Params rp;
        rp.r = r;
        TwoDofParams tp;
        tp.r = r;
        const VibroImpactSystem r2 = make_remark2_system(rp);
        const VibroImpactSystem td = make_two_dof_system(tp);
        Vec z_r2(2);
        z_r2 << 0.5, -0.3;
        Vec z_td(4);
        z_td << 0.4, -0.5, 0.9, 0.2;
        for (auto [sys, mu, z0] : {std::tuple{&r2, 10.0, z_r2}, std::tuple{&td, 0.8, z_td}}) {
            const ImpactEvent ev = first_reflection(*sys, mu, z0);
            const SaltationMatrix S = saltation_matrix(*sys, mu, ev.t, ev.pre);
            CHECK_THAT(S.det, WithinAbs(r * r, 1e-10));
            CHECK_THAT(S.matrix.determinant(), WithinAbs(r * r, 1e-10));
            CHECK(S.matrix(0, 0) == -r);
            CHECK(S.matrix(1, 1) == -r);
            CHECK(S.matrix(0, 1) == 0.0);
            const Mat fd = oracle::across_impact_fd(*sys, mu, ev.t, ev.pre, ev.post, 1e-2, tight());
            CHECK(oracle::rel_err(S.matrix, fd) < 1e-5);
        }
    }
}

TEST_CASE("saltation rejects slow impacts", "[variational]") {
    const auto sys = make_remark2_system();
    Vec z(2);
    z << 0.0, -1e-12;
    CHECK_THROWS_AS(saltation_matrix(sys, 10.0, 0.0, z), VibroError);
}

TEST_CASE("smooth fundamental matrix matches differences of the flow", "[variational]") {
    const auto sys = make_two_dof_system();
    Vec z0(4);
    z0 << 2.0, 0.1, 1.5, -0.2;
    const Mat phi = smooth_variational(sys, 0.8, 0.3, z0, 1.3, tight());
    const Mat fd = oracle::fd_jacobian([&](const Vec& z) { return oracle::formal_flow(sys, 0.8, 0.3, z, 1.3); }, z0, 1e-5);
    CHECK(oracle::rel_err(phi, fd) < 1e-8);
    // Liouville: trace of the field jacobian is -2p
    CHECK_THAT(phi.determinant(), WithinRel(std::exp(-2.0 * 0.05 * 1.0), 1e-10));
}

TEST_CASE("Poincare jacobian of the reference orbit", "[variational]") {
    const auto p = fixture::reference_set();
    const double b = 1.1 * two_dof::b_star(p);
    const double theta = 0.01;
    const auto sys = make_two_dof_system(p);
    const auto orbit = fixture::two_dof_orbit(p, b, -1, theta);
    REQUIRE(orbit.admissible);
    const auto vr = poincare_jacobian(sys, b, theta, orbit.section_state, IntegratorConfig{});
    REQUIRE(vr.saltations.size() == 1);
    REQUIRE(vr.smooth_factors.size() == 2);
    CHECK((vr.z_end - orbit.section_state).norm() < 1e-8);

    const Mat fd = oracle::fd_jacobian(
        [&](const Vec& z) { return poincare_map(sys, b, theta, z, tight()); }, orbit.section_state, 1e-6);
    CHECK(oracle::rel_err(vr.D, fd) < 1e-5);

    const double T = two_dof::period(p);
    CHECK_THAT(vr.det_D, WithinRel(std::exp(-2.0 * p.p * T) * p.r * p.r, 1e-8));
    CHECK_THAT(vr.D.determinant(), WithinRel(vr.det_D, 1e-8));

    const Vec dmu = (poincare_map(sys, b + 1e-6, theta, orbit.section_state, tight()) -
                     poincare_map(sys, b - 1e-6, theta, orbit.section_state, tight())) / 2e-6;
    // b only enters through the tangential initial state, which is held fixed here
    CHECK((vr.param_sens - dmu).norm() < 1e-8);

    const Mat prod = vr.smooth_factors[1] * vr.saltations[0].matrix * vr.smooth_factors[0];
    CHECK(oracle::rel_err(prod, vr.D) < 1e-12);
}

TEST_CASE("Lyapunov spectrum sums to the volume contraction", "[variational]") {
    const auto p = fixture::reference_set();
    const double b = 1.1 * two_dof::b_star(p);
    const auto sys = make_two_dof_system(p);
    const auto orbit = fixture::two_dof_orbit(p, b, -1, 0.01);
    const auto ly = lyapunov_exponents(sys, b, 0.01, orbit.section_state, 20, IntegratorConfig{});
    REQUIRE(ly.exponents.size() == 4);
    double sum = 0.0;
    for (double e : ly.exponents) sum += e;
    CHECK_THAT(sum, WithinAbs(-2.0 * p.p * two_dof::period(p) + 2.0 * std::log(p.r), 1e-6));
    for (std::size_t i = 1; i < ly.exponents.size(); ++i) CHECK(ly.exponents[i] <= ly.exponents[i - 1] + 1e-12);
}

TEST_CASE("propagation through sliding is not differentiable", "[variational]") {
    SystemDefinition d;
    d.name = "ball";
    d.dof = 1;
    d.period = 100.0;
    d.accel = [](double, const Vec&, double, Vec& o) { o(0) = -1.0; };
    d.restitution = [](double) { return 0.5; };
    const VibroImpactSystem ball(d);
    Vec z(2);
    z << 1.0, 0.0;
    CHECK_THROWS_AS(propagate_variational(ball, 0.0, 0.0, z, 20.0, IntegratorConfig{}), VibroError);
}
