#pragma once

#include "vibro/grazing.hpp"
#include "vibro/two_dof.hpp"

#include <stdexcept>

namespace fixture {

inline vibro::TwoDofParams reference_set() { return vibro::TwoDofParams{}; }

inline vibro::TwoDofParams bend_set() {
    vibro::TwoDofParams p;
    p.p = 0.01;
    p.omega = 0.6896206887930604;
    return p;
}

inline vibro::ParamMap as_map(const vibro::TwoDofParams& p) {
    return {{"p", p.p}, {"q", p.q}, {"omega", p.omega}, {"a", p.a}, {"r", p.r}};
}

// Shooting seeded from the closed-form (1,1) orbit on the given branch.
inline vibro::PeriodicOrbit two_dof_orbit(const vibro::TwoDofParams& p, double b, int branch, double theta,
                                          const vibro::IntegratorConfig& cfg = {},
                                          vibro::ShootingMode mode = vibro::ShootingMode::hybrid) {
    const auto sys = vibro::make_two_dof_system(p);
    for (const auto& o : vibro::two_dof::periodic_family_11(p, b)) {
        if (o.branch != branch && o.branch != 0) continue;
        const vibro::Vec z = vibro::two_dof::orbit_state(p, b, o, o.t_impact);
        vibro::OrbitGuess g;
        g.tau0 = o.t_impact;
        g.v = z(1);
        vibro::ShootingOptions so;
        so.mode = mode;
        return vibro::find_periodic_orbit(sys, b, theta, g, so, cfg);
    }
    throw std::runtime_error("no closed-form orbit on that branch");
}

}  // namespace fixture
