#pragma once

#include "vibro/builtin_systems.hpp"

#include <optional>
#include <vector>

// Closed-form analysis of the two-degree-of-freedom system
//   x1'' + 2p x1' + q x1 = x2,   x2 = a/omega^2 + b sin(omega t + phase).
// Shifted time tau = t + (phase - delta)/omega, where delta is the phase lag of
// the steady response, so that x1*(tau) = A + B sin(omega tau).
namespace vibro::two_dof {

[[nodiscard]] double omega0(const TwoDofParams& p);
[[nodiscard]] double period(const TwoDofParams& p);
// sqrt(4 p^2 omega^2 + (q - omega^2)^2)
[[nodiscard]] double response_scale(const TwoDofParams& p);
// Phase lag of the steady response, atan2(2 p omega, q - omega^2).
[[nodiscard]] double phase_lag(const TwoDofParams& p);
// Offset such that tau = t + shift.
[[nodiscard]] double tau_shift(const TwoDofParams& p);

[[nodiscard]] double b_star(const TwoDofParams& p);
[[nodiscard]] double steady_response(const TwoDofParams& p, double b, double t);

// Unique root of cot(omega0 v) = (exp(p T) - cos(omega0 T)) / sin(omega0 T) in (0, pi/omega0).
[[nodiscard]] double solve_vartheta(const TwoDofParams& p);
[[nodiscard]] double vartheta_residual(const TwoDofParams& p, double vartheta);

struct Coefficients {
    double A = 0.0;
    double B = 0.0;
    double H = 0.0;
    double D = 0.0;
    double vartheta = 0.0;
};
[[nodiscard]] Coefficients coefficients(const TwoDofParams& p, double b);

struct ClosedFormOrbit {
    double C1 = 0.0;
    double vartheta = 0.0;
    double tau0 = 0.0;      // shifted impact time in [0, T)
    double t_impact = 0.0;  // original time of the impact
    int branch = 0;         // +1 / -1 for the two roots, 0 for the tangent one
    double Y0 = 0.0;        // incoming normal speed at the impact
    bool admissible = false;  // x1 > 0 between impacts and Y0 > 0
    double residual = 0.0;  // max residual of the three boundary equations
};

// (1,1) orbits as solutions of the boundary problem with the wall constraint
// dropped; `admissible` reports whether the positivity constraint also holds.
[[nodiscard]] std::vector<ClosedFormOrbit> periodic_family_11(const TwoDofParams& p, double b);

// Residuals of the three boundary equations at (C1, vartheta, tau0).
[[nodiscard]] Eigen::Vector3d boundary_residual(const TwoDofParams& p, double b, const ClosedFormOrbit& o);

// Full state (x1, y1, x2, y2) on the orbit at original time t in [t_impact, t_impact + T].
[[nodiscard]] Vec orbit_state(const TwoDofParams& p, double b, const ClosedFormOrbit& o, double t);

// Recover (C1, vartheta, tau0) from an impact time and the post-impact normal velocity.
[[nodiscard]] ClosedFormOrbit orbit_from_impact(const TwoDofParams& p, double b, double t_impact,
                                                double v_post);

struct Monodromy {
    double trace = 0.0;
    double det = 0.0;
};
[[nodiscard]] Monodromy closed_form_monodromy(const TwoDofParams& p);

struct FrequencyWindow {
    bool ok = false;
    std::optional<int> k;
    double ratio = 0.0;
};
[[nodiscard]] FrequencyWindow check_frequency_window(const TwoDofParams& p);

}  // namespace vibro::two_dof
