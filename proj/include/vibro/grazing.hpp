#pragma once

#include "vibro/variational.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vibro {

enum class ShootingMode {
    hybrid,  // intermediate impacts handled by the hybrid flow
    formal,  // the delimiter is ignored between the boundary impacts
};

struct ShootingOptions {
    int n_periods = 1;
    ShootingMode mode = ShootingMode::hybrid;
    double tol = 1e-10;
    int max_iter = 50;
    // Contacts within this fraction of a period before the closing impact are
    // attributed to the closing impact itself.
    double terminal_window = 1e-3;
    bool use_anchor = true;  // pin the tangential state to the system's anchor if it has one
};

// Reference impact at tau0 with post-impact state (0, v, tangential).
struct OrbitGuess {
    double tau0 = 0.0;
    double v = 0.0;
    Vec tangential;  // ignored for anchored systems
};

struct PeterkaType {
    int m = 0;  // impacts per minimal period
    int n = 0;  // minimal period in forcing periods
};

struct PeriodicOrbit {
    double mu = 0.0;
    double theta = 0.0;
    double tau0 = 0.0;
    Vec post_impact;    // z(tau0 + 0)
    Vec section_state;  // z(-theta) on the orbit
    int n_periods = 1;
    int impact_count = 0;  // intermediate impacts + the closing one
    std::vector<double> impact_times;     // intermediate impact times then tau0 + nT
    std::vector<double> incoming_speeds;  // Y of the same impacts
    double residual = 0.0;
    int iterations = 0;
    bool admissible = false;
    ShootingMode mode = ShootingMode::hybrid;
    bool anchored = false;
    PeterkaType peterka;
    Mat shooting_jacobian;
    double jacobian_det = 0.0;

    [[nodiscard]] double closing_speed() const { return incoming_speeds.back(); }
};

[[nodiscard]] PeriodicOrbit find_periodic_orbit(const VibroImpactSystem& sys, double mu, double theta,
                                                const OrbitGuess& guess, const ShootingOptions& opts,
                                                const IntegratorConfig& cfg);

// Shooting residual and Jacobian, exposed for diagnostics and oracles.
struct ShootingEvaluation {
    Vec unknowns;
    Vec residual;
    Mat jacobian;
    Vec param_derivative;  // dR/dmu
    int intermediate_impacts = 0;
    VariationalResult flow;
};
[[nodiscard]] ShootingEvaluation evaluate_shooting(const VibroImpactSystem& sys, double mu,
                                                   const Vec& unknowns, const ShootingOptions& opts,
                                                   const IntegratorConfig& cfg);

struct GrazingGuess {
    double mu = 0.0;
    double tau0 = 0.0;
    Vec tangential;  // ignored for anchored systems
};

struct GrazingOrbit {
    double mu_star = 0.0;
    double tau0 = 0.0;
    Vec contact_state;  // (0, 0, tangential) at tau0
    double phi0 = 0.0;  // f1 at the contact, must be positive
    int intermediate_impacts = 0;
    double residual = 0.0;
    int iterations = 0;
    bool anchored = false;
    Mat monodromy;  // dz(tau0 + T)/dz(tau0) along the orbit
};

[[nodiscard]] GrazingOrbit find_grazing_orbit(const VibroImpactSystem& sys, double theta,
                                              const GrazingGuess& guess, const ShootingOptions& opts,
                                              const IntegratorConfig& cfg);

struct StepControl {
    double initial = 1e-2;
    double min = 1e-7;
    double max = 1e-1;
    int max_points = 10000;
    // Family members whose closing speed drops below this end the run.
    double grazing_speed = 1e-9;
};

enum class ContinuationEventKind { impact_count_change, fold, grazing, admissibility_change, failure };

[[nodiscard]] const char* to_string(ContinuationEventKind kind) noexcept;

struct ContinuationEvent {
    ContinuationEventKind kind;
    double mu = 0.0;
    std::string detail;
};

struct ContinuationResult {
    std::vector<PeriodicOrbit> orbits;
    std::vector<ContinuationEvent> events;
};

// Natural-parameter continuation with secant prediction and step halving from
// orbit0.mu towards mu_end.
[[nodiscard]] ContinuationResult continue_family(const VibroImpactSystem& sys, double theta,
                                                 const PeriodicOrbit& orbit0, double mu_end,
                                                 const StepControl& step, const ShootingOptions& opts,
                                                 const IntegratorConfig& cfg);

// Members at mu_end + (mu0 - mu_end) 10^(-decades i / (n - 1)), each seeded by
// secant extrapolation from the previous two. Stops at the first failure.
[[nodiscard]] ContinuationResult approach_family(const VibroImpactSystem& sys, double theta, const PeriodicOrbit& orbit0,
                                                 double mu_end, double decades, int n, const ShootingOptions& opts,
                                                 const IntegratorConfig& cfg);

[[nodiscard]] PeterkaType peterka_type(const VibroImpactSystem& sys, const PeriodicOrbit& orbit,
                                       const IntegratorConfig& cfg);

// ---- classification of the grazing bifurcation ----

struct ClassifyOptions {
    double mu_bar = 1e-3;
    double theta_bar = 1e-2;
    int levels = 4;
    double degeneracy_tol = 1e-8;
    ShootingOptions shooting;
};

struct GrazingReport {
    std::string verdict;          // continuous, discontinuous, degenerate
    std::string ivanov_scenario;  // saddle-node, period-doubling
    std::string degeneracy_reason;
    double mu_star = 0.0;
    double phi0 = 0.0;
    int orientation = 1;  // side of mu_star carrying the impacting family
    Mat A;
    Vec B;
    Vec F0;
    Mat L_y;
    Mat L_x;
    double det_L_y = 0.0;
    double det_L_x = 0.0;
    double test7 = 0.0;   // [L_y^-1 B]_2, must be negative
    double test11 = 0.0;  // [L_x^-1 B]_1, positive for continuous grazing
    double test13 = 0.0;  // same scalar, negative for discontinuous grazing
    bool single_dof = false;
    double test8 = 0.0;         // b2
    double test12 = 0.0;        // a12 b2 det(A - E)
    double delta_y = 0.0;       // -a12 f01 (1 + 1/r)
    double delta_x = 0.0;       // -det(A - E) f01
    double a12 = 0.0;
    double a2_12 = 0.0;  // (A^2)_12
    bool cond16 = false;
    double b1 = 0.0;
    double extrapolation_change = 0.0;  // max relative change of the sign tests on a halved ladder
    bool reduced = false;  // tangential coordinates eliminated through the anchor
    Mat A_direct;  // monodromy of the grazing orbit itself
};

[[nodiscard]] GrazingReport classify_grazing(const VibroImpactSystem& sys, double theta,
                                             const GrazingOrbit& grazing, const ClassifyOptions& opts,
                                             const IntegratorConfig& cfg);

// Verdict logic on given A, B (no ladder), shared with the report.
[[nodiscard]] GrazingReport classify_from_matrices(const VibroImpactSystem& sys, const GrazingOrbit& grazing,
                                                   const Mat& A, const Vec& B, double degeneracy_tol,
                                                   bool reduced);

// ---- the separatrix of degenerate impacts near the fixed point ----

struct SurfaceSample {
    double y1 = 0.0;
    double gamma = 0.0;  // x1 on the surface
};

struct SurfaceFit {
    std::vector<SurfaceSample> samples;
    double fitted_exponent = 0.0;
    double fitted_coefficient = 0.0;     // least squares of gamma = c y1^2
    double reference_inverse_f1 = 0.0;   // 1 / f1(-theta, z, mu) at the reference point
    double residual_rms = 0.0;
};

// For each y1 <= 0 finds x1 such that the flight from (x1, y1, tangential) at
// t = -theta touches x1 = 0 tangentially. `reference_state` is the point where
// f1 is evaluated for the comparison coefficient.
[[nodiscard]] SurfaceFit fit_grazing_surface(const VibroImpactSystem& sys, double mu, double theta,
                                             const Vec& tangential, const std::vector<double>& y1_grid,
                                             const Vec& reference_state, const IntegratorConfig& cfg);

// Signed distance-like indicator: the first local minimum of x1 along the flight
// from (-theta, z) with the delimiter switched off. Zero on the surface.
[[nodiscard]] double first_flight_minimum(const VibroImpactSystem& sys, double mu, double theta,
                                          const Vec& z, const IntegratorConfig& cfg);

}  // namespace vibro
