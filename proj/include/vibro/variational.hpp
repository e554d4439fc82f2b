#pragma once

#include "vibro/integrator.hpp"

#include <vector>

namespace vibro {

struct SaltationMatrix {
    double t = 0.0;
    double normal_speed = 0.0;  // Y > 0
    Mat matrix;
    double det = 0.0;
    // d z(t + 0)/d mu at fixed z(t - 0), from a parameter dependent restitution.
    Vec param_jump;
};

// Jump of the linearised flow across a transversal impact at (t, z_pre), x1 = 0,
// y1 = -Y < 0. Requires Y above the chatter floor.
[[nodiscard]] SaltationMatrix saltation_matrix(const VibroImpactSystem& sys, double mu, double t,
                                               const Vec& z_pre, double velocity_floor = 1e-9);

// Fundamental matrix of the impact-free flow on [t0, t1].
[[nodiscard]] Mat smooth_variational(const VibroImpactSystem& sys, double mu, double t0, const Vec& z0,
                                     double t1, const IntegratorConfig& cfg);

struct VariationalResult {
    double t_begin = 0.0;
    double t_end = 0.0;
    Vec z_begin;
    Vec z_end;
    std::vector<Mat> smooth_factors;        // one per smooth arc
    std::vector<SaltationMatrix> saltations;  // one per reflection, between arcs
    Mat D;                                   // ordered product
    double det_D = 0.0;
    Vec param_sens;  // dz(t_end)/dmu at fixed z_begin
    std::vector<ImpactEvent> events;

    [[nodiscard]] std::vector<Mat> saltation_factors() const;
};

// Hybrid flow with its linearisation from (t0, z0) to t1. Contact detection stops
// after `contact_cutoff`. Throws non_differentiable on grazing, sliding or chatter.
[[nodiscard]] VariationalResult propagate_variational(const VibroImpactSystem& sys, double mu, double t0,
                                                      const Vec& z0, double t1, const IntegratorConfig& cfg,
                                                      double contact_cutoff = std::numeric_limits<double>::infinity());

// Stroboscopic map z(-theta) -> z(-theta + periods * T).
[[nodiscard]] Vec poincare_map(const VibroImpactSystem& sys, double mu, double theta, const Vec& z0,
                               const IntegratorConfig& cfg, int periods = 1);

[[nodiscard]] VariationalResult poincare_jacobian(const VibroImpactSystem& sys, double mu, double theta,
                                                  const Vec& z0, const IntegratorConfig& cfg, int periods = 1);

struct LyapunovResult {
    std::vector<double> exponents;  // per period, descending
    bool periodic = false;          // spectrum taken from the monodromy of a fixed point
    int periods = 0;
};

[[nodiscard]] LyapunovResult lyapunov_exponents(const VibroImpactSystem& sys, double mu, double theta,
                                                const Vec& z0, int n_periods, const IntegratorConfig& cfg);

}  // namespace vibro
