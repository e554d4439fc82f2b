#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include "vibro/integrator.hpp"
#include "vibro/system.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using vibro::Mat;
using vibro::Vec;

// Central differences of a vector map.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h) {
    const Vec f0 = f(x);
    Mat J(f0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        Vec xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        J.col(j) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return J;
}

// Flow with the delimiter ignored: classical RK4, either time direction.
inline Vec formal_flow(const vibro::VibroImpactSystem& sys, double mu, double t0, const Vec& z0, double t1,
                       double h_max = 1e-3) {
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(t1 - t0) / h_max)));
    const double h = (t1 - t0) / n;
    Vec z = z0;
    double t = t0;
    for (int i = 0; i < n; ++i) {
        const Vec k1 = sys.field(t, z, mu);
        const Vec k2 = sys.field(t + 0.5 * h, z + 0.5 * h * k1, mu);
        const Vec k3 = sys.field(t + 0.5 * h, z + 0.5 * h * k2, mu);
        const Vec k4 = sys.field(t + h, z + h * k3, mu);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = t0 + (i + 1) * h;
    }
    return z;
}

inline Vec hybrid_flow(const vibro::VibroImpactSystem& sys, double mu, double t0, const Vec& z0, double t1,
                       const vibro::IntegratorConfig& cfg) {
    vibro::HybridOptions ho;
    ho.keep_dense = false;
    return vibro::simulate_hybrid(sys, mu, t0, z0, t1, cfg, ho).z_end;
}

// Jacobian across the impact at (t, pre) from differences of the hybrid flow on
// [t - s, t + s]; the smooth flows on either side are differenced too and divided out.
inline Mat across_impact_fd(const vibro::VibroImpactSystem& sys, double mu, double t, const Vec& pre,
                            const Vec& post, double s, const vibro::IntegratorConfig& cfg, double d = 1e-5) {
    const double hs = s / 64.0;
    const Vec za = formal_flow(sys, mu, t, pre, t - s, hs);
    const Mat J = fd_jacobian([&](const Vec& z) { return hybrid_flow(sys, mu, t - s, z, t + s, cfg); }, za, d);
    const Mat before = fd_jacobian([&](const Vec& z) { return formal_flow(sys, mu, t - s, z, t, hs); }, za, d);
    const Mat after = fd_jacobian([&](const Vec& z) { return formal_flow(sys, mu, t, z, t + s, hs); }, post, d);
    return after.inverse() * J * before.inverse();
}

inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / b.norm(); }

// Least-squares slope of log y against log x.
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// System with the parameter rescaled: mu' = scale * mu.
inline vibro::VibroImpactSystem rescaled(const vibro::VibroImpactSystem& sys, double scale) {
    const vibro::SystemDefinition& d0 = sys.definition();
    vibro::SystemDefinition d = d0;
    d.name = d0.name + "-rescaled";
    d.accel = [d0, scale](double t, const Vec& z, double mu, Vec& out) { d0.accel(t, z, mu / scale, out); };
    d.accel_jacobian = nullptr;
    d.accel_param = nullptr;
    if (d0.accel_jacobian) {
        d.accel_jacobian = [d0, scale](double t, const Vec& z, double mu) { return d0.accel_jacobian(t, z, mu / scale); };
    }
    if (d0.accel_param) {
        d.accel_param = [d0, scale](double t, const Vec& z, double mu) { return Vec(d0.accel_param(t, z, mu / scale) / scale); };
    }
    d.restitution = [d0, scale](double mu) { return d0.restitution(mu / scale); };
    d.restitution_derivative = nullptr;
    if (d0.restitution_derivative) {
        d.restitution_derivative = [d0, scale](double mu) { return d0.restitution_derivative(mu / scale) / scale; };
    }
    d.mu_range = {d0.mu_range.lo * scale, d0.mu_range.hi * scale};
    if (scale < 0.0) std::swap(d.mu_range.lo, d.mu_range.hi);
    if (d0.anchor) {
        d.anchor = [d0, scale](double t, double mu) {
            vibro::AnchorSample a = d0.anchor(t, mu / scale);
            a.d_dmu /= scale;
            return a;
        };
    }
    return vibro::VibroImpactSystem(d);
}

}  // namespace oracle
