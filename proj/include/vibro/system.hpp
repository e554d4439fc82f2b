#pragma once

#include "vibro/types.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>

namespace vibro {

// Accelerations f(t, z, mu) of the n-degree-of-freedom Newtonian system
// x_k'' = f_k(t, x, x', mu). Writes n values into `out`.
using AccelFn = std::function<void(double t, const Vec& z, double mu, Vec& out)>;
// n x 2n matrix df/dz.
using AccelJacobianFn = std::function<Mat(double t, const Vec& z, double mu)>;
// n-vector df/dmu.
using AccelParamFn = std::function<Vec(double t, const Vec& z, double mu)>;

// Prescribed motion of the tangential coordinates, used when they are decoupled
// from the impacting coordinate and the bifurcation parameter enters through them.
struct AnchorSample {
    Vec value;  // 2n - 2 tangential state
    Vec d_dt;
    Vec d_dmu;
};
using AnchorFn = std::function<AnchorSample(double t, double mu)>;

struct SystemDefinition {
    std::string name;
    int dof = 1;
    double period = 0.0;
    AccelFn accel;
    AccelJacobianFn accel_jacobian;  // optional, finite differences otherwise
    AccelParamFn accel_param;        // optional, finite differences otherwise
    std::function<double(double mu)> restitution;
    std::function<double(double mu)> restitution_derivative;  // optional
    ParamInterval mu_range;
    AnchorFn anchor;  // optional
    std::map<std::string, double> params;
};

class VibroImpactSystem {
public:
    explicit VibroImpactSystem(SystemDefinition def);

    [[nodiscard]] const std::string& name() const noexcept { return def_.name; }
    [[nodiscard]] int dof() const noexcept { return def_.dof; }
    [[nodiscard]] int dim() const noexcept { return 2 * def_.dof; }
    [[nodiscard]] double period() const noexcept { return def_.period; }
    [[nodiscard]] const ParamInterval& mu_range() const noexcept { return def_.mu_range; }
    [[nodiscard]] const std::map<std::string, double>& params() const noexcept {
        return def_.params;
    }
    [[nodiscard]] const SystemDefinition& definition() const noexcept { return def_; }

    [[nodiscard]] double restitution(double mu) const;
    [[nodiscard]] double restitution_derivative(double mu) const;

    void acceleration(double t, const Vec& z, double mu, Vec& out) const;
    [[nodiscard]] Vec acceleration(double t, const Vec& z, double mu) const;
    [[nodiscard]] double normal_acceleration(double t, const Vec& z, double mu) const;

    // First-order field F = (y1, f1, y2, f2, ...).
    void field(double t, const Vec& z, double mu, Vec& out) const;
    [[nodiscard]] Vec field(double t, const Vec& z, double mu) const;
    // 2n x 2n dF/dz.
    [[nodiscard]] Mat field_jacobian(double t, const Vec& z, double mu) const;
    // 2n-vector dF/dmu.
    [[nodiscard]] Vec field_param(double t, const Vec& z, double mu) const;

    [[nodiscard]] bool has_anchor() const noexcept { return static_cast<bool>(def_.anchor); }
    [[nodiscard]] AnchorSample anchor(double t, double mu) const;

private:
    SystemDefinition def_;
};

// Newtonian impact law: y1 -> -r y1 at x1 = 0, other coordinates unchanged.
// Requires x1 == 0 (within tol) and y1 <= tol.
[[nodiscard]] Vec apply_impact(const VibroImpactSystem& sys, double mu, const Vec& z_minus,
                               double tol = 1e-12);

// Constrained motion on x1 = y1 = 0; returns the full 2n field with zero normal part.
[[nodiscard]] Vec sliding_vector_field(const VibroImpactSystem& sys, double t, const Vec& z,
                                       double mu);

// True when the constraint is released: f1(t, 0, 0, z_tan) > 0 strictly.
[[nodiscard]] bool sliding_exit(const VibroImpactSystem& sys, double t, const Vec& z, double mu);

}  // namespace vibro
