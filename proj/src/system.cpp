#include "vibro/system.hpp"

#include <cmath>

namespace vibro {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid-argument";
        case ErrorKind::integration_failure: return "integration-failure";
        case ErrorKind::crossing_in_free_flight: return "crossing-in-free-flight";
        case ErrorKind::section_collision: return "section-collision";
        case ErrorKind::non_differentiable: return "non-differentiable";
        case ErrorKind::not_converged: return "not-converged";
        case ErrorKind::singular_jacobian: return "singular-jacobian";
        case ErrorKind::impact_structure_changed: return "impact-structure-changed";
        case ErrorKind::no_grazing_contact: return "no-grazing-contact";
        case ErrorKind::degenerate: return "degenerate";
    }
    return "unknown";
}

VibroImpactSystem::VibroImpactSystem(SystemDefinition def) : def_(std::move(def)) {
    if (def_.dof < 1) {
        throw VibroError(ErrorKind::invalid_argument, "system must have at least one degree of freedom");
    }
    if (!(def_.period > 0.0)) {
        throw VibroError(ErrorKind::invalid_argument, "system period must be positive");
    }
    if (!def_.accel) {
        throw VibroError(ErrorKind::invalid_argument, "system needs an acceleration function");
    }
    if (!def_.restitution) {
        throw VibroError(ErrorKind::invalid_argument, "system needs a restitution function");
    }
}

double VibroImpactSystem::restitution(double mu) const {
    const double r = def_.restitution(mu);
    if (!(r > 0.0 && r <= 1.0)) {
        throw VibroError(ErrorKind::invalid_argument, "restitution coefficient must lie in (0, 1]");
    }
    return r;
}

double VibroImpactSystem::restitution_derivative(double mu) const {
    if (def_.restitution_derivative) return def_.restitution_derivative(mu);
    const double h = 1e-6 * std::max(1.0, std::abs(mu));
    return (def_.restitution(mu + h) - def_.restitution(mu - h)) / (2.0 * h);
}

void VibroImpactSystem::acceleration(double t, const Vec& z, double mu, Vec& out) const {
    out.resize(def_.dof);
    def_.accel(t, z, mu, out);
}

Vec VibroImpactSystem::acceleration(double t, const Vec& z, double mu) const {
    Vec out(def_.dof);
    def_.accel(t, z, mu, out);
    return out;
}

double VibroImpactSystem::normal_acceleration(double t, const Vec& z, double mu) const {
    Vec out(def_.dof);
    def_.accel(t, z, mu, out);
    return out(0);
}

void VibroImpactSystem::field(double t, const Vec& z, double mu, Vec& out) const {
    const int n = def_.dof;
    Vec acc(n);
    def_.accel(t, z, mu, acc);
    out.resize(2 * n);
    for (int k = 0; k < n; ++k) {
        out(2 * k) = z(2 * k + 1);
        out(2 * k + 1) = acc(k);
    }
}

Vec VibroImpactSystem::field(double t, const Vec& z, double mu) const {
    Vec out;
    field(t, z, mu, out);
    return out;
}

Mat VibroImpactSystem::field_jacobian(double t, const Vec& z, double mu) const {
    const int n = def_.dof;
    Mat df;
    if (def_.accel_jacobian) {
        df = def_.accel_jacobian(t, z, mu);
    } else {
        df.resize(n, 2 * n);
        Vec zp = z, zm = z, ap(n), am(n);
        for (int j = 0; j < 2 * n; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(z(j)));
            zp(j) = z(j) + h;
            zm(j) = z(j) - h;
            def_.accel(t, zp, mu, ap);
            def_.accel(t, zm, mu, am);
            df.col(j) = (ap - am) / (2.0 * h);
            zp(j) = zm(j) = z(j);
        }
    }
    Mat J = Mat::Zero(2 * n, 2 * n);
    for (int k = 0; k < n; ++k) {
        J(2 * k, 2 * k + 1) = 1.0;
        J.row(2 * k + 1) = df.row(k);
    }
    return J;
}

Vec VibroImpactSystem::field_param(double t, const Vec& z, double mu) const {
    const int n = def_.dof;
    Vec dfm;
    if (def_.accel_param) {
        dfm = def_.accel_param(t, z, mu);
    } else {
        const double h = 1e-6 * std::max(1.0, std::abs(mu));
        Vec ap(n), am(n);
        def_.accel(t, z, mu + h, ap);
        def_.accel(t, z, mu - h, am);
        dfm = (ap - am) / (2.0 * h);
    }
    Vec out = Vec::Zero(2 * n);
    for (int k = 0; k < n; ++k) out(2 * k + 1) = dfm(k);
    return out;
}

AnchorSample VibroImpactSystem::anchor(double t, double mu) const {
    if (!def_.anchor) {
        throw VibroError(ErrorKind::invalid_argument, "system " + def_.name + " has no tangential anchor");
    }
    return def_.anchor(t, mu);
}

Vec apply_impact(const VibroImpactSystem& sys, double mu, const Vec& z_minus, double tol) {
    if (std::abs(z_minus(0)) > tol) {
        throw VibroError(ErrorKind::invalid_argument, "impact requested away from the delimiter x1 = 0");
    }
    if (z_minus(1) > tol) {
        throw VibroError(ErrorKind::invalid_argument, "impact requested with outgoing normal velocity");
    }
    Vec z_plus = z_minus;
    z_plus(0) = 0.0;
    z_plus(1) = -sys.restitution(mu) * z_minus(1);
    return z_plus;
}

Vec sliding_vector_field(const VibroImpactSystem& sys, double t, const Vec& z, double mu) {
    Vec zc = z;
    zc(0) = 0.0;
    zc(1) = 0.0;
    Vec F = sys.field(t, zc, mu);
    F(0) = 0.0;
    F(1) = 0.0;
    return F;
}

bool sliding_exit(const VibroImpactSystem& sys, double t, const Vec& z, double mu) {
    Vec zc = z;
    zc(0) = 0.0;
    zc(1) = 0.0;
    return sys.normal_acceleration(t, zc, mu) > 0.0;
}

}  // namespace vibro
