#include "vibro/builtin_systems.hpp"

#include <cmath>
#include <numbers>

namespace vibro {

namespace {

void assign(const ParamMap& values, const std::string& system,
            const std::map<std::string, double*>& slots) {
    for (const auto& [key, value] : values) {
        auto it = slots.find(key);
        if (it == slots.end()) {
            throw VibroError(ErrorKind::invalid_argument,
                             "unknown parameter '" + key + "' for system " + system);
        }
        *it->second = value;
    }
}

}  // namespace

double TwoDofParams::resolved_phase() const {
    if (phase_set) return phase;
    const double delta = std::atan2(2.0 * p * omega, q - omega * omega);
    return delta - std::numbers::pi / 2.0;
}

VibroImpactSystem make_remark2_system(const Remark2Params& p) {
    if (!(p.omega > 0.0)) throw VibroError(ErrorKind::invalid_argument, "omega must be positive");
    SystemDefinition def;
    def.name = "remark2";
    def.dof = 1;
    def.period = 2.0 * std::numbers::pi / p.omega;
    def.accel = [p](double t, const Vec& z, double mu, Vec& out) {
        out(0) = -p.k * (z(0) - (p.gap - mu)) - p.c * z(1) + p.F * std::sin(p.omega * t);
    };
    def.accel_jacobian = [p](double, const Vec&, double) {
        Mat J(1, 2);
        J << -p.k, -p.c;
        return J;
    };
    def.accel_param = [p](double, const Vec&, double) {
        Vec d(1);
        d << -p.k;
        return d;
    };
    const double r = p.r;
    def.restitution = [r](double) { return r; };
    def.restitution_derivative = [](double) { return 0.0; };
    def.mu_range = {-1e6, p.gap};
    def.params = {{"k", p.k}, {"c", p.c}, {"F", p.F}, {"omega", p.omega}, {"gap", p.gap}, {"r", p.r}};
    return VibroImpactSystem(std::move(def));
}

VibroImpactSystem make_two_dof_system(const TwoDofParams& p) {
    if (!(p.q - p.p * p.p > 0.0) || !(p.a > 0.0) || !(p.omega > 0.0)) {
        throw VibroError(ErrorKind::invalid_argument,
                         "two-dof system requires q - p^2 > 0, a > 0, omega > 0");
    }
    const double phase = p.resolved_phase();
    SystemDefinition def;
    def.name = "two-dof-graze";
    def.dof = 2;
    def.period = 2.0 * std::numbers::pi / p.omega;
    def.accel = [p](double, const Vec& z, double, Vec& out) {
        out(0) = -2.0 * p.p * z(1) - p.q * z(0) + z(2);
        out(1) = p.a - p.omega * p.omega * z(2);
    };
    def.accel_jacobian = [p](double, const Vec&, double) {
        Mat J = Mat::Zero(2, 4);
        J(0, 0) = -p.q;
        J(0, 1) = -2.0 * p.p;
        J(0, 2) = 1.0;
        J(1, 2) = -p.omega * p.omega;
        return J;
    };
    def.accel_param = [](double, const Vec&, double) { return Vec::Zero(2).eval(); };
    const double r = p.r;
    def.restitution = [r](double) { return r; };
    def.restitution_derivative = [](double) { return 0.0; };
    def.mu_range = {0.0, 1e6};
    def.anchor = [p, phase](double t, double b) {
        const double w = p.omega;
        const double s = std::sin(w * t + phase);
        const double c = std::cos(w * t + phase);
        AnchorSample a;
        a.value.resize(2);
        a.d_dt.resize(2);
        a.d_dmu.resize(2);
        a.value << p.a / (w * w) + b * s, b * w * c;
        a.d_dt << b * w * c, -b * w * w * s;
        a.d_dmu << s, w * c;
        return a;
    };
    def.params = {{"p", p.p}, {"q", p.q}, {"omega", p.omega}, {"a", p.a}, {"r", p.r}, {"phase", phase}};
    return VibroImpactSystem(std::move(def));
}

Remark2Params remark2_params_from(const ParamMap& values) {
    Remark2Params p;
    assign(values, "remark2",
           {{"k", &p.k}, {"c", &p.c}, {"F", &p.F}, {"omega", &p.omega}, {"gap", &p.gap}, {"r", &p.r}});
    return p;
}

TwoDofParams two_dof_params_from(const ParamMap& values) {
    TwoDofParams p;
    double phase = std::nan("");
    assign(values, "two-dof-graze",
           {{"p", &p.p}, {"q", &p.q}, {"omega", &p.omega}, {"a", &p.a}, {"r", &p.r}, {"phase", &phase}});
    if (!std::isnan(phase)) {
        p.phase = phase;
        p.phase_set = true;
    }
    return p;
}

std::vector<std::string> builtin_system_names() { return {"remark2", "two-dof-graze"}; }

ParamMap builtin_default_params(const std::string& name) {
    if (name == "remark2") return make_remark2_system().params();
    if (name == "two-dof-graze") return make_two_dof_system().params();
    throw VibroError(ErrorKind::invalid_argument, "unknown system '" + name + "'");
}

VibroImpactSystem make_builtin_system(const std::string& name, const ParamMap& values) {
    if (name == "remark2") return make_remark2_system(remark2_params_from(values));
    if (name == "two-dof-graze") return make_two_dof_system(two_dof_params_from(values));
    throw VibroError(ErrorKind::invalid_argument, "unknown system '" + name + "'");
}

}  // namespace vibro
