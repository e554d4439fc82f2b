#include "vibro/two_dof.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace vibro::two_dof {

namespace {

constexpr double pi = std::numbers::pi;

void require_valid(const TwoDofParams& p) {
    if (!(p.q - p.p * p.p > 0.0) || !(p.a > 0.0) || !(p.omega > 0.0) || p.p < 0.0) {
        throw VibroError(ErrorKind::invalid_argument,
                         "parameters violate q - p^2 > 0, a > 0, omega > 0, p >= 0");
    }
}

double wrap(double x, double T) {
    double y = std::fmod(x, T);
    if (y < 0.0) y += T;
    return y;
}

// x1 and x1' in shifted time tau on the orbit through the impact at tau0.
struct Shape {
    double p, w0, w, A, B, C1, vt, tau0;
    [[nodiscard]] double x(double tau) const {
        const double s = tau - tau0;
        return C1 * std::exp(-p * s) * std::sin(w0 * (s + vt)) + A + B * std::sin(w * tau);
    }
    [[nodiscard]] double v(double tau) const {
        const double s = tau - tau0;
        const double e = std::exp(-p * s);
        return C1 * e * (w0 * std::cos(w0 * (s + vt)) - p * std::sin(w0 * (s + vt))) +
               B * w * std::cos(w * tau);
    }
};

Shape shape_of(const TwoDofParams& p, double b, const ClosedFormOrbit& o) {
    return Shape{p.p, omega0(p), p.omega, p.a / (p.omega * p.omega * p.q), b / response_scale(p),
                 o.C1, o.vartheta, o.tau0};
}

// Minimum of x1 over the open flight interval, via a grid and Brent refinement.
double flight_minimum(const Shape& s, double T) {
    constexpr int n = 2000;
    const double a = s.tau0, h = T / n;
    double best = std::numeric_limits<double>::infinity();
    double x_prev = s.x(a + h), x_cur = s.x(a + 2 * h);
    best = std::min(x_prev, x_cur);
    for (int i = 2; i < n - 1; ++i) {
        const double x_next = s.x(a + (i + 1) * h);
        best = std::min(best, x_next);
        if (x_cur <= x_prev && x_cur <= x_next) {
            auto f = [&s](double t) { return s.x(t); };
            const auto r = boost::math::tools::brent_find_minima(f, a + (i - 1) * h, a + (i + 1) * h, 50);
            best = std::min(best, r.second);
        }
        x_prev = x_cur;
        x_cur = x_next;
    }
    return best;
}

}  // namespace

double omega0(const TwoDofParams& p) {
    require_valid(p);
    return std::sqrt(p.q - p.p * p.p);
}

double period(const TwoDofParams& p) { return 2.0 * pi / p.omega; }

double response_scale(const TwoDofParams& p) {
    const double w2 = p.omega * p.omega;
    return std::sqrt(4.0 * p.p * p.p * w2 + (p.q - w2) * (p.q - w2));
}

double phase_lag(const TwoDofParams& p) { return std::atan2(2.0 * p.p * p.omega, p.q - p.omega * p.omega); }

double tau_shift(const TwoDofParams& p) { return (p.resolved_phase() - phase_lag(p)) / p.omega; }

double b_star(const TwoDofParams& p) {
    require_valid(p);
    return response_scale(p) * p.a / (p.q * p.omega * p.omega);
}

double steady_response(const TwoDofParams& p, double b, double t) {
    const double A = p.a / (p.omega * p.omega * p.q);
    return A + b / response_scale(p) * std::sin(p.omega * t + p.resolved_phase() - phase_lag(p));
}

double solve_vartheta(const TwoDofParams& p) {
    const double w0 = omega0(p);
    const double T = period(p);
    const double sn = std::sin(w0 * T);
    if (std::abs(sn) < 1e-14) {
        throw VibroError(ErrorKind::degenerate, "sin(omega0 T) = 0: resonant case has no vartheta");
    }
    const double cot = (std::exp(p.p * T) - std::cos(w0 * T)) / sn;
    // cot(x) = c with x in (0, pi) is x = atan2(1, c).
    return std::atan2(1.0, cot) / w0;
}

double vartheta_residual(const TwoDofParams& p, double vartheta) {
    const double w0 = omega0(p);
    const double T = period(p);
    // sin form of the defining relation, free of the cot singularity
    return std::sin(w0 * vartheta) * (std::exp(p.p * T) - std::cos(w0 * T)) -
           std::cos(w0 * vartheta) * std::sin(w0 * T);
}

Coefficients coefficients(const TwoDofParams& p, double b) {
    const double w0 = omega0(p);
    const double T = period(p);
    Coefficients c;
    c.A = p.a / (p.omega * p.omega * p.q);
    c.B = b / response_scale(p);
    c.vartheta = solve_vartheta(p);
    const double v = c.vartheta;
    const double e = std::exp(-p.p * T);
    c.H = p.r * e * (p.p * std::sin(w0 * (v + T)) - w0 * std::cos(w0 * (v + T))) + p.p * std::sin(w0 * v) -
          w0 * std::cos(w0 * v);
    if (std::abs(c.H) < 1e-14) throw VibroError(ErrorKind::degenerate, "H = 0: closed form degenerates");
    c.D = (1.0 + p.r) * p.omega * std::sin(w0 * v) / c.H;
    return c;
}

Eigen::Vector3d boundary_residual(const TwoDofParams& p, double b, const ClosedFormOrbit& o) {
    const Shape s = shape_of(p, b, o);
    const double T = period(p);
    Eigen::Vector3d r;
    r << s.x(o.tau0), s.x(o.tau0 + T), s.v(o.tau0) + p.r * s.v(o.tau0 + T);
    return r;
}

std::vector<ClosedFormOrbit> periodic_family_11(const TwoDofParams& p, double b) {
    const Coefficients c = coefficients(p, b);
    const double T = period(p);
    const double w = p.omega;
    std::vector<ClosedFormOrbit> out;
    // B (sin(w tau0) + D cos(w tau0)) + A = 0  <=>  sin(w tau0 + psi) = -A / (B sqrt(1 + D^2))
    const double amp = c.B * std::sqrt(1.0 + c.D * c.D);
    if (amp == 0.0) return out;
    double rhs = -c.A / amp;
    // equality in the solvability condition up to rounding gives the tangent root
    const bool tangent = std::abs(std::abs(rhs) - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon();
    if (tangent) rhs = std::copysign(1.0, rhs);
    if (std::abs(rhs) > 1.0) return out;
    const double psi = std::atan2(c.D, 1.0);
    const double base = std::asin(rhs);
    std::vector<std::pair<double, int>> roots;
    if (tangent) {
        roots.emplace_back(base, 0);
    } else {
        roots.emplace_back(base, +1);
        roots.emplace_back(pi - base, -1);
    }
    for (const auto& [angle, branch] : roots) {
        ClosedFormOrbit o;
        o.branch = branch;
        o.vartheta = c.vartheta;
        o.tau0 = wrap((angle - psi) / w, T);
        o.C1 = c.B * (1.0 + p.r) * w * std::cos(w * o.tau0) / c.H;
        o.t_impact = o.tau0 - tau_shift(p);
        const Shape s = shape_of(p, b, o);
        const double v0 = s.v(o.tau0);
        o.Y0 = -s.v(o.tau0 + T);
        o.residual = boundary_residual(p, b, o).cwiseAbs().maxCoeff();
        o.admissible = o.Y0 > 0.0 && v0 > 0.0 && flight_minimum(s, T) > 0.0;
        out.push_back(o);
    }
    return out;
}

Vec orbit_state(const TwoDofParams& p, double b, const ClosedFormOrbit& o, double t) {
    const Shape s = shape_of(p, b, o);
    const double tau = t + tau_shift(p);
    const double ph = p.resolved_phase();
    const double w = p.omega;
    Vec z(4);
    z << s.x(tau), s.v(tau), p.a / (w * w) + b * std::sin(w * t + ph), b * w * std::cos(w * t + ph);
    return z;
}

ClosedFormOrbit orbit_from_impact(const TwoDofParams& p, double b, double t_impact, double v_post) {
    const double T = period(p);
    const double w0 = omega0(p);
    const double w = p.omega;
    const double A = p.a / (w * w * p.q);
    const double B = b / response_scale(p);
    ClosedFormOrbit o;
    o.t_impact = t_impact;
    o.tau0 = wrap(t_impact + tau_shift(p), T);
    // x(tau0) = 0 and x'(tau0 + 0) = v_post fix C1 sin(w0 v) and C1 cos(w0 v).
    const double cs = -A - B * std::sin(w * o.tau0);
    const double cc = (v_post - B * w * std::cos(w * o.tau0) + p.p * cs) / w0;
    o.C1 = std::copysign(std::hypot(cs, cc), cs);
    o.vartheta = std::atan2(cs / o.C1, cc / o.C1) / w0;
    if (o.vartheta < 0.0) o.vartheta += 2.0 * pi / w0;
    const Shape s = shape_of(p, b, o);
    o.Y0 = -s.v(o.tau0 + T);
    o.residual = boundary_residual(p, b, o).cwiseAbs().maxCoeff();
    o.admissible = o.Y0 > 0.0 && v_post > 0.0 && flight_minimum(s, T) > 0.0;
    return o;
}

Monodromy closed_form_monodromy(const TwoDofParams& p) {
    const double w0 = omega0(p);
    const double T = period(p);
    return {2.0 * std::cos(w0 * T) * std::exp(-p.p * T), std::exp(-2.0 * p.p * T)};
}

FrequencyWindow check_frequency_window(const TwoDofParams& p) {
    FrequencyWindow out;
    out.ratio = omega0(p) / p.omega;
    const int k = static_cast<int>(std::floor(out.ratio - 0.25));
    if (k >= 1 && out.ratio > k + 0.25 && out.ratio < k + 0.5) {
        out.ok = true;
        out.k = k;
    }
    return out;
}

}  // namespace vibro::two_dof
