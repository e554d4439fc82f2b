#include "vibro/grazing.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace vibro {

namespace {

double refine_root(const DenseStep& s, double a, double b) {
    auto f = [&s](double t) { return s.eval(t, 1); };
    boost::math::tools::eps_tolerance<double> tol(50);
    std::uintmax_t it = 100;
    const auto r = boost::math::tools::toms748_solve(f, a, b, tol, it);
    return 0.5 * (r.first + r.second);
}

}  // namespace

double first_flight_minimum(const VibroImpactSystem& sys, double mu, double theta, const Vec& z,
                            const IntegratorConfig& cfg) {
    if (z.size() != sys.dim()) throw VibroError(ErrorKind::invalid_argument, "state dimension mismatch");
    const double t0 = -theta;
    if (z(1) == 0.0 && sys.normal_acceleration(t0, z, mu) > 0.0) return z(0);

    HybridOptions ho;
    ho.contact_cutoff = t0 - 1.0;
    const SmoothArc arc = simulate_hybrid(sys, mu, t0, z, t0 + sys.period(), cfg, ho).arcs.front();
    double lowest = std::numeric_limits<double>::infinity();
    constexpr int samples = 8;
    for (const DenseStep& s : arc.steps) {
        double ta = s.t0;
        double ya = s.eval(ta, 1);
        for (int k = 1; k <= samples; ++k) {
            const double tb = s.t0 + s.h * k / samples;
            const double yb = s.eval(tb, 1);
            lowest = std::min(lowest, s.eval(tb, 0));
            if (ya < 0.0 && yb >= 0.0) {
                const double tm = yb == 0.0 ? tb : refine_root(s, ta, tb);
                return s.eval(tm, 0);
            }
            ta = tb;
            ya = yb;
        }
    }
    return std::min(lowest, z(0));
}

SurfaceFit fit_grazing_surface(const VibroImpactSystem& sys, double mu, double theta, const Vec& tangential,
                               const std::vector<double>& y1_grid, const Vec& reference_state,
                               const IntegratorConfig& cfg) {
    const int n2 = sys.dim();
    if (tangential.size() != n2 - 2) throw VibroError(ErrorKind::invalid_argument, "tangential size mismatch");
    SurfaceFit fit;
    const double f1 = sys.normal_acceleration(-theta, reference_state, mu);
    if (!(f1 > 0.0)) throw VibroError(ErrorKind::no_grazing_contact, "f1 at the reference point is not positive");
    fit.reference_inverse_f1 = 1.0 / f1;

    Vec z(n2);
    z.tail(n2 - 2) = tangential;
    for (double y1 : y1_grid) {
        if (y1 > 0.0) throw VibroError(ErrorKind::invalid_argument, "surface samples need y1 <= 0");
        SurfaceSample s{y1, 0.0};
        if (y1 < 0.0) {
            z(1) = y1;
            auto g = [&](double x1) {
                z(0) = x1;
                return first_flight_minimum(sys, mu, theta, z, cfg);
            };
            double lo = 0.0, hi = y1 * y1 / f1;
            int grow = 0;
            while (g(hi) <= 0.0) {
                lo = hi;
                hi *= 2.0;
                if (++grow > 40) throw VibroError(ErrorKind::not_converged, "cannot bracket the surface");
            }
            if (g(lo) > 0.0) throw VibroError(ErrorKind::not_converged, "y1 outside the valid window");
            boost::math::tools::eps_tolerance<double> tol(48);
            std::uintmax_t it = 200;
            const auto r = boost::math::tools::toms748_solve(g, lo, hi, tol, it);
            s.gamma = 0.5 * (r.first + r.second);
        }
        fit.samples.push_back(s);
    }

    // log-log slope over the nonzero samples
    double sx = 0, sy = 0, sxx = 0, sxy = 0, s4 = 0, s2g = 0;
    int n = 0;
    for (const auto& s : fit.samples) {
        const double y2 = s.y1 * s.y1;
        s4 += y2 * y2;
        s2g += y2 * s.gamma;
        if (s.y1 == 0.0 || !(s.gamma > 0.0)) continue;
        const double lx = std::log(std::abs(s.y1)), ly = std::log(s.gamma);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n >= 2) fit.fitted_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    if (s4 > 0.0) fit.fitted_coefficient = s2g / s4;
    double ss = 0.0;
    for (const auto& s : fit.samples) {
        const double e = s.gamma - fit.fitted_coefficient * s.y1 * s.y1;
        ss += e * e;
    }
    if (!fit.samples.empty()) fit.residual_rms = std::sqrt(ss / static_cast<double>(fit.samples.size()));
    return fit;
}

}  // namespace vibro
