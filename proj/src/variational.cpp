#include "vibro/variational.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>

namespace vibro {

SaltationMatrix saltation_matrix(const VibroImpactSystem& sys, double mu, double t, const Vec& z_pre,
                                 double velocity_floor) {
    const int n2 = sys.dim();
    if (z_pre.size() != n2) throw VibroError(ErrorKind::invalid_argument, "state dimension mismatch");
    const double Y = -z_pre(1);
    if (!(Y > velocity_floor)) {
        throw VibroError(ErrorKind::non_differentiable,
                         "saltation requested for a grazing or chattering contact");
    }
    const double r = sys.restitution(mu);
    Vec zm = z_pre;
    zm(0) = 0.0;
    zm(1) = -Y;
    Vec zp = zm;
    zp(1) = r * Y;
    const Vec fm = sys.acceleration(t, zm, mu);
    const Vec fp = sys.acceleration(t, zp, mu);

    // B = P + (F+ - P F-) e1^T / (e1^T F-), with P = diag(1, -r, 1, ..., 1).
    SaltationMatrix s;
    s.t = t;
    s.normal_speed = Y;
    s.matrix = Mat::Identity(n2, n2);
    s.matrix(0, 0) = -r;
    s.matrix(1, 1) = -r;
    s.matrix(1, 0) = -(fp(0) + r * fm(0)) / Y;
    for (int k = 1; k < sys.dof(); ++k) s.matrix(2 * k + 1, 0) = -(fp(k) - fm(k)) / Y;
    s.det = r * r;
    s.param_jump = Vec::Zero(n2);
    s.param_jump(1) = sys.restitution_derivative(mu) * Y;
    return s;
}

Mat smooth_variational(const VibroImpactSystem& sys, double mu, double t0, const Vec& z0, double t1,
                       const IntegratorConfig& cfg) {
    HybridOptions opts;
    opts.sensitivities = true;
    opts.keep_dense = false;
    const HybridTrajectory traj = simulate_hybrid(sys, mu, t0, z0, t1, cfg, opts);
    if (!traj.events.empty()) {
        throw VibroError(ErrorKind::crossing_in_free_flight,
                         "smooth variational flow crosses the delimiter at t = " +
                             std::to_string(traj.events.front().t));
    }
    return traj.arcs.front().phi;
}

std::vector<Mat> VariationalResult::saltation_factors() const {
    std::vector<Mat> out;
    out.reserve(saltations.size());
    for (const auto& s : saltations) out.push_back(s.matrix);
    return out;
}

VariationalResult propagate_variational(const VibroImpactSystem& sys, double mu, double t0, const Vec& z0,
                                        double t1, const IntegratorConfig& cfg, double contact_cutoff) {
    HybridOptions opts;
    opts.sensitivities = true;
    opts.keep_dense = false;
    opts.contact_cutoff = contact_cutoff;
    const HybridTrajectory traj = simulate_hybrid(sys, mu, t0, z0, t1, cfg, opts);

    const int n2 = sys.dim();
    VariationalResult res;
    res.t_begin = t0;
    res.t_end = traj.t_end;
    res.z_begin = z0;
    res.z_end = traj.z_end;
    res.events = traj.events;
    res.D = Mat::Identity(n2, n2);
    res.param_sens = Vec::Zero(n2);
    for (std::size_t i = 0; i < traj.arcs.size(); ++i) {
        const SmoothArc& arc = traj.arcs[i];
        res.smooth_factors.push_back(arc.phi);
        res.D = arc.phi * res.D;
        res.param_sens = arc.phi * res.param_sens + arc.param_sens;
        if (i < traj.events.size()) {
            const ImpactEvent& ev = traj.events[i];
            SaltationMatrix s = saltation_matrix(sys, mu, ev.t, ev.pre, cfg.chatter_velocity_floor);
            res.D = s.matrix * res.D;
            res.param_sens = s.matrix * res.param_sens + s.param_jump;
            res.saltations.push_back(std::move(s));
        }
    }
    res.det_D = res.D.determinant();
    return res;
}

namespace {

void check_sections(const std::vector<ImpactEvent>& events, double t0, double t1, double guard) {
    for (const auto& ev : events) {
        if (std::abs(ev.t - t0) < guard || std::abs(ev.t - t1) < guard) {
            throw VibroError(ErrorKind::section_collision,
                             "impact at t = " + std::to_string(ev.t) + " lies on the Poincare section");
        }
    }
}

void check_periods(int periods) {
    if (periods < 1) throw VibroError(ErrorKind::invalid_argument, "periods must be >= 1");
}

}  // namespace

Vec poincare_map(const VibroImpactSystem& sys, double mu, double theta, const Vec& z0,
                 const IntegratorConfig& cfg, int periods) {
    check_periods(periods);
    const double t0 = -theta;
    const double t1 = -theta + periods * sys.period();
    HybridOptions opts;
    opts.keep_dense = false;
    const HybridTrajectory traj = simulate_hybrid(sys, mu, t0, z0, t1, cfg, opts);
    check_sections(traj.events, t0, t1, cfg.section_guard);
    return traj.z_end;
}

VariationalResult poincare_jacobian(const VibroImpactSystem& sys, double mu, double theta, const Vec& z0,
                                    const IntegratorConfig& cfg, int periods) {
    check_periods(periods);
    const double t0 = -theta;
    const double t1 = -theta + periods * sys.period();
    VariationalResult res = propagate_variational(sys, mu, t0, z0, t1, cfg);
    check_sections(res.events, t0, t1, cfg.section_guard);
    return res;
}

LyapunovResult lyapunov_exponents(const VibroImpactSystem& sys, double mu, double theta, const Vec& z0,
                                  int n_periods, const IntegratorConfig& cfg) {
    if (n_periods < 1) throw VibroError(ErrorKind::invalid_argument, "n_periods must be >= 1");
    const int n2 = sys.dim();
    LyapunovResult out;
    out.periods = n_periods;

    VariationalResult first = poincare_jacobian(sys, mu, theta, z0, cfg);
    const double scale = 1.0 + z0.norm();
    if ((first.z_end - z0).norm() <= 1e-9 * scale) {
        // Fixed point: the exponents are the log-moduli of the monodromy spectrum.
        Eigen::EigenSolver<Mat> es(first.D, false);
        for (int i = 0; i < n2; ++i) out.exponents.push_back(std::log(std::abs(es.eigenvalues()(i))));
        out.periodic = true;
        std::sort(out.exponents.begin(), out.exponents.end(), std::greater<>());
        return out;
    }

    Vec acc = Vec::Zero(n2);
    Mat Q = Mat::Identity(n2, n2);
    Vec z = z0;
    for (int k = 0; k < n_periods; ++k) {
        VariationalResult step = k == 0 ? std::move(first) : poincare_jacobian(sys, mu, theta, z, cfg);
        Eigen::HouseholderQR<Mat> qr(step.D * Q);
        Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
        Q = qr.householderQ();
        for (int i = 0; i < n2; ++i) {
            // keep R with a positive diagonal so Q stays continuous
            if (R(i, i) < 0.0) {
                R.row(i) *= -1.0;
                Q.col(i) *= -1.0;
            }
            acc(i) += std::log(std::abs(R(i, i)));
        }
        z = step.z_end;
    }
    for (int i = 0; i < n2; ++i) out.exponents.push_back(acc(i) / n_periods);
    std::sort(out.exponents.begin(), out.exponents.end(), std::greater<>());
    return out;
}

}  // namespace vibro
