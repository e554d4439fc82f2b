#include "vibro/grazing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vibro {

const char* to_string(ContinuationEventKind kind) noexcept {
    switch (kind) {
        case ContinuationEventKind::impact_count_change: return "impact-count-change";
        case ContinuationEventKind::fold: return "fold";
        case ContinuationEventKind::grazing: return "grazing";
        case ContinuationEventKind::admissibility_change: return "admissibility-change";
        case ContinuationEventKind::failure: return "failure";
    }
    return "unknown";
}

namespace {


bool anchored_for(const VibroImpactSystem& sys, const ShootingOptions& opts) {
    return opts.use_anchor && sys.has_anchor();
}

double cutoff_for(const VibroImpactSystem& sys, const ShootingOptions& opts, double t0, double t1) {
    if (opts.mode == ShootingMode::formal) return t0 - 1.0;
    return t1 - opts.terminal_window * sys.period();
}

Vec embed_tangential(int n2, const Vec& tan) {
    Vec out = Vec::Zero(n2);
    out.tail(n2 - 2) = tan;
    return out;
}

// Damped Newton iteration shared by the orbit and grazing solvers. `eval` returns
// (residual, jacobian, structure signature) and may throw.
struct NewtonState {
    Vec u;
    Vec R;
    Mat J;
    int signature = 0;
    int iterations = 0;
};

// One extra full step once converged, kept only if it lowers the residual.
template <class Eval>
void polish(Eval& eval, NewtonState& st) {
    Eigen::ColPivHouseholderQR<Mat> qr(st.J);
    if (qr.rank() < st.J.cols()) return;
    const Vec trial = st.u + qr.solve(-st.R);
    try {
        auto [R, J, sig] = eval(trial);
        if (sig == st.signature && R.cwiseAbs().maxCoeff() < st.R.cwiseAbs().maxCoeff()) {
            st.u = trial;
            st.R = R;
            st.J = J;
        }
    } catch (const VibroError&) {
    }
}

template <class Eval>
NewtonState newton_solve(Eval&& eval, Vec u0, double tol, int max_iter) {
    NewtonState st;
    st.u = std::move(u0);
    {
        auto [R, J, sig] = eval(st.u);
        st.R = R;
        st.J = J;
        st.signature = sig;
    }
    for (int it = 0; it < max_iter; ++it) {
        const double rn = st.R.cwiseAbs().maxCoeff();
        if (rn < tol) {
            polish(eval, st);
            return st;
        }
        Eigen::ColPivHouseholderQR<Mat> qr(st.J);
        if (qr.rank() < st.J.cols()) {
            throw VibroError(ErrorKind::singular_jacobian, "shooting Jacobian is singular");
        }
        const Vec delta = qr.solve(-st.R);
        double lambda = 1.0;
        bool accepted = false;
        bool structure_changed = false;
        for (int ls = 0; ls < 14; ++ls, lambda *= 0.5) {
            const Vec trial = st.u + lambda * delta;
            try {
                auto [R, J, sig] = eval(trial);
                if (sig != st.signature) {
                    structure_changed = true;
                    continue;
                }
                const double rt = R.cwiseAbs().maxCoeff();
                if (rt < rn || rt < tol) {
                    st.u = trial;
                    st.R = R;
                    st.J = J;
                    accepted = true;
                    break;
                }
            } catch (const VibroError& e) {
                if (e.kind() == ErrorKind::invalid_argument) throw;
            }
        }
        ++st.iterations;
        if (!accepted) {
            if (structure_changed) {
                throw VibroError(ErrorKind::impact_structure_changed,
                                 "Newton step changes the number of intermediate impacts");
            }
            throw VibroError(ErrorKind::not_converged,
                             "line search failed at residual " + std::to_string(rn));
        }
    }
    if (st.R.cwiseAbs().maxCoeff() < tol) {
        polish(eval, st);
        return st;
    }
    throw VibroError(ErrorKind::not_converged, "Newton iteration limit reached at residual " +
                                                   std::to_string(st.R.cwiseAbs().maxCoeff()));
}

Vec start_state(const VibroImpactSystem& sys, double mu, const Vec& u, bool anchored, double v_override,
                bool use_override) {
    const int n2 = sys.dim();
    Vec z(n2);
    z(0) = 0.0;
    z(1) = use_override ? v_override : u(1);
    if (n2 > 2) {
        if (anchored) {
            z.tail(n2 - 2) = sys.anchor(u(0), mu).value;
        } else {
            z.tail(n2 - 2) = u.tail(n2 - 2);
        }
    }
    return z;
}

Vec section_state_of(const VibroImpactSystem& sys, double mu, double theta, double tau0, const Vec& post,
                     const ShootingOptions& opts, const IntegratorConfig& cfg) {
    const double T = sys.period();
    double dt = std::fmod(-theta - tau0, T);
    if (dt <= 0.0) dt += T;
    const double t1 = tau0 + opts.n_periods * T;
    HybridOptions ho;
    ho.keep_dense = false;
    ho.contact_cutoff = cutoff_for(sys, opts, tau0, t1);
    const HybridTrajectory tr = simulate_hybrid(sys, mu, tau0, post, tau0 + dt, cfg, ho);
    return tr.z_end;
}

bool check_admissible(const VibroImpactSystem& sys, const PeriodicOrbit& o, const ShootingOptions& opts,
                      const IntegratorConfig& cfg, int intermediate) {
    if (!(o.post_impact(1) > 0.0)) return false;
    for (double Y : o.incoming_speeds) {
        if (!(Y > 0.0)) return false;
    }
    const double T = sys.period();
    const double t1 = o.tau0 + opts.n_periods * T;
    HybridOptions ho;
    ho.keep_dense = false;
    ho.contact_cutoff = t1 - opts.terminal_window * T;
    try {
        const HybridTrajectory tr = simulate_hybrid(sys, o.mu, o.tau0, o.post_impact, t1, cfg, ho);
        if (tr.has_nonsmooth_events()) return false;
        return static_cast<int>(tr.events.size()) == intermediate;
    } catch (const VibroError&) {
        return false;
    }
}

}  // namespace

ShootingEvaluation evaluate_shooting(const VibroImpactSystem& sys, double mu, const Vec& u,
                                     const ShootingOptions& opts, const IntegratorConfig& cfg) {
    const int n2 = sys.dim();
    const bool anchored = anchored_for(sys, opts);
    const int m = anchored ? 2 : n2;
    if (u.size() != m) throw VibroError(ErrorKind::invalid_argument, "wrong number of shooting unknowns");
    if (opts.n_periods < 1) throw VibroError(ErrorKind::invalid_argument, "n_periods must be >= 1");

    const double tau0 = u(0);
    const double T = sys.period();
    const double t1 = tau0 + opts.n_periods * T;
    const Vec z0 = start_state(sys, mu, u, anchored, 0.0, false);

    ShootingEvaluation ev;
    ev.unknowns = u;
    ev.flow = propagate_variational(sys, mu, tau0, z0, t1, cfg, cutoff_for(sys, opts, tau0, t1));
    ev.intermediate_impacts = static_cast<int>(ev.flow.events.size());

    const Mat& Phi = ev.flow.D;
    const Vec& ze = ev.flow.z_end;
    const double r = sys.restitution(mu);
    const Vec Fs = sys.field(tau0, z0, mu);
    const Vec Fe = sys.field(t1, ze, mu);

    // dz_end / d(unknowns)
    Mat dz(n2, m);
    Vec dz_dtau = Fe - Phi * Fs;
    Vec dz_dmu = ev.flow.param_sens;
    if (anchored && n2 > 2) {
        const AnchorSample a = sys.anchor(tau0, mu);
        dz_dtau += Phi * embed_tangential(n2, a.d_dt);
        dz_dmu += Phi * embed_tangential(n2, a.d_dmu);
    }
    dz.col(0) = dz_dtau;
    dz.col(1) = Phi.col(1);
    for (int j = 2; j < m; ++j) dz.col(j) = Phi.col(j);

    ev.residual.resize(m);
    ev.jacobian.resize(m, m);
    ev.param_derivative.resize(m);
    ev.residual(0) = ze(0);
    ev.residual(1) = -r * ze(1) - u(1);
    ev.jacobian.row(0) = dz.row(0);
    ev.jacobian.row(1) = -r * dz.row(1);
    ev.jacobian(1, 1) -= 1.0;
    ev.param_derivative(0) = dz_dmu(0);
    ev.param_derivative(1) = -r * dz_dmu(1) - sys.restitution_derivative(mu) * ze(1);
    for (int j = 2; j < m; ++j) {
        ev.residual(j) = ze(j) - u(j);
        ev.jacobian.row(j) = dz.row(j);
        ev.jacobian(j, j) -= 1.0;
        ev.param_derivative(j) = dz_dmu(j);
    }
    return ev;
}

PeriodicOrbit find_periodic_orbit(const VibroImpactSystem& sys, double mu, double theta, const OrbitGuess& guess,
                                  const ShootingOptions& opts, const IntegratorConfig& cfg) {
    const int n2 = sys.dim();
    const bool anchored = anchored_for(sys, opts);
    const int m = anchored ? 2 : n2;
    Vec u0(m);
    u0(0) = guess.tau0;
    u0(1) = guess.v;
    if (!anchored && n2 > 2) {
        if (guess.tangential.size() != n2 - 2) {
            throw VibroError(ErrorKind::invalid_argument, "guess needs the tangential state");
        }
        u0.tail(n2 - 2) = guess.tangential;
    }

    ShootingEvaluation last;
    auto eval = [&](const Vec& u) {
        last = evaluate_shooting(sys, mu, u, opts, cfg);
        return std::make_tuple(last.residual, last.jacobian, last.intermediate_impacts);
    };
    const NewtonState st = newton_solve(eval, u0, opts.tol, opts.max_iter);
    if (last.unknowns != st.u) last = evaluate_shooting(sys, mu, st.u, opts, cfg);

    PeriodicOrbit o;
    o.mu = mu;
    o.theta = theta;
    o.tau0 = st.u(0);
    o.post_impact = start_state(sys, mu, st.u, anchored, 0.0, false);
    o.n_periods = opts.n_periods;
    o.mode = opts.mode;
    o.anchored = anchored;
    o.iterations = st.iterations;
    o.residual = st.R.cwiseAbs().maxCoeff();
    o.shooting_jacobian = st.J;
    o.jacobian_det = st.J.determinant();
    for (const auto& e : last.flow.events) {
        o.impact_times.push_back(e.t);
        o.incoming_speeds.push_back(e.normal_speed);
    }
    o.impact_times.push_back(last.flow.t_end);
    o.incoming_speeds.push_back(-last.flow.z_end(1));
    o.impact_count = static_cast<int>(o.impact_times.size());
    o.peterka = {o.impact_count, o.n_periods};
    o.admissible = check_admissible(sys, o, opts, cfg, last.intermediate_impacts);
    o.section_state = section_state_of(sys, mu, theta, o.tau0, o.post_impact, opts, cfg);
    return o;
}

GrazingOrbit find_grazing_orbit(const VibroImpactSystem& sys, double theta, const GrazingGuess& guess,
                                const ShootingOptions& opts, const IntegratorConfig& cfg) {
    const int n2 = sys.dim();
    const bool anchored = anchored_for(sys, opts);
    const int m = anchored ? 2 : n2;
    const double T = sys.period();

    auto contact_state = [&](const Vec& w) {
        Vec z = Vec::Zero(n2);
        if (n2 > 2) {
            z.tail(n2 - 2) = anchored ? sys.anchor(w(1), w(0)).value : Vec(w.tail(n2 - 2));
        }
        return z;
    };

    VariationalResult flow;
    auto eval = [&](const Vec& w) {
        const double mu = w(0), tau0 = w(1);
        const double t1 = tau0 + opts.n_periods * T;
        const Vec z0 = contact_state(w);
        flow = propagate_variational(sys, mu, tau0, z0, t1, cfg, cutoff_for(sys, opts, tau0, t1));
        const Mat& Phi = flow.D;
        const Vec& ze = flow.z_end;
        Vec dz_dmu = flow.param_sens;
        Vec dz_dtau = sys.field(t1, ze, mu) - Phi * sys.field(tau0, z0, mu);
        if (anchored && n2 > 2) {
            const AnchorSample a = sys.anchor(tau0, mu);
            dz_dmu += Phi * embed_tangential(n2, a.d_dmu);
            dz_dtau += Phi * embed_tangential(n2, a.d_dt);
        }
        Vec R(m);
        Mat J(m, m);
        R(0) = ze(0);
        R(1) = ze(1);
        J.col(0) = dz_dmu.head(m);
        J.col(1) = dz_dtau.head(m);
        for (int j = 2; j < m; ++j) {
            R(j) = ze(j) - z0(j);
            J.col(j) = Phi.col(j).head(m);
            J(j, j) -= 1.0;
        }
        return std::make_tuple(R, J, static_cast<int>(flow.events.size()));
    };

    Vec w0(m);
    w0(0) = guess.mu;
    w0(1) = guess.tau0;
    if (!anchored && n2 > 2) {
        if (guess.tangential.size() != n2 - 2) {
            throw VibroError(ErrorKind::invalid_argument, "grazing guess needs the tangential state");
        }
        w0.tail(n2 - 2) = guess.tangential;
    }
    NewtonState st;
    try {
        st = newton_solve(eval, w0, opts.tol, opts.max_iter);
    } catch (const VibroError& e) {
        if (e.kind() != ErrorKind::impact_structure_changed || opts.mode != ShootingMode::hybrid) throw;
        // the guess crosses the delimiter elsewhere: locate the formal tangency first, then re-solve
        ShootingOptions fo = opts;
        fo.mode = ShootingMode::formal;
        GrazingGuess fg = guess;
        const GrazingOrbit f = find_grazing_orbit(sys, theta, fg, fo, cfg);
        w0(0) = f.mu_star;
        w0(1) = f.tau0;
        if (!anchored && n2 > 2) w0.tail(n2 - 2) = f.contact_state.tail(n2 - 2);
        st = newton_solve(eval, w0, opts.tol, opts.max_iter);
    }
    eval(st.u);

    GrazingOrbit g;
    g.mu_star = st.u(0);
    g.tau0 = st.u(1);
    g.contact_state = contact_state(st.u);
    g.phi0 = sys.normal_acceleration(g.tau0, g.contact_state, g.mu_star);
    g.intermediate_impacts = static_cast<int>(flow.events.size());
    g.residual = st.R.cwiseAbs().maxCoeff();
    g.iterations = st.iterations;
    g.anchored = anchored;
    g.monodromy = flow.D;
    if (!(g.phi0 > 0.0)) {
        throw VibroError(ErrorKind::no_grazing_contact,
                         "contact is not a quadratic tangency (f1 <= 0 at the contact point)");
    }
    return g;
}

ContinuationResult approach_family(const VibroImpactSystem& sys, double theta, const PeriodicOrbit& o0, double mu_end,
                                   double decades, int n, const ShootingOptions& so, const IntegratorConfig& cfg) {
    if (n < 2 || !(decades > 0.0)) throw VibroError(ErrorKind::invalid_argument, "approach needs n >= 2 and decades > 0");
    ContinuationResult res;
    res.orbits.push_back(o0);
    const double d0 = o0.mu - mu_end;
    for (int i = 1; i < n; ++i) {
        const double mu = mu_end + d0 * std::pow(10.0, -decades * i / (n - 1));
        const PeriodicOrbit& a = res.orbits.back();
        OrbitGuess g{a.tau0, a.post_impact(1), a.post_impact.tail(a.post_impact.size() - 2)};
        if (res.orbits.size() >= 2) {
            const PeriodicOrbit& b = res.orbits[res.orbits.size() - 2];
            const double f = (mu - a.mu) / (a.mu - b.mu);
            g.tau0 += f * (a.tau0 - b.tau0);
            g.v += f * (a.post_impact(1) - b.post_impact(1));
            g.tangential += f * (a.post_impact - b.post_impact).tail(g.tangential.size());
        }
        try {
            res.orbits.push_back(find_periodic_orbit(sys, mu, theta, g, so, cfg));
        } catch (const VibroError& e) {
            res.events.push_back({ContinuationEventKind::failure, mu, e.what()});
            break;
        }
    }
    return res;
}

PeterkaType peterka_type(const VibroImpactSystem& sys, const PeriodicOrbit& orbit, const IntegratorConfig& cfg) {
    const int n = orbit.n_periods;
    const int m = orbit.impact_count;
    if (orbit.mode == ShootingMode::formal || n == 1) return {m, n};
    const Vec& z = orbit.section_state;
    for (int j = 1; j < n; ++j) {
        if (n % j != 0) continue;
        try {
            const Vec zj = poincare_map(sys, orbit.mu, orbit.theta, z, cfg, j);
            if ((zj - z).norm() <= 1e-7 * (1.0 + z.norm())) return {m * j / n, j};
        } catch (const VibroError&) {
        }
    }
    return {m, n};
}

ContinuationResult continue_family(const VibroImpactSystem& sys, double theta, const PeriodicOrbit& orbit0,
                                   double mu_end, const StepControl& step, const ShootingOptions& opts_in,
                                   const IntegratorConfig& cfg) {
    ContinuationResult res;
    res.orbits.push_back(orbit0);
    if (mu_end == orbit0.mu) return res;

    ShootingOptions opts = opts_in;
    opts.n_periods = orbit0.n_periods;
    opts.mode = orbit0.mode;
    const bool anchored = anchored_for(sys, opts);
    auto unknowns = [&](const PeriodicOrbit& o) {
        const int n2 = sys.dim();
        Vec u(anchored ? 2 : n2);
        u(0) = o.tau0;
        u(1) = o.post_impact(1);
        if (!anchored && n2 > 2) u.tail(n2 - 2) = o.post_impact.tail(n2 - 2);
        return u;
    };

    const double dir = mu_end > orbit0.mu ? 1.0 : -1.0;
    double h = std::min(step.initial, step.max);
    while (static_cast<int>(res.orbits.size()) < step.max_points) {
        const PeriodicOrbit& cur = res.orbits.back();
        const double remaining = dir * (mu_end - cur.mu);
        if (remaining <= 0.0) break;
        const double hstep = std::min(h, remaining);
        const double mu = cur.mu + dir * hstep;

        Vec u = unknowns(cur);
        if (res.orbits.size() >= 2) {
            const PeriodicOrbit& prev = res.orbits[res.orbits.size() - 2];
            const double dmu = cur.mu - prev.mu;
            if (dmu != 0.0) u += (unknowns(cur) - unknowns(prev)) * ((mu - cur.mu) / dmu);
        }
        OrbitGuess g;
        g.tau0 = u(0);
        g.v = u(1);
        if (!anchored && sys.dim() > 2) g.tangential = u.tail(sys.dim() - 2);

        try {
            PeriodicOrbit next = find_periodic_orbit(sys, mu, theta, g, opts, cfg);
            if (next.impact_count != cur.impact_count) {
                res.events.push_back({ContinuationEventKind::impact_count_change, mu,
                                      std::to_string(cur.impact_count) + " -> " +
                                          std::to_string(next.impact_count)});
            }
            if (next.admissible != cur.admissible) {
                res.events.push_back({ContinuationEventKind::admissibility_change, mu,
                                      next.admissible ? "becomes admissible" : "becomes non-admissible"});
            }
            if ((next.jacobian_det > 0.0) != (cur.jacobian_det > 0.0)) {
                res.events.push_back({ContinuationEventKind::fold, mu, "shooting determinant changes sign"});
            }
            const double Y = next.closing_speed();
            const bool grazing = Y < step.grazing_speed;
            res.orbits.push_back(std::move(next));
            if (grazing) {
                res.events.push_back({ContinuationEventKind::grazing, mu, "closing impact speed vanishes"});
                if (opts.mode == ShootingMode::hybrid) break;
            }
            h = std::min(h * 1.5, step.max);
        } catch (const VibroError& e) {
            h *= 0.5;
            if (h < step.min) {
                const bool fold = e.kind() == ErrorKind::singular_jacobian || e.kind() == ErrorKind::not_converged;
                res.events.push_back({fold ? ContinuationEventKind::fold : ContinuationEventKind::failure, cur.mu,
                                      e.what()});
                break;
            }
        }
    }
    return res;
}

}  // namespace vibro
