#include "vibro/grazing.hpp"

#include <algorithm>
#include <cmath>

namespace vibro {

namespace {

Vec embed_tangential(int n2, const Vec& tan) {
    Vec out = Vec::Zero(n2);
    out.tail(n2 - 2) = tan;
    return out;
}

bool is_degenerate(const Mat& L, double det, double tol) {
    const double scale = std::pow(L.norm(), static_cast<double>(L.rows()));
    return !(std::abs(det) >= tol * scale) || scale == 0.0;
}

struct LadderPoint {
    Mat A;
    Vec B;
};

// A and B of the impacting orbit at (mu, theta): flow from tau0 + theta to
// tau0 + T - theta starting on the orbit.
LadderPoint ladder_point(const VibroImpactSystem& sys, const PeriodicOrbit& o, double theta,
                         const ShootingOptions& opts, const IntegratorConfig& cfg) {
    const double T = sys.period();
    const double ta = o.tau0 + theta;
    const double tb = o.tau0 + opts.n_periods * T - theta;
    HybridOptions ho;
    ho.keep_dense = false;
    if (opts.mode == ShootingMode::formal) ho.contact_cutoff = o.tau0 - 1.0;
    const Vec za = simulate_hybrid(sys, o.mu, o.tau0, o.post_impact, ta, cfg, ho).z_end;
    const double cutoff = opts.mode == ShootingMode::formal ? ta - 1.0 : tb;
    const VariationalResult vr = propagate_variational(sys, o.mu, ta, za, tb, cfg, cutoff);
    LadderPoint lp;
    lp.A = vr.D;
    lp.B = vr.param_sens;
    if (o.anchored && sys.dim() > 2) lp.B += vr.D * embed_tangential(sys.dim(), sys.anchor(ta, o.mu).d_dmu);
    return lp;
}

template <class T>
T richardson(std::vector<T> v) {
    // v[i] sampled at h = 2^-i; eliminates h, h^2, ... in turn.
    for (std::size_t k = 1; k < v.size(); ++k) {
        const double f = std::pow(2.0, static_cast<double>(k));
        for (std::size_t i = v.size() - 1; i >= k; --i) v[i] = (f * v[i] - v[i - 1]) / (f - 1.0);
    }
    return v.back();
}

double relative_change(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(a), 1e-300);
}

}  // namespace

GrazingReport classify_from_matrices(const VibroImpactSystem& sys, const GrazingOrbit& g, const Mat& A,
                                     const Vec& B, double tol, bool reduced) {
    const int n2 = sys.dim();
    const double r = sys.restitution(g.mu_star);
    GrazingReport rep;
    rep.mu_star = g.mu_star;
    rep.phi0 = g.phi0;
    rep.A = A;
    rep.B = B;
    rep.reduced = reduced;
    rep.F0 = sys.field(g.tau0, g.contact_state, g.mu_star);
    const Mat E = Mat::Identity(n2, n2);
    const Vec e1 = E.col(0), e2 = E.col(1);

    Vec tau_col = (E - A) * rep.F0;
    Vec Bv = B;
    if (reduced) {
        const AnchorSample a = sys.anchor(g.tau0, g.mu_star);
        tau_col += A * embed_tangential(n2, a.d_dt);
        // B already contains the anchor's parameter dependence
        rep.L_y.resize(2, 2);
        rep.L_x.resize(2, 2);
        rep.L_y.col(0) = tau_col.head(2);
        rep.L_y.col(1) = (A.col(1) + e2 / r).head(2);
        rep.L_x.col(0) = (A.col(0) - e1).head(2);
        rep.L_x.col(1) = tau_col.head(2);
        Bv = B.head(2);
    } else {
        rep.L_y.resize(n2, n2);
        rep.L_x.resize(n2, n2);
        rep.L_y.col(0) = tau_col;
        rep.L_y.col(1) = A.col(1) + e2 / r;
        rep.L_x.col(0) = A.col(0) - e1;
        rep.L_x.col(1) = tau_col;
        for (int j = 2; j < n2; ++j) {
            rep.L_y.col(j) = A.col(j) - E.col(j);
            rep.L_x.col(j) = A.col(j) - E.col(j);
        }
    }
    rep.det_L_y = rep.L_y.determinant();
    rep.det_L_x = rep.L_x.determinant();

    rep.a12 = A(0, 1);
    rep.a2_12 = (A * A)(0, 1);
    rep.cond16 = rep.a12 > 0.0 && rep.a2_12 < -rep.a12;
    rep.ivanov_scenario = rep.a12 < 0.0 ? "saddle-node" : "period-doubling";
    rep.b1 = B(0);

    if (sys.dof() == 1) {
        rep.single_dof = true;
        const double f01 = rep.F0(1);
        const double detAE = (A - E).determinant();
        rep.test8 = B(1);
        rep.test12 = rep.a12 * B(1) * detAE;
        rep.delta_y = -rep.a12 * f01 * (1.0 + 1.0 / r);
        rep.delta_x = -detAE * f01;
    }

    if (!(g.phi0 > 0.0)) {
        rep.verdict = "degenerate";
        rep.degeneracy_reason = "f1 at the contact is not positive";
        return rep;
    }
    const bool dy = is_degenerate(rep.L_y, rep.det_L_y, tol);
    const bool dx = is_degenerate(rep.L_x, rep.det_L_x, tol);
    if (dy || dx) {
        rep.verdict = "degenerate";
        rep.degeneracy_reason = dy ? "L_y is singular" : "L_x is singular";
        if (!dy) rep.test7 = rep.L_y.colPivHouseholderQr().solve(Bv)(1);
        if (!dx) rep.test11 = rep.test13 = rep.L_x.colPivHouseholderQr().solve(Bv)(0);
        return rep;
    }
    rep.test7 = rep.L_y.colPivHouseholderQr().solve(Bv)(1);
    rep.test11 = rep.L_x.colPivHouseholderQr().solve(Bv)(0);
    rep.test13 = rep.test11;
    if (!(rep.test7 < 0.0)) {
        rep.verdict = "degenerate";
        rep.degeneracy_reason = "impacting family does not open towards positive parameter values";
    } else if (rep.test11 > 0.0) {
        rep.verdict = "continuous";
    } else if (rep.test13 < 0.0) {
        rep.verdict = "discontinuous";
    } else {
        rep.verdict = "degenerate";
        rep.degeneracy_reason = "boundary test vanishes";
    }
    return rep;
}

GrazingReport classify_grazing(const VibroImpactSystem& sys, double theta, const GrazingOrbit& g,
                               const ClassifyOptions& opts, const IntegratorConfig& cfg) {
    (void)theta;
    if (opts.levels < 2) throw VibroError(ErrorKind::invalid_argument, "ladder needs at least two levels");
    const int n2 = sys.dim();
    const bool reduced = g.anchored && n2 > 2;
    ShootingOptions so = opts.shooting;
    so.use_anchor = g.anchored;

    // Monodromy and parameter sensitivity of the grazing orbit itself.
    const double T = sys.period();
    const double t1 = g.tau0 + so.n_periods * T;
    const VariationalResult flow =
        propagate_variational(sys, g.mu_star, g.tau0, g.contact_state, t1, cfg,
                              so.mode == ShootingMode::formal ? g.tau0 - 1.0 : t1 - so.terminal_window * T);
    Vec B_direct = flow.param_sens;
    if (reduced) B_direct += flow.D * embed_tangential(n2, sys.anchor(g.tau0, g.mu_star).d_dmu);
    const GrazingReport direct = classify_from_matrices(sys, g, flow.D, B_direct, opts.degeneracy_tol, reduced);

    // Orientation: the impacting family opens where the predicted post-impact speed grows.
    int sigma = 1;
    Mat Ly = direct.L_y;
    Vec Bv = reduced ? Vec(B_direct.head(2)) : B_direct;
    Vec du = Vec::Zero(Ly.cols());
    if (!is_degenerate(Ly, Ly.determinant(), opts.degeneracy_tol)) {
        du = -Ly.colPivHouseholderQr().solve(Bv);
        sigma = du(1) >= 0.0 ? 1 : -1;
    }

    // Ladder of impacting orbits approaching the grazing one.
    const int L = opts.levels + 1;
    std::vector<Mat> As;
    std::vector<Vec> Bs;
    Vec u_prev;
    for (int i = 0; i < L; ++i) {
        const double h = std::pow(0.5, i);
        const double dmu = sigma * opts.mu_bar * h;
        const double th = opts.theta_bar * h;
        OrbitGuess guess;
        guess.tau0 = g.tau0 + du(0) * dmu;
        guess.v = du(1) * dmu;
        if (!reduced && n2 > 2) guess.tangential = g.contact_state.tail(n2 - 2) + du.tail(n2 - 2) * dmu;
        PeriodicOrbit o = find_periodic_orbit(sys, g.mu_star + dmu, th, guess, so, cfg);
        LadderPoint lp = ladder_point(sys, o, th, so, cfg);
        As.push_back(lp.A);
        Bs.push_back(sigma * lp.B);
    }
    auto slice = [](const auto& v, int from, int count) {
        return std::vector<typename std::decay_t<decltype(v)>::value_type>(v.begin() + from, v.begin() + from + count);
    };
    const Mat A = richardson(slice(As, 0, opts.levels));
    const Vec B = richardson(slice(Bs, 0, opts.levels));
    GrazingReport rep = classify_from_matrices(sys, g, A, B, opts.degeneracy_tol, reduced);
    rep.orientation = sigma;
    rep.A_direct = flow.D;

    const Mat A2 = richardson(slice(As, 1, opts.levels));
    const Vec B2 = richardson(slice(Bs, 1, opts.levels));
    const GrazingReport shifted = classify_from_matrices(sys, g, A2, B2, opts.degeneracy_tol, reduced);
    rep.extrapolation_change = std::max({relative_change(rep.test7, shifted.test7),
                                         relative_change(rep.test11, shifted.test11),
                                         relative_change(rep.a12, shifted.a12)});
    if (rep.single_dof) {
        rep.extrapolation_change = std::max({rep.extrapolation_change, relative_change(rep.test8, shifted.test8),
                                             relative_change(rep.test12, shifted.test12)});
    }
    return rep;
}

}  // namespace vibro
