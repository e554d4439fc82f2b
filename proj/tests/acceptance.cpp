// Acceptance runner: `acceptance N` checks criterion N and prints one PASS/FAIL line.

#include "fixtures.hpp"
#include "oracles.hpp"

#include "vibro/builtin_systems.hpp"
#include "vibro/grazing.hpp"
#include "vibro/manifolds.hpp"
#include "vibro/two_dof.hpp"
#include "vibro/variational.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace vibro;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

IntegratorConfig tight() {
    IntegratorConfig c;
    c.rel_tol = 1e-13;
    c.abs_tol = 1e-15;
    c.event_tol = 1e-14;
    return c;
}

template <class F>
void parallel_for(int n, const F& body) {
    const int nt = std::max(1, std::min<int>(n, static_cast<int>(std::thread::hardware_concurrency())));
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += nt) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

double max_abs_eigenvalue(const Mat& D, double* real_part = nullptr) {
    const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(D).eigenvalues();
    Eigen::Index k = 0;
    ev.cwiseAbs().maxCoeff(&k);
    if (real_part) *real_part = ev(k).real();
    return std::abs(ev(k));
}

// Periodic orbit of the impacting oscillator: settle from (5, 0), then shoot from the last reflection.
PeriodicOrbit remark2_orbit(const VibroImpactSystem& sys, double mu, double theta) {
    const double T = sys.period();
    HybridOptions ho;
    ho.keep_dense = false;
    Vec z0(2);
    z0 << 5.0, 0.0;
    const auto traj = simulate_hybrid(sys, mu, 0.0, z0, 200.0 * T, IntegratorConfig{}, ho);
    const ImpactEvent* last = nullptr;
    for (const auto& ev : traj.events)
        if (ev.kind == EventKind::reflection) last = &ev;
    if (!last) throw VibroError(ErrorKind::not_converged, "no reflection while settling");
    OrbitGuess g;
    g.tau0 = std::fmod(last->t, T);
    g.v = last->post(1);
    return find_periodic_orbit(sys, mu, theta, g, ShootingOptions{}, IntegratorConfig{});
}

GrazingOrbit grazing_near(const VibroImpactSystem& sys, double mu, double tau0, double theta) {
    GrazingGuess gg;
    gg.mu = mu;
    gg.tau0 = tau0;
    return find_grazing_orbit(sys, theta, gg, ShootingOptions{}, IntegratorConfig{});
}

// ---- 1 ----
void saltation(Outcome& o) {
    double worst_det = 0.0, worst_fd = 0.0;
    int checked = 0;
    for (double r : {0.5, 0.8, 1.0}) {
        Remark2Params rp;
        rp.r = r;
        TwoDofParams tp;
        tp.r = r;
        const VibroImpactSystem r2 = make_remark2_system(rp);
        const VibroImpactSystem td = make_two_dof_system(tp);
        Vec z_r2(2);
        z_r2 << 0.5, -0.3;
        Vec z_td(4);
        z_td << 0.4, -0.5, 0.9, 0.2;
        for (auto [sys, mu, z0] : {std::tuple{&r2, 10.0, z_r2}, std::tuple{&td, 0.8, z_td}}) {
            HybridOptions ho;
            ho.keep_dense = false;
            const auto traj = simulate_hybrid(*sys, mu, 0.0, z0, 30.0, tight(), ho);
            int per_run = 0;
            for (const auto& ev : traj.events) {
                if (ev.kind != EventKind::reflection || ev.normal_speed < 1e-2 || per_run == 3) continue;
                ++per_run;
                const SaltationMatrix S = saltation_matrix(*sys, mu, ev.t, ev.pre);
                worst_det = std::max(worst_det, std::abs(S.det - r * r));
                worst_det = std::max(worst_det, std::abs(S.matrix.determinant() - r * r));
                const Mat fd = oracle::across_impact_fd(*sys, mu, ev.t, ev.pre, ev.post, 1e-2, tight());
                worst_fd = std::max(worst_fd, oracle::rel_err(S.matrix, fd));
                ++checked;
            }
        }
    }
    o.detail << "impacts=" << checked << " max|det-r^2|=" << worst_det << " max rel(S, FD)=" << worst_fd;
    o.require(checked >= 6, "too few impacts");
    o.require(worst_det <= 1e-10, "det within 1e-10");
    o.require(worst_fd <= 1e-5, "FD within 1e-5");
}

// ---- 2 ----
void jacobian(Outcome& o) {
    std::vector<std::tuple<std::string, VibroImpactSystem, double, double, PeriodicOrbit>> cases;
    {
        const auto p = fixture::reference_set();
        const double b = 1.1 * two_dof::b_star(p);
        cases.emplace_back("two-dof", make_two_dof_system(p), b, 0.01, fixture::two_dof_orbit(p, b, -1, 0.01));
    }
    for (double r : {0.8, 1.0}) {
        Remark2Params rp;
        rp.r = r;
        const auto sys = make_remark2_system(rp);
        cases.emplace_back("remark2 r=" + std::to_string(r).substr(0, 3), sys, 1.0, 0.01, remark2_orbit(sys, 1.0, 0.01));
    }
    for (const auto& [name, sys, mu, theta, orbit] : cases) {
        const auto vr = poincare_jacobian(sys, mu, theta, orbit.section_state, IntegratorConfig{});
        const Mat fd = oracle::fd_jacobian(
            [&](const Vec& z) { return poincare_map(sys, mu, theta, z, tight()); }, orbit.section_state, 1e-6);
        const double e = oracle::rel_err(vr.D, fd);
        o.detail << name << ": impacts=" << vr.saltations.size() << " rel=" << e << "; ";
        o.require(!vr.saltations.empty(), name + " orbit is impacting");
        o.require(e <= 1e-4, name + " within 1e-4");
    }
}

// ---- 3 ----
void surface(Outcome& o) {
    const auto p = fixture::reference_set();
    const auto sys = make_two_dof_system(p);
    const double theta = 0.01;
    const auto g = grazing_near(sys, two_dof::b_star(p), 0.0, theta);
    const Vec tan = sys.anchor(-theta, g.mu_star).value;
    Vec ref = Vec::Zero(4);
    ref.tail(2) = tan;
    std::vector<double> grid;
    for (int i = 0; i < 11; ++i) grid.push_back(-1e-3 * std::pow(10.0, i / 10.0));
    const auto fit = fit_grazing_surface(sys, g.mu_star, theta, tan, grid, ref, IntegratorConfig{});
    // independent exponent from the raw samples
    std::vector<double> ys, gs;
    for (const auto& s : fit.samples) {
        ys.push_back(-s.y1);
        gs.push_back(s.gamma);
    }
    const double slope = oracle::log_log_slope(ys, gs);
    const double f1 = sys.normal_acceleration(-theta, ref, g.mu_star);
    const double ratio = fit.fitted_coefficient * f1;
    o.detail << "exponent=" << fit.fitted_exponent << " (oracle " << slope << ") coefficient*f1=" << ratio;
    o.require(std::abs(fit.fitted_exponent - 2.0) <= 0.02 && std::abs(slope - 2.0) <= 0.02, "exponent 2 +- 0.02");
    o.require(std::abs(ratio - 1.0) <= 0.02, "coefficient within 2% of 1/f1");
}

// ---- 4 ----
void closed_form(Outcome& o) {
    const auto p = fixture::reference_set();
    const auto sys = make_two_dof_system(p);
    const double bs = two_dof::b_star(p);
    const auto g = grazing_near(sys, 0.99 * bs, 0.0, 0.01);
    o.detail << "|b - b*|=" << std::abs(g.mu_star - bs);
    o.require(std::abs(g.mu_star - bs) <= 1e-8, "grazing b within 1e-8");

    const double b = 1.1 * bs;
    const double T = two_dof::period(p);
    const auto fam = two_dof::periodic_family_11(p, b);
    o.require(fam.size() == 2, "two orbits at 1.1 b*");
    double worst = 0.0;
    for (const auto& cf : fam) {
        const auto mode = cf.admissible ? ShootingMode::hybrid : ShootingMode::formal;
        const auto orbit = fixture::two_dof_orbit(p, b, cf.branch, 0.01, {}, mode);
        const auto back = two_dof::orbit_from_impact(p, b, orbit.tau0, orbit.post_impact(1));
        const double dtau = std::remainder(back.tau0 - cf.tau0, T);
        worst = std::max({worst, std::abs(back.C1 - cf.C1) / std::abs(cf.C1),
                          std::abs(back.vartheta - cf.vartheta) / std::abs(cf.vartheta),
                          std::abs(dtau) / std::max(std::abs(cf.tau0), 1.0)});
    }
    o.detail << " max rel (C1, vartheta, tau0)=" << worst;
    o.require(worst <= 1e-6, "orbits within 1e-6");

    // solvability B^2 (1 + D^2) >= A^2 turns into equality at b* / sqrt(1 + D^2)
    const double D = two_dof::coefficients(p, bs).D;
    const double b_eq = bs / std::sqrt(1.0 + D * D);
    const std::size_t n0 = two_dof::periodic_family_11(p, b_eq * (1.0 - 1e-6)).size();
    const std::size_t n1 = two_dof::periodic_family_11(p, b_eq).size();
    const std::size_t n_below = two_dof::periodic_family_11(p, 0.9 * bs).size();
    o.detail << " counts " << n0 << "/" << n1 << "/" << fam.size() << " (equality at b=" << b_eq
             << ", " << n_below << " at 0.9 b*)";
    o.require(n0 == 0 && n1 == 1, "counts 0/1/2");
}

// ---- 5 ----
void monodromy(Outcome& o) {
    const auto p = fixture::reference_set();
    const auto sys = make_two_dof_system(p);
    const auto m = two_dof::closed_form_monodromy(p);
    IntegratorConfig cfg;
    cfg.rel_tol = 1e-12;
    cfg.abs_tol = 1e-14;
    Vec z0(4);
    z0 << 3.0, 0.0, 2.0, 0.0;
    const Mat phi = smooth_variational(sys, 0.8, 0.0, z0, two_dof::period(p), cfg);
    const Mat blk = phi.topLeftCorner(2, 2);
    const double et = std::abs(blk.trace() - m.trace);
    const double ed = std::abs(blk.determinant() - std::exp(-2.0 * p.p * two_dof::period(p)));
    o.detail << "|trace err|=" << et << " |det err|=" << ed;
    o.require(et <= 1e-8 && ed <= 1e-8, "within 1e-8");
}

// ---- 6 ----
void eigen_asymptotics(Outcome& o) {
    const auto p = fixture::reference_set();
    const auto sys = make_two_dof_system(p);
    const double bs = two_dof::b_star(p);
    const double theta = 0.01;
    const auto orbit0 = fixture::two_dof_orbit(p, 1.1 * bs, -1, theta);
    const auto fam = approach_family(sys, theta, orbit0, bs, 3.0, 31, ShootingOptions{}, IntegratorConfig{});
    const int n = static_cast<int>(fam.orbits.size());
    o.require(n == 31, "family reaches the end of the sweep");
    std::vector<double> lam(n), lam_re(n);
    parallel_for(n, [&](int i) {
        const auto& orb = fam.orbits[i];
        lam[i] = max_abs_eigenvalue(poincare_jacobian(sys, orb.mu, theta, orb.section_state, IntegratorConfig{}).D,
                                    &lam_re[i]);
    });
    const auto g = grazing_near(sys, bs, 0.0, theta);
    const double a12 = g.monodromy(0, 1);
    const double r = p.r;
    bool monotone = true;
    for (int i = 1; i < n; ++i) {
        monotone &= fam.orbits[i].closing_speed() < fam.orbits[i - 1].closing_speed();
        monotone &= lam[i] > lam[i - 1];
    }
    const double y0 = fam.orbits.back().closing_speed();
    const double ratio = lam_re.back() * y0 / (-(r + 1.0) * a12 * g.phi0);
    o.detail << "points=" << n << " smallest Y0=" << y0 << " ratio=" << ratio << " monotone=" << monotone;
    o.require(ratio >= 0.95 && ratio <= 1.05, "ratio in [0.95, 1.05]");
    o.require(monotone, "|lambda+| increases as Y0 decreases");
}

// ---- 7 ----
void velocity_scaling(Outcome& o) {
    const auto p = fixture::reference_set();
    const double bs = two_dof::b_star(p);
    for (int branch : {-1, 1}) {
        std::vector<double> db, y;
        for (int i = 0; i <= 5; ++i) {
            const double b = bs * (1.0 + 1e-3 * std::pow(10.0, i / 5.0));
            const auto cf = two_dof::periodic_family_11(p, b);
            bool adm = false;
            for (const auto& c : cf)
                if (c.branch == branch) adm = c.admissible;
            const auto orb = fixture::two_dof_orbit(p, b, branch, 0.01, {}, adm ? ShootingMode::hybrid : ShootingMode::formal);
            db.push_back(b - bs);
            y.push_back(std::abs(orb.closing_speed()));
        }
        const double e = oracle::log_log_slope(db, y);
        o.detail << "branch " << branch << ": exponent=" << e << "; ";
        o.require(std::abs(e - 0.5) <= 0.05, "branch " + std::to_string(branch) + " exponent 0.5 +- 0.05");
    }
}

// ---- 8 ----
void classification(Outcome& o) {
    const auto osc = make_remark2_system();
    const double theta = 0.01;
    const auto rep = classify_grazing(osc, theta, grazing_near(osc, 0.05, 0.0, theta), ClassifyOptions{},
                                      IntegratorConfig{});
    const bool s1 = (rep.test7 < 0.0) == (rep.test8 < 0.0);
    const bool s2 = (rep.test11 > 0.0) == (rep.test12 < 0.0);
    o.detail << "verdict=" << rep.verdict << " test7=" << rep.test7 << " test8=" << rep.test8 << " test11=" << rep.test11
             << " test12=" << rep.test12;
    o.require(rep.single_dof && s1 && s2, "full tests and shortcuts agree in sign");
    for (double scale : {10.0, 0.1}) {
        const auto sys = oracle::rescaled(osc, scale);
        ClassifyOptions co;
        co.mu_bar *= scale;
        const auto rs = classify_grazing(sys, theta, grazing_near(sys, 0.05 * scale, 0.0, theta), co, IntegratorConfig{});
        o.detail << " scale " << scale << ": " << rs.verdict;
        o.require(rs.verdict == rep.verdict, "verdict invariant under rescaling");
    }
    o.detail << " b1=" << rep.b1;
    o.require(std::abs(rep.b1) < 1e-6, "|b1| < 1e-6");
}

// Bend configuration: fixed point, its splitting and the unstable branch carrying the crossing.
struct Bend {
    TwoDofParams p = fixture::bend_set();
    double b = 1.104194667982044;
    double theta = 1.0;
    int side = -1;
    ManifoldOptions mo;
    Bend() {
        mo.seed_distance = 1e-7;
        mo.arclength_budget = 1.0;
    }
};

struct BendSetup {
    VibroImpactSystem sys;
    PeriodicOrbit orbit;
    SpectralSplit split;
    ReturnMap map;
};

BendSetup bend_setup(const TwoDofParams& p, double b, double theta) {
    BendSetup s{make_two_dof_system(p), fixture::two_dof_orbit(p, b, -1, theta), {}, {}};
    s.split = spectral_split(poincare_jacobian(s.sys, b, theta, s.orbit.section_state, IntegratorConfig{}).D);
    s.map = poincare_return_map(s.sys, b, theta, IntegratorConfig{});
    return s;
}

const HomoclinicCrossing* first_transversal(const std::vector<HomoclinicCrossing>& cr) {
    for (const auto& c : cr)
        if (c.transversal) return &c;
    return nullptr;
}

// ---- 9 ----
void bend(Outcome& o) {
    const Bend cfg;
    const auto s = bend_setup(cfg.p, cfg.b, cfg.theta);
    o.require(s.split.u_plus.size() > 0, "real unstable eigenvalue");
    const auto g = grazing_near(s.sys, cfg.b, -0.05, cfg.theta);
    const auto rep = classify_grazing(s.sys, cfg.theta, g, ClassifyOptions{}, IntegratorConfig{});
    o.detail << "a12=" << rep.a12 << " (A^2)12=" << rep.a2_12 << " cond16=" << rep.cond16;
    o.require(rep.cond16, "cond16 holds");

    const Vec dir = cfg.side * s.split.u_plus;
    const double excl = 10.0 * cfg.mo.seed_distance;
    const auto pl = trace_manifold(s.map, s.orbit.section_state, dir, s.split.lambda_plus.real(), cfg.mo);
    // near the contact the surface of degenerate impacts is x1 = O(y1^2), so its normal is e1
    bool flip = false;
    for (const auto& k : pl.kinks) flip |= k.tangent_before(0) * k.tangent_after(0) < 0.0;
    o.detail << " kinks=" << pl.kinks.size() << " flip=" << flip;
    o.require(flip, "kink with opposite-sign normal tangent components");

    const auto cr = detect_homoclinic_bend(pl, s.orbit.section_state, s.split.unstable_normal, excl);
    const HomoclinicCrossing* c1 = first_transversal(cr);
    o.require(c1 != nullptr, "transversal crossing");
    ManifoldOptions m2 = cfg.mo;
    m2.arclength_budget *= 2.0;
    const auto pl2 = trace_manifold(s.map, s.orbit.section_state, dir, s.split.lambda_plus.real(), m2);
    const auto cr2 = detect_homoclinic_bend(pl2, s.orbit.section_state, s.split.unstable_normal, excl);
    const HomoclinicCrossing* c2 = first_transversal(cr2);
    o.require(c2 != nullptr, "transversal crossing with doubled budget");
    if (c1 && c2) {
        const double shift = (c1->point - c2->point).norm();
        o.detail << " crossing s=" << c1->arclength << " angle=" << c1->angle << " doubled-budget shift=" << shift;
        o.require(shift <= 1e-6 * std::max(1.0, c1->point.norm()), "crossing stable under doubled budget");
    }
}

// ---- 10 ----
DiskReturnReport disk_check(const TwoDofParams& p, double b, double theta, int side, const ManifoldOptions& mo) {
    const auto s = bend_setup(p, b, theta);
    if (s.split.u_plus.size() == 0) throw VibroError(ErrorKind::degenerate, "complex unstable eigenvalue");
    const auto pl = trace_manifold(s.map, s.orbit.section_state, side * s.split.u_plus, s.split.lambda_plus.real(), mo);
    const auto cr = detect_homoclinic_bend(pl, s.orbit.section_state, s.split.unstable_normal, 10.0 * mo.seed_distance);
    const HomoclinicCrossing* c = first_transversal(cr);
    if (!c) throw VibroError(ErrorKind::not_converged, "no transversal crossing");
    DiskReturnOptions d;
    d.grid = 9;
    d.max_k = 20;
    d.threads = std::max(1u, std::thread::hardware_concurrency());
    return verify_disk_return(s.map, make_frame(s.orbit.section_state, s.split), c->point, d);
}

std::string hits_text(const DiskReturnReport& r) {
    std::string t = "[";
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) t += r.hits[i][j] ? '1' : '0';
    return t + "]";
}

void disk_return(Outcome& o) {
    const Bend cfg;
    const auto rep = disk_check(cfg.p, cfg.b, cfg.theta, cfg.side, cfg.mo);
    o.detail << "k=" << rep.k << " hits=" << hits_text(rep) << " slope=" << rep.slope_bound
             << " contraction=" << rep.contraction_ratio << " over " << rep.contraction_pairs << " pairs";
    if (!rep.failures.empty()) o.detail << " first failure: " << rep.failures.front();
    o.require(rep.all_hits() && rep.k >= 1 && rep.k <= 20, "all hits for some k <= 20");
    o.require(rep.slope_bound <= 1.0, "slope <= 1");
    o.require(rep.contraction_ok, "contraction <= 1/2");

    TwoDofParams pp = cfg.p;
    pp.p *= 1.0 + 1e-4;
    pp.q *= 1.0 + 1e-4;
    const auto per = disk_check(pp, cfg.b * (1.0 + 1e-4), cfg.theta, cfg.side, cfg.mo);
    const bool same = std::equal(&rep.hits[0][0], &rep.hits[0][0] + 4, &per.hits[0][0]);
    o.detail << " perturbed hits=" << hits_text(per);
    o.require(same, "hits unchanged under 1e-4 perturbation");
}

const std::map<int, std::pair<std::string, std::function<void(Outcome&)>>> kCriteria = {
    {1, {"saltation determinant", saltation}},
    {2, {"Poincare jacobian vs differences", jacobian}},
    {3, {"degenerate-impact surface law", surface}},
    {4, {"closed-form two-dof reproduction", closed_form}},
    {5, {"closed-form monodromy", monodromy}},
    {6, {"eigenvalue asymptotics near grazing", eigen_asymptotics}},
    {7, {"square-root velocity scaling", velocity_scaling}},
    {8, {"classification coherence", classification}},
    {9, {"manifold bend", bend}},
    {10, {"disk return", disk_return}},
};

bool run(int id) {
    const auto& [name, fn] = kCriteria.at(id);
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        fn(o);
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << " [error: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d (%s): %s  %s  (%.1f s)\n", id, name.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.str().c_str(), secs);
    std::fflush(stdout);
    return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> ids;
    for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
    if (ids.empty())
        for (const auto& kv : kCriteria) ids.push_back(kv.first);
    bool ok = true;
    for (int id : ids) {
        if (!kCriteria.count(id)) {
            std::fprintf(stderr, "unknown criterion %d\n", id);
            return 2;
        }
        ok &= run(id);
    }
    return ok ? 0 : 1;
}
