#include "cli_io.hpp"

#include "vibro/grazing.hpp"
#include "vibro/manifolds.hpp"
#include "vibro/two_dof.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <optional>
#include <thread>

namespace vibro::cli {
namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<double> mu;
    std::optional<double> theta;
    int jobs = 1;
};

struct Context {
    RunConfig rc;
    VibroImpactSystem sys;
    double mu;
    double theta;
    IntegratorConfig cfg;
};

Context make_context(const Common& c) {
    RunConfig rc = load_config(c.config);
    VibroImpactSystem sys = make_builtin_system(rc.system, rc.params);
    const double mu = c.mu.value_or(rc.mu);
    const double theta = c.theta.value_or(rc.theta);
    IntegratorConfig cfg = rc.integrator;
    return Context{std::move(rc), std::move(sys), mu, theta, cfg};
}

json resolved(const Context& ctx, json extra = json::object()) {
    json params = json::object();
    for (const auto& [k, v] : ctx.sys.params()) params[k] = v;
    json j = {{"system", ctx.sys.name()},
              {"params", params},
              {"mu", ctx.mu},
              {"theta", ctx.theta},
              {"integrator", integrator_to_json(ctx.cfg)}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    return j;
}

void add_common(CLI::App* app, Common& c, bool jobs = false) {
    app->add_option("--config", c.config, "JSON config file")->required()->check(CLI::ExistingFile);
    app->add_option("--out", c.out, "output directory");
    app->add_option("--mu", c.mu, "override the config parameter value");
    app->add_option("--theta", c.theta, "override the section phase");
    if (jobs) app->add_option("--jobs", c.jobs, "worker threads for sweep units")->check(CLI::PositiveNumber);
}

template <class F>
void parallel_for(int n, int jobs, F&& body) {
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex m;
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(m);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < std::min(jobs, n); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

// ---- orbit seeds ----

struct OrbitSeed {
    std::optional<double> tau0;
    std::optional<double> v;
    std::string tangential;
    int branch = 0;  // closed-form branch for two-dof-graze
    int periods = 1;
    std::string mode = "hybrid";
};

void add_orbit_seed(CLI::App* app, OrbitSeed& s) {
    app->add_option("--tau0", s.tau0, "impact time guess");
    app->add_option("--v", s.v, "post-impact normal velocity guess");
    app->add_option("--tangential", s.tangential, "tangential state guess, comma separated");
    app->add_option("--branch", s.branch, "closed-form branch (+1/-1) seeding two-dof-graze orbits");
    app->add_option("--periods", s.periods, "forcing periods per orbit")->check(CLI::PositiveNumber);
    app->add_option("--mode", s.mode, "hybrid or formal shooting")->check(CLI::IsMember({"hybrid", "formal"}));
}

ShootingOptions shooting_options(const OrbitSeed& s) {
    ShootingOptions so;
    so.n_periods = s.periods;
    so.mode = s.mode == "formal" ? ShootingMode::formal : ShootingMode::hybrid;
    return so;
}

TwoDofParams two_dof_params(const VibroImpactSystem& sys) {
    ParamMap pm(sys.params().begin(), sys.params().end());
    return two_dof_params_from(pm);
}

OrbitGuess orbit_guess(const Context& ctx, const OrbitSeed& s) {
    OrbitGuess g;
    if (!s.tangential.empty()) g.tangential = parse_vector(s.tangential);
    if (s.tau0 && s.v) {
        g.tau0 = *s.tau0;
        g.v = *s.v;
        return g;
    }
    if (ctx.sys.name() != "two-dof-graze") {
        throw VibroError(ErrorKind::invalid_argument, "--tau0 and --v are required for system " + ctx.sys.name());
    }
    const TwoDofParams p = two_dof_params(ctx.sys);
    const auto fam = two_dof::periodic_family_11(p, ctx.mu);
    const int want = s.branch == 0 ? 1 : s.branch;
    for (const auto& o : fam) {
        if (o.branch != want && !(o.branch == 0)) continue;
        const Vec z = two_dof::orbit_state(p, ctx.mu, o, o.t_impact);
        g.tau0 = s.tau0.value_or(o.t_impact);
        g.v = s.v.value_or(z(1));
        return g;
    }
    throw VibroError(ErrorKind::invalid_argument, "no closed-form (1,1) orbit on the requested branch at this b");
}

json orbit_to_json(const PeriodicOrbit& o) {
    return {{"mu", o.mu},
            {"theta", o.theta},
            {"tau0", o.tau0},
            {"post_impact", vec_to_json(o.post_impact)},
            {"section_state", vec_to_json(o.section_state)},
            {"n_periods", o.n_periods},
            {"impact_count", o.impact_count},
            {"impact_times", o.impact_times},
            {"incoming_speeds", o.incoming_speeds},
            {"residual", o.residual},
            {"iterations", o.iterations},
            {"admissible", o.admissible},
            {"mode", o.mode == ShootingMode::formal ? "formal" : "hybrid"},
            {"anchored", o.anchored},
            {"peterka", {{"m", o.peterka.m}, {"n", o.peterka.n}}},
            {"jacobian_det", o.jacobian_det}};
}

json complex_list(const Eigen::VectorXcd& ev) {
    json a = json::array();
    for (Eigen::Index i = 0; i < ev.size(); ++i) a.push_back({ev(i).real(), ev(i).imag()});
    return a;
}

json split_to_json(const SpectralSplit& sp) {
    return {{"eigenvalues", complex_list(sp.eigenvalues)},
            {"lambda_plus", {sp.lambda_plus.real(), sp.lambda_plus.imag()}},
            {"lambda_minus", {sp.lambda_minus.real(), sp.lambda_minus.imag()}},
            {"Lambda1", sp.Lambda1},
            {"Lambda2", sp.Lambda2},
            {"dim_s", sp.dim_s()},
            {"dim_u", sp.dim_u()},
            {"dim_c", sp.dim_c()},
            {"u_plus", vec_to_json(sp.u_plus)},
            {"unstable_normal", vec_to_json(sp.unstable_normal)}};
}

json report_to_json(const GrazingReport& r) {
    json j = {{"verdict", r.verdict},
              {"ivanov_scenario", r.ivanov_scenario},
              {"degeneracy_reason", r.degeneracy_reason},
              {"mu_star", r.mu_star},
              {"phi0", r.phi0},
              {"orientation", r.orientation},
              {"A", mat_to_json(r.A)},
              {"B", vec_to_json(r.B)},
              {"F0", vec_to_json(r.F0)},
              {"L_y", mat_to_json(r.L_y)},
              {"L_x", mat_to_json(r.L_x)},
              {"det_L_y", r.det_L_y},
              {"det_L_x", r.det_L_x},
              {"test7", r.test7},
              {"test11", r.test11},
              {"test13", r.test13},
              {"a12", r.a12},
              {"a2_12", r.a2_12},
              {"cond16", r.cond16},
              {"b1", r.b1},
              {"extrapolation_change", r.extrapolation_change},
              {"reduced", r.reduced},
              {"A_direct", mat_to_json(r.A_direct)}};
    if (r.single_dof) {
        j["single_dof"] = {{"test8", r.test8}, {"test12", r.test12}, {"delta_y", r.delta_y}, {"delta_x", r.delta_x}};
    }
    return j;
}

// Grazing orbit from the config parameter value as the initial guess.
GrazingOrbit locate_grazing(const Context& ctx, double tau0_guess, const std::string& tangential,
                            const ShootingOptions& so) {
    GrazingGuess gg;
    gg.mu = ctx.mu;
    gg.tau0 = tau0_guess;
    if (!tangential.empty()) gg.tangential = parse_vector(tangential);
    return find_grazing_orbit(ctx.sys, ctx.theta, gg, so, ctx.cfg);
}

// ---- simulate ----

struct SimulateArgs {
    Common c;
    double periods = 10.0;
    std::string state;
    std::optional<double> t0;
    int samples = 200;
};

int run_simulate(const SimulateArgs& a) {
    Context ctx = make_context(a.c);
    const int n2 = ctx.sys.dim();
    Vec z0;
    if (!a.state.empty()) {
        z0 = parse_vector(a.state);
        if (z0.size() != n2) throw VibroError(ErrorKind::invalid_argument, "--state has the wrong dimension");
    } else {
        z0 = Vec::Zero(n2);
        z0(0) = 1.0;
    }
    const double t0 = a.t0.value_or(-ctx.theta);
    if (a.state.empty() && ctx.sys.has_anchor()) z0.tail(n2 - 2) = ctx.sys.anchor(t0, ctx.mu).value;
    const double t1 = t0 + a.periods * ctx.sys.period();
    const HybridTrajectory tr = simulate_hybrid(ctx.sys, ctx.mu, t0, z0, t1, ctx.cfg);

    RunOutput out("simulate", output_dir(a.c.out, "simulate"));
    std::vector<std::string> header{"t"};
    for (int k = 1; k <= ctx.sys.dof(); ++k) {
        header.push_back("x" + std::to_string(k));
        header.push_back("y" + std::to_string(k));
    }
    {
        CsvWriter csv(out.file("trajectory.csv"), header);
        const long n = std::max(1L, std::lround(a.periods * a.samples));
        for (long i = 0; i <= n; ++i) {
            const double t = i == n ? tr.t_end : t0 + (tr.t_end - t0) * static_cast<double>(i) / n;
            csv << t << tr.state_at(t);
            csv.end_row();
        }
    }
    {
        CsvWriter csv(out.file("events.csv"), {"t", "Y", "kind"});
        for (const auto& e : tr.events) {
            csv << e.t << e.normal_speed << std::string(to_string(e.kind));
            csv.end_row();
        }
    }
    out.set_config(a.c.config, resolved(ctx, {{"periods", a.periods}, {"t0", t0}, {"initial_state", vec_to_json(z0)},
                                              {"samples_per_period", a.samples}, {"truncated", tr.truncated}}));
    out.finish();
    return 0;
}

// ---- find-orbit ----

struct OrbitArgs {
    Common c;
    OrbitSeed seed;
};

int run_find_orbit(const OrbitArgs& a) {
    Context ctx = make_context(a.c);
    const ShootingOptions so = shooting_options(a.seed);
    const OrbitGuess g = orbit_guess(ctx, a.seed);
    const PeriodicOrbit o = find_periodic_orbit(ctx.sys, ctx.mu, ctx.theta, g, so, ctx.cfg);
    json j = orbit_to_json(o);
    try {
        const VariationalResult vr = poincare_jacobian(ctx.sys, ctx.mu, ctx.theta, o.section_state, ctx.cfg, so.n_periods);
        j["monodromy"] = mat_to_json(vr.D);
        j["multipliers"] = complex_list(Eigen::EigenSolver<Mat>(vr.D).eigenvalues());
    } catch (const VibroError& e) {
        j["monodromy_error"] = e.what();
    }
    if (ctx.sys.name() == "two-dof-graze") {
        const TwoDofParams p = two_dof_params(ctx.sys);
        const auto cf = two_dof::orbit_from_impact(p, ctx.mu, o.tau0, o.post_impact(1));
        j["closed_form"] = {{"C1", cf.C1}, {"vartheta", cf.vartheta}, {"tau0", cf.tau0}};
    }
    RunOutput out("find-orbit", output_dir(a.c.out, "find-orbit"));
    out.write_json("orbit.json", j);
    out.set_config(a.c.config, resolved(ctx, {{"guess", {{"tau0", g.tau0}, {"v", g.v}}}, {"periods", so.n_periods}}));
    out.finish();
    return 0;
}

// ---- continue ----

struct ContinueArgs {
    Common c;
    OrbitSeed seed;
    double mu_end = 0.0;
    double step = 1e-2;
    double step_min = 1e-7;
    double step_max = 1e-1;
    int max_points = 10000;
    double grazing_speed = 1e-9;
    bool asymptotics = false;
    double decades = 0.0;  // geometric approach to mu_end over this many decades
};

int run_continue(const ContinueArgs& a) {
    Context ctx = make_context(a.c);
    const ShootingOptions so = shooting_options(a.seed);
    const PeriodicOrbit o0 = find_periodic_orbit(ctx.sys, ctx.mu, ctx.theta, orbit_guess(ctx, a.seed), so, ctx.cfg);
    StepControl sc;
    sc.initial = a.step;
    sc.min = a.step_min;
    sc.max = a.step_max;
    sc.max_points = a.max_points;
    sc.grazing_speed = a.grazing_speed;
    const ContinuationResult res = a.decades > 0.0
                                       ? approach_family(ctx.sys, ctx.theta, o0, a.mu_end, a.decades, a.max_points, so, ctx.cfg)
                                       : continue_family(ctx.sys, ctx.theta, o0, a.mu_end, sc, so, ctx.cfg);

    const int n = static_cast<int>(res.orbits.size());
    std::vector<double> lam(n, std::nan("")), lam_abs(n, std::nan(""));
    parallel_for(n, a.c.jobs, [&](int i) {
        const auto& o = res.orbits[i];
        const VariationalResult vr = poincare_jacobian(ctx.sys, o.mu, ctx.theta, o.section_state, ctx.cfg, so.n_periods);
        const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(vr.D).eigenvalues();
        Eigen::Index k = 0;
        ev.cwiseAbs().maxCoeff(&k);
        lam[i] = ev(k).real();
        lam_abs[i] = std::abs(ev(k));
    });

    RunOutput out("continue", output_dir(a.c.out, "continue"));
    {
        CsvWriter csv(out.file("family.csv"),
                      {"mu", "tau0", "Y0", "impact_count", "admissible", "lambda_max", "lambda_max_abs"});
        for (int i = 0; i < n; ++i) {
            const auto& o = res.orbits[i];
            csv << o.mu << o.tau0 << o.closing_speed() << o.impact_count << static_cast<int>(o.admissible) << lam[i]
                << lam_abs[i];
            csv.end_row();
        }
    }
    json events = json::array();
    for (const auto& e : res.events) events.push_back({{"kind", to_string(e.kind)}, {"mu", e.mu}, {"detail", e.detail}});
    json summary = {{"points", n}, {"events", events}};

    if (a.asymptotics && n >= 2) {
        // grazing reference from the smallest-speed member
        int imin = 0;
        for (int i = 1; i < n; ++i)
            if (res.orbits[i].closing_speed() < res.orbits[imin].closing_speed()) imin = i;
        const auto& oz = res.orbits[imin];
        GrazingGuess gg{a.mu_end, oz.tau0, oz.post_impact.tail(oz.post_impact.size() - 2)};
        const GrazingOrbit g = find_grazing_orbit(ctx.sys, ctx.theta, gg, so, ctx.cfg);
        const GrazingReport rep = classify_grazing(ctx.sys, ctx.theta, g, ClassifyOptions{}, ctx.cfg);
        const double r = ctx.sys.restitution(g.mu_star);
        // order by decreasing Y0
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(),
                  [&](int x, int y) { return res.orbits[x].closing_speed() > res.orbits[y].closing_speed(); });
        bool monotone = true;
        for (int i = 1; i < n; ++i) monotone = monotone && lam_abs[idx[i]] > lam_abs[idx[i - 1]];
        const double y_min = res.orbits[imin].closing_speed();
        const double ratio = lam[imin] * y_min / (-(r + 1.0) * rep.a12 * g.phi0);

        // least squares of log Y0 against log |mu - mu*| over the last decade
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int m = 0;
        double dmin = std::numeric_limits<double>::infinity();
        for (const auto& o : res.orbits) dmin = std::min(dmin, std::abs(o.mu - g.mu_star));
        for (const auto& o : res.orbits) {
            const double d = std::abs(o.mu - g.mu_star);
            if (!(d > 0.0) || d > 10.0 * dmin || !(o.closing_speed() > 0.0)) continue;
            const double lx = std::log(d), ly = std::log(o.closing_speed());
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            ++m;
        }
        summary["grazing"] = {{"mu_star", g.mu_star}, {"phi0", g.phi0}, {"a12", rep.a12}, {"restitution", r}};
        summary["smallest_Y0"] = y_min;
        summary["lambda_ratio_at_smallest_Y0"] = ratio;
        summary["lambda_abs_monotone"] = monotone;
        summary["velocity_exponent"] = m >= 2 ? (m * sxy - sx * sy) / (m * sxx - sx * sx) : std::nan("");
        summary["velocity_fit_points"] = m;
    }
    out.write_json("summary.json", summary);
    out.set_config(a.c.config, resolved(ctx, {{"mu_end", a.mu_end}, {"step", a.step}, {"step_min", a.step_min},
                                              {"step_max", a.step_max}, {"asymptotics", a.asymptotics},
                                              {"decades", a.decades}, {"max_points", a.max_points}}));
    out.finish();
    return 0;
}

// ---- classify ----

struct ClassifyArgs {
    Common c;
    OrbitSeed seed;
    double tau0_guess = 0.0;
    ClassifyOptions opts;
};

int run_classify(const ClassifyArgs& a) {
    Context ctx = make_context(a.c);
    ClassifyOptions co = a.opts;
    co.shooting = shooting_options(a.seed);
    const GrazingOrbit g = locate_grazing(ctx, a.tau0_guess, a.seed.tangential, co.shooting);
    const GrazingReport rep = classify_grazing(ctx.sys, ctx.theta, g, co, ctx.cfg);
    json j = report_to_json(rep);
    j["grazing_orbit"] = {{"tau0", g.tau0}, {"contact_state", vec_to_json(g.contact_state)},
                          {"residual", g.residual}, {"iterations", g.iterations}};
    RunOutput out("classify", output_dir(a.c.out, "classify"));
    out.write_json("report.json", j);
    out.set_config(a.c.config, resolved(ctx, {{"mu_bar", co.mu_bar}, {"theta_bar", co.theta_bar},
                                              {"levels", co.levels}, {"degeneracy_tol", co.degeneracy_tol}}));
    out.finish();
    std::cout << rep.verdict << '\n';
    return rep.verdict == "degenerate" ? 2 : 0;
}

// ---- graze-surface ----

struct SurfaceArgs {
    Common c;
    OrbitSeed seed;
    double y1_min = 1e-3;
    double y1_max = 1e-2;
    int samples = 11;
    bool at_grazing = false;
    double tau0_guess = 0.0;
};

int run_surface(const SurfaceArgs& a) {
    Context ctx = make_context(a.c);
    if (a.at_grazing) ctx.mu = locate_grazing(ctx, a.tau0_guess, a.seed.tangential, shooting_options(a.seed)).mu_star;
    const int n2 = ctx.sys.dim();
    Vec tan;
    if (!a.seed.tangential.empty()) {
        tan = parse_vector(a.seed.tangential);
    } else if (ctx.sys.has_anchor()) {
        tan = ctx.sys.anchor(-ctx.theta, ctx.mu).value;
    } else {
        tan = Vec::Zero(n2 - 2);
    }
    Vec ref = Vec::Zero(n2);
    ref.tail(n2 - 2) = tan;
    std::vector<double> grid;
    for (int i = 0; i < a.samples; ++i) {
        const double f = a.samples == 1 ? 0.0 : static_cast<double>(i) / (a.samples - 1);
        grid.push_back(-a.y1_min * std::pow(a.y1_max / a.y1_min, f));
    }
    const SurfaceFit fit = fit_grazing_surface(ctx.sys, ctx.mu, ctx.theta, tan, grid, ref, ctx.cfg);
    RunOutput out("graze-surface", output_dir(a.c.out, "graze-surface"));
    {
        CsvWriter csv(out.file("surface.csv"), {"y1", "gamma"});
        for (const auto& s : fit.samples) {
            csv << s.y1 << s.gamma;
            csv.end_row();
        }
    }
    out.write_json("fit.json", {{"fitted_exponent", fit.fitted_exponent},
                                {"fitted_coefficient", fit.fitted_coefficient},
                                {"reference_inverse_f1", fit.reference_inverse_f1},
                                {"coefficient_ratio", fit.fitted_coefficient / fit.reference_inverse_f1},
                                {"residual_rms", fit.residual_rms}});
    out.set_config(a.c.config, resolved(ctx, {{"y1_min", a.y1_min}, {"y1_max", a.y1_max}, {"samples", a.samples},
                                              {"tangential", vec_to_json(tan)}}));
    out.finish();
    return 0;
}

// ---- jacobian ----

struct JacobianArgs {
    Common c;
    OrbitSeed seed;
    std::string state;
    double fd_step = 1e-6;
};

// Across-impact Jacobian from central differences of the flow over [t - h, t + h],
// reached forward from the section state,
// with the smooth factors on both sides divided out.
Mat across_impact_fd(const Context& ctx, const Vec& z_section, const ImpactEvent& e, double h) {
    const int n2 = ctx.sys.dim();
    HybridOptions ho;
    ho.keep_dense = false;
    const Vec za = simulate_hybrid(ctx.sys, ctx.mu, -ctx.theta, z_section, e.t - h, ctx.cfg, ho).z_end;
    auto flow = [&](const Vec& z) { return simulate_hybrid(ctx.sys, ctx.mu, e.t - h, z, e.t + h, ctx.cfg, ho).z_end; };
    Mat J(n2, n2);
    const double d = 1e-7;
    for (int j = 0; j < n2; ++j) {
        Vec zp = za, zm = za;
        zp(j) += d;
        zm(j) -= d;
        J.col(j) = (flow(zp) - flow(zm)) / (2.0 * d);
    }
    const Mat pre = smooth_variational(ctx.sys, ctx.mu, e.t - h, za, e.t, ctx.cfg);
    const Mat post = smooth_variational(ctx.sys, ctx.mu, e.t, e.post, e.t + h, ctx.cfg);
    return post.inverse() * J * pre.inverse();
}

int run_jacobian(const JacobianArgs& a) {
    Context ctx = make_context(a.c);
    const int n2 = ctx.sys.dim();
    Vec z0;
    json orbit = nullptr;
    if (!a.state.empty()) {
        z0 = parse_vector(a.state);
        if (z0.size() != n2) throw VibroError(ErrorKind::invalid_argument, "--state has the wrong dimension");
    } else {
        const PeriodicOrbit o = find_periodic_orbit(ctx.sys, ctx.mu, ctx.theta, orbit_guess(ctx, a.seed),
                                                    shooting_options(a.seed), ctx.cfg);
        z0 = o.section_state;
        orbit = orbit_to_json(o);
    }
    const int periods = a.seed.periods;
    const VariationalResult vr = poincare_jacobian(ctx.sys, ctx.mu, ctx.theta, z0, ctx.cfg, periods);
    Mat fd(n2, n2);
    for (int j = 0; j < n2; ++j) {
        Vec zp = z0, zm = z0;
        zp(j) += a.fd_step;
        zm(j) -= a.fd_step;
        fd.col(j) = (poincare_map(ctx.sys, ctx.mu, ctx.theta, zp, ctx.cfg, periods) -
                     poincare_map(ctx.sys, ctx.mu, ctx.theta, zm, ctx.cfg, periods)) /
                    (2.0 * a.fd_step);
    }
    const double rel = (vr.D - fd).norm() / vr.D.norm();

    json salt = json::array();
    std::size_t si = 0;
    for (const auto& e : vr.events) {
        if (e.kind != EventKind::reflection || si >= vr.saltations.size()) continue;
        const SaltationMatrix& s = vr.saltations[si++];
        const double r = ctx.sys.restitution(ctx.mu);
        json windows = json::array();
        double best = std::numeric_limits<double>::infinity();
        for (double h : {1e-3, 1e-4, 1e-5}) {
            const Mat est = across_impact_fd(ctx, z0, e, h);
            const double err = (est - s.matrix).norm() / s.matrix.norm();
            best = std::min(best, err);
            windows.push_back({{"window", h}, {"relative_error", err}});
        }
        salt.push_back({{"t", s.t}, {"normal_speed", s.normal_speed}, {"matrix", mat_to_json(s.matrix)},
                        {"det", s.det}, {"r_squared", r * r}, {"fd_windows", windows},
                        {"fd_best_relative_error", best}});
    }
    RunOutput out("jacobian", output_dir(a.c.out, "jacobian"));
    out.write_json("jacobian.json", {{"state", vec_to_json(z0)}, {"orbit", orbit}, {"D", mat_to_json(vr.D)},
                                     {"det_D", vr.det_D}, {"D_fd", mat_to_json(fd)}, {"relative_error", rel},
                                     {"saltations", salt}});
    out.set_config(a.c.config, resolved(ctx, {{"fd_step", a.fd_step}, {"periods", periods}}));
    out.finish();
    return 0;
}

// ---- lyapunov ----

struct LyapunovArgs {
    Common c;
    OrbitSeed seed;
    std::string state;
    int n_periods = 200;
};

int run_lyapunov(const LyapunovArgs& a) {
    Context ctx = make_context(a.c);
    Vec z0;
    if (!a.state.empty()) {
        z0 = parse_vector(a.state);
    } else {
        z0 = find_periodic_orbit(ctx.sys, ctx.mu, ctx.theta, orbit_guess(ctx, a.seed), shooting_options(a.seed), ctx.cfg)
                 .section_state;
    }
    const LyapunovResult lr = lyapunov_exponents(ctx.sys, ctx.mu, ctx.theta, z0, a.n_periods, ctx.cfg);
    RunOutput out("lyapunov", output_dir(a.c.out, "lyapunov"));
    out.write_json("lyapunov.json", {{"state", vec_to_json(z0)}, {"exponents_per_period", lr.exponents},
                                     {"periodic", lr.periodic}, {"periods", lr.periods}});
    out.set_config(a.c.config, resolved(ctx, {{"lyapunov_periods", a.n_periods}}));
    out.finish();
    return 0;
}

// ---- manifold ----

struct ManifoldArgs {
    Common c;
    OrbitSeed seed;
    ManifoldOptions mo;
    int side = 0;  // 0 both
    double exclusion = 0.0;
    bool budget_check = false;
    bool check_cond16 = false;
    std::optional<double> grazing_tau0;
};

struct TracedOrbit {
    PeriodicOrbit orbit;
    VariationalResult flow;
    SpectralSplit split;
};

TracedOrbit fixed_point_split(const Context& ctx, const OrbitSeed& seed) {
    TracedOrbit t{find_periodic_orbit(ctx.sys, ctx.mu, ctx.theta, orbit_guess(ctx, seed), shooting_options(seed), ctx.cfg),
                  {}, {}};
    t.flow = poincare_jacobian(ctx.sys, ctx.mu, ctx.theta, t.orbit.section_state, ctx.cfg);
    t.split = spectral_split(t.flow.D);
    if (t.split.u_plus.size() == 0) throw VibroError(ErrorKind::degenerate, "unstable eigenvalue is not real");
    return t;
}

json polyline_summary(const ManifoldPolyline& pl, const std::vector<HomoclinicCrossing>& cr) {
    json kinks = json::array();
    for (const auto& k : pl.kinks) {
        kinks.push_back({{"index", k.index}, {"arclength", pl.arclengths[k.index]}, {"turning_angle", k.turning_angle},
                         {"tangent_before", vec_to_json(k.tangent_before)},
                         {"tangent_after", vec_to_json(k.tangent_after)},
                         {"normal_sign_flip", k.tangent_before(0) * k.tangent_after(0) < 0.0}});
    }
    json cross = json::array();
    for (const auto& c : cr) {
        cross.push_back({{"segment", c.segment}, {"point", vec_to_json(c.point)}, {"arclength", c.arclength},
                         {"angle", c.angle}, {"transversal", c.transversal}});
    }
    return {{"points", pl.points.size()}, {"arclength", pl.arclengths.empty() ? 0.0 : pl.arclengths.back()},
            {"level_end", pl.parameters.empty() ? 0.0 : pl.parameters.back()}, {"kinks", kinks},
            {"jump_indices", pl.jump_indices}, {"crossings", cross}, {"truncated", pl.truncated}, {"note", pl.note}};
}

const HomoclinicCrossing* first_transversal(const std::vector<HomoclinicCrossing>& cr) {
    for (const auto& c : cr)
        if (c.transversal) return &c;
    return nullptr;
}

int run_manifold(const ManifoldArgs& a) {
    Context ctx = make_context(a.c);
    const TracedOrbit fp = fixed_point_split(ctx, a.seed);
    const ReturnMap map = poincare_return_map(ctx.sys, ctx.mu, ctx.theta, ctx.cfg);
    const double excl = a.exclusion > 0.0 ? a.exclusion : 10.0 * a.mo.seed_distance;
    RunOutput out("manifold", output_dir(a.c.out, "manifold"));
    json branches = json::array();
    std::vector<int> sides = a.side == 0 ? std::vector<int>{1, -1} : std::vector<int>{a.side};
    for (int s : sides) {
        const Vec dir = s * fp.split.u_plus;
        const ManifoldPolyline pl = trace_manifold(map, fp.orbit.section_state, dir, fp.split.lambda_plus.real(), a.mo);
        const auto cr = detect_homoclinic_bend(pl, fp.orbit.section_state, fp.split.unstable_normal, excl);
        const std::string name = s > 0 ? "manifold_plus.csv" : "manifold_minus.csv";
        {
            std::vector<std::string> header{"arclength", "level"};
            for (int k = 1; k <= ctx.sys.dof(); ++k) {
                header.push_back("x" + std::to_string(k));
                header.push_back("y" + std::to_string(k));
            }
            CsvWriter csv(out.file(name), header);
            for (std::size_t i = 0; i < pl.points.size(); ++i) {
                csv << pl.arclengths[i] << pl.parameters[i] << pl.points[i];
                csv.end_row();
            }
        }
        json b = polyline_summary(pl, cr);
        b["side"] = s;
        b["file"] = name;
        if (a.budget_check) {
            ManifoldOptions m2 = a.mo;
            m2.arclength_budget *= 2.0;
            const ManifoldPolyline pl2 = trace_manifold(map, fp.orbit.section_state, dir, fp.split.lambda_plus.real(), m2);
            const auto cr2 = detect_homoclinic_bend(pl2, fp.orbit.section_state, fp.split.unstable_normal, excl);
            const HomoclinicCrossing* c1 = first_transversal(cr);
            const HomoclinicCrossing* c2 = first_transversal(cr2);
            json chk = {{"doubled_budget", m2.arclength_budget}, {"doubled", polyline_summary(pl2, cr2)}};
            if (c1 && c2) {
                chk["first_crossing_shift"] = (c1->point - c2->point).norm();
                chk["first_crossing_arclength_shift"] = std::abs(c1->arclength - c2->arclength);
            }
            b["budget_check"] = chk;
        }
        branches.push_back(b);
    }
    json j = {{"fixed_point", vec_to_json(fp.orbit.section_state)}, {"orbit", orbit_to_json(fp.orbit)},
              {"split", split_to_json(fp.split)}, {"branches", branches}};
    if (a.check_cond16) {
        const double T = ctx.sys.period();
        GrazingGuess gg{ctx.mu, a.grazing_tau0.value_or(fp.orbit.tau0 - T * std::round(fp.orbit.tau0 / T)), Vec()};
        const GrazingOrbit g = find_grazing_orbit(ctx.sys, ctx.theta, gg, shooting_options(a.seed), ctx.cfg);
        const GrazingReport rep = classify_grazing(ctx.sys, ctx.theta, g, ClassifyOptions{}, ctx.cfg);
        j["grazing"] = {{"mu_star", g.mu_star}, {"a12", rep.a12}, {"a2_12", rep.a2_12}, {"cond16", rep.cond16},
                        {"verdict", rep.verdict}};
    }
    out.write_json("manifold.json", j);
    out.set_config(a.c.config,
                   resolved(ctx, {{"seed_distance", a.mo.seed_distance}, {"arclength_budget", a.mo.arclength_budget},
                                  {"h_min", a.mo.h_min}, {"h_max", a.mo.h_max}, {"max_turn", a.mo.max_turn},
                                  {"exclusion_radius", excl}}));
    out.finish();
    return 0;
}

// ---- disk-check ----

struct DiskArgs {
    Common c;
    OrbitSeed seed;
    ManifoldOptions mo;
    DiskReturnOptions dopts;
    int side = -1;
    double perturb = 0.0;
    std::string perturb_params = "p,q";
};

json box_to_json(const Box& b) { return {{"center", vec_to_json(b.center)}, {"half_width", vec_to_json(b.half_width)}}; }

json disk_report_to_json(const DiskReturnReport& r) {
    return {{"k", r.k},
            {"hits", {{r.hits[0][0], r.hits[0][1]}, {r.hits[1][0], r.hits[1][1]}}},
            {"all_hits", r.all_hits()},
            {"slope_bound", r.slope_bound},
            {"contraction_ratio", r.contraction_ratio},
            {"contraction_pairs", r.contraction_pairs},
            {"contraction_ok", r.contraction_ok},
            {"failures", r.failures},
            {"U0", box_to_json(r.U0)},
            {"U1", box_to_json(r.U1)},
            {"V0", box_to_json(r.V0)},
            {"V1", box_to_json(r.V1)}};
}

json disk_pipeline(const Context& ctx, const DiskArgs& a) {
    const TracedOrbit fp = fixed_point_split(ctx, a.seed);
    const ReturnMap map = poincare_return_map(ctx.sys, ctx.mu, ctx.theta, ctx.cfg);
    const ManifoldPolyline pl =
        trace_manifold(map, fp.orbit.section_state, a.side * fp.split.u_plus, fp.split.lambda_plus.real(), a.mo);
    const auto cr = detect_homoclinic_bend(pl, fp.orbit.section_state, fp.split.unstable_normal, 10.0 * a.mo.seed_distance);
    const HomoclinicCrossing* c = first_transversal(cr);
    if (!c) throw VibroError(ErrorKind::not_converged, "no transversal homoclinic crossing within the arclength budget");
    const StraightFrame frame = make_frame(fp.orbit.section_state, fp.split);
    DiskReturnOptions d = a.dopts;
    d.threads = a.c.jobs;
    const DiskReturnReport rep = verify_disk_return(map, frame, c->point, d);
    json j = disk_report_to_json(rep);
    j["mu"] = ctx.mu;
    j["params"] = json::object();
    for (const auto& [k, v] : ctx.sys.params()) j["params"][k] = v;
    j["fixed_point"] = vec_to_json(fp.orbit.section_state);
    j["homoclinic_point"] = vec_to_json(c->point);
    j["homoclinic_zeta"] = vec_to_json(frame.to_zeta(c->point));
    return j;
}

int run_disk(const DiskArgs& a) {
    Context ctx = make_context(a.c);
    json j = disk_pipeline(ctx, a);
    if (a.perturb != 0.0) {
        ParamMap pm(ctx.sys.params().begin(), ctx.sys.params().end());
        std::stringstream ss(a.perturb_params);
        std::string key;
        while (std::getline(ss, key, ',')) {
            if (!pm.count(key)) throw VibroError(ErrorKind::invalid_argument, "unknown parameter '" + key + "'");
            pm[key] *= 1.0 + a.perturb;
        }
        Context pc{ctx.rc, make_builtin_system(ctx.sys.name(), pm), ctx.mu * (1.0 + a.perturb), ctx.theta, ctx.cfg};
        json pj = disk_pipeline(pc, a);
        j["perturbed"] = pj;
        j["hits_unchanged"] = pj["hits"] == j["hits"];
    }
    RunOutput out("disk-check", output_dir(a.c.out, "disk-check"));
    out.write_json("disk_report.json", j);
    out.set_config(a.c.config, resolved(ctx, {{"grid", a.dopts.grid}, {"max_k", a.dopts.max_k},
                                              {"eps_s", a.dopts.eps_s}, {"eps_u", a.dopts.eps_u},
                                              {"eps_c", a.dopts.eps_c}, {"side", a.side},
                                              {"seed_distance", a.mo.seed_distance},
                                              {"arclength_budget", a.mo.arclength_budget},
                                              {"perturb", a.perturb}}));
    out.finish();
    return 0;
}

// ---- oracle ----

struct OracleArgs {
    Common c;
};

int run_oracle(const OracleArgs& a) {
    Context ctx = make_context(a.c);
    if (ctx.sys.name() != "two-dof-graze") {
        throw VibroError(ErrorKind::invalid_argument, "oracle is available for two-dof-graze only");
    }
    const TwoDofParams p = two_dof_params(ctx.sys);
    const double b = ctx.mu;
    json fam = json::array();
    for (const auto& o : two_dof::periodic_family_11(p, b)) {
        fam.push_back({{"branch", o.branch}, {"C1", o.C1}, {"vartheta", o.vartheta}, {"tau0", o.tau0},
                       {"t_impact", o.t_impact}, {"Y0", o.Y0}, {"admissible", o.admissible}, {"residual", o.residual}});
    }
    const auto m = two_dof::closed_form_monodromy(p);
    const auto fw = two_dof::check_frequency_window(p);
    const auto co = two_dof::coefficients(p, b);
    json j = {{"b_star", two_dof::b_star(p)},
              {"b", b},
              {"vartheta", two_dof::solve_vartheta(p)},
              {"omega0", two_dof::omega0(p)},
              {"coefficients", {{"A", co.A}, {"B", co.B}, {"H", co.H}, {"D", co.D}}},
              {"family", fam},
              {"monodromy", {{"trace", m.trace}, {"det", m.det}}},
              {"frequency_window", {{"ok", fw.ok}, {"k", fw.k ? json(*fw.k) : json(nullptr)}, {"ratio", fw.ratio}}}};
    RunOutput out("oracle", output_dir(a.c.out, "oracle"));
    out.write_json("oracle.json", j);
    out.set_config(a.c.config, resolved(ctx));
    out.finish();
    std::cout << j.dump(2) << '\n';
    return 0;
}

void add_manifold_options(CLI::App* app, ManifoldOptions& mo) {
    app->add_option("--seed-distance", mo.seed_distance);
    app->add_option("--budget", mo.arclength_budget, "arclength budget");
    app->add_option("--h-min", mo.h_min);
    app->add_option("--h-max", mo.h_max);
    app->add_option("--max-turn", mo.max_turn);
    app->add_option("--max-points", mo.max_points);
}

int error_exit(const std::string& kind, const std::string& msg) {
    json e = {{"error", kind}, {"message", msg}};
    std::cerr << e.dump() << '\n';
    return 1;
}

}  // namespace

int dispatch(int argc, char** argv) {
    CLI::App app{"Vibro-impact grazing analysis"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "hybrid trajectory and impact events");
    add_common(c_sim, sim.c);
    c_sim->add_option("--periods", sim.periods, "forcing periods to integrate");
    c_sim->add_option("--state", sim.state, "initial state, comma separated");
    c_sim->add_option("--t0", sim.t0, "initial time, default -theta");
    c_sim->add_option("--samples-per-period", sim.samples);

    OrbitArgs orb;
    auto* c_orb = app.add_subcommand("find-orbit", "periodic impacting orbit by shooting");
    add_common(c_orb, orb.c);
    add_orbit_seed(c_orb, orb.seed);

    ContinueArgs cont;
    auto* c_cont = app.add_subcommand("continue", "continue a periodic family in the parameter");
    add_common(c_cont, cont.c, true);
    add_orbit_seed(c_cont, cont.seed);
    c_cont->add_option("--mu-end", cont.mu_end)->required();
    c_cont->add_option("--step", cont.step);
    c_cont->add_option("--step-min", cont.step_min);
    c_cont->add_option("--step-max", cont.step_max);
    c_cont->add_option("--max-points", cont.max_points);
    c_cont->add_option("--grazing-speed", cont.grazing_speed);
    c_cont->add_option("--decades", cont.decades, "approach mu-end geometrically over this many decades");
    c_cont->add_flag("--asymptotics", cont.asymptotics, "eigenvalue and velocity scaling near grazing");

    ClassifyArgs cls;
    auto* c_cls = app.add_subcommand("classify", "grazing orbit and its continuous/discontinuous verdict");
    add_common(c_cls, cls.c);
    add_orbit_seed(c_cls, cls.seed);
    c_cls->add_option("--tau0-guess", cls.tau0_guess, "contact time guess");
    c_cls->add_option("--mu-bar", cls.opts.mu_bar);
    c_cls->add_option("--theta-bar", cls.opts.theta_bar);
    c_cls->add_option("--levels", cls.opts.levels);
    c_cls->add_option("--degeneracy-tol", cls.opts.degeneracy_tol);

    SurfaceArgs srf;
    auto* c_srf = app.add_subcommand("graze-surface", "surface of tangential first contacts");
    add_common(c_srf, srf.c);
    add_orbit_seed(c_srf, srf.seed);
    c_srf->add_option("--y1-min", srf.y1_min, "smallest |y1| sample");
    c_srf->add_option("--y1-max", srf.y1_max, "largest |y1| sample");
    c_srf->add_option("--samples", srf.samples);
    c_srf->add_flag("--at-grazing", srf.at_grazing, "move the parameter onto the grazing value first");
    c_srf->add_option("--tau0-guess", srf.tau0_guess);

    JacobianArgs jac;
    auto* c_jac = app.add_subcommand("jacobian", "Poincare map Jacobian with finite-difference and saltation checks");
    add_common(c_jac, jac.c);
    add_orbit_seed(c_jac, jac.seed);
    c_jac->add_option("--state", jac.state, "section state instead of a periodic orbit");
    c_jac->add_option("--fd-step", jac.fd_step);

    LyapunovArgs lya;
    auto* c_lya = app.add_subcommand("lyapunov", "Lyapunov exponents of the Poincare map");
    add_common(c_lya, lya.c);
    add_orbit_seed(c_lya, lya.seed);
    c_lya->add_option("--state", lya.state);
    c_lya->add_option("--lyapunov-periods", lya.n_periods);

    ManifoldArgs man;
    auto* c_man = app.add_subcommand("manifold", "unstable manifold of an impacting fixed point");
    add_common(c_man, man.c);
    add_orbit_seed(c_man, man.seed);
    add_manifold_options(c_man, man.mo);
    c_man->add_option("--side", man.side, "+1, -1 or 0 for both");
    c_man->add_option("--exclusion", man.exclusion, "exclusion radius around the fixed point");
    c_man->add_flag("--budget-check", man.budget_check, "repeat with twice the arclength budget");
    c_man->add_flag("--check-cond16", man.check_cond16, "classify the nearby grazing orbit");
    c_man->add_option("--grazing-tau0", man.grazing_tau0, "contact time guess for the grazing orbit");

    DiskArgs dsk;
    auto* c_dsk = app.add_subcommand("disk-check", "disk-return property near a homoclinic point");
    add_common(c_dsk, dsk.c, true);
    add_orbit_seed(c_dsk, dsk.seed);
    add_manifold_options(c_dsk, dsk.mo);
    c_dsk->add_option("--side", dsk.side, "unstable branch carrying the homoclinic point");
    c_dsk->add_option("--grid", dsk.dopts.grid);
    c_dsk->add_option("--max-k", dsk.dopts.max_k);
    c_dsk->add_option("--eps-s", dsk.dopts.eps_s);
    c_dsk->add_option("--eps-u", dsk.dopts.eps_u);
    c_dsk->add_option("--eps-c", dsk.dopts.eps_c);
    c_dsk->add_option("--perturb", dsk.perturb, "relative perturbation for the stability rerun");
    c_dsk->add_option("--perturb-params", dsk.perturb_params, "parameters scaled together with mu");

    OracleArgs orc;
    auto* c_orc = app.add_subcommand("oracle", "closed forms of the two-dof system");
    add_common(c_orc, orc.c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    try {
        if (c_sim->parsed()) return run_simulate(sim);
        if (c_orb->parsed()) return run_find_orbit(orb);
        if (c_cont->parsed()) return run_continue(cont);
        if (c_cls->parsed()) return run_classify(cls);
        if (c_srf->parsed()) return run_surface(srf);
        if (c_jac->parsed()) return run_jacobian(jac);
        if (c_lya->parsed()) return run_lyapunov(lya);
        if (c_man->parsed()) return run_manifold(man);
        if (c_dsk->parsed()) return run_disk(dsk);
        if (c_orc->parsed()) return run_oracle(orc);
    } catch (const VibroError& e) {
        return e.kind() == ErrorKind::degenerate ? (error_exit(to_string(e.kind()), e.what()), 2)
                                                 : error_exit(to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
        return error_exit("internal", e.what());
    }
    return 1;
}

}  // namespace vibro::cli

int main(int argc, char** argv) { return vibro::cli::dispatch(argc, argv); }
