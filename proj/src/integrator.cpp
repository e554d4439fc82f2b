#include "vibro/integrator.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <deque>

namespace vibro {

const char* to_string(EventKind kind) noexcept {
    switch (kind) {
        case EventKind::reflection: return "reflection";
        case EventKind::grazing_tangency: return "grazing-tangency";
        case EventKind::sliding_entry: return "sliding-entry";
        case EventKind::sliding_exit: return "sliding-exit";
    }
    return "unknown";
}

void IntegratorConfig::validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0) || !(event_tol > 0.0)) {
        throw VibroError(ErrorKind::invalid_argument, "integrator tolerances must be positive");
    }
    if (chatter_max_impacts < 1 || max_steps < 1 || max_events < 1) {
        throw VibroError(ErrorKind::invalid_argument, "integrator limits must be positive");
    }
    if (max_step < 0.0 || chatter_velocity_floor < 0.0 || contact_tol < 0.0) {
        throw VibroError(ErrorKind::invalid_argument, "integrator settings must be non-negative");
    }
}

Vec SmoothArc::state_at(double t) const {
    if (t <= t_begin) return z_begin;
    if (t >= t_end) return z_end;
    if (steps.empty()) {
        throw VibroError(ErrorKind::invalid_argument, "arc was recorded without dense output");
    }
    auto it = std::upper_bound(steps.begin(), steps.end(), t,
                               [](double v, const DenseStep& s) { return v < s.t0; });
    if (it != steps.begin()) --it;
    return it->eval(t).head(z_begin.size());
}

Vec HybridTrajectory::state_at(double t) const {
    for (const auto& arc : arcs) {
        if (t <= arc.t_end) return arc.state_at(t);
    }
    return z_end;
}

int HybridTrajectory::reflection_count() const {
    return static_cast<int>(std::count_if(events.begin(), events.end(), [](const ImpactEvent& e) {
        return e.kind == EventKind::reflection;
    }));
}

bool HybridTrajectory::has_nonsmooth_events() const {
    return std::any_of(events.begin(), events.end(),
                       [](const ImpactEvent& e) { return e.kind != EventKind::reflection; });
}

std::vector<std::pair<double, double>> HybridTrajectory::sliding_intervals() const {
    std::vector<std::pair<double, double>> out;
    for (const auto& arc : arcs) {
        if (arc.sliding) out.emplace_back(arc.t_begin, arc.t_end);
    }
    return out;
}

namespace {

constexpr int kSamples = 8;

template <class F>
double bracketed_root(F f, double lo, double hi, double flo, double fhi, double tol) {
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    std::uintmax_t iters = 200;
    auto stop = [tol](double a, double b) { return std::abs(b - a) <= tol; };
    auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, stop, iters);
    return 0.5 * (r.first + r.second);
}

struct Contact {
    enum Type { none, crossing, tangency } type = none;
    double lo = 0.0;
    double hi = 0.0;
};

class Engine {
public:
    Engine(const VibroImpactSystem& sys, double mu, const IntegratorConfig& cfg, const HybridOptions& opts)
        : sys_(sys),
          mu_(mu),
          cfg_(cfg),
          opts_(opts),
          n2_(sys.dim()),
          aug_(opts.sensitivities ? n2_ + n2_ * n2_ + n2_ : n2_),
          free_([this](double t, const Vec& y, Vec& dy) { free_rhs(t, y, dy); }, aug_, cfg.rel_tol,
                cfg.abs_tol),
          slide_([this](double t, const Vec& y, Vec& dy) { slide_rhs(t, y, dy); }, n2_, cfg.rel_tol,
                 cfg.abs_tol) {
        cfg_.validate();
        max_step_ = cfg.max_step > 0.0 ? cfg.max_step : sys.period() / 8.0;
        h_ = std::min(max_step_, 1e-3 * sys.period());
    }

    HybridTrajectory run(double t0, const Vec& z0, double t_end);
    // Free flight; returns true and fills `ev` when a contact is found.
    bool fly(double t0, const Vec& y0, double t_end, bool detect, SmoothArc& arc, ImpactEvent& ev,
             bool& tangency);

private:
    void free_rhs(double t, const Vec& y, Vec& dy) const;
    void slide_rhs(double t, const Vec& y, Vec& dy) const;
    Contact scan(const DenseStep& d, double a, double b) const;
    bool slide(double t0, const Vec& z0, double t_end, SmoothArc& arc, ImpactEvent& ev);
    Vec augmented_start(const Vec& z) const;
    void finish_arc(SmoothArc& arc, double t, const Vec& y) const;
    ImpactEvent classify_contact(double t, const Vec& pre, bool tangency, bool force_collapse) const;
    void limit_step_after(double t, const Vec& post);
    void count_step();

    const VibroImpactSystem& sys_;
    double mu_;
    IntegratorConfig cfg_;
    HybridOptions opts_;
    int n2_;
    int aug_;
    Dopri5 free_;
    Dopri5 slide_;
    double max_step_ = 0.0;
    double h_ = 0.0;
    long steps_ = 0;
};

void Engine::free_rhs(double t, const Vec& y, Vec& dy) const {
    dy.resize(aug_);
    const Vec z = y.head(n2_);
    Vec F;
    sys_.field(t, z, mu_, F);
    dy.head(n2_) = F;
    if (!opts_.sensitivities) return;
    const Mat J = sys_.field_jacobian(t, z, mu_);
    Eigen::Map<const Mat> phi(y.data() + n2_, n2_, n2_);
    Eigen::Map<Mat> dphi(dy.data() + n2_, n2_, n2_);
    dphi = J * phi;
    const int off = n2_ + n2_ * n2_;
    dy.segment(off, n2_) = J * y.segment(off, n2_) + sys_.field_param(t, z, mu_);
}

void Engine::slide_rhs(double t, const Vec& y, Vec& dy) const {
    dy = sliding_vector_field(sys_, t, y, mu_);
}

Vec Engine::augmented_start(const Vec& z) const {
    Vec y = Vec::Zero(aug_);
    y.head(n2_) = z;
    if (opts_.sensitivities) {
        Eigen::Map<Mat> phi(y.data() + n2_, n2_, n2_);
        phi.setIdentity();
    }
    return y;
}

void Engine::finish_arc(SmoothArc& arc, double t, const Vec& y) const {
    arc.t_end = t;
    arc.z_end = y.head(n2_);
    if (opts_.sensitivities && !arc.sliding) {
        arc.phi = Eigen::Map<const Mat>(y.data() + n2_, n2_, n2_);
        arc.param_sens = y.segment(n2_ + n2_ * n2_, n2_);
    }
}

void Engine::count_step() {
    if (++steps_ > cfg_.max_steps) {
        throw VibroError(ErrorKind::integration_failure, "step budget exhausted");
    }
}

Contact Engine::scan(const DenseStep& d, double a, double b) const {
    struct Pt {
        double t, x;
        bool minimum;
    };
    std::vector<Pt> pts;
    pts.reserve(2 * kSamples + 2);
    double tp = a, xp = d.eval(a, 0), yp = d.eval(a, 1);
    pts.push_back({tp, xp, false});
    for (int j = 1; j <= kSamples; ++j) {
        const double tj = a + (b - a) * j / kSamples;
        const double xj = d.eval(tj, 0);
        const double yj = d.eval(tj, 1);
        if ((yp < 0.0 && yj > 0.0) || (yp > 0.0 && yj < 0.0)) {
            auto vel = [&d](double s) { return d.eval(s, 1); };
            const double tm = bracketed_root(vel, tp, tj, yp, yj, cfg_.event_tol);
            pts.push_back({tm, d.eval(tm, 0), yp < 0.0});
        }
        pts.push_back({tj, xj, false});
        tp = tj;
        yp = yj;
    }
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (pts[i].minimum && pts[i].x > 0.0 && pts[i].x <= cfg_.contact_tol) {
            return {Contact::tangency, pts[i].t, pts[i].t};
        }
        if (pts[i].x > 0.0 && pts[i + 1].x <= 0.0) return {Contact::crossing, pts[i].t, pts[i + 1].t};
    }
    return {};
}

bool Engine::fly(double t0, const Vec& y0, double t_end, bool detect, SmoothArc& arc, ImpactEvent& ev,
                 bool& tangency) {
    arc = SmoothArc{};
    arc.t_begin = t0;
    arc.z_begin = y0.head(n2_);
    arc.sliding = false;
    double t = t0;
    Vec y = y0, k, y_new, k_new;
    free_.derivative(t, y, k);
    bool rejected = false;
    while (t < t_end) {
        count_step();
        double h = std::min(h_, max_step_);
        bool shortened = false;
        if (t + h >= t_end || t_end - (t + h) < 1e-12 * h) {
            shortened = t_end - t < h;
            h = t_end - t;
        }
        const double err = free_.attempt(t, y, k, h, y_new, k_new);
        if (!(err <= 1.0)) {
            h_ = Dopri5::next_step(h, std::isfinite(err) ? err : 1e10, true);
            rejected = true;
            if (h_ < 1e-15 * std::max(1.0, std::abs(t))) {
                throw VibroError(ErrorKind::integration_failure, "step size underflow");
            }
            continue;
        }
        DenseStep d = free_.dense(t, y, k, h, y_new, k_new);
        const double cutoff = opts_.contact_cutoff;
        if (detect && t < cutoff) {
            const double b = std::min(t + h, cutoff);
            const Contact c = scan(d, t, b);
            if (c.type != Contact::none) {
                double ts = c.lo;
                if (c.type == Contact::crossing) {
                    auto pos = [&d](double s) { return d.eval(s, 0); };
                    ts = bracketed_root(pos, c.lo, c.hi, d.eval(c.lo, 0), d.eval(c.hi, 0), cfg_.event_tol);
                }
                Vec ys = y, ks = k;
                double hs = ts - t;
                for (int it = 0; it < 6 && hs > 0.0; ++it) {
                    free_.attempt(t, y, k, hs, ys, ks);
                    if (c.type == Contact::tangency || ys(1) >= 0.0) break;
                    const double dt = -ys(0) / ys(1);
                    if (std::abs(dt) <= 1e-16 * std::max(1.0, std::abs(ts))) break;
                    ts = std::clamp(ts + dt, t, t + h);
                    hs = ts - t;
                }
                if (hs > 0.0 && opts_.keep_dense) arc.steps.push_back(free_.dense(t, y, k, hs, ys, ks));
                if (hs <= 0.0) ys = y;
                ys(0) = 0.0;
                finish_arc(arc, ts, ys);
                ev.t = ts;
                ev.pre = ys.head(n2_);
                tangency = c.type == Contact::tangency;
                return true;
            }
        }
        if (opts_.keep_dense) arc.steps.push_back(std::move(d));
        t += h;
        y.swap(y_new);
        k.swap(k_new);
        if (!shortened) h_ = Dopri5::next_step(h, err, rejected);
        rejected = false;
    }
    finish_arc(arc, t_end, y);
    return false;
}

bool Engine::slide(double t0, const Vec& z0, double t_end, SmoothArc& arc, ImpactEvent& ev) {
    arc = SmoothArc{};
    arc.t_begin = t0;
    arc.z_begin = z0;
    arc.sliding = true;
    auto g_of = [this](double t, const Vec& z) {
        Vec zc = z;
        zc(0) = 0.0;
        zc(1) = 0.0;
        return sys_.normal_acceleration(t, zc, mu_);
    };
    double t = t0;
    Vec y = z0, k, y_new, k_new;
    y(0) = 0.0;
    y(1) = 0.0;
    slide_.derivative(t, y, k);
    double h = std::min(h_, max_step_);
    bool rejected = false;
    while (t < t_end) {
        count_step();
        h = std::min(h, max_step_);
        if (t + h >= t_end) h = t_end - t;
        const double err = slide_.attempt(t, y, k, h, y_new, k_new);
        if (!(err <= 1.0)) {
            h = Dopri5::next_step(h, std::isfinite(err) ? err : 1e10, true);
            rejected = true;
            continue;
        }
        DenseStep d = slide_.dense(t, y, k, h, y_new, k_new);
        double tp = t, gp = g_of(t, y);
        for (int j = 1; j <= kSamples; ++j) {
            const double tj = t + h * j / kSamples;
            const double gj = g_of(tj, d.eval(tj));
            if (gp <= 0.0 && gj > 0.0) {
                auto g = [&](double s) { return g_of(s, d.eval(s)); };
                double ts = bracketed_root(g, tp, tj, gp, gj, cfg_.event_tol);
                // settle on the released side of the switching point
                if (g(ts) <= 0.0) ts = std::min(tj, ts + cfg_.event_tol);
                Vec ys, ks;
                slide_.attempt(t, y, k, ts - t, ys, ks);
                if (opts_.keep_dense && ts > t) arc.steps.push_back(slide_.dense(t, y, k, ts - t, ys, ks));
                ys(0) = 0.0;
                ys(1) = 0.0;
                arc.t_end = ts;
                arc.z_end = ys;
                ev = ImpactEvent{};
                ev.kind = EventKind::sliding_exit;
                ev.t = ts;
                ev.pre = ys;
                ev.post = ys;
                return true;
            }
            tp = tj;
            gp = gj;
        }
        if (opts_.keep_dense) arc.steps.push_back(std::move(d));
        t += h;
        y.swap(y_new);
        k.swap(k_new);
        h = Dopri5::next_step(h, err, rejected);
        rejected = false;
    }
    arc.t_end = t_end;
    arc.z_end = y;
    return false;
}

ImpactEvent Engine::classify_contact(double t, const Vec& pre, bool tangency, bool force_collapse) const {
    ImpactEvent ev;
    ev.t = t;
    ev.pre = pre;
    ev.pre(0) = 0.0;
    const double Y = std::max(0.0, -pre(1));
    ev.normal_speed = Y;
    const bool slow = tangency || Y < cfg_.chatter_velocity_floor || force_collapse;
    if (!slow) {
        ev.kind = EventKind::reflection;
        ev.post = apply_impact(sys_, mu_, ev.pre, cfg_.contact_tol);
        return ev;
    }
    ev.chatter_collapse = force_collapse || (!tangency && Y < cfg_.chatter_velocity_floor);
    Vec zc = ev.pre;
    zc(1) = 0.0;
    if (sys_.normal_acceleration(t, zc, mu_) <= 0.0) {
        ev.kind = EventKind::sliding_entry;
        ev.post = zc;
    } else {
        ev.kind = EventKind::grazing_tangency;
        ev.post = zc;
        ev.post(1) = sys_.restitution(mu_) * Y;
    }
    return ev;
}

void Engine::limit_step_after(double t, const Vec& post) {
    const double v = post(1);
    if (!(v > 0.0)) return;
    const double f = sys_.normal_acceleration(t, post, mu_);
    if (f < 0.0) h_ = std::min(h_, 0.5 * v / -f);
}

HybridTrajectory Engine::run(double t0, const Vec& z0_in, double t_end) {
    if (z0_in.size() != n2_) {
        throw VibroError(ErrorKind::invalid_argument, "initial state has the wrong dimension");
    }
    if (!(t_end >= t0)) throw VibroError(ErrorKind::invalid_argument, "t_end must not precede t0");
    if (z0_in(0) < -cfg_.contact_tol) {
        throw VibroError(ErrorKind::invalid_argument, "initial state lies behind the delimiter");
    }
    HybridTrajectory traj;
    traj.t_begin = t0;
    traj.t_end = t_end;
    traj.z_begin = z0_in;

    Vec z = z0_in;
    double t = t0;
    enum class Mode { free, sliding } mode = Mode::free;
    const double period = sys_.period();
    std::deque<double> recent;

    auto push_event = [&](const ImpactEvent& ev) {
        if (opts_.sensitivities && ev.kind != EventKind::reflection) {
            throw VibroError(ErrorKind::non_differentiable,
                             std::string("trajectory contains a ") + to_string(ev.kind) + " event");
        }
        traj.events.push_back(ev);
        if (static_cast<int>(traj.events.size()) > cfg_.max_events) {
            traj.truncated = true;
        }
    };
    auto zero_arc = [&](double tt, const Vec& zz) {
        SmoothArc a;
        a.t_begin = a.t_end = tt;
        a.z_begin = a.z_end = zz;
        if (opts_.sensitivities) {
            a.phi = Mat::Identity(n2_, n2_);
            a.param_sens = Vec::Zero(n2_);
        }
        return a;
    };

    if (std::abs(z(0)) <= cfg_.contact_tol && t0 < opts_.contact_cutoff) {
        z(0) = 0.0;
        if (z(1) < -cfg_.contact_tol || std::abs(z(1)) <= cfg_.contact_tol) {
            Vec pre = z;
            const bool tang = std::abs(z(1)) <= cfg_.contact_tol;
            if (tang) pre(1) = 0.0;
            ImpactEvent ev = classify_contact(t, pre, tang, false);
            if (ev.kind == EventKind::grazing_tangency && tang) {
                z = ev.post;  // leaves freely, nothing to record
            } else {
                traj.arcs.push_back(zero_arc(t, z));
                push_event(ev);
                z = ev.post;
                if (ev.kind == EventKind::sliding_entry) mode = Mode::sliding;
            }
        }
    }
    limit_step_after(t, z);

    while (t < t_end && !traj.truncated) {
        SmoothArc arc;
        ImpactEvent ev;
        if (mode == Mode::free) {
            bool tangency = false;
            const bool hit = fly(t, augmented_start(z), t_end, true, arc, ev, tangency);
            traj.arcs.push_back(std::move(arc));
            if (!hit) {
                z = traj.arcs.back().z_end;
                t = t_end;
                break;
            }
            const double th = ev.t;
            while (!recent.empty() && recent.front() < th - period) recent.pop_front();
            const bool cap = static_cast<int>(recent.size()) >= cfg_.chatter_max_impacts;
            ImpactEvent out = classify_contact(th, ev.pre, tangency, cap);
            if (out.kind == EventKind::reflection) recent.push_back(th);
            push_event(out);
            t = th;
            z = out.post;
            if (out.kind == EventKind::sliding_entry) mode = Mode::sliding;
            limit_step_after(t, z);
        } else {
            const bool exited = slide(t, z, t_end, arc, ev);
            traj.arcs.push_back(std::move(arc));
            z = traj.arcs.back().z_end;
            if (!exited) {
                t = t_end;
                break;
            }
            push_event(ev);
            t = ev.t;
            mode = Mode::free;
            recent.clear();
        }
    }
    if (traj.arcs.size() == traj.events.size()) traj.arcs.push_back(zero_arc(t, z));
    traj.z_end = z;
    traj.t_end = t;
    return traj;
}

}  // namespace

SmoothArc integrate_free_flight(const VibroImpactSystem& sys, double mu, double t0, const Vec& z0,
                                double t1, const IntegratorConfig& cfg) {
    if (z0.size() != sys.dim()) throw VibroError(ErrorKind::invalid_argument, "state dimension mismatch");
    if (!(t1 >= t0)) throw VibroError(ErrorKind::invalid_argument, "t1 must not precede t0");
    Engine eng(sys, mu, cfg, HybridOptions{});
    SmoothArc arc;
    ImpactEvent ev;
    bool tangency = false;
    if (eng.fly(t0, z0, t1, true, arc, ev, tangency)) {
        throw VibroError(ErrorKind::crossing_in_free_flight,
                         "free flight reaches the delimiter at t = " + std::to_string(ev.t));
    }
    return arc;
}

std::optional<ImpactEvent> detect_next_impact(const VibroImpactSystem& sys, double mu, double t0,
                                              const Vec& z0, double t_max, const IntegratorConfig& cfg,
                                              SmoothArc* arc_out) {
    if (z0.size() != sys.dim()) throw VibroError(ErrorKind::invalid_argument, "state dimension mismatch");
    Engine eng(sys, mu, cfg, HybridOptions{});
    SmoothArc arc;
    ImpactEvent ev;
    bool tangency = false;
    const bool hit = eng.fly(t0, z0, t_max, true, arc, ev, tangency);
    if (arc_out) *arc_out = arc;
    if (!hit) return std::nullopt;
    ImpactEvent out;
    out.t = ev.t;
    out.pre = ev.pre;
    out.normal_speed = std::max(0.0, -ev.pre(1));
    if (tangency || out.normal_speed < cfg.chatter_velocity_floor) {
        out.kind = EventKind::grazing_tangency;
        out.post = out.pre;
        out.post(1) = sys.restitution(mu) * out.normal_speed;
    } else {
        out.kind = EventKind::reflection;
        out.post = apply_impact(sys, mu, out.pre, cfg.contact_tol);
    }
    return out;
}

HybridTrajectory simulate_hybrid(const VibroImpactSystem& sys, double mu, double t0, const Vec& z0,
                                 double t_end, const IntegratorConfig& cfg, const HybridOptions& opts) {
    Engine eng(sys, mu, cfg, opts);
    return eng.run(t0, z0, t_end);
}

}  // namespace vibro
