#include "vibro/manifolds.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>
#include <vector>

namespace vibro {

namespace {

template <class F>
void parallel_for(int n, int threads, const F& body) {
    const int nt = std::clamp(threads, 1, std::max(1, n));
    auto run = [&](int from) {
        for (int i = from; i < n; i += nt) body(i);
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < nt; ++t) pool.emplace_back(run, t);
    run(0);
    for (auto& th : pool) th.join();
}

}  // namespace

bool Box::contains(const Vec& zeta, double slack) const {
    return ((zeta - center).cwiseAbs() - half_width).maxCoeff() <= slack;
}

namespace {

struct ScanPoint {
    double u;      // preimage u coordinate on the disk
    Vec zeta;      // image after k iterates, straightened
    bool ok = true;
};

// Distance (max norm) from zeta to the box, zero inside.
double box_distance(const Box& b, const Vec& zeta) {
    return std::max(0.0, ((zeta - b.center).cwiseAbs() - b.half_width).maxCoeff());
}

class DiskChecker {
public:
    DiskChecker(const ReturnMap& map, const StraightFrame& f, const DiskReturnOptions& o)
        : map_(map), f_(f), o_(o) {}

    // zeta of the disk point over (u, c) of disk `d`
    [[nodiscard]] Vec disk_point(const Box& d, double u, const Vec& c) const {
        Vec zeta = d.center;
        zeta(f_.ds) = u;
        zeta.segment(f_.ds + f_.du, f_.dc) = c;
        return zeta;
    }

    [[nodiscard]] Vec iterate(const Vec& zeta, int k) const {
        Vec z = f_.from_zeta(zeta);
        for (int i = 0; i < k; ++i) z = map_(z).image;
        return f_.to_zeta(z);
    }

    [[nodiscard]] Vec iterate_once(const Vec& zeta) const { return f_.to_zeta(map_(f_.from_zeta(zeta)).image); }

    void init_scan(std::vector<ScanPoint>& scan, const Box& d) const {
        const Vec c = d.center.segment(f_.ds + f_.du, f_.dc);
        const double u0 = d.center(f_.ds), w = d.half_width(f_.ds);
        scan.clear();
        for (int i = 0; i < o_.scan_points; ++i) {
            const double u = u0 - w + 2.0 * w * i / (o_.scan_points - 1);
            scan.push_back({u, disk_point(d, u, c), true});
        }
    }

    void advance(std::vector<ScanPoint>& scan) const {
        parallel_for(static_cast<int>(scan.size()), o_.threads, [&](int i) {
            ScanPoint& p = scan[i];
            if (!p.ok) return;
            try {
                p.zeta = iterate_once(p.zeta);
                p.ok = p.zeta.allFinite();
            } catch (const VibroError&) {
                p.ok = false;
            }
        });
    }

    void refine(std::vector<ScanPoint>& scan, const Box& d, int k, const std::vector<Box>& targets) const {
        const Vec c = d.center.segment(f_.ds + f_.du, f_.dc);
        double h = std::numeric_limits<double>::infinity();
        for (const Box& t : targets) h = std::min({h, t.half_width(0), t.half_width(f_.ds)});
        h *= 0.25;
        const double du_floor = 1e-13 * d.half_width(f_.ds);
        for (int pass = 0; pass < 60; ++pass) {
            std::vector<std::size_t> split;
            for (std::size_t i = 0; i + 1 < scan.size(); ++i) {
                const ScanPoint& a = scan[i];
                const ScanPoint& b = scan[i + 1];
                if (!a.ok || !b.ok || b.u - a.u < du_floor) continue;
                const double len = (b.zeta - a.zeta).lpNorm<Eigen::Infinity>();
                if (len <= h) continue;
                bool near = false;
                for (const Box& t : targets) {
                    near |= std::min(box_distance(t, a.zeta), box_distance(t, b.zeta)) <= len + h;
                }
                if (!near || static_cast<int>(2 * scan.size() + split.size()) > 2 * o_.max_scan_points) continue;
                split.push_back(i);
            }
            if (split.empty()) break;
            std::vector<ScanPoint> mids(split.size());
            parallel_for(static_cast<int>(split.size()), o_.threads, [&](int j) {
                ScanPoint& m = mids[j];
                m.u = 0.5 * (scan[split[j]].u + scan[split[j] + 1].u);
                m.ok = true;
                try {
                    m.zeta = iterate(disk_point(d, m.u, c), k);
                    m.ok = m.zeta.allFinite();
                } catch (const VibroError&) {
                    m.ok = false;
                }
            });
            std::vector<ScanPoint> next;
            next.reserve(scan.size() + mids.size());
            std::size_t j = 0;
            for (std::size_t i = 0; i < scan.size(); ++i) {
                next.push_back(std::move(scan[i]));
                if (j < split.size() && split[j] == i) next.push_back(std::move(mids[j++]));
            }
            scan.swap(next);
            if (static_cast<int>(scan.size()) >= o_.max_scan_points) break;
        }
    }

    struct Run {
        bool found = false;
        double u_lo = 0.0, u_hi = 0.0;  // preimage interval
        std::vector<std::pair<double, double>> u_map;  // (image u, preimage u) inside the box
    };

    // A piece of the scanned curve crossing the u-extent of `t` inside its (s, c) slab.
    [[nodiscard]] Run find_run(const std::vector<ScanPoint>& scan, const Box& t) const {
        Run best;
        const int iu = f_.ds;
        const double lo = t.center(iu) - t.half_width(iu), hi = t.center(iu) + t.half_width(iu);
        auto in_slab = [&](const Vec& z) {
            Vec zz = z;
            zz(iu) = t.center(iu);
            return t.contains(zz);
        };
        const std::size_t n = scan.size();
        for (std::size_t a = 0; a < n; ++a) {
            if (!scan[a].ok) continue;
            const double ua = scan[a].zeta(iu);
            if (!(ua <= lo || ua >= hi)) continue;
            const int dir = ua <= lo ? 1 : -1;
            Run r;
            bool broken = false;
            for (std::size_t b = a + 1; b < n; ++b) {
                const ScanPoint& p = scan[b];
                if (!p.ok) {
                    broken = true;
                    break;
                }
                const double ub = p.zeta(iu), uprev = scan[b - 1].zeta(iu);
                if (dir * (ub - uprev) <= 0.0) {
                    broken = true;
                    break;
                }
                const bool inside_u = ub > lo && ub < hi;
                if (inside_u && !in_slab(p.zeta)) {
                    broken = true;
                    break;
                }
                if (inside_u) r.u_map.emplace_back(ub, p.u);
                if ((dir > 0 && ub >= hi) || (dir < 0 && ub <= lo)) {
                    r.found = r.u_map.size() >= 2;
                    r.u_lo = std::min(scan[a].u, p.u);
                    r.u_hi = std::max(scan[a].u, p.u);
                    break;
                }
            }
            if (!broken && r.found) {
                if (dir < 0) std::reverse(r.u_map.begin(), r.u_map.end());
                return r;
            }
        }
        return best;
    }

    struct PairResult {
        bool hit = false;
        double slope = 0.0;
        std::string failure;
    };

    // Full grid check of S^k(disk d) against target box t, seeded by the central run.
    [[nodiscard]] PairResult check_pair(const Box& d, const Box& t, int k, const Run& run) const {
        PairResult res;
        const int g = o_.grid;
        const int iu = f_.ds, ic = f_.ds + f_.du, dc = f_.dc;
        const Vec cd = d.center.segment(ic, dc), ct = t.center.segment(ic, dc);
        const Vec wc = t.half_width.segment(ic, dc);
        auto grid_value = [g](double center, double w, int i) { return center - w + 2.0 * w * i / (g - 1); };
        int n_c = 1;
        for (int l = 0; l < dc; ++l) n_c *= g;

        std::vector<double> eta(static_cast<std::size_t>(g) * n_c, 0.0);
        std::vector<char> ok(eta.size(), 0);
        std::vector<const char*> why(eta.size(), "map evaluation failed");
        const double width_u = std::max(run.u_hi - run.u_lo, 1e-300);
        const double tol_u = 1e-9 * t.half_width(iu);

        auto seed_u = [&](double u_target) {
            const auto& m = run.u_map;
            if (u_target <= m.front().first) return m.front().second;
            if (u_target >= m.back().first) return m.back().second;
            for (std::size_t i = 0; i + 1 < m.size(); ++i) {
                if (u_target <= m[i + 1].first) {
                    const double f = (u_target - m[i].first) / (m[i + 1].first - m[i].first);
                    return m[i].second + f * (m[i + 1].second - m[i].second);
                }
            }
            return m.back().second;
        };

        auto solve_cell = [&](int iu_t, int ic_t) {
            Vec c_target(dc);
            int rem = ic_t;
            for (int l = 0; l < dc; ++l) {
                c_target(l) = grid_value(ct(l), wc(l), rem % g);
                rem /= g;
            }
            const double u_target = grid_value(t.center(iu), t.half_width(iu), iu_t);
            Vec w(1 + dc);
            w(0) = seed_u(u_target);
            w.tail(dc) = cd + (c_target - ct);
            Vec target(1 + dc);
            target(0) = u_target;
            target.tail(dc) = c_target;
            auto F = [&](const Vec& x) {
                const Vec img = iterate(disk_point(d, x(0), x.tail(dc)), k);
                Vec r(1 + dc);
                r(0) = img(iu);
                r.tail(dc) = img.segment(ic, dc);
                return std::make_pair(Vec(r - target), img);
            };
            auto [r, img] = F(w);
            Mat J;
            auto jacobian = [&](const Vec& x, const Vec& r0) {
                Mat Jm(1 + dc, 1 + dc);
                for (int j = 0; j <= dc; ++j) {
                    const double h = j == 0 ? 1e-6 * width_u : 1e-6 * std::max(d.half_width(ic + j - 1), 1e-12);
                    Vec xp = x;
                    xp(j) += h;
                    Jm.col(j) = (F(xp).first - r0) / h;
                }
                return Jm;
            };
            J = jacobian(w, r);
            for (int it = 0; it < 12 && r.cwiseAbs().maxCoeff() > tol_u; ++it) {
                const Vec step = J.fullPivLu().solve(-r);
                auto [rn, imn] = F(w + step);
                if (rn.cwiseAbs().maxCoeff() >= r.cwiseAbs().maxCoeff()) {
                    J = jacobian(w, r);
                    const Vec s2 = J.fullPivLu().solve(-r);
                    auto [r2, im2] = F(w + 0.5 * s2);
                    if (r2.cwiseAbs().maxCoeff() >= r.cwiseAbs().maxCoeff()) break;
                    w += 0.5 * s2;
                    r = r2;
                    img = im2;
                    continue;
                }
                w += step;
                r = rn;
                img = imn;
            }
            const std::size_t idx = static_cast<std::size_t>(iu_t) * n_c + ic_t;
            const bool in_disk = std::abs(w(0) - d.center(iu)) <= d.half_width(iu) &&
                                 ((w.tail(dc) - cd).cwiseAbs() - d.half_width.segment(ic, dc)).maxCoeff() <= 0.0;
            const bool in_box = std::abs(img.head(f_.ds)(0) - t.center(0)) <= t.half_width(0);
            const bool solved = r.cwiseAbs().maxCoeff() <= 1e3 * tol_u;
            if (solved && in_disk && in_box) ok[idx] = 1;
            why[idx] = !solved ? "Newton did not converge" : !in_disk ? "preimage outside the disk" : "image leaves the box in s";
            eta[idx] = img(0);
        };

        const int total = g * n_c;
        // cells past the first failure are skipped; the reported failure stays the lowest index
        std::atomic<int> first_bad{total};
        auto worker = [&](int from, int step) {
            for (int cell = from; cell < total; cell += step) {
                if (cell > first_bad.load()) break;
                try {
                    solve_cell(cell / n_c, cell % n_c);
                } catch (const VibroError&) {
                }
                if (!ok[cell]) {
                    int cur = first_bad.load();
                    while (cell < cur && !first_bad.compare_exchange_weak(cur, cell)) {
                    }
                }
            }
        };
        const int nt = std::max(1, o_.threads);
        std::vector<std::thread> pool;
        for (int i = 1; i < nt; ++i) pool.emplace_back(worker, i, nt);
        worker(0, nt);
        for (auto& th : pool) th.join();

        for (int cell = 0; cell < total; ++cell) {
            if (!ok[cell]) {
                res.failure = "grid point " + std::to_string(cell) + " has no admissible preimage (" + why[cell] + ")";
                return res;
            }
        }
        // slope of the reconstructed graph eta(u, c) from forward differences
        Vec steps(1 + dc);
        steps(0) = 2.0 * t.half_width(iu) / (g - 1);
        for (int l = 0; l < dc; ++l) steps(1 + l) = 2.0 * wc(l) / (g - 1);
        for (int cell = 0; cell < total; ++cell) {
            const int a = cell / n_c;
            int rem = cell % n_c;
            std::vector<int> ci(dc);
            for (int l = 0; l < dc; ++l) {
                ci[l] = rem % g;
                rem /= g;
            }
            Vec grad(1 + dc);
            grad(0) = a + 1 < g ? (eta[cell + n_c] - eta[cell]) / steps(0) : (eta[cell] - eta[cell - n_c]) / steps(0);
            int stride = 1;
            for (int l = 0; l < dc; ++l) {
                grad(1 + l) = ci[l] + 1 < g ? (eta[cell + stride] - eta[cell]) / steps(1 + l)
                                            : (eta[cell] - eta[cell - stride]) / steps(1 + l);
                stride *= g;
            }
            res.slope = std::max(res.slope, grad.norm());
        }
        res.hit = res.slope <= 1.0;
        if (!res.hit) res.failure = "slope " + std::to_string(res.slope) + " exceeds 1";
        return res;
    }

    // max over sampled pairs of |Pi1 S(z1) - Pi1 S(z2)| / |z1^s - z2^s|
    [[nodiscard]] std::pair<double, int> contraction(const Box& b) const {
        const int g = std::max(2, o_.contraction_grid);
        const int nfree = f_.du + f_.dc;
        int cells = 1;
        for (int l = 0; l < nfree; ++l) cells *= g;
        std::vector<double> cell_worst(cells, 0.0);
        parallel_for(cells, o_.threads, [&](int cell) {
            Vec base = b.center;
            int rem = cell;
            for (int l = 0; l < nfree; ++l) {
                const int j = f_.ds + l;
                base(j) = b.center(j) - b.half_width(j) + 2.0 * b.half_width(j) * (rem % g) / (g - 1);
                rem /= g;
            }
            const double s0 = b.center(0), ws = b.half_width(0);
            const double svals[3] = {s0 - ws, s0, s0 + ws};
            Vec img[3];
            for (int q = 0; q < 3; ++q) {
                Vec z = base;
                z(0) = svals[q];
                try {
                    img[q] = iterate_once(z);
                } catch (const VibroError&) {
                    cell_worst[cell] = std::numeric_limits<double>::infinity();
                    return;
                }
            }
            const int pa[3][2] = {{0, 1}, {1, 2}, {0, 2}};
            for (const auto& pr : pa) {
                const double ratio = std::abs(img[pr[0]](0) - img[pr[1]](0)) / std::abs(svals[pr[0]] - svals[pr[1]]);
                cell_worst[cell] = std::max(cell_worst[cell], ratio);
            }
        });
        const double worst = *std::max_element(cell_worst.begin(), cell_worst.end());
        const int pairs = 3 * cells;
        return {worst, pairs};
    }

private:
    const ReturnMap& map_;
    const StraightFrame& f_;
    const DiskReturnOptions& o_;
};

}  // namespace

DiskReturnReport verify_disk_return(const ReturnMap& map, const StraightFrame& frame, const Vec& homoclinic_point,
                                    const DiskReturnOptions& opts) {
    if (frame.ds != 1 || frame.du != 1) {
        throw VibroError(ErrorKind::invalid_argument, "disk return needs one stable and one unstable direction");
    }
    if (opts.grid < 2 || opts.scan_points < 2 || opts.max_k < 0) {
        throw VibroError(ErrorKind::invalid_argument, "bad disk return options");
    }
    const int n = static_cast<int>(frame.origin.size());
    const Vec zq = frame.to_zeta(homoclinic_point);
    const double qs = std::abs(zq(0));
    if (!(qs > 0.0)) throw VibroError(ErrorKind::degenerate, "homoclinic point lies on the unstable hyperplane");

    DiskReturnReport rep;
    Vec hw(n);
    hw(0) = opts.eps_s * qs;
    hw(1) = opts.eps_u * qs;
    hw.tail(frame.dc).setConstant(opts.eps_c * qs);
    rep.U0 = {Vec::Zero(n), hw};
    Vec c1 = Vec::Zero(n);
    c1(0) = zq(0);
    c1.tail(frame.dc) = zq.tail(frame.dc);
    rep.U1 = {c1, hw};
    Vec hv = hw;
    hv.tail(frame.dc) *= opts.v_c_fraction;
    rep.V0 = {rep.U0.center, hv};
    rep.V1 = {rep.U1.center, hv};

    DiskChecker chk(map, frame, opts);
    const Box* disks[2] = {&rep.U0, &rep.U1};
    const Box* targets[2] = {&rep.V0, &rep.V1};
    const std::vector<Box> tv = {rep.V0, rep.V1};

    if (opts.max_k == 0) {
        // zero iterates: a flat disk is its own admissible disk
        rep.slope_bound = 0.0;
        for (int i = 0; i < 2; ++i) rep.hits[i][i] = true;
    }

    std::vector<ScanPoint> scans[2];
    for (int i = 0; i < 2; ++i) chk.init_scan(scans[i], *disks[i]);
    for (int k = 1; k <= opts.max_k; ++k) {
        DiskChecker::Run runs[2][2];
        bool all_runs = true;
        for (int i = 0; i < 2; ++i) {
            chk.advance(scans[i]);
            chk.refine(scans[i], *disks[i], k, tv);
            for (int j = 0; j < 2; ++j) {
                runs[i][j] = chk.find_run(scans[i], *targets[j]);
                all_runs &= runs[i][j].found;
            }
        }
        if (!all_runs) continue;
        rep.failures.clear();
        double slope = 0.0;
        bool all = true;
        bool hits[2][2];
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                const auto pr = chk.check_pair(*disks[i], *targets[j], k, runs[i][j]);
                hits[i][j] = pr.hit;
                slope = std::max(slope, pr.slope);
                if (!pr.hit) {
                    all = false;
                    rep.failures.push_back("U" + std::to_string(i) + " -> V" + std::to_string(j) + ": " + pr.failure);
                }
            }
        }
        std::copy(&hits[0][0], &hits[0][0] + 4, &rep.hits[0][0]);
        rep.slope_bound = slope;
        rep.k = k;
        if (all) break;
    }
    if (!rep.all_hits()) {
        if (rep.failures.empty()) rep.failures.push_back("no iterate up to max_k crosses all target boxes");
        rep.k = 0;
    }

    const auto c0 = chk.contraction(rep.U0);
    const auto c1r = chk.contraction(rep.U1);
    rep.contraction_ratio = std::max(c0.first, c1r.first);
    rep.contraction_pairs = c0.second + c1r.second;
    rep.contraction_ok = rep.contraction_ratio <= 0.5;
    return rep;
}

}  // namespace vibro
