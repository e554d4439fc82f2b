#include "vibro/manifolds.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vibro {

namespace {

Vec fix_sign(Vec v) {
    for (int i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-14 * v.norm()) {
            if (v(i) < 0.0) v = -v;
            break;
        }
    }
    return v;
}

// Real basis of the invariant subspace of a group of eigenvalues: real and
// imaginary parts of the group's eigenvectors, reduced by rank revealing QR.
// Nearly repeated eigenvalues may come out as a complex pair whose real parts
// coincide, so the parts are not used directly.
Mat real_basis(const Eigen::MatrixXcd& vecs, const std::vector<int>& idx) {
    const int n = static_cast<int>(vecs.rows());
    const int k = static_cast<int>(idx.size());
    if (k == 0) return Mat(n, 0);
    if (k == 1) {
        const Eigen::VectorXcd v = vecs.col(idx[0]);
        const Vec re = v.real(), im = v.imag();
        return fix_sign(re.norm() >= im.norm() ? re.normalized() : im.normalized());
    }
    Mat parts(n, 2 * k);
    for (int j = 0; j < k; ++j) {
        const Eigen::VectorXcd v = vecs.col(idx[j]).normalized();
        parts.col(2 * j) = v.real();
        parts.col(2 * j + 1) = v.imag();
    }
    Eigen::ColPivHouseholderQR<Mat> qr(parts);
    const Mat Q = qr.householderQ() * Mat::Identity(n, k);
    return Q;
}

double segment_turn(const Vec& a, const Vec& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

bool tails_equal(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    return std::equal(a.end() - static_cast<std::ptrdiff_t>(n), a.end(), b.end() - static_cast<std::ptrdiff_t>(n));
}

}  // namespace

SpectralSplit spectral_split(const Mat& D) {
    if (D.rows() != D.cols() || D.rows() < 2) throw VibroError(ErrorKind::invalid_argument, "square matrix expected");
    Eigen::EigenSolver<Mat> es(D);
    const Eigen::VectorXcd vals = es.eigenvalues();
    const int n = static_cast<int>(vals.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(vals(a)) > std::abs(vals(b)); });
    if (!(std::abs(vals(order.back())) > 0.0)) throw VibroError(ErrorKind::degenerate, "Jacobian is singular");

    SpectralSplit sp;
    sp.eigenvalues.resize(n);
    for (int i = 0; i < n; ++i) sp.eigenvalues(i) = vals(order[i]);
    sp.lambda_plus = vals(order.front());
    sp.lambda_minus = vals(order.back());
    sp.Lambda1 = std::min(std::abs(sp.lambda_plus), 1.0 / std::abs(sp.lambda_minus)) / 2.0;
    for (int i = 1; i + 1 < n; ++i) {
        const double m = std::abs(vals(order[i]));
        sp.Lambda2 = std::max(sp.Lambda2, 2.0 * std::max(m, 1.0 / m));
    }
    if (!(std::abs(sp.lambda_plus) > 1.0) || !(std::abs(sp.lambda_minus) < 1.0) || !(sp.Lambda1 > sp.Lambda2)) {
        throw VibroError(ErrorKind::degenerate, "no spectral gap: Lambda1 = " + std::to_string(sp.Lambda1) +
                                                    ", Lambda2 = " + std::to_string(sp.Lambda2));
    }
    std::vector<int> iu, is, ic;
    for (int i = 0; i < n; ++i) {
        const double m = std::abs(vals(i));
        if (m >= sp.Lambda1) {
            iu.push_back(i);
        } else if (m <= 1.0 / sp.Lambda1) {
            is.push_back(i);
        } else {
            ic.push_back(i);
        }
    }
    auto by_modulus = [&](std::vector<int>& v) {
        std::stable_sort(v.begin(), v.end(), [&](int a, int b) { return std::abs(vals(a)) > std::abs(vals(b)); });
    };
    by_modulus(iu);
    by_modulus(is);
    by_modulus(ic);
    const Eigen::MatrixXcd vecs = es.eigenvectors();
    sp.Eu = real_basis(vecs, iu);
    sp.Es = real_basis(vecs, is);
    sp.Ec = real_basis(vecs, ic);
    if (sp.Eu.cols() + sp.Es.cols() + sp.Ec.cols() != n) {
        throw VibroError(ErrorKind::degenerate, "eigenbasis does not split into real subspaces");
    }
    if (std::abs(sp.lambda_plus.imag()) <= 1e-12 * std::abs(sp.lambda_plus)) {
        sp.u_plus = fix_sign(vecs.col(order.front()).real().normalized());
    }
    if (std::abs(sp.lambda_minus.imag()) <= 1e-12 * std::abs(sp.lambda_minus)) {
        sp.u_minus = fix_sign(vecs.col(order.back()).real().normalized());
    }
    if (sp.Eu.cols() == 1) {
        Mat V(n, n);
        V << sp.Es, sp.Eu, sp.Ec;
        const Eigen::FullPivLU<Mat> lu(V);
        if (lu.isInvertible()) {
            const Mat Vi = lu.inverse();
            sp.unstable_normal = Vi.row(sp.Es.cols()).transpose().normalized();
        }
    }
    return sp;
}

double line_angle(const Vec& a, const Vec& b) {
    const double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
    return std::acos(std::clamp(c, 0.0, 1.0));
}

ReturnMap poincare_return_map(const VibroImpactSystem& sys, double mu, double theta, const IntegratorConfig& cfg) {
    return [&sys, mu, theta, cfg](const Vec& z) {
        HybridOptions ho;
        ho.keep_dense = false;
        const double t0 = -theta;
        const HybridTrajectory tr = simulate_hybrid(sys, mu, t0, z, t0 + sys.period(), cfg, ho);
        return MapEval{tr.arcs.back().z_end, tr.reflection_count()};
    };
}

ReturnJacobian poincare_return_jacobian(const VibroImpactSystem& sys, double mu, double theta,
                                        const IntegratorConfig& cfg) {
    return [&sys, mu, theta, cfg](const Vec& z) { return poincare_jacobian(sys, mu, theta, z, cfg).D; };
}

ReturnMap inverse_return_map(ReturnMap forward, ReturnJacobian jacobian, Vec fixed_point, Mat D, double tol,
                             int max_iter) {
    const Mat D_inv = D.inverse();
    return [forward = std::move(forward), jacobian = std::move(jacobian), z0 = std::move(fixed_point), D_inv, tol,
            max_iter](const Vec& target) {
        Vec w = z0 + D_inv * (target - z0);
        MapEval e = forward(w);
        double rn = (e.image - target).norm();
        for (int it = 0; it < max_iter && rn > tol * std::max(1.0, target.norm()); ++it) {
            const Vec step = jacobian(w).fullPivLu().solve(target - e.image);
            double lambda = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 20; ++ls, lambda *= 0.5) {
                const Vec trial = w + lambda * step;
                const MapEval et = forward(trial);
                const double rt = (et.image - target).norm();
                if (rt < rn) {
                    w = trial;
                    e = et;
                    rn = rt;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
        }
        if (!(rn <= 1e3 * tol * std::max(1.0, target.norm()))) {
            throw VibroError(ErrorKind::not_converged, "inverse map did not converge");
        }
        return MapEval{w, e.label};
    };
}

ManifoldPolyline trace_manifold(const ReturnMap& map, const Vec& fixed_point, const Vec& direction,
                                double eigenvalue, const ManifoldOptions& opts) {
    if (!(std::abs(eigenvalue) > 1.0)) throw VibroError(ErrorKind::invalid_argument, "eigenvalue must exceed 1");
    if (direction.size() != fixed_point.size() || direction.norm() == 0.0) {
        throw VibroError(ErrorKind::invalid_argument, "bad seed direction");
    }
    const int m = eigenvalue < 0.0 ? 2 : 1;
    const double Lam = std::pow(std::abs(eigenvalue), m);
    const Vec v = direction.normalized();

    struct Sample {
        double sigma;
        Vec p;
        std::vector<int> labels;
    };
    auto eval = [&](double sigma) {
        const double k = std::floor(sigma);
        Sample s{sigma, fixed_point + opts.seed_distance * std::pow(Lam, sigma - k) * v, {}};
        const int n = m * static_cast<int>(k);
        s.labels.reserve(n);
        for (int i = 0; i < n; ++i) {
            MapEval e = map(s.p);
            s.labels.push_back(e.label);
            s.p = std::move(e.image);
            if (!s.p.allFinite()) throw VibroError(ErrorKind::integration_failure, "map left the finite range");
        }
        return s;
    };

    ManifoldPolyline out;
    auto push = [&](const Sample& s) {
        const double ds = out.points.empty() ? 0.0 : (s.p - out.points.back()).norm();
        out.arclengths.push_back(out.arclengths.empty() ? 0.0 : out.arclengths.back() + ds);
        out.points.push_back(s.p);
        out.parameters.push_back(s.sigma);
    };

    Sample a = eval(0.0);
    push(a);
    double ds = 1.0 / 16.0;
    constexpr double ds_floor = 1e-15;
    bool floored = false;
    while (out.arclengths.back() < opts.arclength_budget) {
        if (static_cast<int>(out.points.size()) >= opts.max_points) {
            out.truncated = true;
            out.note = "point limit reached";
            break;
        }
        if (a.sigma >= opts.max_levels) {
            out.truncated = true;
            out.note = "level limit reached";
            break;
        }
        Sample b;
        try {
            b = eval(a.sigma + ds);
        } catch (const VibroError& e) {
            if (ds > 1e-6) {
                ds *= 0.5;
                continue;
            }
            out.truncated = true;
            out.note = std::string("map failure: ") + e.what();
            break;
        }
        if (!tails_equal(a.labels, b.labels)) {
            // locate the crossing of the surface of tangential contacts
            Sample L = a, R = b;
            std::vector<double> gaps;
            while (R.sigma - L.sigma > ds_floor * std::max(1.0, R.sigma) && (R.p - L.p).norm() > opts.h_min) {
                gaps.push_back((R.p - L.p).norm());
                Sample mid = eval(0.5 * (L.sigma + R.sigma));
                if (tails_equal(a.labels, mid.labels)) {
                    L = std::move(mid);
                } else {
                    R = std::move(mid);
                }
            }
            // the gap of a square-root singularity collapses down to the integration
            // noise, a jump keeps its size
            const double gap = (R.p - L.p).norm();
            const bool continuous = gap <= opts.h_min || (!gaps.empty() && gap < 1e-3 * gaps.front());
            if (L.sigma > a.sigma) push(L);
            push(R);
            const int idx = static_cast<int>(out.points.size()) - 1;
            if (continuous) {
                Kink k;
                k.index = idx;
                out.kink_indices.push_back(idx);
                out.kinks.push_back(k);
            } else {
                out.jump_indices.push_back(idx);
            }
            a = std::move(R);
            ds = 1.0 / 16.0;
            continue;
        }
        const double d = (b.p - a.p).norm();
        const std::size_t n = out.points.size();
        const int last = static_cast<int>(n) - 1;
        const bool after_kink = (!out.kink_indices.empty() && out.kink_indices.back() == last) ||
                                (!out.jump_indices.empty() && out.jump_indices.back() == last);
        const double turn = n >= 2 && !after_kink ? segment_turn(a.p - out.points[n - 2], b.p - a.p) : 0.0;
        const bool ok = d <= opts.h_max && (turn <= opts.max_turn || d <= opts.h_min);
        if (!ok && ds > ds_floor * std::max(1.0, a.sigma)) {
            ds *= 0.5;
            continue;
        }
        if (!ok) floored = true;
        push(b);
        a = std::move(b);
        if (d < 0.25 * opts.h_max && turn < 0.25 * opts.max_turn) ds = std::min(1.6 * ds, 0.25);
    }
    if (floored && out.note.empty()) out.note = "spacing floor reached near super-exponential stretching";

    const int np = static_cast<int>(out.points.size());
    for (Kink& k : out.kinks) {
        const int i = k.index;
        if (i >= 2) k.tangent_before = (out.points[i - 1] - out.points[i - 2]).normalized();
        if (i + 1 < np) k.tangent_after = (out.points[i + 1] - out.points[i]).normalized();
        if (k.tangent_before.size() && k.tangent_after.size()) {
            k.turning_angle = segment_turn(k.tangent_before, k.tangent_after);
        }
    }
    return out;
}

ManifoldPolyline trace_manifold(const VibroImpactSystem& sys, double mu, double theta, const Vec& fixed_point,
                                ManifoldKind kind, const ManifoldOptions& opts, const IntegratorConfig& cfg) {
    const VariationalResult vr = poincare_jacobian(sys, mu, theta, fixed_point, cfg);
    const SpectralSplit sp = spectral_split(vr.D);
    ReturnMap fwd = poincare_return_map(sys, mu, theta, cfg);
    if (kind == ManifoldKind::unstable) {
        if (sp.u_plus.size() == 0) throw VibroError(ErrorKind::degenerate, "unstable eigenvalue is not real");
        return trace_manifold(fwd, fixed_point, sp.u_plus, sp.lambda_plus.real(), opts);
    }
    if (sp.u_minus.size() == 0) throw VibroError(ErrorKind::degenerate, "stable eigenvalue is not real");
    ReturnMap inv = inverse_return_map(fwd, poincare_return_jacobian(sys, mu, theta, cfg), fixed_point, vr.D);
    return trace_manifold(inv, fixed_point, sp.u_minus, 1.0 / sp.lambda_minus.real(), opts);
}

std::vector<HomoclinicCrossing> detect_homoclinic_bend(const ManifoldPolyline& wu, const Vec& fixed_point,
                                                       const Vec& normal, double exclusion_radius,
                                                       double angle_threshold) {
    if (normal.size() != fixed_point.size() || normal.norm() == 0.0) {
        throw VibroError(ErrorKind::invalid_argument, "hyperplane normal is missing");
    }
    std::vector<HomoclinicCrossing> out;
    const Vec n = normal.normalized();
    const int np = static_cast<int>(wu.points.size());
    for (int i = 0; i + 1 < np; ++i) {
        const Vec& p = wu.points[i];
        const Vec& q = wu.points[i + 1];
        if ((p - fixed_point).norm() < exclusion_radius || (q - fixed_point).norm() < exclusion_radius) continue;
        const double dp = n.dot(p - fixed_point), dq = n.dot(q - fixed_point);
        if (!(dp * dq < 0.0 || (dq == 0.0 && dp != 0.0))) continue;
        HomoclinicCrossing c;
        c.segment = i;
        const double f = dp / (dp - dq);
        c.point = p + f * (q - p);
        c.arclength = wu.arclengths[i] + f * (wu.arclengths[i + 1] - wu.arclengths[i]);
        const Vec t = q - p;
        c.angle = std::asin(std::clamp(std::abs(n.dot(t)) / t.norm(), 0.0, 1.0));
        c.transversal = c.angle > angle_threshold;
        out.push_back(c);
    }
    return out;
}

StraightFrame make_frame(const Vec& fixed_point, const SpectralSplit& split) {
    StraightFrame f;
    f.origin = fixed_point;
    f.ds = split.dim_s();
    f.du = split.dim_u();
    f.dc = split.dim_c();
    const int n = static_cast<int>(fixed_point.size());
    f.V.resize(n, n);
    f.V << split.Es, split.Eu, split.Ec;
    const Eigen::FullPivLU<Mat> lu(f.V);
    if (!lu.isInvertible()) throw VibroError(ErrorKind::degenerate, "eigenbasis is not invertible");
    f.V_inv = lu.inverse();
    return f;
}

}  // namespace vibro
