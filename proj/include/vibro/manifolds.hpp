#pragma once

#include "vibro/variational.hpp"

#include <complex>
#include <functional>
#include <string>
#include <vector>

namespace vibro {

// ---- spectral splitting of a fixed-point Jacobian ----

struct SpectralSplit {
    Eigen::VectorXcd eigenvalues;  // descending modulus
    Mat Es, Eu, Ec;                // real bases, unit columns
    std::complex<double> lambda_plus, lambda_minus;
    double Lambda1 = 0.0;  // min(|lambda+|, 1/|lambda-|) / 2
    double Lambda2 = 0.0;  // 2 max(|lambda_k|, 1/|lambda_k|) over the rest
    Vec u_plus;   // unstable eigenvector when real and simple
    Vec u_minus;  // stable eigenvector when real and simple
    Vec unstable_normal;  // left eigenvector of lambda+, normal to span(Es, Ec)

    [[nodiscard]] int dim_s() const { return static_cast<int>(Es.cols()); }
    [[nodiscard]] int dim_u() const { return static_cast<int>(Eu.cols()); }
    [[nodiscard]] int dim_c() const { return static_cast<int>(Ec.cols()); }
};

// Throws degenerate when D is singular or Lambda1 <= Lambda2.
[[nodiscard]] SpectralSplit spectral_split(const Mat& D);

// Angle in [0, pi/2] between the lines spanned by a and b.
[[nodiscard]] double line_angle(const Vec& a, const Vec& b);

// ---- return maps ----

struct MapEval {
    Vec image;
    int label = 0;  // impact signature of the underlying flight
};
using ReturnMap = std::function<MapEval(const Vec&)>;
using ReturnJacobian = std::function<Mat(const Vec&)>;

// Poincare map of a system; the label is the number of reflections in one period.
[[nodiscard]] ReturnMap poincare_return_map(const VibroImpactSystem& sys, double mu, double theta,
                                            const IntegratorConfig& cfg);
[[nodiscard]] ReturnJacobian poincare_return_jacobian(const VibroImpactSystem& sys, double mu, double theta,
                                                      const IntegratorConfig& cfg);

// Inverse of a return map by damped Newton, seeded from the linearisation at the
// fixed point.
[[nodiscard]] ReturnMap inverse_return_map(ReturnMap forward, ReturnJacobian jacobian, Vec fixed_point,
                                           Mat D, double tol = 1e-12, int max_iter = 40);

// ---- one-dimensional invariant manifolds ----

struct ManifoldOptions {
    double seed_distance = 1e-6;
    double arclength_budget = 1.0;
    double h_min = 1e-9;   // spacing floor
    double h_max = 1e-2;   // spacing ceiling
    double max_turn = 0.2;  // radians between consecutive segments away from kinks
    int max_points = 20000;
    int max_levels = 200;  // fundamental-domain images
};

struct Kink {
    int index = 0;  // first point after the label change
    double turning_angle = 0.0;
    Vec tangent_before;
    Vec tangent_after;
};

struct ManifoldPolyline {
    std::vector<Vec> points;
    std::vector<double> arclengths;
    std::vector<double> parameters;  // level + fraction of the fundamental domain
    std::vector<int> kink_indices;
    std::vector<Kink> kinks;
    // label changes where the map itself jumps (an impact crossing the section time)
    std::vector<int> jump_indices;
    bool truncated = false;
    std::string note;
};

// Unstable manifold of `fixed_point` for `map` along the real eigenvector `direction`
// with eigenvalue `eigenvalue` (|eigenvalue| > 1). Negative eigenvalues are handled
// through the second iterate.
[[nodiscard]] ManifoldPolyline trace_manifold(const ReturnMap& map, const Vec& fixed_point, const Vec& direction,
                                              double eigenvalue, const ManifoldOptions& opts);

enum class ManifoldKind { stable, unstable };

[[nodiscard]] ManifoldPolyline trace_manifold(const VibroImpactSystem& sys, double mu, double theta,
                                              const Vec& fixed_point, ManifoldKind kind,
                                              const ManifoldOptions& opts, const IntegratorConfig& cfg);

struct HomoclinicCrossing {
    int segment = 0;  // crossing between points segment and segment + 1
    Vec point;
    double arclength = 0.0;
    double angle = 0.0;  // between the polyline and the hyperplane, radians
    bool transversal = false;
};

// Sign changes of normal . (z - fixed_point) along the polyline, outside the
// exclusion ball around the fixed point.
[[nodiscard]] std::vector<HomoclinicCrossing> detect_homoclinic_bend(const ManifoldPolyline& wu,
                                                                     const Vec& fixed_point, const Vec& normal,
                                                                     double exclusion_radius,
                                                                     double angle_threshold = 1e-3);

// ---- disk return ----

// Affine straightening: zeta = V^-1 (z - origin), columns of V ordered (s, u, c).
struct StraightFrame {
    Vec origin;
    Mat V;
    Mat V_inv;
    int ds = 0, du = 0, dc = 0;

    [[nodiscard]] Vec to_zeta(const Vec& z) const { return V_inv * (z - origin); }
    [[nodiscard]] Vec from_zeta(const Vec& zeta) const { return origin + V * zeta; }
};

[[nodiscard]] StraightFrame make_frame(const Vec& fixed_point, const SpectralSplit& split);

struct Box {
    Vec center;      // zeta coordinates
    Vec half_width;  // zeta coordinates
    [[nodiscard]] bool contains(const Vec& zeta, double slack = 0.0) const;
};

struct DiskReturnOptions {
    int grid = 9;  // per (u, c) coordinate
    int max_k = 20;
    // Half widths relative to the s-distance of the homoclinic point.
    double eps_s = 0.25;
    double eps_u = 0.25;
    double eps_c = 0.25;
    double v_c_fraction = 0.5;  // V boxes keep this fraction of the c half width
    int scan_points = 64;       // initial samples of the u-line of a disk
    int max_scan_points = 20000;
    int contraction_grid = 5;
    int threads = 1;
};

struct DiskReturnReport {
    Box U0, U1, V0, V1;
    int k = 0;  // 0 when no iterate up to max_k works
    bool hits[2][2] = {{false, false}, {false, false}};
    double slope_bound = 0.0;
    double contraction_ratio = 0.0;  // max |dPi1 S| / |d zeta^s| over sampled pairs
    int contraction_pairs = 0;
    bool contraction_ok = false;
    std::vector<std::string> failures;  // per failing box pair of the last k tried

    [[nodiscard]] bool all_hits() const { return hits[0][0] && hits[0][1] && hits[1][0] && hits[1][1]; }
};

// `homoclinic_point` fixes U1. Disks are flat (constant zeta^s) graphs over the
// (u, c) coordinates of U0 and U1.
[[nodiscard]] DiskReturnReport verify_disk_return(const ReturnMap& map, const StraightFrame& frame,
                                                  const Vec& homoclinic_point, const DiskReturnOptions& opts);

}  // namespace vibro
