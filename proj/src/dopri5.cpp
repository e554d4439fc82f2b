#include "vibro/dopri5.hpp"

#include <algorithm>
#include <cmath>

namespace vibro {

namespace {

constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace

Vec DenseStep::eval(double t) const {
    const double s = (t - t0) / h;
    const double s1 = 1.0 - s;
    return r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
}

double DenseStep::eval(double t, int i) const {
    const double s = (t - t0) / h;
    const double s1 = 1.0 - s;
    return r1(i) + s * (r2(i) + s1 * (r3(i) + s * (r4(i) + s1 * r5(i))));
}

Dopri5::Dopri5(Rhs rhs, int dim, double rel_tol, double abs_tol)
    : rhs_(std::move(rhs)), dim_(dim), rtol_(rel_tol), atol_(abs_tol) {
    k2_.resize(dim);
    k3_.resize(dim);
    k4_.resize(dim);
    k5_.resize(dim);
    k6_.resize(dim);
    tmp_.resize(dim);
    err_.resize(dim);
}

double Dopri5::attempt(double t, const Vec& y, const Vec& k1, double h, Vec& y_new, Vec& k_new) {
    tmp_ = y + h * (a21 * k1);
    rhs_(t + c2 * h, tmp_, k2_);
    tmp_ = y + h * (a31 * k1 + a32 * k2_);
    rhs_(t + c3 * h, tmp_, k3_);
    tmp_ = y + h * (a41 * k1 + a42 * k2_ + a43 * k3_);
    rhs_(t + c4 * h, tmp_, k4_);
    tmp_ = y + h * (a51 * k1 + a52 * k2_ + a53 * k3_ + a54 * k4_);
    rhs_(t + c5 * h, tmp_, k5_);
    tmp_ = y + h * (a61 * k1 + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    rhs_(t + h, tmp_, k6_);
    y_new = y + h * (a71 * k1 + a73 * k3_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
    rhs_(t + h, y_new, k_new);
    if (dim_ == 0) return 0.0;
    err_ = h * (e1 * k1 + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k_new);
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) {
        const double sc = atol_ + rtol_ * std::max(std::abs(y(i)), std::abs(y_new(i)));
        const double q = err_(i) / sc;
        acc += q * q;
    }
    return std::sqrt(acc / dim_);
}

DenseStep Dopri5::dense(double t, const Vec& y, const Vec& k1, double h, const Vec& y_new,
                        const Vec& k_new) const {
    DenseStep d;
    d.t0 = t;
    d.h = h;
    d.r1 = y;
    d.r2 = y_new - y;
    d.r3 = h * k1 - d.r2;
    d.r4 = d.r2 - h * k_new - d.r3;
    d.r5 = h * (d1 * k1 + d3 * k3_ + d4 * k4_ + d5 * k5_ + d6 * k6_ + d7 * k_new);
    return d;
}

double Dopri5::next_step(double h, double err, bool rejected_before) {
    double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    fac = std::clamp(fac, 0.2, rejected_before ? 1.0 : 5.0);
    return h * fac;
}

}  // namespace vibro
