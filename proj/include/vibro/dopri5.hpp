#pragma once

#include "vibro/types.hpp"

#include <functional>

namespace vibro {

// Continuous extension of one accepted Dormand-Prince step on [t0, t0 + h].
struct DenseStep {
    double t0 = 0.0;
    double h = 0.0;
    Vec r1, r2, r3, r4, r5;

    [[nodiscard]] double t1() const noexcept { return t0 + h; }
    [[nodiscard]] Vec eval(double t) const;
    [[nodiscard]] double eval(double t, int i) const;
};

// Dormand-Prince 5(4) with FSAL and the standard fourth-order dense output.
class Dopri5 {
public:
    using Rhs = std::function<void(double t, const Vec& y, Vec& dy)>;

    Dopri5(Rhs rhs, int dim, double rel_tol, double abs_tol);

    [[nodiscard]] int dim() const noexcept { return dim_; }
    void derivative(double t, const Vec& y, Vec& dy) const { rhs_(t, y, dy); }

    // One trial step from (t, y) with y' = k1. Returns the scaled error norm;
    // y_new and k_new = f(t + h, y_new) are valid afterwards.
    double attempt(double t, const Vec& y, const Vec& k1, double h, Vec& y_new, Vec& k_new);

    // Dense output of the most recent attempt.
    [[nodiscard]] DenseStep dense(double t, const Vec& y, const Vec& k1, double h, const Vec& y_new,
                                  const Vec& k_new) const;

    // Controller suggestion for the next step size.
    [[nodiscard]] static double next_step(double h, double err, bool rejected_before);

private:
    Rhs rhs_;
    int dim_;
    double rtol_;
    double atol_;
    Vec k2_, k3_, k4_, k5_, k6_, tmp_, err_;
};

}  // namespace vibro
