#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace vibro {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorKind {
    invalid_argument,
    integration_failure,
    crossing_in_free_flight,
    section_collision,
    non_differentiable,
    not_converged,
    singular_jacobian,
    impact_structure_changed,
    no_grazing_contact,
    degenerate,
};

[[nodiscard]] const char* to_string(ErrorKind kind) noexcept;

class VibroError : public std::runtime_error {
public:
    VibroError(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Phase state z = (x1, y1, x2, y2, ..., xn, yn). Index 0 is the impacting
// coordinate, index 1 its velocity; the remaining 2n-2 entries are tangential.
class PhaseState {
public:
    PhaseState() = default;
    explicit PhaseState(Vec z) : z_(std::move(z)) {
        if (z_.size() < 2 || z_.size() % 2 != 0) {
            throw VibroError(ErrorKind::invalid_argument,
                             "phase state must have an even length >= 2");
        }
    }

    [[nodiscard]] int dof() const noexcept { return static_cast<int>(z_.size() / 2); }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(z_.size()); }

    [[nodiscard]] double x1() const { return z_(0); }
    [[nodiscard]] double y1() const { return z_(1); }
    [[nodiscard]] double x(int k) const { return z_(2 * (k - 1)); }
    [[nodiscard]] double y(int k) const { return z_(2 * (k - 1) + 1); }

    [[nodiscard]] Vec tangential() const { return z_.tail(z_.size() - 2); }

    [[nodiscard]] const Vec& vec() const noexcept { return z_; }
    [[nodiscard]] Vec& vec() noexcept { return z_; }

private:
    Vec z_;
};

struct ParamInterval {
    double lo = -1e300;
    double hi = 1e300;
    [[nodiscard]] bool contains(double mu) const noexcept { return mu >= lo && mu <= hi; }
};

}  // namespace vibro
