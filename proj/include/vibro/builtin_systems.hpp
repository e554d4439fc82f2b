#pragma once

#include "vibro/system.hpp"

#include <map>
#include <string>
#include <vector>

namespace vibro {

using ParamMap = std::map<std::string, double>;

// Forced damped oscillator against a rigid wall:
//   x'' = -k (x - (gap - mu)) - c x' + F sin(omega t),   y -> -r y at x = 0.
// mu shifts the spring equilibrium towards the wall; with the defaults the
// steady response just touches the wall at mu = 0.
struct Remark2Params {
    double k = 1.0;
    double c = 0.1;
    double F = 1.0;
    double omega = 1.0;
    double gap = 10.0;
    double r = 1.0;
};

// Two-degree-of-freedom system with a decoupled harmonic tangential coordinate:
//   x1'' + 2p x1' + q x1 - x2 = 0,   x2'' + omega^2 x2 = a.
// mu = b is the amplitude of x2 = a/omega^2 + b sin(omega t + phase). The default
// phase puts the grazing contact of the b = b* steady response at t = 0.
struct TwoDofParams {
    double p = 0.05;
    double q = 1.0;
    double omega = 0.75;
    double a = 1.0;
    double r = 0.8;
    double phase = 0.0;
    bool phase_set = false;

    [[nodiscard]] double resolved_phase() const;
};

[[nodiscard]] VibroImpactSystem make_remark2_system(const Remark2Params& p = {});
[[nodiscard]] VibroImpactSystem make_two_dof_system(const TwoDofParams& p = {});

[[nodiscard]] Remark2Params remark2_params_from(const ParamMap& values);
[[nodiscard]] TwoDofParams two_dof_params_from(const ParamMap& values);

[[nodiscard]] std::vector<std::string> builtin_system_names();
[[nodiscard]] ParamMap builtin_default_params(const std::string& name);
// Throws on an unknown system name or an unknown parameter name.
[[nodiscard]] VibroImpactSystem make_builtin_system(const std::string& name, const ParamMap& values);

}  // namespace vibro
