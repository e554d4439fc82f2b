#pragma once

#include "vibro/dopri5.hpp"
#include "vibro/system.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace vibro {

struct IntegratorConfig {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double event_tol = 1e-12;
    // Reflections slower than this collapse onto the delimiter.
    double chatter_velocity_floor = 1e-9;
    // Reflections allowed inside one forcing period before the chatter guard engages.
    int chatter_max_impacts = 50;
    // Tolerance on x1 = 0 and on the sign of the incoming normal velocity.
    double contact_tol = 1e-12;
    // 0 selects period / 8.
    double max_step = 0.0;
    long max_steps = 20'000'000;
    int max_events = 200'000;
    // Events closer than this to a Poincare section are rejected.
    double section_guard = 1e-9;

    void validate() const;
};

// One smooth piece of a hybrid trajectory, either free flight or sliding.
struct SmoothArc {
    double t_begin = 0.0;
    double t_end = 0.0;
    Vec z_begin;
    Vec z_end;
    bool sliding = false;
    std::vector<DenseStep> steps;  // empty unless dense output was kept
    // Sensitivities over this arc alone: dz(t_end)/dz(t_begin) and dz(t_end)/dmu.
    Mat phi;
    Vec param_sens;

    [[nodiscard]] Vec state_at(double t) const;
};

enum class EventKind { reflection, grazing_tangency, sliding_entry, sliding_exit };

[[nodiscard]] const char* to_string(EventKind kind) noexcept;

struct ImpactEvent {
    EventKind kind = EventKind::reflection;
    double t = 0.0;
    Vec pre;
    Vec post;
    double normal_speed = 0.0;  // Y = -y1(t - 0) >= 0
    bool chatter_collapse = false;
};

// arcs.size() == events.size() + 1; events[i] separates arcs[i] and arcs[i + 1].
struct HybridTrajectory {
    double t_begin = 0.0;
    double t_end = 0.0;
    Vec z_begin;
    Vec z_end;
    std::vector<SmoothArc> arcs;
    std::vector<ImpactEvent> events;
    bool truncated = false;

    [[nodiscard]] Vec state_at(double t) const;
    [[nodiscard]] int reflection_count() const;
    [[nodiscard]] bool has_nonsmooth_events() const;
    [[nodiscard]] std::vector<std::pair<double, double>> sliding_intervals() const;
};

struct HybridOptions {
    bool sensitivities = false;
    // Contact detection is switched off for t > contact_cutoff (formal flight).
    double contact_cutoff = std::numeric_limits<double>::infinity();
    bool keep_dense = true;
};

// Impact-free flight on [t0, t1]. Throws crossing_in_free_flight if x1 reaches zero.
[[nodiscard]] SmoothArc integrate_free_flight(const VibroImpactSystem& sys, double mu, double t0,
                                              const Vec& z0, double t1, const IntegratorConfig& cfg);

// Flight from (t0, z0) up to the first contact with the delimiter before t_max.
// Returns the contact as an event whose `post` state has the impact law applied
// (or the zero-speed contact classified); `arc` receives the flight up to it.
[[nodiscard]] std::optional<ImpactEvent> detect_next_impact(const VibroImpactSystem& sys, double mu,
                                                            double t0, const Vec& z0, double t_max,
                                                            const IntegratorConfig& cfg,
                                                            SmoothArc* arc = nullptr);

[[nodiscard]] HybridTrajectory simulate_hybrid(const VibroImpactSystem& sys, double mu, double t0,
                                               const Vec& z0, double t_end, const IntegratorConfig& cfg,
                                               const HybridOptions& opts = {});

}  // namespace vibro
