// RI3BP vector field in polar and McGehee charts, adaptive embedded RK
// integration with a near-infinity chart switch, and Chazy final-motion
// classification.
#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "ri3bp/errors.hpp"
#include "ri3bp/kepler.hpp"

namespace ri3bp {

// Problem parameters.  `twobody` forces rho = 0 (the integrable 2BP
// reduction), which provides exact oracles for every downstream module.
struct Model {
    double G = 1.0;
    bool twobody = false;
    double kepler_tol = 1e-14;

    double rho(double t) const { return twobody ? 0.0 : rho_of_time(t, kepler_tol); }
};

struct PolarState {
    double r = 1.0;  // radius > 0
    double y = 0.0;  // radial velocity
    double t = 0.0;  // time (unwrapped)
};

// McGehee chart r = 2/x^2 bringing infinity to x = 0.
struct McGeheeState {
    double x = 1.0;
    double y = 0.0;
    double t = 0.0;
};

McGeheeState to_mcgehee(const PolarState& s);
PolarState to_polar(const McGeheeState& s);

// Leading-order straightened coordinates about the periodic orbit at
// infinity (diagnostic only): q = (x - y)/2, p = (x + y)/2.
struct StraightenedState {
    double q = 0.0;
    double p = 0.0;
    double t = 0.0;
};
StraightenedState to_straightened(const PolarState& s);

struct Deriv {
    double dr = 0.0;
    double dy = 0.0;
    double dt = 1.0;
};

// dr = y, dy = G^2/r^3 - r/(r^2 + rho(t)^2)^{3/2}, dt = 1.
Deriv vector_field(const Model& m, const PolarState& s);

// H = y^2/2 + G^2/(2 r^2) - 1/sqrt(r^2 + rho(t)^2).
double energy(const Model& m, const PolarState& s);

// 2BP energy estimate y^2/2 + G^2/(2 r^2) - 1/r (parabolicity residual at
// large radii).
double energy_twobody(double G, double r, double y);

struct IntegratorSettings {
    double tol = 1e-10;             // local error tolerance (mixed abs/rel)
    double switch_radius = 1e3;     // polar -> McGehee above this radius
    double switch_hysteresis = 0.8; // McGehee -> polar below switch_radius * this
    double r_floor = 1e-8;          // R_COLLAPSE below this radius
    double h_init = 1e-3;
    double h_min = 1e-13;
    double h_max = 1e6;
    std::int64_t max_steps = 500000000;
};

struct TrajectorySample {
    double s = 0.0;  // elapsed integration time
    double r = 0.0;
    double y = 0.0;
    double t = 0.0;  // unwrapped time t0 + s
};

struct IntegratorStats {
    std::int64_t steps = 0;
    std::int64_t rejected = 0;
    double max_energy_drift = 0.0;  // vs. initial energy (meaningful when rho = 0)
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    IntegratorStats stats;
    double duration() const {
        return samples.empty() ? 0.0 : samples.back().s - samples.front().s;
    }
};

// Low-level stepper shared by all shooting/section routines.  Direction +1
// integrates forward in time, -1 backward.
class Integrator {
  public:
    Integrator(const Model& m, const PolarState& start, const IntegratorSettings& st,
               int direction = +1);

    // One accepted adaptive step, clamped so that |s| does not pass s_limit
    // (local elapsed time, always nonnegative).  Returns false when s_limit
    // was already reached.
    bool step(double s_limit);

    PolarState current() const;
    double elapsed() const { return s_; }
    const IntegratorStats& stats() const { return stats_; }

  private:
    void deriv(double s, const double v[2], double out[2]) const;
    void sync_chart();

    const Model& model_;
    IntegratorSettings set_;
    int dir_;
    bool mcgehee_;
    double v_[2];      // (r, y) or (x, y) depending on chart
    double t0_;
    double s_ = 0.0;   // elapsed local time (>= 0)
    double h_;
    double err_prev_ = 1.0;
    IntegratorStats stats_;
};

// Integrate over a horizon, sampling every accepted step.
Trajectory integrate(const Model& m, const PolarState& start, double horizon,
                     const IntegratorSettings& st = {});

enum class MotionClass { B, P, H, O, Undetermined };

const char* motion_class_name(MotionClass c);

struct ClassifyThresholds {
    double R_esc = 1e3;       // escape radius
    double R_bound = 1e2;     // bounded-motion radius
    double e_min = 1e-4;      // energy band separating H from P
    int k_alternations = 3;   // alternations needed for O
    double min_horizon = 1e3;
};

struct FinalMotionLabel {
    MotionClass cls = MotionClass::Undetermined;
    bool conclusive = false;   // only positive-energy escape is conclusive
    double limsup_r = 0.0;
    double last_abs_y = 0.0;
    int turning_points = 0;
    int alternations = 0;
};

FinalMotionLabel classify(const Model& m, const Trajectory& traj,
                          const ClassifyThresholds& th = {});

}  // namespace ri3bp
