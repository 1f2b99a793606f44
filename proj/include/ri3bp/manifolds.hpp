// Stable/unstable manifold slopes of the periodic orbit at infinity computed
// by parabolic shooting, their tabulation/interpolation, and the splitting
// function on the section t = 0.
#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ri3bp/dynamics.hpp"

namespace ri3bp {

struct SlopeSettings {
    double r_far = 1e4;           // far matching radius (>= 10 r recommended)
    double tol = 1e-12;           // bisection tolerance on the returned slope
    double band_coeff = 10.0;     // parabolicity band c * r_far^{-3/2}
    double bracket_init = 1e-4;   // initial bracket half-width around dS0(r)
    double bracket_max_rel = 0.9; // max half-width relative to dS0(r)
    int max_bisections = 200;
    IntegratorSettings integ{.tol = 1e-13};
};

// Slope of the forward-parabolic (stable) graph y = dS^+/dr at (r, t): the
// unique y whose forward orbit escapes with vanishing 2BP-energy estimate.
// Bisection between turnaround (energy too low) and positive-energy escape.
double stable_slope(const Model& m, double r, double t, const SlopeSettings& ss = {});

// Independent computation of the unstable slope by backward-time shooting
// (used to verify the reversibility identity -dS^+(r, -t)/dr).
double unstable_slope_direct(const Model& m, double r, double t, const SlopeSettings& ss = {});

struct TableSpec {
    double r_min = 10.0;
    double r_max = 1e3;
    int nr = 80;        // log-spaced radii
    int nt = 16;        // uniform phases on [0, 2pi)
    int r_order = 6;    // Lagrange stencil width in log r (4 or 6)
    SlopeSettings slope;
    int threads = 0;    // 0 = hardware concurrency
};

// Immutable interpolation table of the stable slope over (r, t);
// trigonometric in t, Lagrange in log r.  The unstable side comes from the
// reversibility identity.
class GeneratingTable {
  public:
    GeneratingTable() = default;
    GeneratingTable(double G, std::vector<double> r_grid, int nt,
                    std::vector<double> values, int r_order);

    double G() const { return G_; }
    double r_min() const { return r_grid_.front(); }
    double r_max() const { return r_grid_.back(); }
    bool contains(double r) const { return r >= r_min() && r <= r_max(); }
    const std::vector<double>& r_grid() const { return r_grid_; }
    int nt() const { return nt_; }
    double node_value(int i, int j) const { return vals_[i * nt_ + j]; }
    double cross_validation_error() const { return cv_err_; }
    void set_cross_validation_error(double e) { cv_err_ = e; }

    // Interpolated slopes d S^+/dr and d S^-/dr = -d S^+(r,-t)/dr.
    double stable(double r, double t) const;
    double unstable(double r, double t) const { return -stable(r, -t); }

    // Antiderivatives in r at fixed phase, normalized so that
    // S^+(r_max, t) = S0(r_max) and S^-(r, t) = -S^+(r, -t).
    double s_plus(double r, double t) const;
    double s_minus(double r, double t) const { return -s_plus(r, -t); }

    // Text serialization: JSON header line + CSV block.
    std::string serialize() const;
    static GeneratingTable deserialize(const std::string& text);

  private:
    struct PhaseCache {
        std::vector<double> vals;  // slope at (r_i, t) for all i
        std::vector<double> cum;   // int_{r_i}^{r_max} slope dr
    };
    struct CacheBox {
        std::mutex mu;
        std::map<double, PhaseCache> map;
    };
    const PhaseCache& phase_cache(double t) const;
    double interp_r(const std::vector<double>& f, double r) const;
    double integral_interp(const std::vector<double>& f, double a, double b) const;

    double G_ = 0;
    std::vector<double> r_grid_;   // ascending
    std::vector<double> lr_grid_;  // log r
    int nt_ = 0;
    int r_order_ = 6;
    std::vector<double> vals_;     // row-major [nr][nt]
    double cv_err_ = 0;
    double s0_top_ = 0;            // S0(r_max; G)
    // Shared so the table stays copyable; cached values are immutable.
    mutable std::shared_ptr<CacheBox> cache_ = std::make_shared<CacheBox>();
};

GeneratingTable build_table(const Model& m, const TableSpec& spec);

struct SplittingSettings {
    int n_launches = 120;
    double launch_lo = 0.0;   // 0 = auto (chosen inside the table domain)
    double launch_hi = 0.0;
    int max_crossings = 400;  // section visits inspected per launch
    IntegratorSettings integ{.tol = 1e-12};
};

struct SplittingSample {
    double launch_r = 0;   // unstable-manifold launch radius at t = 0
    int crossing = 0;      // section-crossing index where the window was hit
    double cross_r = 0;    // radius at the recorded crossing
    double delta = 0;      // y_cross - dS^+(cross_r, 0)/dr
    bool returned = false; // false = NO_RETURN for this launch
};

struct SplittingCurve {
    double G = 0;
    double R1 = 0, R2 = 0;
    std::vector<SplittingSample> samples;          // ordered by launch_r
    std::vector<double> grid_r, grid_delta;        // resampled onto n_samples
    std::vector<std::pair<double, double>> brackets;        // launch_r pairs with sign change
    std::vector<std::pair<double, double>> bracket_cross_r; // matching cross_r pairs
};

SplittingCurve splitting_curve(const Model& m, const GeneratingTable& table, double R1, double R2,
                               int n_samples, const SplittingSettings& ss = {});

// Single splitting evaluation used for root polishing: launch on the
// unstable manifold at radius launch_r (t = 0) and report the sample.
SplittingSample splitting_sample(const Model& m, const GeneratingTable& table, double launch_r,
                                 double R1, double R2, const SplittingSettings& ss = {});

}  // namespace ri3bp
