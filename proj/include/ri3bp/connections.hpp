// Homoclinic orbits of the periodic orbit at infinity (shooting on the
// splitting function and Newton on the reduced action), a mountain-pass
// search, near-infinity two-point connectors, and multibump assembly.
#pragma once

#include <optional>

#include "ri3bp/action.hpp"

namespace ri3bp {

struct HomoclinicSettings {
    double match_tol = 1e-5;     // endpoint slope-matching band
    double root_tol = 1e-12;     // bisection tolerance on the launch radius
    double sample_h = 0.01;      // uniform sampling step of the stored window
    double polish_r_far = 4e3;   // far radius for the energy polish (0 = off)
    SplittingSettings splitting;
    IntegratorSettings integ{.tol = 1e-12};
};

struct HomoclinicOrbit {
    double G = 0;
    double r_star = 0, y_star = 0;  // section point at t = 0
    double launch_r = 0;            // unstable-manifold launch radius of the root
    double window = 0;              // stored on s in [-window, window], t = s
    double h = 0;
    std::vector<double> r, y;       // uniform samples
    double el_residual = 0;         // sup |r'' - EL right-hand side|
    double min_r = 0;
    double match_plus = 0, match_minus = 0;  // end slope mismatches
    double reint_divergence = 0;    // re-integration cross-check

    double s_at(int i) const { return -window + h * i; }
};

// Root of the splitting function inside the window via bisection on the
// launch radius, then integration of the orbit through the section point.
HomoclinicOrbit find_homoclinic(const Model& m, const GeneratingTable& table, double R1, double R2,
                                const HomoclinicSettings& hs = {});

// Restriction of a homoclinic orbit to a reduced-action path on [-n, n].
DiscretizedPath restrict_to_path(const HomoclinicOrbit& orbit, double n, double h);

struct NewtonSettings {
    double grad_tol = 1e-10;
    int max_iterations = 50;
    double fd_step = 1e-7;
};

struct NewtonResult {
    DiscretizedPath path;
    double grad_norm = 0;
    int iterations = 0;
    int det_sign = 0;       // sign of det of the reduced-action Hessian
    double r_star = 0, y_star = 0;  // section readout at s = 0
};

// Newton iteration on the reduced-action gradient with a banded
// finite-difference Jacobian.
NewtonResult refine_newton(const Model& m, const DiscretizedPath& seed,
                           const GeneratingTable* table, const NewtonSettings& ns = {});

struct MountainPassSettings {
    int images = 17;          // discrete path in path-space
    int max_iterations = 400;
    double step = 0.2;        // gradient step scale
    double grad_tol = 1e-8;   // at the climbing image
    double m_bar = 0;         // radius cap for max-node selection; 0 = 2 G^2
    double mu = 6.0;          // outward shift of endpoint 1
    double collision_frac = 0.35;  // endpoint 2 dips to this multiple of G^2/2
    bool polish = true;       // Newton-polish the climbing image
};

struct MountainPassResult {
    double c_estimate = 0;          // saddle level (polished when enabled)
    double c_raw = 0;               // level of the climbing image before polish
    DiscretizedPath saddle;
    double grad_norm = 0;
    int iterations = 0;
    bool stalled = false;
};

MountainPassResult mountain_pass(const Model& m, const DiscretizedPath& domain_seed,
                                 const GeneratingTable* table,
                                 const MountainPassSettings& ms = {});

struct ConnectorSettings {
    double tol = 1e-10;       // on the terminal radius match
    int max_iterations = 200;
    double d_init = 0;        // warm-start deficit slope - y(0); 0 = auto
    IntegratorSettings integ{.tol = 1e-12};
};

struct Connector {
    double v_plus = 0;   // initial radial velocity
    double v_minus = 0;  // terminal radial velocity
    double min_r = 0;    // radius floor along the arc
    double apex_r = 0;
    double resid = 0;    // achieved |r(T) - R1|
};

// Two-point boundary problem r(0) = R0, r(T) = R1 in the far region, with the
// launch phase t0; shooting on y(0) in a band below the stable slope.
Connector boundary_velocities(const Model& m, const GeneratingTable& table, double T, double R0,
                              double R1, double t0 = 0.0, const ConnectorSettings& cs = {});

// Smallest time (by doubling from T0) with |v_plus - stable slope| <= eps0.
double discover_t_min(const Model& m, const GeneratingTable& table, double R0, double eps0,
                      double T0 = 64.0, const ConnectorSettings& cs = {});

// Slope + eps, verified to escape hyperbolically.
double hyperbolic_velocity(const Model& m, const GeneratingTable& table, double R0, double eps,
                           const IntegratorSettings& is = {.tol = 1e-12});

enum class ItineraryTag { Parabolic, Periodic, Hyperbolic };

struct Itinerary {
    std::vector<long> l;  // block gaps in binary periods (2 pi each)
    ItineraryTag tag = ItineraryTag::Parabolic;
    double eps_hyp = 1e-2;  // hyperbolic-exit velocity excess
};

struct MultibumpSettings {
    NewtonSettings newton{.grad_tol = 5e-9};
    // Tight arc integration: the Newton floor is set by connector jitter.
    ConnectorSettings connector{.integ = {.tol = 1e-13}};
    double shadow_eps_frac = 0.1;  // allowed block deviation vs base amplitude
};

struct MultibumpSolution {
    std::vector<DiscretizedPath> blocks;
    Itinerary itinerary;
    double residual_norm = 0;
    int det_sign = 0;
    int iterations = 0;
    // Shadowing report.
    double block_dev_r = 0, block_dev_v = 0;  // sup deviations from the base
    double connector_min_r = 0;
    bool shadowing_ok = false;
    // Periodic diagnostics (Periodic tag only).
    double period_mismatch_r = 0, period_mismatch_y = 0;
    // Assembled trajectory endpoints for classification (Hyperbolic tag).
    std::vector<Connector> connectors;
};

// Residual of the multibump map F at the given blocks (no solving).
std::vector<DiscretizedPath> multibump_residual(const Model& m,
                                                const std::vector<DiscretizedPath>& blocks,
                                                const Itinerary& itin,
                                                const GeneratingTable& table,
                                                const MultibumpSettings& ms = {});

MultibumpSolution solve_multibump(const Model& m, const Itinerary& itin,
                                  const HomoclinicOrbit& base, const GeneratingTable& table,
                                  double n, double h, const MultibumpSettings& ms = {});

}  // namespace ri3bp
