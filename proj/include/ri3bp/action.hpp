// Discretized renormalized action functional around the zero-energy parabola,
// its exact discrete gradient, the reduced action with manifold boundary
// terms, and the translation/barycenter operators.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ri3bp/manifolds.hpp"

namespace ri3bp {

// Radial perturbation phi of the reference parabola r0(s; G0) sampled on the
// uniform grid s_i = -S + i h, i = 0..2S/h.  tail_shift records that the path
// continues as r0(s + tail_shift) outside the window (nonzero after
// translation).
struct DiscretizedPath {
    double S = 0;
    double h = 0;
    double G0 = 1;
    double tail_shift = 0;
    std::vector<double> phi;

    int nodes() const { return static_cast<int>(phi.size()); }
    double s_at(int i) const { return -S + h * i; }
};

// Uniform path with phi = f(s).
template <typename F>
DiscretizedPath make_path(double S, double h, double G0, F&& f) {
    DiscretizedPath p{S, h, G0, 0.0, {}};
    int n = static_cast<int>(std::lround(2.0 * S / h));
    p.phi.resize(n + 1);
    for (int i = 0; i <= n; ++i) p.phi[i] = f(p.s_at(i));
    return p;
}

struct ActionReport {
    double A_G = 0;        // renormalized action at the model's G
    double A = 0;          // G-independent part
    double B = 0;          // centrifugal coefficient: A_G = A - G^2 B
    double grad_norm = 0;  // discrete L2 norm of the gradient representative
    double quad_error = 0; // Richardson estimate from the half-resolution grid
    double tail_estimate = 0;  // truncation estimate from the end integrand
};

struct ActionSettings {
    double window_tol = 1e-3;  // WINDOW_TOO_SMALL above this tail estimate
};

// Renormalized action A_G(phi) = int phidot^2/2 - [V_G(r0+phi,s) - V0(r0)]
// - r0'' phi over the window (trapezoid; central differences).  The model's G
// enters V_G; the path's G0 fixes the reference parabola.
ActionReport action_value(const Model& m, const DiscretizedPath& path,
                          const ActionSettings& as = {});

// Exact gradient of the discretized functional, as a node function g with
// dA[psi] = sum_i w_i g_i psi_i (trapezoid weights w).
DiscretizedPath action_gradient(const Model& m, const DiscretizedPath& path);

// Reduced action on [-n, n]: quadrature of the renormalized Lagrangian plus
// manifold boundary terms.  With a table the S^+/S^- antiderivatives are
// interpolated; without one the 2BP S0 surrogate is used.
double reduced_action(const Model& m, const DiscretizedPath& path,
                      const GeneratingTable* table = nullptr);
DiscretizedPath reduced_gradient(const Model& m, const DiscretizedPath& path,
                                 const GeneratingTable* table = nullptr);

// T_tau phi(s) = phi(s + tau) + r0(s + tau) - r0(s); the window shrinks by
// |tau|.  tau must be a multiple of the grid step.
DiscretizedPath translate(const DiscretizedPath& path, double tau);

// Weighted time-centroid int s (1 + r^2)^{-2} / int (1 + r^2)^{-2} with the
// tails extended by the tail_shift parabola.
double barycenter(const DiscretizedPath& path);

// CSV block (s, phi) with a JSON header line (S, h, G0, tail_shift).
std::string serialize_path(const DiscretizedPath& path);
DiscretizedPath deserialize_path(const std::string& text);

}  // namespace ri3bp
