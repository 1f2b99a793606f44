// Closed forms for the primaries' rectilinear Kepler motion rho(t) and for the
// two-body parabolic orbit r0 with its generating function S0.
#pragma once

#include "ri3bp/errors.hpp"

namespace ri3bp {

// Solve u - sin u = t for the eccentric anomaly u.  Newton seeded with
// u = t + sin t, falling back to bisection when a step leaves the bracket.
double solve_kepler(double t, double tol = 1e-14);

// Half-separation of the primaries: rho(t) = (1 - cos u(t)) / 2, in [0, 1].
double rho_of_time(double t, double tol = 1e-14);

// Stateless facade bundling the tolerance, mirroring the other modules'
// configuration style.
struct KeplerClock {
    double tolerance = 1e-14;
    double solve(double t) const { return solve_kepler(t, tolerance); }
    double rho(double t) const { return rho_of_time(t, tolerance); }
};

// State of the reference parabola at parameter u (which coincides with time:
// Barker's equation u = (G^3/2)(tau + tau^3/3) is the time of flight).
struct ParabolaSample {
    double u = 0;        // parameter (= time since pericenter passage)
    double r0 = 0;       // radius, >= G0^2/2
    double r0_dot = 0;   // radial velocity
    double r0_ddot = 0;  // radial acceleration
    double G0 = 0;       // angular momentum of the reference parabola
};

// Invert u = (G^3/2)(tau + tau^3/3).  Closed-form surd branch for
// |u| >= G^3/3, Newton on the cubic otherwise (the surd cancels near u = 0).
double parabola_tau(double u, double G);

// Parabola state at parameter u: r0 = G^2 (tau^2 + 1) / 2 and derived rates.
ParabolaSample parabola_state(double u, double G);

struct S0Value {
    double value = 0;  // S0(r; G), normalized so S0(G^2/2) = 0
    double slope = 0;  // dS0/dr = sqrt(2/r - G^2/r^2)
};

// Generating function of the 2BP parabolic manifold; requires r > G^2/2
// (equality allowed, giving the turning point 0).
S0Value s0_generating(double r, double G);

// Slope only (cheaper, used in inner loops).
double s0_slope(double r, double G);

}  // namespace ri3bp
