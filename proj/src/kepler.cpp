#include "ri3bp/kepler.hpp"

#include <cmath>

namespace ri3bp {

const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::StepUnderflow: return "STEP_UNDERFLOW";
        case ErrorCode::RCollapse: return "R_COLLAPSE";
        case ErrorCode::HorizonTooShort: return "HORIZON_TOO_SHORT";
        case ErrorCode::NoBracket: return "NO_BRACKET";
        case ErrorCode::MaxBisections: return "MAX_BISECTIONS";
        case ErrorCode::NoReturn: return "NO_RETURN";
        case ErrorCode::NoSignChange: return "NO_SIGN_CHANGE";
        case ErrorCode::MatchFail: return "MATCH_FAIL";
        case ErrorCode::WindowTooSmall: return "WINDOW_TOO_SMALL";
        case ErrorCode::NonpositiveRadius: return "NONPOSITIVE_RADIUS";
        case ErrorCode::BoundaryOutOfTable: return "BOUNDARY_OUT_OF_TABLE";
        case ErrorCode::NonConverged: return "NONCONVERGED";
        case ErrorCode::SingularJacobian: return "SINGULAR_JACOBIAN";
        case ErrorCode::Stalled: return "STALLED";
        case ErrorCode::NoSolutionInBand: return "NO_SOLUTION_IN_BAND";
        case ErrorCode::ArcLeavesFarRegion: return "ARC_LEAVES_FAR_REGION";
        case ErrorCode::NotHyperbolic: return "NOT_HYPERBOLIC";
        case ErrorCode::ShadowingFail: return "SHADOWING_FAIL";
        case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    }
    return "UNKNOWN";
}

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double solve_kepler(double t, double tol) {
    if (!std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "solve_kepler: t not finite");
    // u - sin u advances by 2*pi per period; reduce to tr in [0, 2*pi).
    double k = std::floor(t / kTwoPi);
    double tr = t - kTwoPi * k;
    if (tr < 0) { tr += kTwoPi; k -= 1; }  // guard against floor/rounding edge

    double lo = 0.0, hi = kTwoPi;
    // Newton is degenerate near u = 0 and u = 2*pi (1 - cos u vanishes); the
    // cube-root expansions of u - sin u = tr give good seeds there.
    double u;
    if (tr < 0.5) u = std::cbrt(6.0 * tr);
    else if (kTwoPi - tr < 0.5) u = kTwoPi - std::cbrt(6.0 * (kTwoPi - tr));
    else u = tr + std::sin(tr);

    for (int it = 0; it < 200; ++it) {
        double f = u - std::sin(u) - tr;
        if (std::abs(f) <= tol) break;
        if (f > 0) hi = u; else lo = u;
        double fp = 1.0 - std::cos(u);
        double step = (fp > 1e-300) ? f / fp : 0.0;
        double un = u - step;
        if (step == 0.0 || un <= lo || un >= hi) un = 0.5 * (lo + hi);  // bisection fallback
        if (un == u) break;  // bracket exhausted at machine precision
        u = un;
    }
    return u + kTwoPi * k;
}

double rho_of_time(double t, double tol) {
    double u = solve_kepler(t, tol);
    double s = std::sin(0.5 * u);
    return s * s;  // (1 - cos u) / 2, computed without cancellation
}

double parabola_tau(double u, double G) {
    if (G == 0.0) throw Error(ErrorCode::InvalidArgument, "parabola_tau: G = 0 degenerates to the collision orbit");
    double g = std::abs(G);
    double g3 = g * g * g;
    double q = 6.0 * u / g3;  // tau^3 + 3 tau = q
    if (std::abs(u) >= g3 / 3.0) {
        // Closed-form (Cardano) branch, well conditioned away from u = 0.
        double w = std::cbrt(0.5 * std::abs(q) + std::sqrt(0.25 * q * q + 1.0));
        double tau = w - 1.0 / w;
        return (q < 0) ? -tau : tau;
    }
    // Newton on the cubic; derivative 3 tau^2 + 3 >= 3 keeps this tame.
    double tau = q / 3.0;
    for (int it = 0; it < 50; ++it) {
        double f = tau * (tau * tau + 3.0) - q;
        double fp = 3.0 * tau * tau + 3.0;
        double step = f / fp;
        tau -= step;
        if (std::abs(step) <= 1e-16 * (1.0 + std::abs(tau))) break;
    }
    return tau;
}

ParabolaSample parabola_state(double u, double G) {
    if (G == 0.0) throw Error(ErrorCode::InvalidArgument, "parabola_state: G = 0 degenerates to the collision orbit");
    double g = std::abs(G);
    double tau = parabola_tau(u, G);
    ParabolaSample s;
    s.u = u;
    s.G0 = G;
    s.r0 = 0.5 * g * g * (tau * tau + 1.0);
    // g*tau/r0 equals sign(u)*sqrt(2/r0 - G^2/r0^2) and satisfies the
    // zero-energy identity exactly.
    s.r0_dot = g * tau / s.r0;
    s.r0_ddot = g * g / (s.r0 * s.r0 * s.r0) - 1.0 / (s.r0 * s.r0);
    return s;
}

S0Value s0_generating(double r, double G) {
    double g = std::abs(G);
    double disc = 2.0 * r - g * g;
    if (disc < 0) throw Error(ErrorCode::InvalidArgument, "s0_generating: r < G^2/2 outside the manifold domain");
    double w = std::sqrt(disc);
    S0Value v;
    v.slope = w / r;
    v.value = (g > 0) ? 2.0 * w - 2.0 * g * std::atan(w / g) : 2.0 * w;
    return v;
}

double s0_slope(double r, double G) {
    double disc = 2.0 * r - G * G;
    if (disc < 0) throw Error(ErrorCode::InvalidArgument, "s0_slope: r < G^2/2 outside the manifold domain");
    return std::sqrt(disc) / r;
}

}  // namespace ri3bp
