// Error taxonomy shared by all modules.
#pragma once

#include <stdexcept>
#include <string>

namespace ri3bp {

enum class ErrorCode {
    StepUnderflow,        // integrator step shrank below the floor (singularity approach)
    RCollapse,            // radius fell below the configured floor
    HorizonTooShort,      // trajectory too short for classification
    NoBracket,            // bisection window fails to straddle the target
    MaxBisections,        // bisection failed to converge in the allotted iterations
    NoReturn,             // orbit never crossed the requested section window
    NoSignChange,         // splitting curve has no sign change in the window
    MatchFail,            // trajectory ends never met the manifold matching band
    WindowTooSmall,       // quadrature window tail above tolerance
    NonpositiveRadius,    // discretized path dips to r <= 0
    BoundaryOutOfTable,   // reduced-action boundary radius outside table domain
    NonConverged,         // Newton or string iteration failed to converge
    SingularJacobian,     // near-degenerate critical point
    Stalled,              // mountain-pass progress stalled
    NoSolutionInBand,     // connector shooting band contains no solution
    ArcLeavesFarRegion,   // connector arc dipped below the far-region radius
    NotHyperbolic,        // hyperbolic-velocity verification failed
    ShadowingFail,        // multibump solution violates the shadowing bounds
    InvalidArgument,      // precondition violation (bad parameter)
};

const char* error_code_name(ErrorCode c);

// All numerical failures are reported as exceptions carrying a code, so the
// CLI can map them onto its exit-status contract.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}
    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

}  // namespace ri3bp
