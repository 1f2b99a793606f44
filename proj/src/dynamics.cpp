#include "ri3bp/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace ri3bp {

McGeheeState to_mcgehee(const PolarState& s) {
    if (s.r <= 0) throw Error(ErrorCode::InvalidArgument, "to_mcgehee: r <= 0");
    return {std::sqrt(2.0 / s.r), s.y, s.t};
}

PolarState to_polar(const McGeheeState& s) {
    if (s.x <= 0) throw Error(ErrorCode::InvalidArgument, "to_polar: x <= 0");
    return {2.0 / (s.x * s.x), s.y, s.t};
}

StraightenedState to_straightened(const PolarState& s) {
    double x = std::sqrt(2.0 / s.r);
    return {0.5 * (x - s.y), 0.5 * (x + s.y), s.t};
}

Deriv vector_field(const Model& m, const PolarState& s) {
    if (s.r <= 0) throw Error(ErrorCode::InvalidArgument, "vector_field: r <= 0");
    double rho = m.rho(s.t);
    double d2 = s.r * s.r + rho * rho;
    if (d2 < 1e-300) throw Error(ErrorCode::RCollapse, "vector_field: binary collision (r and rho both ~ 0)");
    double d = std::sqrt(d2);
    Deriv out;
    out.dr = s.y;
    out.dy = m.G * m.G / (s.r * s.r * s.r) - s.r / (d2 * d);
    out.dt = 1.0;
    return out;
}

double energy(const Model& m, const PolarState& s) {
    if (s.r <= 0) throw Error(ErrorCode::InvalidArgument, "energy: r <= 0");
    double rho = m.rho(s.t);
    double d2 = s.r * s.r + rho * rho;
    if (d2 < 1e-300) throw Error(ErrorCode::RCollapse, "energy: binary collision");
    return 0.5 * s.y * s.y + 0.5 * m.G * m.G / (s.r * s.r) - 1.0 / std::sqrt(d2);
}

double energy_twobody(double G, double r, double y) {
    return 0.5 * y * y + 0.5 * G * G / (r * r) - 1.0 / r;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) pair.

namespace {

constexpr double A21 = 1.0 / 5.0;
constexpr double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0;
constexpr double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0;
constexpr double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0, A53 = 64448.0 / 6561.0,
                 A54 = -212.0 / 729.0;
constexpr double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0, A63 = 46732.0 / 5247.0,
                 A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0;
constexpr double B1 = 35.0 / 384.0, B3 = 500.0 / 1113.0, B4 = 125.0 / 192.0,
                 B5 = -2187.0 / 6784.0, B6 = 11.0 / 84.0;
constexpr double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0,
                 E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0;
constexpr double C2 = 1.0 / 5.0, C3 = 3.0 / 10.0, C4 = 4.0 / 5.0, C5 = 8.0 / 9.0;

}  // namespace

Integrator::Integrator(const Model& m, const PolarState& start, const IntegratorSettings& st,
                       int direction)
    : model_(m), set_(st), dir_(direction) {
    if (start.r <= 0) throw Error(ErrorCode::InvalidArgument, "Integrator: r <= 0");
    t0_ = start.t;
    mcgehee_ = start.r > set_.switch_radius;
    if (mcgehee_) {
        v_[0] = std::sqrt(2.0 / start.r);
    } else {
        v_[0] = start.r;
    }
    v_[1] = start.y;
    h_ = set_.h_init;
}

PolarState Integrator::current() const {
    double r = mcgehee_ ? 2.0 / (v_[0] * v_[0]) : v_[0];
    return {r, v_[1], t0_ + dir_ * s_};
}

void Integrator::deriv(double s, const double v[2], double out[2]) const {
    double t = t0_ + dir_ * s;
    double rho = model_.rho(t);
    double g2 = model_.G * model_.G;
    if (mcgehee_) {
        double x = v[0], y = v[1];
        double x2 = x * x;
        double x4 = x2 * x2;
        double den = 1.0 + 0.25 * x4 * rho * rho;
        out[0] = dir_ * (-0.25 * x2 * x * y);
        out[1] = dir_ * (-0.25 * x4 / (den * std::sqrt(den)) + 0.125 * x4 * x2 * g2);
    } else {
        double r = v[0], y = v[1];
        double d2 = r * r + rho * rho;
        if (r <= 0 || d2 < 1e-300) throw Error(ErrorCode::RCollapse, "integrate: collision");
        out[0] = dir_ * y;
        out[1] = dir_ * (g2 / (r * r * r) - r / (d2 * std::sqrt(d2)));
    }
}

void Integrator::sync_chart() {
    double r = mcgehee_ ? 2.0 / (v_[0] * v_[0]) : v_[0];
    if (r < set_.r_floor) throw Error(ErrorCode::RCollapse, "integrate: r below floor");
    if (!mcgehee_ && r > set_.switch_radius) {
        v_[0] = std::sqrt(2.0 / r);
        mcgehee_ = true;
    } else if (mcgehee_ && r < set_.switch_radius * set_.switch_hysteresis) {
        v_[0] = r;
        mcgehee_ = false;
    }
}

bool Integrator::step(double s_limit) {
    if (s_ >= s_limit) return false;
    double k1[2], k2[2], k3[2], k4[2], k5[2], k6[2], k7[2], tmp[2], vn[2];
    deriv(s_, v_, k1);
    for (;;) {
        if (stats_.steps + stats_.rejected > set_.max_steps)
            throw Error(ErrorCode::NonConverged, "integrate: max step count exceeded");
        double h = std::min(h_, s_limit - s_);
        bool clamped = h < h_;
        if (h < set_.h_min) {
            // A clamped sliver at the very end is fine; an adaptive step this
            // small means we are grinding against a singularity.
            if (!clamped) throw Error(ErrorCode::StepUnderflow, "integrate: step size underflow");
        }

        tmp[0] = v_[0] + h * A21 * k1[0];
        tmp[1] = v_[1] + h * A21 * k1[1];
        deriv(s_ + C2 * h, tmp, k2);
        tmp[0] = v_[0] + h * (A31 * k1[0] + A32 * k2[0]);
        tmp[1] = v_[1] + h * (A31 * k1[1] + A32 * k2[1]);
        deriv(s_ + C3 * h, tmp, k3);
        tmp[0] = v_[0] + h * (A41 * k1[0] + A42 * k2[0] + A43 * k3[0]);
        tmp[1] = v_[1] + h * (A41 * k1[1] + A42 * k2[1] + A43 * k3[1]);
        deriv(s_ + C4 * h, tmp, k4);
        tmp[0] = v_[0] + h * (A51 * k1[0] + A52 * k2[0] + A53 * k3[0] + A54 * k4[0]);
        tmp[1] = v_[1] + h * (A51 * k1[1] + A52 * k2[1] + A53 * k3[1] + A54 * k4[1]);
        deriv(s_ + C5 * h, tmp, k5);
        tmp[0] = v_[0] + h * (A61 * k1[0] + A62 * k2[0] + A63 * k3[0] + A64 * k4[0] + A65 * k5[0]);
        tmp[1] = v_[1] + h * (A61 * k1[1] + A62 * k2[1] + A63 * k3[1] + A64 * k4[1] + A65 * k5[1]);
        deriv(s_ + h, tmp, k6);
        vn[0] = v_[0] + h * (B1 * k1[0] + B3 * k3[0] + B4 * k4[0] + B5 * k5[0] + B6 * k6[0]);
        vn[1] = v_[1] + h * (B1 * k1[1] + B3 * k3[1] + B4 * k4[1] + B5 * k5[1] + B6 * k6[1]);
        deriv(s_ + h, vn, k7);

        double err = 0.0;
        for (int i = 0; i < 2; ++i) {
            double e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] +
                            E7 * k7[i]);
            double sc = set_.tol * (1.0 + std::max(std::abs(v_[i]), std::abs(vn[i])));
            err += (e / sc) * (e / sc);
        }
        err = std::sqrt(0.5 * err);

        // PI step-size controller.
        double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.17) * std::pow(err_prev_, 0.04);
        fac = std::clamp(fac, 0.2, 5.0);

        if (err <= 1.0) {
            s_ += h;
            v_[0] = vn[0];
            v_[1] = vn[1];
            ++stats_.steps;
            err_prev_ = std::max(err, 1e-4);
            if (!clamped) h_ = std::clamp(h * fac, set_.h_min, set_.h_max);
            sync_chart();
            return true;
        }
        ++stats_.rejected;
        h_ = std::clamp(h * fac, set_.h_min, set_.h_max);
        if (h_ <= set_.h_min) throw Error(ErrorCode::StepUnderflow, "integrate: step size underflow");
    }
}

Trajectory integrate(const Model& m, const PolarState& start, double horizon,
                     const IntegratorSettings& st) {
    if (horizon <= 0) throw Error(ErrorCode::InvalidArgument, "integrate: horizon <= 0");
    Trajectory traj;
    Integrator ig(m, start, st);
    double e0 = m.twobody ? energy(m, start) : 0.0;
    PolarState s = start;
    traj.samples.push_back({0.0, s.r, s.y, s.t});
    while (ig.step(horizon)) {
        s = ig.current();
        traj.samples.push_back({ig.elapsed(), s.r, s.y, s.t});
        if (m.twobody) {
            double drift = std::abs(energy(m, s) - e0);
            if (drift > traj.stats.max_energy_drift) traj.stats.max_energy_drift = drift;
        }
    }
    traj.stats.steps = ig.stats().steps;
    traj.stats.rejected = ig.stats().rejected;
    return traj;
}

const char* motion_class_name(MotionClass c) {
    switch (c) {
        case MotionClass::B: return "B";
        case MotionClass::P: return "P";
        case MotionClass::H: return "H";
        case MotionClass::O: return "O";
        case MotionClass::Undetermined: return "UNDETERMINED";
    }
    return "?";
}

FinalMotionLabel classify(const Model& m, const Trajectory& traj, const ClassifyThresholds& th) {
    if (traj.duration() < th.min_horizon)
        throw Error(ErrorCode::HorizonTooShort, "classify: trajectory horizon below minimum");
    const auto& ss = traj.samples;

    FinalMotionLabel lab;
    int zone = 0;  // +1 above R_esc, -1 below R_bound, 0 in between
    int last_extreme = 0;
    for (std::size_t i = 0; i < ss.size(); ++i) {
        lab.limsup_r = std::max(lab.limsup_r, ss[i].r);
        if (i > 0 && ss[i - 1].y * ss[i].y < 0) ++lab.turning_points;
        zone = ss[i].r > th.R_esc ? +1 : (ss[i].r < th.R_bound ? -1 : 0);
        if (zone != 0) {
            if (last_extreme != 0 && zone != last_extreme) ++lab.alternations;
            last_extreme = zone;
        }
    }
    const auto& fin = ss.back();
    lab.last_abs_y = std::abs(fin.y);
    double E = energy(m, {fin.r, fin.y, fin.t});

    if (fin.r > th.R_esc && E >= th.e_min) {
        lab.cls = MotionClass::H;
        lab.conclusive = true;  // energy cannot fall back below the escape band
        return lab;
    }
    if (lab.alternations >= th.k_alternations) {
        lab.cls = MotionClass::O;
        return lab;
    }
    if (fin.r > th.R_esc && std::abs(E) < th.e_min && fin.y > 0) {
        // |y| must be decreasing along the final escape leg.
        std::size_t entry = 0;
        for (std::size_t i = ss.size(); i-- > 0;) {
            if (ss[i].r <= th.R_esc) { entry = i; break; }
        }
        if (std::abs(fin.y) <= std::abs(ss[entry].y)) {
            lab.cls = MotionClass::P;
            return lab;
        }
    }
    if (lab.limsup_r <= th.R_bound) {
        lab.cls = MotionClass::B;
        return lab;
    }
    return lab;  // Undetermined
}

}  // namespace ri3bp
