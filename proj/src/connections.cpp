#include "ri3bp/connections.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <cstdlib>

namespace ri3bp {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Step an integrator exactly to the relative time target.
PolarState advance_to(Integrator& ig, double target) {
    while (ig.step(target)) {}
    return ig.current();
}

double table_phase(double t) {
    double tm = std::fmod(t, kTwoPi);
    return tm;
}

}  // namespace

HomoclinicOrbit find_homoclinic(const Model& m, const GeneratingTable& table, double R1, double R2,
                                const HomoclinicSettings& hs) {
    SplittingCurve cur = splitting_curve(m, table, R1, R2, 20, hs.splitting);
    if (cur.brackets.empty())
        throw Error(ErrorCode::NoSignChange, "find_homoclinic: no splitting sign change in [" +
                                                 std::to_string(R1) + ", " + std::to_string(R2) +
                                                 "]");
    double la = cur.brackets.front().first, lb = cur.brackets.front().second;
    SplittingSample sa = splitting_sample(m, table, la, R1, R2, hs.splitting);
    SplittingSample sb = splitting_sample(m, table, lb, R1, R2, hs.splitting);
    int branch = sa.crossing;
    while (lb - la > hs.root_tol * std::max(1.0, la)) {
        double lm = 0.5 * (la + lb);
        SplittingSample sm = splitting_sample(m, table, lm, R1, R2, hs.splitting);
        if (!sm.returned)
            throw Error(ErrorCode::NoReturn, "find_homoclinic: lost the branch during bisection");
        if (sm.delta * sa.delta < 0) {
            lb = lm;
            sb = sm;
        } else {
            la = lm;
            sa = sm;
        }
    }
    SplittingSample root = std::abs(sa.delta) < std::abs(sb.delta) ? sa : sb;
    branch = root.crossing;
    double s_cross = kTwoPi * branch;

    // Interpolation error near the table bottom biases the root of the
    // tabulated splitting function.  Polish the launch radius against an
    // intrinsic criterion: the two-body energy of the forward continuation
    // vanishes at a far radius exactly on the stable manifold.
    double launch = root.launch_r;
    if (hs.polish_r_far > 0) {
        double guard = 2.0 * std::pow(2.0 * hs.polish_r_far, 1.5) / 6.0 + s_cross + kTwoPi * 50;
        auto far_energy = [&](double L) -> double {
            Integrator ig(m, {L, table.unstable(L, 0.0), 0.0}, hs.integ, +1);
            while (ig.step(guard)) {
                PolarState c = ig.current();
                if (c.r >= hs.polish_r_far)
                    return 0.5 * c.y * c.y + m.G * m.G / (2 * c.r * c.r) - 1.0 / c.r;
                if (ig.elapsed() > s_cross + 1.0 && c.y < 0) return -1.0;  // fell back
            }
            return -1.0;  // never escaped within the guard time
        };
        double Ea = far_energy(la), Eb = far_energy(lb);
        double w = std::max(lb - la, 1e-9 * launch);
        while (Ea * Eb > 0 && w < 0.05 * launch) {
            w *= 4;
            la = launch - w;
            lb = launch + w;
            Ea = far_energy(la);
            Eb = far_energy(lb);
        }
        if (Ea * Eb <= 0) {
            for (int it = 0; it < 60 && lb - la > hs.root_tol * launch; ++it) {
                double lm = 0.5 * (la + lb);
                double Em = far_energy(lm);
                if (Em * Ea < 0) {
                    lb = lm;
                    Eb = Em;
                } else {
                    la = lm;
                    Ea = Em;
                }
            }
            launch = 0.5 * (la + lb);
        }
    }

    HomoclinicOrbit orb;
    orb.G = m.G;
    orb.launch_r = launch;
    {
        Integrator ig(m, {launch, table.unstable(launch, 0.0), 0.0}, hs.integ, +1);
        PolarState c = advance_to(ig, s_cross);
        if (!(c.y > 0) || c.r < R1 || c.r > R2)
            throw Error(ErrorCode::MatchFail, "find_homoclinic: polished root left the window");
        orb.r_star = c.r;
        orb.y_star = c.y;
    }

    // Window: forward/backward until the radius nears the table top; the
    // slope mismatch there must sit inside the matching band.
    double r_top = 0.9 * table.r_max();
    auto edge_time = [&](int dir) {
        Integrator ig(m, {orb.r_star, orb.y_star, 0.0}, hs.integ, dir);
        double guard = 2.0 * std::pow(2.0 * table.r_max(), 1.5) / 6.0 + kTwoPi * 400;
        while (ig.step(guard)) {
            if (ig.current().r >= r_top) return ig.elapsed();
        }
        throw Error(ErrorCode::MatchFail, "find_homoclinic: orbit never reached the table top");
    };
    double wf = edge_time(+1);
    double wb = edge_time(-1);
    double W = std::min(wf, wb);
    int half = static_cast<int>(std::floor(W / hs.sample_h));
    orb.window = half * hs.sample_h;
    orb.h = hs.sample_h;
    orb.r.assign(2 * half + 1, 0.0);
    orb.y.assign(2 * half + 1, 0.0);
    for (int dir : {+1, -1}) {
        Integrator ig(m, {orb.r_star, orb.y_star, 0.0}, hs.integ, dir);
        orb.r[half] = orb.r_star;
        orb.y[half] = orb.y_star;
        for (int k = 1; k <= half; ++k) {
            PolarState c = advance_to(ig, k * hs.sample_h);
            orb.r[half + dir * k] = c.r;
            orb.y[half + dir * k] = c.y;
        }
    }
    orb.min_r = *std::min_element(orb.r.begin(), orb.r.end());

    // Endpoint matching diagnostics.
    double tend = table_phase(orb.window);
    orb.match_plus = std::abs(orb.y.back() - table.stable(orb.r.back(), tend));
    orb.match_minus = std::abs(orb.y.front() - table.unstable(orb.r.front(), -tend));
    if (orb.match_plus > hs.match_tol || orb.match_minus > hs.match_tol)
        throw Error(ErrorCode::MatchFail,
                    "find_homoclinic: endpoint slope mismatch " + std::to_string(orb.match_plus) +
                        " / " + std::to_string(orb.match_minus));

    // Euler-Lagrange residual by a 7-point stencil on the uniform samples.
    // Centers within 0.05 of the binary-collision phases t = 2 pi k are
    // skipped: rho^2 ~ t^{4/3} there, so the field is only C^1 and no
    // difference stencil converges; the re-integration check covers them.
    double h2 = hs.sample_h * hs.sample_h;
    for (int i = 3; i + 3 < static_cast<int>(orb.r.size()); ++i) {
        double t = orb.s_at(i);
        if (std::abs(std::remainder(t, kTwoPi)) < 0.05) continue;
        double rdd = (2 * orb.r[i - 3] - 27 * orb.r[i - 2] + 270 * orb.r[i - 1] - 490 * orb.r[i] +
                      270 * orb.r[i + 1] - 27 * orb.r[i + 2] + 2 * orb.r[i + 3]) /
                     (180 * h2);
        double rho = m.rho(t);
        double r = orb.r[i];
        double rhs = m.G * m.G / (r * r * r) - r / std::pow(r * r + rho * rho, 1.5);
        orb.el_residual = std::max(orb.el_residual, std::abs(rdd - rhs));
    }

    // Independent re-integration from the midpoint at a tighter tolerance.
    IntegratorSettings tight = hs.integ;
    tight.tol = std::min(1e-13, hs.integ.tol);
    Integrator ig(m, {orb.r_star, orb.y_star, 0.0}, tight, +1);
    int stride = std::max<std::size_t>(1, orb.r.size() / 64);
    for (int k = stride; half + k < static_cast<int>(orb.r.size()); k += stride) {
        PolarState c = advance_to(ig, k * hs.sample_h);
        orb.reint_divergence = std::max(orb.reint_divergence, std::abs(c.r - orb.r[half + k]));
    }
    (void)branch;
    return orb;
}

DiscretizedPath restrict_to_path(const HomoclinicOrbit& orbit, double n, double h) {
    if (n > orbit.window)
        throw Error(ErrorCode::InvalidArgument, "restrict_to_path: window exceeds the orbit");
    DiscretizedPath p;
    p.S = n;
    p.h = h;
    p.G0 = orbit.G;
    int nn = static_cast<int>(std::lround(2.0 * n / h));
    p.phi.resize(nn + 1);
    int last = static_cast<int>(orbit.r.size()) - 1;
    for (int i = 0; i <= nn; ++i) {
        double s = -n + i * h;
        double x = (s + orbit.window) / orbit.h;
        int j = std::clamp(static_cast<int>(std::floor(x)) - 1, 0, last - 3);
        double rr = 0;
        for (int a = 0; a < 4; ++a) {  // 4-point Lagrange on the sample grid
            double w = 1;
            for (int b = 0; b < 4; ++b)
                if (b != a) w *= (x - (j + b)) / static_cast<double>(a - b);
            rr += w * orbit.r[j + a];
        }
        p.phi[i] = rr - parabola_state(s, orbit.G).r0;
    }
    return p;
}

namespace {

double path_grad_norm(const DiscretizedPath& g) {
    double acc = 0;
    for (int i = 0; i < g.nodes(); ++i) {
        double w = (i == 0 || i == g.nodes() - 1) ? 0.5 * g.h : g.h;
        acc += w * g.phi[i] * g.phi[i];
    }
    return std::sqrt(acc);
}

// Banded (width 2) finite-difference Jacobian of the reduced gradient,
// assembled by 5-coloring.
Eigen::SparseMatrix<double> reduced_jacobian(const Model& m, const DiscretizedPath& path,
                                             const GeneratingTable* table, double fd_step,
                                             const DiscretizedPath& g0) {
    int n = path.nodes();
    Eigen::SparseMatrix<double> J(n, n);
    std::vector<Eigen::Triplet<double>> trips;
    for (int color = 0; color < 5; ++color) {
        DiscretizedPath pp = path;
        for (int j = color; j < n; j += 5) pp.phi[j] += fd_step;
        DiscretizedPath gp = reduced_gradient(m, pp, table);
        for (int j = color; j < n; j += 5) {
            for (int i = std::max(0, j - 2); i <= std::min(n - 1, j + 2); ++i)
                trips.emplace_back(i, j, (gp.phi[i] - g0.phi[i]) / fd_step);
        }
    }
    J.setFromTriplets(trips.begin(), trips.end());
    return J;
}

}  // namespace

NewtonResult refine_newton(const Model& m, const DiscretizedPath& seed,
                           const GeneratingTable* table, const NewtonSettings& ns) {
    NewtonResult out;
    out.path = seed;
    DiscretizedPath g = reduced_gradient(m, out.path, table);
    double gn = path_grad_norm(g);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    for (out.iterations = 0; out.iterations < ns.max_iterations; ++out.iterations) {
        if (gn <= ns.grad_tol) break;
        auto J = reduced_jacobian(m, out.path, table, ns.fd_step, g);
        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw Error(ErrorCode::SingularJacobian, "refine_newton: LU factorization failed");
        int n = out.path.nodes();
        Eigen::VectorXd rhs(n);
        for (int i = 0; i < n; ++i) rhs[i] = -g.phi[i];
        Eigen::VectorXd dx = lu.solve(rhs);
        double alpha = 1.0;
        for (int half = 0; half < 8; ++half) {
            DiscretizedPath trial = out.path;
            for (int i = 0; i < n; ++i) trial.phi[i] += alpha * dx[i];
            try {
                DiscretizedPath gt = reduced_gradient(m, trial, table);
                double gtn = path_grad_norm(gt);
                if (gtn < gn || alpha < 0.02) {
                    out.path = trial;
                    g = gt;
                    gn = gtn;
                    break;
                }
            } catch (const Error&) {
                // invalid trial (radius/table bounds): shrink
            }
            alpha *= 0.5;
        }
    }
    if (gn > ns.grad_tol)
        throw Error(ErrorCode::NonConverged,
                    "refine_newton: gradient " + std::to_string(gn) + " after " +
                        std::to_string(out.iterations) + " iterations");
    // Determinant sign at the solution.
    auto J = reduced_jacobian(m, out.path, table, ns.fd_step, g);
    lu.compute(J);
    out.det_sign = lu.info() == Eigen::Success ? (lu.signDeterminant() > 0 ? 1 : -1) : 0;
    out.grad_norm = gn;
    // Section readout at s = 0 (5-point first derivative).
    int mid = (out.path.nodes() - 1) / 2;
    out.r_star = parabola_state(0.0, out.path.G0).r0 + out.path.phi[mid];
    const auto& f = out.path.phi;
    out.y_star = (f[mid - 2] - 8 * f[mid - 1] + 8 * f[mid + 1] - f[mid + 2]) / (12 * out.path.h);
    return out;
}

namespace {

// H^1 preconditioner for the string flow: solve (I - d^2/ds^2) p = g with
// natural ends by the Thomas algorithm.  Equalizes the kinetic-term stiffness
// so the step scale is O(1) instead of O(h^2).
void smooth_direction(std::vector<double>& g, double h) {
    int n = static_cast<int>(g.size());
    double c = 1.0 / (h * h);
    std::vector<double> diag(n, 1 + 2 * c), rhs = g;
    diag[0] = diag[n - 1] = 1 + c;
    for (int i = 1; i < n; ++i) {
        double w = -c / diag[i - 1];
        diag[i] -= w * -c;
        rhs[i] -= w * rhs[i - 1];
    }
    g[n - 1] = rhs[n - 1] / diag[n - 1];
    for (int i = n - 2; i >= 0; --i) g[i] = (rhs[i] + c * g[i + 1]) / diag[i];
}

double image_dist(const std::vector<double>& a, const std::vector<double>& b, double h) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(h * acc);
}

// Banded finite-difference Jacobian of the full-action gradient (bandwidth 2,
// 5-coloring), for the saddle polish.
Eigen::SparseMatrix<double> action_jacobian(const Model& m, const DiscretizedPath& path,
                                            double fd_step, const DiscretizedPath& g0) {
    int n = path.nodes();
    Eigen::SparseMatrix<double> J(n, n);
    std::vector<Eigen::Triplet<double>> trips;
    for (int color = 0; color < 5; ++color) {
        DiscretizedPath pp = path;
        for (int j = color; j < n; j += 5) pp.phi[j] += fd_step;
        DiscretizedPath gp = action_gradient(m, pp);
        for (int j = color; j < n; j += 5) {
            for (int i = std::max(0, j - 2); i <= std::min(n - 1, j + 2); ++i)
                trips.emplace_back(i, j, (gp.phi[i] - g0.phi[i]) / fd_step);
        }
    }
    J.setFromTriplets(trips.begin(), trips.end());
    return J;
}

}  // namespace

MountainPassResult mountain_pass(const Model& m, const DiscretizedPath& domain_seed,
                                 const GeneratingTable* table, const MountainPassSettings& ms) {
    (void)table;  // the search uses only the plain action calculus
    int M = ms.images;
    if (M < 5) throw Error(ErrorCode::InvalidArgument, "mountain_pass: need at least 5 images");
    double S = domain_seed.S, h = domain_seed.h, G0 = domain_seed.G0;
    int nn = domain_seed.nodes();
    double m_bar = ms.m_bar > 0 ? ms.m_bar : 2.0 * m.G * m.G;
    ActionSettings as;
    as.window_tol = 1e9;  // intermediate images roam; no tail gating

    // Endpoint 1: constant outward shift.  Endpoint 2: smooth dip toward
    // collision depth collision_frac * G0^2/2.  Both must sit well below the
    // saddle level.
    std::vector<double> r0s(nn);
    for (int i = 0; i < nn; ++i) r0s[i] = parabola_state(domain_seed.s_at(i), G0).r0;
    std::vector<std::vector<double>> X(M, std::vector<double>(nn, 0.0));
    double dip_w = std::min(20.0, S / 3.0);
    double mc = ms.collision_frac * G0 * G0 / 2.0;
    for (int i = 0; i < nn; ++i) {
        double s = domain_seed.s_at(i);
        double x = std::abs(s) / dip_w;
        double chi = x >= 1 ? 0.0 : std::exp(1 - 1 / (1 - x * x));
        X[0][i] = ms.mu;
        X[M - 1][i] = (mc - r0s[i]) * chi;
    }
    // Initial string through phi = 0: scale the shifted endpoint down to the
    // reference parabola, then scale the collision dip up.  Straight-line
    // interpolation between the endpoints misses the low crossing region and
    // sends the climbing image up the wrong part of the ridge.
    int mid = M / 2;
    for (int k = 1; k + 1 < M; ++k) {
        if (k <= mid) {
            double t = 1.0 - static_cast<double>(k) / mid;
            for (int i = 0; i < nn; ++i) X[k][i] = t * X[0][i];
        } else {
            double t = static_cast<double>(k - mid) / (M - 1 - mid);
            for (int i = 0; i < nn; ++i) X[k][i] = t * X[M - 1][i];
        }
    }

    auto path_of = [&](const std::vector<double>& x) {
        DiscretizedPath p = domain_seed;
        p.phi = x;
        return p;
    };
    auto value_of = [&](const std::vector<double>& x) { return action_value(m, path_of(x), as); };
    auto eligible = [&](const std::vector<double>& x) {
        for (int i = 0; i < nn; ++i)
            if (r0s[i] + x[i] <= m_bar) return true;
        return false;
    };
    double a1 = value_of(X[0]).A_G, a2 = value_of(X[M - 1]).A_G;
    if (a1 >= 0 || a2 >= 0)
        throw Error(ErrorCode::InvalidArgument,
                    "mountain_pass: endpoint actions are not below the barrier");

    // Eligible max over a finely interpolated string; the discrete image max
    // underestimates the crossing level when the ridge falls between images.
    auto ridge_max = [&](const std::vector<std::vector<double>>& str, int anchor) {
        std::vector<double> best = str[anchor];
        double best_a = value_of(best).A_G;
        std::vector<double> probe(nn);
        for (int k = 0; k + 1 < (int)str.size(); ++k) {
            for (int j = 1; j < 16; ++j) {
                double t = j / 16.0;
                for (int i = 0; i < nn; ++i) probe[i] = (1 - t) * str[k][i] + t * str[k + 1][i];
                if (!eligible(probe)) continue;
                double ap = value_of(probe).A_G;
                if (ap > best_a) {
                    best_a = ap;
                    best = probe;
                }
            }
        }
        return std::pair<std::vector<double>, double>(best, best_a);
    };
    const std::vector<std::vector<double>> X_init = X;

    MountainPassResult out;
    double best_grad = std::numeric_limits<double>::infinity();
    int no_progress = 0;
    int climber = M / 2;
    double climber_grad = std::numeric_limits<double>::infinity();
    for (out.iterations = 0; out.iterations < ms.max_iterations; ++out.iterations) {
        // Action values and the constrained max node.
        std::vector<double> a(M);
        a[0] = a1;
        a[M - 1] = a2;
        climber = -1;
        for (int k = 1; k + 1 < M; ++k) {
            a[k] = value_of(X[k]).A_G;
            if (eligible(X[k]) && (climber < 0 || a[k] > a[climber])) climber = k;
        }
        if (climber < 0) {
            int best = 1;
            for (int k = 2; k + 1 < M; ++k)
                if (a[k] > a[best]) best = k;
            climber = best;
        }

        // Gradient moves: descent everywhere, ascent along the string tangent
        // at the climbing image.
        for (int k = 1; k + 1 < M; ++k) {
            DiscretizedPath g = action_gradient(m, path_of(X[k]));
            if (k == climber) {
                double gn = 0;
                for (int i = 0; i < nn; ++i) {
                    double w = (i == 0 || i == nn - 1) ? 0.5 * h : h;
                    gn += w * g.phi[i] * g.phi[i];
                }
                climber_grad = std::sqrt(gn);
                std::vector<double> tau(nn);
                double tn = 0;
                for (int i = 0; i < nn; ++i) {
                    tau[i] = X[k + 1][i] - X[k - 1][i];
                    tn += tau[i] * tau[i];
                }
                if (tn > 0) {
                    double dot = 0;
                    for (int i = 0; i < nn; ++i) dot += g.phi[i] * tau[i];
                    for (int i = 0; i < nn; ++i) g.phi[i] -= 2.0 * dot / tn * tau[i];
                }
            }
            std::vector<double> dir(g.phi.begin(), g.phi.end());
            smooth_direction(dir, h);
            // Collision-side gradients are stiff (~1/r^2); cap the move so a
            // single step cannot plunge an image through the dip scale.
            double mmax = 0;
            for (double v : dir) mmax = std::max(mmax, std::abs(ms.step * v));
            double cap = 0.5 * mc;
            double scale = mmax > cap ? cap / mmax : 1.0;
            // The action is unbounded below toward collision; clamp the
            // radius at half the dip depth so descent cannot dive to r = 0.
            for (int i = 0; i < nn; ++i) {
                X[k][i] -= scale * ms.step * dir[i];
                X[k][i] = std::max(X[k][i], 0.5 * mc - r0s[i]);
            }
        }
        if (climber_grad <= ms.grad_tol) break;

        // Respace the two sub-strings, keeping the climbing image anchored.
        for (int part = 0; part < 2; ++part) {
            int lo = part == 0 ? 0 : climber;
            int hi = part == 0 ? climber : M - 1;
            int cnt = hi - lo;
            if (cnt < 2) continue;
            std::vector<double> cum(cnt + 1, 0.0);
            for (int k = lo; k < hi; ++k)
                cum[k - lo + 1] = cum[k - lo] + image_dist(X[k], X[k + 1], h);
            if (cum.back() == 0) continue;
            std::vector<std::vector<double>> fresh(cnt - 1);
            for (int j = 1; j < cnt; ++j) {
                double target = cum.back() * j / cnt;
                int seg = 0;
                while (seg + 1 < cnt && cum[seg + 1] < target) ++seg;
                double t = (target - cum[seg]) / (cum[seg + 1] - cum[seg]);
                fresh[j - 1].resize(nn);
                for (int i = 0; i < nn; ++i)
                    fresh[j - 1][i] = (1 - t) * X[lo + seg][i] + t * X[lo + seg + 1][i];
            }
            for (int j = 1; j < cnt; ++j) X[lo + j] = fresh[j - 1];
        }

        if (std::getenv("RI3BP_DEBUG") && out.iterations % 20 == 0)
            std::fprintf(stderr, "[mp] it=%d climber=%d a=%.6g grad=%.3e\n", out.iterations,
                         climber, value_of(X[climber]).A_G, climber_grad);
        // Progress is gauged on the climbing image's gradient norm; the
        // max action legitimately rises while the climber ascends the ridge.
        if (climber_grad < 0.999 * best_grad) {
            best_grad = climber_grad;
            no_progress = 0;
        } else if (++no_progress > 120) {
            out.stalled = true;
            break;
        }
    }

    auto ridge_final = ridge_max(X, climber);
    out.saddle = path_of(ridge_final.first);
    out.c_raw = ridge_final.second;
    auto norm = [&](const DiscretizedPath& gg) {
        double acc = 0;
        for (int i = 0; i < nn; ++i) {
            double w = (i == 0 || i == nn - 1) ? 0.5 * h : h;
            acc += w * gg.phi[i] * gg.phi[i];
        }
        return std::sqrt(acc);
    };
    out.grad_norm = norm(action_gradient(m, out.saddle));
    out.c_estimate = out.c_raw;

    if (ms.polish) {
        // Newton polish on the full-action gradient with Levenberg damping:
        // the rho = 0 saddle is translation-degenerate and the bare Newton
        // step flies off along the flat direction.  The basin guard rejects
        // a polish that leaves the seed's neighborhood.
        auto polish_from = [&](const DiscretizedPath& seed) {
            DiscretizedPath p = seed;
            DiscretizedPath g = action_gradient(m, p);
            double gn = norm(g);
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
            double lambda = 0.0;
            for (int it = 0; it < 80 && gn > 1e-11; ++it) {
                auto J = action_jacobian(m, p, 1e-7, g);
                bool moved = false;
                for (int attempt = 0; attempt < 8 && !moved; ++attempt) {
                    Eigen::SparseMatrix<double> Jl = J;
                    if (lambda > 0)
                        for (int i = 0; i < nn; ++i) Jl.coeffRef(i, i) += lambda;
                    lu.compute(Jl);
                    if (lu.info() != Eigen::Success) {
                        lambda = lambda > 0 ? lambda * 10 : 1e-6;
                        continue;
                    }
                    Eigen::VectorXd rhs(nn);
                    for (int i = 0; i < nn; ++i) rhs[i] = -g.phi[i];
                    Eigen::VectorXd dx = lu.solve(rhs);
                    for (double alpha = 1.0; alpha > 1e-3 && !moved; alpha *= 0.5) {
                        DiscretizedPath trial = p;
                        for (int i = 0; i < nn; ++i) trial.phi[i] += alpha * dx[i];
                        try {
                            DiscretizedPath gt = action_gradient(m, trial);
                            double gtn = norm(gt);
                            if (gtn < gn) {
                                p = trial;
                                g = gt;
                                gn = gtn;
                                moved = true;
                            }
                        } catch (const Error&) {
                        }
                    }
                    if (!moved) lambda = lambda > 0 ? lambda * 10 : 1e-6;
                }
                if (moved) lambda *= 0.25;
                if (!moved) break;
            }
            double guard = 2.0 * (image_dist(X[climber > 0 ? climber - 1 : 0], X[climber], h) +
                                  image_dist(X[climber], X[climber + 1 < M ? climber + 1 : M - 1], h) +
                                  1.0);
            bool accepted = gn <= 1e-9 && image_dist(p.phi, seed.phi, h) < guard;
            if (std::getenv("RI3BP_DEBUG"))
                std::fprintf(stderr, "[mp-polish] gn=%.3e dist=%.3g guard=%.3g accepted=%d\n", gn,
                             image_dist(p.phi, seed.phi, h), guard, (int)accepted);
            return std::tuple<bool, DiscretizedPath, double>(accepted, p, gn);
        };
        // Seed from the final string's ridge point; if the polish does not
        // settle there (degenerate landscapes stall it), fall back to the
        // initial string's ridge point, which the construction routes through
        // the zero-perturbation shape.
        auto [ok1, p1, gn1] = polish_from(out.saddle);
        if (!ok1) {
            auto ridge0 = ridge_max(X_init, M / 2);
            auto [ok0, p0, gn0] = polish_from(path_of(ridge0.first));
            if (ok0) {
                ok1 = true;
                p1 = p0;
                gn1 = gn0;
            }
        }
        if (ok1) {
            out.saddle = p1;
            out.grad_norm = gn1;
            out.c_estimate = action_value(m, p1, as).A_G;
        }
    }
    if (out.stalled && out.grad_norm > ms.grad_tol && ms.polish == false)
        throw Error(ErrorCode::Stalled, "mountain_pass: max-action decrease stalled");
    return out;
}

Connector boundary_velocities(const Model& m, const GeneratingTable& table, double T, double R0,
                              double R1, double t0, const ConnectorSettings& cs) {
    if (!(T > 0) || !table.contains(R0) || !table.contains(R1))
        throw Error(ErrorCode::InvalidArgument,
                    "boundary_velocities: endpoints outside the table or T <= 0");
    double slope = table.stable(R0, t0);
    struct Shot {
        double f = 0, yT = 0, min_r = 0, apex = 0, apex_t = 0;
        bool in_far = true;
    };
    // Shooting parameter: the deficit d = slope - y(0) > 0.  On the returning
    // branch r(T) decreases in d, so f(d) = r(T) - R1 brackets monotonically.
    auto shoot = [&](double d) -> Shot {
        Shot out;
        Integrator ig(m, {R0, slope - d, t0}, cs.integ, +1);
        out.min_r = out.apex = R0;
        PolarState c{R0, slope - d, t0};
        while (ig.step(T)) {
            c = ig.current();
            out.min_r = std::min(out.min_r, c.r);
            if (c.r > out.apex) {
                out.apex = c.r;
                out.apex_t = ig.elapsed();
            }
            if (c.r < table.r_min()) {
                out.in_far = false;
                break;
            }
        }
        c = ig.current();
        out.min_r = std::min(out.min_r, c.r);
        out.apex = std::max(out.apex, c.r);
        out.f = c.r - R1;
        out.yT = c.y;
        return out;
    };

    double d_lo = 0, d_hi = cs.d_init > 0 ? cs.d_init : 1e-7 * (1.0 + std::abs(slope));
    Shot lo{}, hi = shoot(d_hi);
    // Expand until the terminal radius falls below R1; contract if the warm
    // start already overshot.
    while (hi.f > 0) {
        d_lo = d_hi;
        lo = hi;
        d_hi *= 4;
        if (d_hi > 2.0 * std::abs(slope) + 1.0)
            throw Error(ErrorCode::NoSolutionInBand,
                        "boundary_velocities: no terminal match below the stable slope");
        hi = shoot(d_hi);
    }
    if (d_lo == 0) {
        lo = shoot(0.0);  // d = 0 launches exactly on the stable graph
        if (lo.f < 0)
            throw Error(ErrorCode::NoSolutionInBand,
                        "boundary_velocities: terminal radius short even on the manifold");
    }

    // Illinois iteration on f over [d_lo, d_hi].
    Shot best = std::abs(lo.f) < std::abs(hi.f) ? lo : hi;
    double d_best = std::abs(lo.f) < std::abs(hi.f) ? d_lo : d_hi;
    double flo = lo.f, fhi = hi.f;
    int side = 0;
    for (int it = 0; it < cs.max_iterations; ++it) {
        if (std::abs(best.f) <= cs.tol || d_hi - d_lo <= 1e-17 * (1.0 + d_hi)) break;
        double dm = (d_lo * fhi - d_hi * flo) / (fhi - flo);
        if (!(dm > d_lo && dm < d_hi)) dm = 0.5 * (d_lo + d_hi);
        Shot sm = shoot(dm);
        if (std::abs(sm.f) < std::abs(best.f)) {
            best = sm;
            d_best = dm;
        }
        if (sm.f > 0) {
            d_lo = dm;
            flo = sm.f;
            if (side == +1) fhi *= 0.5;
            side = +1;
        } else {
            d_hi = dm;
            fhi = sm.f;
            if (side == -1) flo *= 0.5;
            side = -1;
        }
    }
    if (!best.in_far || best.min_r < table.r_min())
        throw Error(ErrorCode::ArcLeavesFarRegion,
                    "boundary_velocities: arc dipped below the far-region radius");
    Connector out;
    out.v_plus = slope - d_best;
    out.v_minus = best.yT;
    out.min_r = best.min_r;
    out.apex_r = best.apex;
    out.resid = std::abs(best.f);

    // The endpoint-shooting residual floor grows like T^2 ulp (the ascending
    // leg is expanding), so polish in the apex parametrization (r_a, s_a):
    // both legs integrate downhill, where the sensitivity is mild.  The arc is
    // r(s) with r(s_a) = r_a, y(s_a) = 0.
    if (out.resid > 0.5 * cs.tol && best.apex_t > 0 && best.apex_t < T) {
        auto legs = [&](double ra, double sa, Connector* diag) {
            std::pair<double, double> f;
            for (int dir : {-1, +1}) {
                Integrator ig(m, {ra, 0.0, t0 + sa}, cs.integ, dir);
                double span = dir < 0 ? sa : T - sa;
                while (ig.step(span)) {}
                PolarState c = ig.current();
                (dir < 0 ? f.first : f.second) = c.r - (dir < 0 ? R0 : R1);
                if (diag) (dir < 0 ? diag->v_plus : diag->v_minus) = c.y;
            }
            return f;
        };
        double ra = best.apex, sa = best.apex_t;
        auto f = legs(ra, sa, nullptr);
        for (int it = 0; it < 30; ++it) {
            if (std::max(std::abs(f.first), std::abs(f.second)) <= 0.5 * cs.tol) break;
            double dra = 1e-7 * ra, dsa = 1e-7 * T;
            auto fr = legs(ra + dra, sa, nullptr);
            auto fs = legs(ra, sa + dsa, nullptr);
            double j11 = (fr.first - f.first) / dra, j12 = (fs.first - f.first) / dsa;
            double j21 = (fr.second - f.second) / dra, j22 = (fs.second - f.second) / dsa;
            double det = j11 * j22 - j12 * j21;
            if (det == 0) break;
            double step_r = (j22 * f.first - j12 * f.second) / det;
            double step_s = (j11 * f.second - j21 * f.first) / det;
            double before = std::max(std::abs(f.first), std::abs(f.second));
            bool moved = false;
            for (double alpha = 1.0; alpha > 1e-4; alpha *= 0.5) {
                double na = ra - alpha * step_r, ns = sa - alpha * step_s;
                if (!(na > 0.5 * std::min(R0, R1)) || !(ns > 0) || !(ns < T)) continue;
                auto fn = legs(na, ns, nullptr);
                if (std::max(std::abs(fn.first), std::abs(fn.second)) < before) {
                    ra = na;
                    sa = ns;
                    f = fn;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }
        double polished = std::max(std::abs(f.first), std::abs(f.second));
        if (polished < out.resid) {
            Connector d;
            legs(ra, sa, &d);
            out.v_plus = d.v_plus;
            out.v_minus = d.v_minus;
            out.apex_r = ra;
            out.min_r = std::min(std::min(R0, R1), ra);
            out.resid = polished;
        }
    }
    return out;
}

double discover_t_min(const Model& m, const GeneratingTable& table, double R0, double eps0,
                      double T0, const ConnectorSettings& cs) {
    double slope = table.stable(R0, 0.0);
    double T = T0;
    for (int k = 0; k < 60; ++k) {
        try {
            Connector c = boundary_velocities(m, table, T, R0, R0, 0.0, cs);
            if (std::abs(c.v_plus - slope) <= eps0) return T;
        } catch (const Error&) {
            // connector infeasible at this T: keep doubling
        }
        T *= 2;
    }
    throw Error(ErrorCode::NoSolutionInBand, "discover_t_min: doubling exhausted");
}

namespace {

// Shared residual core: reduced-action gradients with the manifold end slopes
// replaced by connecting-arc velocities at the shared endpoints.  Connectors
// and warm-start deficits are returned for Jacobian assembly and diagnostics.
std::vector<DiscretizedPath> multibump_eval(const Model& m,
                                            const std::vector<DiscretizedPath>& blocks,
                                            const Itinerary& itin, const GeneratingTable& table,
                                            const MultibumpSettings& ms,
                                            std::vector<Connector>* conns_out,
                                            std::vector<double>* warm) {
    long L = static_cast<long>(itin.l.size());
    bool per = itin.tag == ItineraryTag::Periodic;
    std::size_t nb = per ? L : L + 1;
    if (per && L == 0)
        throw Error(ErrorCode::InvalidArgument, "multibump: periodic itinerary needs l entries");
    if (blocks.size() != nb)
        throw Error(ErrorCode::InvalidArgument, "multibump: block count does not fit itinerary");
    double n = blocks[0].S, h = blocks[0].h, G0 = blocks[0].G0, w = 0.5 * h;
    for (const auto& b : blocks)
        if (b.S != n || b.h != h || b.G0 != G0)
            throw Error(ErrorCode::InvalidArgument, "multibump: blocks on mismatched grids");

    std::vector<DiscretizedPath> F;
    F.reserve(nb);
    for (const auto& b : blocks) F.push_back(reduced_gradient(m, b, &table));

    double r0n = parabola_state(n, G0).r0;
    if (conns_out) conns_out->clear();
    for (long j = 0; j < L; ++j) {
        std::size_t a = j, b = per ? (j + 1) % L : j + 1;
        double T = kTwoPi * itin.l[j] - 2.0 * n;
        if (T <= 0)
            throw Error(ErrorCode::InvalidArgument, "multibump: block gap shorter than a block");
        double R0 = r0n + blocks[a].phi.back();
        double R1 = r0n + blocks[b].phi.front();
        ConnectorSettings cs = ms.connector;
        if (warm && (*warm)[j] > 0) cs.d_init = (*warm)[j];
        Connector c = boundary_velocities(m, table, T, R0, R1, n, cs);
        if (warm) (*warm)[j] = table.stable(R0, n) - c.v_plus;
        F[a].phi.back() += (table.stable(R0, n) - c.v_plus) / w;
        F[b].phi.front() += (c.v_minus - table.unstable(R1, -n)) / w;
        if (conns_out) conns_out->push_back(c);
    }
    if (itin.tag == ItineraryTag::Hyperbolic) {
        double R = r0n + blocks.back().phi.back();
        double vh = hyperbolic_velocity(m, table, R, itin.eps_hyp, ms.connector.integ);
        F.back().phi.back() += (table.stable(R, n) - vh) / w;
    }
    return F;
}

double stacked_norm(const std::vector<DiscretizedPath>& F) {
    double acc = 0;
    for (const auto& g : F)
        for (int i = 0; i < g.nodes(); ++i) {
            double w = (i == 0 || i == g.nodes() - 1) ? 0.5 * g.h : g.h;
            acc += w * g.phi[i] * g.phi[i];
        }
    return std::sqrt(acc);
}

}  // namespace

std::vector<DiscretizedPath> multibump_residual(const Model& m,
                                                const std::vector<DiscretizedPath>& blocks,
                                                const Itinerary& itin,
                                                const GeneratingTable& table,
                                                const MultibumpSettings& ms) {
    return multibump_eval(m, blocks, itin, table, ms, nullptr, nullptr);
}

MultibumpSolution solve_multibump(const Model& m, const Itinerary& itin,
                                  const HomoclinicOrbit& base, const GeneratingTable& table,
                                  double n, double h, const MultibumpSettings& ms) {
    long L = static_cast<long>(itin.l.size());
    bool per = itin.tag == ItineraryTag::Periodic;
    std::size_t nb = per ? L : L + 1;
    DiscretizedPath seed = restrict_to_path(base, n, h);
    int nn = seed.nodes();
    double w = 0.5 * h;
    double r0n = parabola_state(n, seed.G0).r0;

    MultibumpSolution out;
    out.itinerary = itin;
    out.blocks.assign(nb, seed);
    std::vector<double> warm(L, 0.0);
    std::vector<Connector> conns;
    auto F = multibump_eval(m, out.blocks, itin, table, ms, &conns, &warm);
    double fn = stacked_norm(F);

    int N = static_cast<int>(nb) * nn;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    auto assemble = [&]() {
        std::vector<Eigen::Triplet<double>> trips;
        for (std::size_t b = 0; b < nb; ++b) {
            DiscretizedPath g0 = reduced_gradient(m, out.blocks[b], &table);
            auto Jb = reduced_jacobian(m, out.blocks[b], &table, ms.newton.fd_step, g0);
            int off = static_cast<int>(b) * nn;
            for (int k = 0; k < Jb.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator it(Jb, k); it; ++it)
                    trips.emplace_back(off + it.row(), off + it.col(), it.value());
        }
        // Connector coupling: finite differences of v+- in the two endpoint
        // radii, plus the table-slope derivative that the correction carries.
        for (long j = 0; j < L; ++j) {
            std::size_t a = j, bk = per ? (j + 1) % L : j + 1;
            double T = kTwoPi * itin.l[j] - 2.0 * n;
            double R0 = r0n + out.blocks[a].phi.back();
            double R1 = r0n + out.blocks[bk].phi.front();
            ConnectorSettings cs = ms.connector;
            cs.d_init = warm[j];
            double d0 = 1e-6 * R0, d1 = 1e-6 * R1;
            Connector cr = boundary_velocities(m, table, T, R0 + d0, R1, n, cs);
            Connector cl = boundary_velocities(m, table, T, R0, R1 + d1, n, cs);
            const Connector& c0 = conns[j];
            double dvp0 = (cr.v_plus - c0.v_plus) / d0, dvp1 = (cl.v_plus - c0.v_plus) / d1;
            double dvm0 = (cr.v_minus - c0.v_minus) / d0, dvm1 = (cl.v_minus - c0.v_minus) / d1;
            double dsp = (table.stable(R0 + d0, n) - table.stable(R0, n)) / d0;
            double dsm = (table.unstable(R1 + d1, -n) - table.unstable(R1, -n)) / d1;
            int ia = static_cast<int>(a) * nn + nn - 1;
            int ib = static_cast<int>(bk) * nn;
            trips.emplace_back(ia, ia, (dsp - dvp0) / w);
            trips.emplace_back(ia, ib, -dvp1 / w);
            trips.emplace_back(ib, ia, dvm0 / w);
            trips.emplace_back(ib, ib, (dvm1 - dsm) / w);
        }
        Eigen::SparseMatrix<double> J(N, N);
        J.setFromTriplets(trips.begin(), trips.end());
        return J;
    };

    for (out.iterations = 0; out.iterations < ms.newton.max_iterations; ++out.iterations) {
        if (std::getenv("RI3BP_DEBUG")) std::fprintf(stderr, "[mb] it=%d fn=%.3e\n", out.iterations, fn);
        if (fn <= ms.newton.grad_tol) break;
        auto J = assemble();
        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw Error(ErrorCode::SingularJacobian, "solve_multibump: LU factorization failed");
        Eigen::VectorXd rhs(N);
        for (std::size_t b = 0; b < nb; ++b)
            for (int i = 0; i < nn; ++i) rhs[b * nn + i] = -F[b].phi[i];
        Eigen::VectorXd dx = lu.solve(rhs);
        bool improved = false;
        for (double alpha = 1.0; alpha > 1e-3; alpha *= 0.5) {
            auto trial = out.blocks;
            for (std::size_t b = 0; b < nb; ++b)
                for (int i = 0; i < nn; ++i) trial[b].phi[i] += alpha * dx[b * nn + i];
            try {
                std::vector<Connector> tc;
                auto Ft = multibump_eval(m, trial, itin, table, ms, &tc, &warm);
                double ftn = stacked_norm(Ft);
                if (ftn < fn) {
                    out.blocks = trial;
                    F = Ft;
                    conns = tc;
                    fn = ftn;
                    improved = true;
                    break;
                }
            } catch (const Error&) {
                // infeasible trial (radius/table/connector bounds): shrink
            }
        }
        if (!improved) break;  // stalled at the evaluation-noise floor
    }
    if (fn > ms.newton.grad_tol)
        throw Error(ErrorCode::NonConverged,
                    "solve_multibump: residual " + std::to_string(fn) + " after " +
                        std::to_string(out.iterations) + " iterations");
    out.residual_norm = fn;
    out.connectors = conns;

    auto J = assemble();
    lu.compute(J);
    out.det_sign = lu.info() == Eigen::Success ? (lu.signDeterminant() > 0 ? 1 : -1) : 0;

    // Shadowing report: block deviations from the seeding restriction in
    // values and velocities, and the far-region floor along the connectors.
    double amp = 0;
    for (double v : seed.phi) amp = std::max(amp, std::abs(v));
    for (std::size_t b = 0; b < nb; ++b) {
        for (int i = 0; i < nn; ++i) {
            out.block_dev_r = std::max(out.block_dev_r,
                                       std::abs(out.blocks[b].phi[i] - seed.phi[i]));
            if (i > 0 && i + 1 < nn) {
                double dv = (out.blocks[b].phi[i + 1] - out.blocks[b].phi[i - 1] -
                             seed.phi[i + 1] + seed.phi[i - 1]) /
                            (2 * h);
                out.block_dev_v = std::max(out.block_dev_v, std::abs(dv));
            }
        }
    }
    out.connector_min_r = conns.empty() ? r0n : conns.front().min_r;
    for (const auto& c : conns) out.connector_min_r = std::min(out.connector_min_r, c.min_r);
    double eps = ms.shadow_eps_frac * amp;
    out.shadowing_ok = out.block_dev_r <= eps && out.block_dev_v <= eps &&
                       out.connector_min_r >= table.r_min();

    if (per) {
        for (long j = 0; j < L; ++j) {
            std::size_t bk = (j + 1) % L;
            const auto& p = out.blocks[bk].phi;
            double v_left = parabola_state(-n, seed.G0).r0_dot +
                            (-3 * p[0] + 4 * p[1] - p[2]) / (2 * h);
            out.period_mismatch_r = std::max(out.period_mismatch_r, conns[j].resid);
            out.period_mismatch_y =
                std::max(out.period_mismatch_y, std::abs(conns[j].v_minus - v_left));
        }
    }
    return out;
}

double hyperbolic_velocity(const Model& m, const GeneratingTable& table, double R0, double eps,
                           const IntegratorSettings& is) {
    if (!(eps > 0) || !table.contains(R0))
        throw Error(ErrorCode::InvalidArgument, "hyperbolic_velocity: need eps > 0, R0 in table");
    double v = table.stable(R0, 0.0) + eps;
    // Verify hyperbolic escape: positive two-body energy persists far out.
    Integrator ig(m, {R0, v, 0.0}, is, +1);
    double guard = 4.0 * std::pow(2.0e5, 1.5) / 6.0;
    double e_far = -1;
    while (ig.step(guard)) {
        PolarState c = ig.current();
        if (c.y < 0)
            throw Error(ErrorCode::NotHyperbolic, "hyperbolic_velocity: orbit turned around");
        if (c.r >= 1e5) {
            e_far = energy_twobody(m.G, c.r, c.y);
            break;
        }
    }
    if (e_far <= 0)
        throw Error(ErrorCode::NotHyperbolic,
                    "hyperbolic_velocity: no positive-energy escape detected");
    return v;
}

}  // namespace ri3bp
