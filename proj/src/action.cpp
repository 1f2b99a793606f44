#include "ri3bp/action.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ri3bp {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Node data of the reference parabola and the perturbation rho^2.
struct Ctx {
    double h = 0;
    std::vector<double> s, r0, r0d, r0dd, rho2;
};

Ctx build_ctx(const Model& m, const DiscretizedPath& p, int stride = 1) {
    Ctx c;
    c.h = p.h * stride;
    int n = p.nodes();
    for (int i = 0; i < n; i += stride) {
        double s = p.s_at(i);
        auto ps = parabola_state(s, p.G0);
        c.s.push_back(s);
        c.r0.push_back(ps.r0);
        c.r0d.push_back(ps.r0_dot);
        c.r0dd.push_back(ps.r0_ddot);
        double rho = m.rho(s);
        c.rho2.push_back(rho * rho);
    }
    return c;
}

std::vector<double> node_derivative(const std::vector<double>& f, double h) {
    int N = static_cast<int>(f.size()) - 1;
    std::vector<double> d(N + 1);
    d[0] = (f[1] - f[0]) / h;
    for (int i = 1; i < N; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2 * h);
    d[N] = (f[N] - f[N - 1]) / h;
    return d;
}

struct Parts {
    double A = 0, B = 0, AG = 0;
    double lag_first = 0, lag_last = 0;  // end values of the full integrand
};

// Trapezoid sums of the split integrand: L_ren = a - G^2 b with
// a = phidot^2/2 + (r^2+rho^2)^{-1/2} + V0(r0) - r0'' phi  and  b = 1/(2 r^2).
Parts eval_parts(const Model& m, const Ctx& c, const std::vector<double>& phi, double G0) {
    int N = static_cast<int>(phi.size()) - 1;
    auto pd = node_derivative(phi, c.h);
    Parts out;
    double G2 = m.G * m.G;
    for (int i = 0; i <= N; ++i) {
        double r = c.r0[i] + phi[i];
        if (!(r > 0))
            throw Error(ErrorCode::NonpositiveRadius,
                        "action: r0 + phi <= 0 at s = " + std::to_string(c.s[i]));
        double v0 = 0.5 * G0 * G0 / (c.r0[i] * c.r0[i]) - 1.0 / c.r0[i];
        double a = 0.5 * pd[i] * pd[i] + 1.0 / std::sqrt(r * r + c.rho2[i]) + v0 -
                   c.r0dd[i] * phi[i];
        double b = 0.5 / (r * r);
        double w = (i == 0 || i == N) ? 0.5 * c.h : c.h;
        out.A += w * a;
        out.B += w * b;
        if (i == 0) out.lag_first = a - G2 * b;
        if (i == N) out.lag_last = a - G2 * b;
    }
    out.AG = out.A - G2 * out.B;
    return out;
}

// Time-average of rho(t)^2 over the binary period.
constexpr double kMeanRho2 = 0.625;

// int_S^inf f(s) ds by log-spaced Gauss panels (integrand decays like a
// power; the grand total converges well before the 1e19 cap).
template <typename F>
double tail_integral(double S, F&& f) {
    static const double gx[8] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                 -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                 0.7966664774136267,  0.9602898564975363};
    static const double gw[8] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                 0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                 0.2223810344533745, 0.1012285362903763};
    double acc = 0, a = S;
    while (a < 1e19) {
        double b = a * 1.5;
        double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        for (int g = 0; g < 8; ++g) acc += half * gw[g] * f(mid + half * gx[g]);
        a = b;
    }
    return acc;
}

void check_path(const DiscretizedPath& p) {
    int n = static_cast<int>(std::lround(2.0 * p.S / p.h));
    if (p.nodes() != n + 1 || p.h <= 0)
        throw Error(ErrorCode::InvalidArgument, "path: node count does not match window/step");
}

// Interior part of the discrete gradient (times the trapezoid weights).
std::vector<double> weighted_gradient(const Model& m, const Ctx& c,
                                      const std::vector<double>& phi) {
    int N = static_cast<int>(phi.size()) - 1;
    auto pd = node_derivative(phi, c.h);
    std::vector<double> g(N + 1);
    double G2 = m.G * m.G;
    // Kinetic contributions of the trapezoid/differencing stencil.
    g[0] = -0.5 * (pd[0] + pd[1]);
    for (int j = 1; j < N; ++j) {
        double left = (j == 1) ? pd[0] : pd[j - 1];
        double right = (j == N - 1) ? pd[N] : pd[j + 1];
        g[j] = 0.5 * (left - right);
    }
    g[N] = 0.5 * (pd[N - 1] + pd[N]);
    // Potential contributions.
    for (int j = 0; j <= N; ++j) {
        double r = c.r0[j] + phi[j];
        double vp = -G2 / (r * r * r) + r / std::pow(r * r + c.rho2[j], 1.5);
        double w = (j == 0 || j == N) ? 0.5 * c.h : c.h;
        g[j] += w * (-vp - c.r0dd[j]);
    }
    return g;
}

double grad_norm(const std::vector<double>& g, double h) {
    int N = static_cast<int>(g.size()) - 1;
    double acc = 0;
    for (int i = 0; i <= N; ++i) {
        double w = (i == 0 || i == N) ? 0.5 * h : h;
        acc += w * g[i] * g[i];
    }
    return std::sqrt(acc);
}

}  // namespace

ActionReport action_value(const Model& m, const DiscretizedPath& path, const ActionSettings& as) {
    check_path(path);
    Ctx c = build_ctx(m, path);
    Parts p = eval_parts(m, c, path.phi, path.G0);
    ActionReport rep;
    rep.A = p.A;
    rep.B = p.B;
    // Tail corrections: beyond the window the path continues as the (shifted)
    // parabola, so the integrand reduces to the rho^2 perturbation; its
    // oscillation is replaced by the mean <rho^2> = 5/8.
    double mr2 = m.twobody ? 0.0 : kMeanRho2;
    double G02 = path.G0 * path.G0;
    auto a_tail = [&](double s) {
        auto p0 = parabola_state(s, path.G0);
        auto ps = parabola_state(s + path.tail_shift, path.G0);
        double phi = ps.r0 - p0.r0, phid = ps.r0_dot - p0.r0_dot;
        double v0 = 0.5 * G02 / (p0.r0 * p0.r0) - 1.0 / p0.r0;
        return 0.5 * phid * phid + 1.0 / std::sqrt(ps.r0 * ps.r0 + mr2) + v0 -
               p0.r0_ddot * phi;
    };
    auto b_tail = [&](double s) {
        double r = parabola_state(s + path.tail_shift, path.G0).r0;
        return 0.5 / (r * r);
    };
    rep.A += tail_integral(path.S, [&](double s) { return a_tail(s); }) +
             tail_integral(path.S, [&](double s) { return a_tail(-s); });
    rep.B += tail_integral(path.S, [&](double s) { return b_tail(s); }) +
             tail_integral(path.S, [&](double s) { return b_tail(-s); });
    rep.A_G = rep.A - m.G * m.G * rep.B;
    // Residual estimate: credit for the oscillatory cancellation, plus the
    // unmodeled phi dependence at the window ends (zero when phi ends at 0).
    double r0S = parabola_state(path.S, path.G0).r0;
    double G2 = m.G * m.G;
    auto model_end = [&](int i) {
        auto ps = parabola_state(c.s[i] + path.tail_shift, path.G0);
        double phi = ps.r0 - c.r0[i], phid = ps.r0_dot - c.r0d[i];
        double v0 = 0.5 * G02 / (c.r0[i] * c.r0[i]) - 1.0 / c.r0[i];
        return 0.5 * phid * phid + 1.0 / std::sqrt(ps.r0 * ps.r0 + c.rho2[i]) + v0 -
               c.r0dd[i] * phi - G2 * 0.5 / (ps.r0 * ps.r0);
    };
    int last = path.nodes() - 1;
    rep.tail_estimate = 2.0 * 0.7 / (r0S * r0S * r0S) +
                        3.0 * path.S * 0.5 *
                            (std::abs(p.lag_first - model_end(0)) +
                             std::abs(p.lag_last - model_end(last)));
    if (rep.tail_estimate > as.window_tol)
        throw Error(ErrorCode::WindowTooSmall, "action: tail estimate " +
                                                   std::to_string(rep.tail_estimate) +
                                                   " above tolerance");
    int N = path.nodes() - 1;
    if (N % 2 == 0 && N >= 4) {
        Ctx c2 = build_ctx(m, path, 2);
        std::vector<double> phi2;
        for (int i = 0; i <= N; i += 2) phi2.push_back(path.phi[i]);
        Parts pc = eval_parts(m, c2, phi2, path.G0);
        rep.quad_error = std::abs(p.AG - pc.AG) / 3.0;
    }
    auto wg = weighted_gradient(m, c, path.phi);
    for (int i = 0; i <= N; ++i) wg[i] /= (i == 0 || i == N) ? 0.5 * path.h : path.h;
    rep.grad_norm = grad_norm(wg, path.h);
    return rep;
}

DiscretizedPath action_gradient(const Model& m, const DiscretizedPath& path) {
    check_path(path);
    Ctx c = build_ctx(m, path);
    auto wg = weighted_gradient(m, c, path.phi);
    DiscretizedPath g = path;
    int N = path.nodes() - 1;
    for (int i = 0; i <= N; ++i) g.phi[i] = wg[i] / ((i == 0 || i == N) ? 0.5 * path.h : path.h);
    return g;
}

namespace {

struct BoundaryEval {
    double s_plus, slope_plus;    // at the right end
    double s_minus, slope_minus;  // at the left end
};

BoundaryEval boundary_terms(const Model& m, const GeneratingTable* table, double r_right,
                            double r_left, double n) {
    double tn = std::fmod(n, kTwoPi);
    if (table) {
        return {table->s_plus(r_right, tn), table->stable(r_right, tn),
                table->s_minus(r_left, -tn), table->unstable(r_left, -tn)};
    }
    auto vp = s0_generating(r_right, m.G);
    auto vm = s0_generating(r_left, m.G);
    return {vp.value, vp.slope, -vm.value, -vm.slope};
}

}  // namespace

double reduced_action(const Model& m, const DiscretizedPath& path, const GeneratingTable* table) {
    check_path(path);
    Ctx c = build_ctx(m, path);
    Parts p = eval_parts(m, c, path.phi, path.G0);
    int N = path.nodes() - 1;
    double rr = c.r0[N] + path.phi[N], rl = c.r0[0] + path.phi[0];
    BoundaryEval b = boundary_terms(m, table, rr, rl, path.S);
    double s0r = s0_generating(c.r0[N], m.G).value;
    double s0l = s0_generating(c.r0[0], m.G).value;
    return p.AG - b.s_plus + b.s_minus + s0r + s0l + c.r0d[N] * path.phi[N] -
           c.r0d[0] * path.phi[0];
}

DiscretizedPath reduced_gradient(const Model& m, const DiscretizedPath& path,
                                 const GeneratingTable* table) {
    check_path(path);
    Ctx c = build_ctx(m, path);
    auto wg = weighted_gradient(m, c, path.phi);
    int N = path.nodes() - 1;
    double rr = c.r0[N] + path.phi[N], rl = c.r0[0] + path.phi[0];
    BoundaryEval b = boundary_terms(m, table, rr, rl, path.S);
    wg[N] += -b.slope_plus + c.r0d[N];
    wg[0] += b.slope_minus - c.r0d[0];
    DiscretizedPath g = path;
    for (int i = 0; i <= N; ++i) g.phi[i] = wg[i] / ((i == 0 || i == N) ? 0.5 * path.h : path.h);
    return g;
}

DiscretizedPath translate(const DiscretizedPath& path, double tau) {
    check_path(path);
    double kf = tau / path.h;
    long k = std::lround(kf);
    if (std::abs(kf - k) > 1e-9)
        throw Error(ErrorCode::InvalidArgument, "translate: tau must be a multiple of the step");
    DiscretizedPath out;
    out.h = path.h;
    out.G0 = path.G0;
    out.S = path.S - std::abs(tau);
    out.tail_shift = path.tail_shift + tau;
    if (out.S <= 0) throw Error(ErrorCode::InvalidArgument, "translate: window exhausted");
    int n_new = static_cast<int>(std::lround(2.0 * out.S / out.h));
    int off = k >= 0 ? 2 * static_cast<int>(k) : 0;
    out.phi.resize(n_new + 1);
    for (int i = 0; i <= n_new; ++i) {
        double s = -out.S + i * out.h;
        double dr0 = parabola_state(s + tau, path.G0).r0 - parabola_state(s, path.G0).r0;
        out.phi[i] = path.phi[i + off] + dr0;
    }
    return out;
}

double barycenter(const DiscretizedPath& path) {
    check_path(path);
    int N = path.nodes() - 1;
    double num = 0, den = 0;
    for (int i = 0; i <= N; ++i) {
        double s = path.s_at(i);
        double r = parabola_state(s, path.G0).r0 + path.phi[i];
        double w = 1.0 / ((1 + r * r) * (1 + r * r));
        double q = (i == 0 || i == N) ? 0.5 * path.h : path.h;
        num += q * s * w;
        den += q * w;
    }
    auto wtail = [&](double s) {
        double r = parabola_state(s + path.tail_shift, path.G0).r0;
        return 1.0 / ((1 + r * r) * (1 + r * r));
    };
    num += tail_integral(path.S, [&](double s) { return s * wtail(s); });
    num -= tail_integral(path.S, [&](double s) { return s * wtail(-s); });
    den += tail_integral(path.S, [&](double s) { return wtail(s); });
    den += tail_integral(path.S, [&](double s) { return wtail(-s); });
    if (den <= 0) throw Error(ErrorCode::WindowTooSmall, "barycenter: degenerate weight");
    return num / den;
}

std::string serialize_path(const DiscretizedPath& path) {
    std::ostringstream os;
    os.precision(17);
    os << "{\"kind\":\"path\",\"version\":1,\"S\":" << path.S << ",\"h\":" << path.h
       << ",\"G0\":" << path.G0 << ",\"tail_shift\":" << path.tail_shift
       << ",\"n\":" << path.nodes() << "}\n";
    os << "s,phi\n";
    for (int i = 0; i < path.nodes(); ++i) os << path.s_at(i) << "," << path.phi[i] << "\n";
    return os.str();
}

DiscretizedPath deserialize_path(const std::string& text) {
    std::istringstream is(text);
    std::string header;
    std::getline(is, header);
    auto grab = [&](const std::string& key) -> double {
        auto p = header.find("\"" + key + "\":");
        if (p == std::string::npos)
            throw Error(ErrorCode::InvalidArgument, "path deserialize: missing " + key);
        return std::stod(header.substr(p + key.size() + 3));
    };
    DiscretizedPath out;
    out.S = grab("S");
    out.h = grab("h");
    out.G0 = grab("G0");
    out.tail_shift = grab("tail_shift");
    int n = static_cast<int>(grab("n"));
    std::string line;
    std::getline(is, line);  // column header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        out.phi.push_back(std::stod(line.substr(comma + 1)));
    }
    if (static_cast<int>(out.phi.size()) != n)
        throw Error(ErrorCode::InvalidArgument, "path deserialize: node count mismatch");
    return out;
}

}  // namespace ri3bp
