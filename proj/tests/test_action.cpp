#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ri3bp/action.hpp"

using namespace ri3bp;

namespace {
double bump(double s) { return std::abs(s) < 1 ? (1 - s * s) * (1 - s * s) : 0.0; }

double inner_h(const DiscretizedPath& g, const DiscretizedPath& psi) {
    double acc = 0;
    for (int i = 0; i < g.nodes(); ++i) {
        double w = (i == 0 || i == g.nodes() - 1) ? 0.5 * g.h : g.h;
        acc += w * g.phi[i] * psi.phi[i];
    }
    return acc;
}
}  // namespace

TEST_CASE("2BP reference parabola is the trivial critical point") {
    Model m{.G = 1.0, .twobody = true};
    auto z = make_path(30.0, 0.05, 1.0, [](double) { return 0.0; });
    auto r = action_value(m, z);
    CHECK(std::abs(r.A_G) <= 1e-9);
    CHECK(r.grad_norm <= 1e-12);
    CHECK(std::abs(reduced_action(m, z)) <= 1e-12);
    auto g = reduced_gradient(m, z);
    for (double v : g.phi) CHECK(std::abs(v) <= 1e-12);
    // Moving only the end node keeps the reduced action stationary.
    auto ze = z;
    ze.phi.back() = 1e-3;
    CHECK(std::abs(reduced_action(m, ze)) <= 1e-4);
}

TEST_CASE("A_G = A - G^2 B and monotonicity in G^2") {
    Model m1{.G = 1.3};
    Model m2{.G = 2.0};
    auto p = make_path(30.0, 0.05, 1.0, bump);
    auto r1 = action_value(m1, p);
    auto r2 = action_value(m2, p);
    CHECK(r1.A == r2.A);  // the split is G-independent
    CHECK(r1.B == r2.B);
    CHECK(r1.B > 0);
    CHECK(std::abs(r1.A - m1.G * m1.G * r1.B - r1.A_G) <= 1e-12 * std::abs(r1.A_G));
    CHECK(r1.A_G - r2.A_G == doctest::Approx((m2.G * m2.G - m1.G * m1.G) * r1.B).epsilon(1e-12));
    CHECK(r1.A_G > r2.A_G);
}

TEST_CASE("quadrature convergence and frozen bump baseline") {
    Model m{.G = 1.0};
    auto p1 = make_path(30.0, 0.05, 1.0, bump);
    auto p2 = make_path(30.0, 0.025, 1.0, bump);
    auto p4 = make_path(30.0, 0.0125, 1.0, bump);
    double a1 = action_value(m, p1).A_G;
    double a2 = action_value(m, p2).A_G;
    double a4 = action_value(m, p4).A_G;
    double ratio = (a1 - a2) / (a2 - a4);
    CHECK(ratio >= 3.6);
    CHECK(ratio <= 4.4);
    // Richardson-extrapolated oracle at h = 0.0025 froze -0.744490925.
    auto q1 = make_path(30.0, 0.01, 1.0, bump);
    auto q2 = make_path(30.0, 0.005, 1.0, bump);
    double b1 = action_value(m, q1).A_G;
    double b2 = action_value(m, q2).A_G;
    CHECK(b2 + (b2 - b1) / 3 == doctest::Approx(-0.744490925).epsilon(3e-6));
}

TEST_CASE("gradient matches central finite differences") {
    Model m{.G = 1.0};
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> d(-0.3, 0.3);
    for (int pi = 0; pi < 5; ++pi) {
        auto p = make_path(20.0, 0.1, 1.0,
                           [&](double s) { return d(rng) * std::exp(-0.05 * s * s); });
        auto g = action_gradient(m, p);
        for (int k = 0; k < 20; ++k) {
            auto psi = make_path(20.0, 0.1, 1.0,
                                 [&](double s) { return d(rng) * std::exp(-0.03 * s * s); });
            double dir = inner_h(g, psi);
            double eps = 1e-6;
            auto pp = p, pm = p;
            for (int i = 0; i < p.nodes(); ++i) {
                pp.phi[i] += eps * psi.phi[i];
                pm.phi[i] -= eps * psi.phi[i];
            }
            double fd = (action_value(m, pp).A_G - action_value(m, pm).A_G) / (2 * eps);
            CHECK(std::abs(fd - dir) <= 1e-6 * std::max(1.0, std::abs(dir)));
        }
    }
}

TEST_CASE("reduced action with a table agrees with the S0 surrogate in 2BP") {
    Model m{.G = 1.0, .twobody = true};
    TableSpec spec{.r_min = 10, .r_max = 200, .nr = 25, .nt = 4};
    auto tab = build_table(m, spec);
    auto p = make_path(25.0, 0.05, 1.0, [](double s) { return 0.2 * std::exp(-0.05 * s * s); });
    double with_tab = reduced_action(m, p, &tab);
    double with_s0 = reduced_action(m, p, nullptr);
    CHECK(with_tab == doctest::Approx(with_s0).epsilon(1e-6));
    auto g1 = reduced_gradient(m, p, &tab);
    auto g2 = reduced_gradient(m, p, nullptr);
    CHECK(std::abs(g1.phi.front() - g2.phi.front()) <= 1e-4);
    CHECK(std::abs(g1.phi.back() - g2.phi.back()) <= 1e-4);
    // Out-of-table boundary radius raises.
    auto big = make_path(4.0, 0.05, 1.0, [](double) { return 0.0; });
    CHECK_THROWS_AS(reduced_action(m, big, &tab), Error);
}

TEST_CASE("translation invariance and barycenter identities") {
    Model m{.G = 1.0, .twobody = true};
    auto p = make_path(40.0, 0.05, 1.0, [](double s) { return 0.5 * std::exp(-0.1 * s * s); });
    auto p0 = translate(p, 0.0);
    CHECK(p0.phi == p.phi);
    auto pt = translate(p, 1.0);
    CHECK(pt.S == doctest::Approx(39.0));
    CHECK(pt.tail_shift == doctest::Approx(1.0));
    auto r0 = action_value(m, p);
    auto r1 = action_value(m, pt);
    double quad = std::max(r0.quad_error, r1.quad_error);
    CHECK(std::abs(r1.A_G - r0.A_G) <= 10 * quad);
    // Barycenter: even path -> 0; shift identity to 1e-8.
    CHECK(std::abs(barycenter(p)) <= 1e-10);
    CHECK(barycenter(pt) == doctest::Approx(barycenter(p) - 1.0).epsilon(1e-8));
    auto pm = translate(p, -2.0);
    CHECK(barycenter(pm) == doctest::Approx(barycenter(p) + 2.0).epsilon(1e-8));
    CHECK_THROWS_AS(translate(p, 0.0301), Error);  // not a grid multiple
}

TEST_CASE("barycenter is Lipschitz on nearby bounded paths") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> amp(-0.3, 0.9), wid(0.5, 5.0), cen(-8.0, 8.0),
        dd(-0.05, 0.05);
    for (int i = 0; i < 20; ++i) {
        double a = amp(rng), w = wid(rng), c = cen(rng);
        auto p = make_path(20.0, 0.1, 1.0, [&](double s) {
            return a * std::exp(-(s - c) * (s - c) / (w * w));
        });
        auto q = p;
        double sup = 0;
        for (auto& v : q.phi) {
            double e = dd(rng);
            v += e;
            sup = std::max(sup, std::abs(e));
        }
        CHECK(std::abs(barycenter(q) - barycenter(p)) <= 10.0 * sup);
    }
}

TEST_CASE("coercivity-style lower bound on random admissible paths") {
    Model m{.G = 1.0};
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> amp(-0.4, 3.0), wid(0.5, 5.0), cen(-8.0, 8.0);
    ActionSettings as;
    as.window_tol = 1e9;  // bound check only; tails are irrelevant here
    int tested = 0;
    for (int i = 0; i < 1000; ++i) {
        double a1 = amp(rng), w1 = wid(rng), c1 = cen(rng);
        double a2 = amp(rng), w2 = wid(rng), c2 = cen(rng);
        auto p = make_path(20.0, 0.1, 1.0, [&](double s) {
            return a1 * std::exp(-(s - c1) * (s - c1) / (w1 * w1)) +
                   a2 * std::exp(-(s - c2) * (s - c2) / (w2 * w2));
        });
        bool ok = true;
        for (int j = 0; j < p.nodes(); ++j)
            if (parabola_state(p.s_at(j), 1.0).r0 + p.phi[j] <= 0.05) ok = false;
        if (!ok) continue;
        ++tested;
        auto r = action_value(m, p, as);
        double K = 0;
        for (int j = 1; j < p.nodes(); ++j) {
            double d = (p.phi[j] - p.phi[j - 1]) / p.h;
            K += p.h * d * d;
        }
        CHECK(r.A_G >= K / 2 - 6.0 * (1 + std::sqrt(K)));
    }
    CHECK(tested >= 900);
}

TEST_CASE("path validation and serialization") {
    Model m{.G = 1.0};
    auto p = make_path(10.0, 0.1, 1.0, [](double s) { return 0.1 * std::cos(s); });
    auto txt = serialize_path(p);
    auto back = deserialize_path(txt);
    CHECK(back.S == p.S);
    CHECK(back.h == p.h);
    CHECK(back.phi == p.phi);

    auto bad = make_path(10.0, 0.1, 1.0, [](double) { return -3.0; });  // r0 + phi < 0 near 0
    CHECK_THROWS_AS(action_value(m, bad), Error);
    auto small = make_path(5.0, 0.1, 1.0, [](double) { return 0.5; });  // big ends, tiny window
    CHECK_THROWS_AS(action_value(m, small), Error);
}
