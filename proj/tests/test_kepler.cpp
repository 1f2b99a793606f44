#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ri3bp/kepler.hpp"

using namespace ri3bp;

namespace {
// Independent slow oracle: plain bisection on u - sin u = t over [0, 2pi].
double kepler_bisect_oracle(double t) {
    double lo = 0.0, hi = 6.2831853071795865;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (mid - std::sin(mid) - t > 0) hi = mid; else lo = mid;
    }
    return 0.5 * (lo + hi);
}
}  // namespace

TEST_CASE("solve_kepler fixed points and oracle value") {
    CHECK(solve_kepler(0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(solve_kepler(M_PI) == doctest::Approx(M_PI).epsilon(1e-15));
    double u1 = solve_kepler(1.0);
    CHECK(u1 == doctest::Approx(kepler_bisect_oracle(1.0)).epsilon(1e-13));
    // Frozen regression baseline (bisection oracle to 1e-14).
    CHECK(u1 == doctest::Approx(1.9345632107520243).epsilon(1e-14));
}

TEST_CASE("kepler residual over 1e4 random times") {
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> dist(-100.0, 100.0);
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
        double t = dist(rng);
        double u = solve_kepler(t);
        worst = std::max(worst, std::abs(u - std::sin(u) - t));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("solve_kepler monotone and periodic structure") {
    double prev = solve_kepler(-50.0);
    for (int i = 1; i <= 2000; ++i) {
        double t = -50.0 + 0.05 * i;
        double u = solve_kepler(t);
        CHECK(u > prev);
        prev = u;
    }
    // u(t + 2pi) = u(t) + 2pi
    double twopi = 2 * M_PI;
    CHECK(solve_kepler(1.0 + twopi) == doctest::Approx(solve_kepler(1.0) + twopi).epsilon(1e-13));
}

TEST_CASE("rho values, range, evenness, periodicity") {
    CHECK(rho_of_time(0.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(rho_of_time(M_PI) == doctest::Approx(1.0).epsilon(1e-13));
    double u1 = kepler_bisect_oracle(1.0);
    CHECK(rho_of_time(1.0) == doctest::Approx(0.5 * (1 - std::cos(u1))).epsilon(1e-12));
    CHECK(rho_of_time(1.0) == doctest::Approx(0.6775).epsilon(1e-3));
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-30.0, 30.0);
    for (int i = 0; i < 300; ++i) {
        double t = dist(rng);
        double v = rho_of_time(t);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(rho_of_time(-t) == doctest::Approx(v).epsilon(1e-12));
        CHECK(rho_of_time(t + 2 * M_PI) == doctest::Approx(v).epsilon(1e-12));
    }
}

TEST_CASE("parabola_tau cubic relation and branches") {
    CHECK(parabola_tau(0.0, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(parabola_tau(2.0 / 3.0, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
    // Asymptotic branch
    double tau = parabola_tau(1e4, 1.0);
    CHECK(tau == doctest::Approx(std::cbrt(6e4)).epsilon(1e-3));
    // Residual of the cubic across both branches, including the switch point
    for (double u : {1e-6, 0.01, 0.2, 1.0 / 3.0 - 1e-9, 1.0 / 3.0 + 1e-9, 0.5, 3.0, 1e3, 1e8}) {
        for (double s : {1.0, -1.0}) {
            double tt = parabola_tau(s * u, 1.0);
            double res = 0.5 * (tt + tt * tt * tt / 3.0) - s * u;
            CHECK(std::abs(res) <= 1e-9 * (1.0 + std::abs(s * u)));
            CHECK(parabola_tau(-s * u, 1.0) == doctest::Approx(-tt).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(parabola_tau(1.0, 0.0), Error);
}

TEST_CASE("parabola_state examples and invariants") {
    auto p0 = parabola_state(0.0, 1.0);
    CHECK(p0.r0 == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p0.r0_dot == doctest::Approx(0.0).epsilon(1e-15));
    auto p1 = parabola_state(2.0 / 3.0, 1.0);
    CHECK(p1.r0 == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(p1.r0_dot == doctest::Approx(1.0).epsilon(1e-13));
    auto pa = parabola_state(1e4, 1.0);
    CHECK(pa.r0 == doctest::Approx(0.5 + 0.5 * std::pow(6e4, 2.0 / 3.0)).epsilon(0.01));

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> du(-1e4, 1e4);
    for (double G : {0.5, 1.0, 2.0}) {
        for (int i = 0; i < 500; ++i) {
            double u = du(rng);
            auto p = parabola_state(u, G);
            CHECK(p.r0 >= 0.5 * G * G - 1e-12);
            double E = 0.5 * p.r0_dot * p.r0_dot + 0.5 * G * G / (p.r0 * p.r0) - 1.0 / p.r0;
            CHECK(std::abs(E) <= 1e-10);
            CHECK(p.r0_ddot ==
                  doctest::Approx(G * G / std::pow(p.r0, 3) - 1.0 / (p.r0 * p.r0)).epsilon(1e-12));
            auto pm = parabola_state(-u, G);
            CHECK(pm.r0 == doctest::Approx(p.r0).epsilon(1e-12));
            CHECK(pm.r0_dot == doctest::Approx(-p.r0_dot).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(parabola_state(1.0, 0.0), Error);
}

TEST_CASE("parabola radius depends on G through G^2 boundedly") {
    // |r0(u;G) - r0(u;G*)| stays O(|G^2 - G*^2|) out to u = 1e6.
    for (auto [G, Gs] : {std::pair{1.0, 1.2}, std::pair{0.7, 0.9}, std::pair{2.0, 2.05}}) {
        double cap = 0;
        for (double u = 0; u <= 1e6; u = (u == 0 ? 0.1 : u * 1.7)) {
            double d = std::abs(parabola_state(u, G).r0 - parabola_state(u, Gs).r0);
            cap = std::max(cap, d);
        }
        CHECK(cap <= 2.0 * std::abs(G * G - Gs * Gs));
    }
}

TEST_CASE("parabola satisfies the 2BP equation of motion (u is time)") {
    // Central second difference of r0 on a time grid vs. the reported r0_ddot.
    double h = 1e-3;
    for (double u : {-40.0, -2.0, -0.3, 0.0, 0.5, 7.0, 300.0}) {
        auto pm = parabola_state(u - h, 1.3);
        auto p0 = parabola_state(u, 1.3);
        auto pp = parabola_state(u + h, 1.3);
        double dd = (pp.r0 - 2 * p0.r0 + pm.r0) / (h * h);
        CHECK(dd == doctest::Approx(p0.r0_ddot).epsilon(1e-6));
        double d1 = (pp.r0 - pm.r0) / (2 * h);
        CHECK(d1 == doctest::Approx(p0.r0_dot).epsilon(1e-6));
    }
}

TEST_CASE("s0 generating function") {
    auto lim = s0_generating(0.5, 1.0);
    CHECK(lim.value == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(lim.slope == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(s0_generating(1.0, 1.0).slope == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s0_generating(100.0, 1.0).slope == doctest::Approx(std::sqrt(0.02 - 0.0001)).epsilon(1e-14));
    CHECK_THROWS_AS(s0_generating(0.49, 1.0), Error);

    // Hamilton-Jacobi residual and FD consistency on a log grid.
    for (double G : {0.5, 1.0, 2.0}) {
        double rlo = 0.5 * G * G + 0.01;
        for (int i = 0; i <= 60; ++i) {
            double r = rlo * std::pow(1e4 / rlo, i / 60.0);
            auto v = s0_generating(r, G);
            double hj = 0.5 * v.slope * v.slope + 0.5 * G * G / (r * r) - 1.0 / r;
            CHECK(std::abs(hj) <= 1e-12);
            double h = 1e-4 * r;
            if (r - 2 * h > 0.5 * G * G) {
                // 4th-order central stencil
                double fd = (8 * (s0_generating(r + h, G).value - s0_generating(r - h, G).value) -
                             (s0_generating(r + 2 * h, G).value - s0_generating(r - 2 * h, G).value)) /
                            (12 * h);
                CHECK(fd == doctest::Approx(v.slope).epsilon(1e-8));
            }
        }
    }
    // G = 0 limit
    CHECK(s0_generating(2.0, 0.0).value == doctest::Approx(4.0).epsilon(1e-14));
}
