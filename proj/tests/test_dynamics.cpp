#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ri3bp/dynamics.hpp"

using namespace ri3bp;

TEST_CASE("vector_field examples") {
    Model m2{.G = 1.0, .twobody = true};
    auto d = vector_field(m2, {1.0, 0.0, 0.0});
    CHECK(d.dy == doctest::Approx(0.0).epsilon(1e-15));  // circular balance
    CHECK(d.dr == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(d.dt == 1.0);

    Model mf{.G = 0.0};
    auto dpi = vector_field(mf, {1.0, 0.3, M_PI});  // rho(pi) = 1
    CHECK(dpi.dr == doctest::Approx(0.3));
    CHECK(dpi.dy == doctest::Approx(-1.0 / std::pow(2.0, 1.5)).epsilon(1e-12));
}

TEST_CASE("energy examples") {
    Model m{.G = 1.0};
    CHECK(std::abs(energy(m, {1e8, 0.0, 0.3})) <= 2e-8);
    Model m2{.G = 1.3, .twobody = true};
    for (double u : {-200.0, -1.0, 0.0, 2.5, 1e3}) {
        auto p = parabola_state(u, 1.3);
        CHECK(std::abs(energy(m2, {p.r0, p.r0_dot, u})) <= 1e-10);
    }
}

TEST_CASE("McGehee round-trip") {
    std::mt19937_64 rng(4321);
    std::uniform_real_distribution<double> lr(-2.0, 8.0), dy(-2.0, 2.0), dt(-50.0, 50.0);
    for (int i = 0; i < 10000; ++i) {
        PolarState s{std::exp(lr(rng)), dy(rng), dt(rng)};
        PolarState b = to_polar(to_mcgehee(s));
        CHECK(b.r == doctest::Approx(s.r).epsilon(1e-14));
        CHECK(b.y == s.y);
        CHECK(b.t == s.t);
    }
    // Straightened diagnostics: on the 2BP parabola y ~ x at large r, so q ~ 0.
    auto p = parabola_state(1e6, 1.0);
    auto st = to_straightened({p.r0, p.r0_dot, 0.0});
    CHECK(std::abs(st.q) <= 1e-4);
    CHECK(st.p == doctest::Approx(std::sqrt(2.0 / p.r0)).epsilon(1e-3));
}

TEST_CASE("integrate: circular equilibrium of the reduced system") {
    Model m{.G = 1.0, .twobody = true};
    IntegratorSettings st{.tol = 1e-12};
    auto traj = integrate(m, {1.0, 0.0, 0.0}, 100.0, st);
    for (const auto& s : traj.samples) CHECK(std::abs(s.r - 1.0) <= 1e-9);
}

TEST_CASE("integrate: parabola matches the closed form") {
    Model m{.G = 1.0, .twobody = true};
    IntegratorSettings st{.tol = 1e-12};
    double u0 = -50.0;
    auto p0 = parabola_state(u0, 1.0);
    auto traj = integrate(m, {p0.r0, p0.r0_dot, u0}, 100.0, st);
    for (const auto& s : traj.samples) {
        auto pc = parabola_state(u0 + s.s, 1.0);
        CHECK(std::abs(s.r - pc.r0) / pc.r0 <= 1e-8);
        CHECK(std::abs(s.y - pc.r0_dot) <= 1e-8);
    }
}

TEST_CASE("integrate: 2BP energy drift over horizon 1e4") {
    Model m{.G = 1.0, .twobody = true};
    IntegratorSettings st{.tol = 1e-10};
    auto traj = integrate(m, {1.0, 0.3, 0.0}, 1e4, st);
    CHECK(traj.stats.max_energy_drift <= 1e-7);
}

TEST_CASE("integrate: chart switch far excursion is consistent") {
    // Climb well past the switch radius and come back; energy must hold.
    Model m{.G = 1.0, .twobody = true};
    IntegratorSettings st{.tol = 1e-11};
    double y0 = 0.4353;  // E ~ -2.6e-4, apoapsis ~ 3.8e3
    double E0 = energy(m, {10.0, y0, 0.0});
    CHECK(E0 < 0);  // bounded: will return
    auto traj = integrate(m, {10.0, y0, 0.0}, 3e5, st);
    double rmax = 0;
    for (const auto& s : traj.samples) rmax = std::max(rmax, s.r);
    CHECK(rmax > 2e3);  // crossed into the McGehee chart
    CHECK(traj.stats.max_energy_drift <= 1e-8);
}

TEST_CASE("time-reversibility of the full model") {
    Model m{.G = 1.5};
    IntegratorSettings st{.tol = 1e-12};
    PolarState a{3.0, 0.2, 0.7};
    Integrator f(m, a, st);
    while (f.step(40.0)) {}
    PolarState b = f.current();
    // (r, y, t) -> (r, -y, -t) conjugates the flow to its inverse.
    Integrator g(m, {b.r, -b.y, -b.t}, st);
    while (g.step(40.0)) {}
    PolarState c = g.current();
    CHECK(c.r == doctest::Approx(a.r).epsilon(1e-9));
    CHECK(c.y == doctest::Approx(-a.y).epsilon(1e-9));
    CHECK(c.t == doctest::Approx(-a.t).epsilon(1e-12));
}

TEST_CASE("classify: 2BP oracle classes") {
    Model m{.G = 1.0, .twobody = true};
    IntegratorSettings st{.tol = 1e-10};

    // E < 0: bounded
    auto tb = integrate(m, {1.0, 0.3, 0.0}, 2e3, st);
    auto lb = classify(m, tb);
    CHECK(lb.cls == MotionClass::B);

    // E > 0: hyperbolic escape
    auto th = integrate(m, {1.0, 1.6, 0.0}, 2e4, st);
    auto lh = classify(m, th);
    CHECK(lh.cls == MotionClass::H);
    CHECK(lh.conclusive);

    // E = 0 parabola: parabolic escape
    auto pp = parabola_state(0.0, 1.0);
    auto tp = integrate(m, {pp.r0, pp.r0_dot, 0.0}, 5e4, st);
    auto lp = classify(m, tp);
    CHECK(lp.cls == MotionClass::P);

    CHECK_THROWS_AS(classify(m, integrate(m, {1.0, 0.3, 0.0}, 10.0, st)), Error);
}
