#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ri3bp/manifolds.hpp"

using namespace ri3bp;

TEST_CASE("stable slope reduces to dS0/dr without the binary") {
    Model m{.G = 1.0, .twobody = true};
    for (double r : {10.0, 50.0, 200.0, 900.0}) {
        double s = stable_slope(m, r, 0.0);
        CHECK(s == doctest::Approx(s0_slope(r, 1.0)).epsilon(1e-10));
    }
    // G-dependence
    Model mg{.G = 1.7, .twobody = true};
    CHECK(stable_slope(mg, 30.0, 1.0) == doctest::Approx(s0_slope(30.0, 1.7)).epsilon(1e-10));
    CHECK_THROWS_AS(stable_slope(mg, 1.0, 0.0), Error);  // below G^2/2
}

TEST_CASE("slope correction decays like r^{-5/2}") {
    Model m{.G = 1.0};
    double t = 0.7;
    std::vector<double> lr, ld;
    for (double r : {40.0, 80.0, 160.0, 320.0}) {
        double d = stable_slope(m, r, t) - s0_slope(r, 1.0);
        CHECK(d < 0);
        lr.push_back(std::log(r));
        ld.push_back(std::log(-d));
    }
    // least-squares slope of log|d| vs log r
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lr.size(); ++i) { mx += lr[i]; my += ld[i]; }
    mx /= lr.size(); my /= ld.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < lr.size(); ++i) {
        num += (lr[i] - mx) * (ld[i] - my);
        den += (lr[i] - mx) * (lr[i] - mx);
    }
    double expo = num / den;
    CHECK(expo == doctest::Approx(-2.5).epsilon(0.04));
}

TEST_CASE("reversibility: unstable slope equals -stable(r, -t)") {
    Model m{.G = 1.0};
    for (auto [r, t] : {std::pair{25.0, 0.9}, {60.0, 2.4}, {150.0, 5.0}}) {
        double sp = stable_slope(m, r, -t);
        double su = unstable_slope_direct(m, r, t);
        CHECK(su == doctest::Approx(-sp).epsilon(1e-8));
    }
}

TEST_CASE("2BP table: slope and antiderivative match the closed forms") {
    Model m{.G = 1.0, .twobody = true};
    TableSpec spec{.r_min = 10, .r_max = 200, .nr = 25, .nt = 4};
    auto tab = build_table(m, spec);
    CHECK(tab.cross_validation_error() <= 1e-6);
    for (int i = 0; i <= 40; ++i) {
        double r = 10.5 * std::pow(195.0 / 10.5, i / 40.0);
        double t = 0.37 * i;
        CHECK(std::abs(tab.stable(r, t) - s0_slope(r, 1.0)) <= 1e-7);
        CHECK(std::abs(tab.s_plus(r, t) - s0_generating(r, 1.0).value) <= 1e-7);
        // exact identities
        CHECK(tab.unstable(r, t) == -tab.stable(r, -t));
        CHECK(tab.s_minus(r, t) == -tab.s_plus(r, -t));
    }
    CHECK_THROWS_AS(tab.stable(5.0, 0.0), Error);
    CHECK_THROWS_AS(tab.s_plus(1e4, 0.0), Error);
}

TEST_CASE("2BP splitting function vanishes identically") {
    Model m{.G = 1.0, .twobody = true};
    TableSpec spec{.r_min = 10, .r_max = 200, .nr = 25, .nt = 4};
    auto tab = build_table(m, spec);
    SplittingSettings ss;
    ss.n_launches = 40;
    auto cur = splitting_curve(m, tab, 20.0, 25.0, 20, ss);
    int returned = 0;
    for (const auto& s : cur.samples) {
        if (!s.returned) continue;
        ++returned;
        CHECK(std::abs(s.delta) <= 1e-8);
    }
    CHECK(returned >= 30);
}

TEST_CASE("full-model table: interpolant, reversibility, serialization") {
    Model m{.G = 1.0};
    TableSpec spec{.r_min = 12, .r_max = 150, .nr = 14, .nt = 6};
    auto tab = build_table(m, spec);
    CHECK(tab.cross_validation_error() <= 1e-5);

    // Node reproduction: the interpolant passes through the computed values.
    const auto& rg = tab.r_grid();
    for (int j = 0; j < tab.nt(); ++j) {
        double tj = 2 * M_PI * j / tab.nt();
        CHECK(tab.stable(rg[5], tj) == doctest::Approx(tab.node_value(5, j)).epsilon(1e-12));
    }

    // Off-grid agreement with a direct shot.
    for (auto [r, t] : {std::pair{19.3, 0.9}, {57.0, 2.3}, {110.0, 5.1}}) {
        CHECK(tab.stable(r, t) == doctest::Approx(stable_slope(m, r, t)).epsilon(5e-7));
    }
    // Table unstable side vs an independent backward shot.
    CHECK(tab.unstable(57.0, 1.1) ==
          doctest::Approx(unstable_slope_direct(m, 57.0, 1.1)).epsilon(5e-7));

    // Round-trip is byte-stable and value-exact.
    auto txt = tab.serialize();
    auto back = GeneratingTable::deserialize(txt);
    CHECK(back.serialize() == txt);
    CHECK(back.stable(57.0, 2.3) == tab.stable(57.0, 2.3));
    CHECK(back.s_plus(33.0, 0.4) == tab.s_plus(33.0, 0.4));
}
