#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dyad/dyadic.hpp"

using namespace dyad;

TEST_CASE("gamma formula") {
    CHECK(gamma_of(1.0, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    CHECK(gamma_of(1.0, 2) == doctest::Approx(1.0 / 10.0).epsilon(1e-15));
    CHECK(gamma_of(0.5, 1) == doctest::Approx(1.0 / 10.0).epsilon(1e-15));
    CHECK_THROWS_AS(gamma_of(0.0, 1), std::domain_error);
    CHECK_THROWS_AS(gamma_of(1.5, 1), std::domain_error);
}

TEST_CASE("children bisect and tile") {
    DyadicGrid g = standard_grid(1, 0, 4);
    DyadicCube unit{0, {0, 0}, 1};
    auto ch = g.children(unit);
    REQUIRE(ch.size() == 2);
    CHECK(ch[0].corner[0] == 0);
    CHECK(ch[1].corner[0] == 8);
    CHECK(cube_volume(ch[0]) + cube_volume(ch[1]) == doctest::Approx(cube_volume(unit)));

    DyadicGrid g2 = standard_grid(2, 0, 4);
    auto quads = g2.children(DyadicCube{0, {0, 0}, 2});
    REQUIRE(quads.size() == 4);
    double vol = 0;
    for (auto& q : quads) vol += cube_volume(q);
    CHECK(vol == doctest::Approx(1.0));
}

TEST_CASE("ancestor basics") {
    DyadicGrid g = standard_grid(1, 0, 4);
    // [1/2, 3/4) at L=4 has corner 8, level 2
    DyadicCube q{2, {8, 0}, 1};
    DyadicCube a = g.ancestor(q, 1);
    CHECK(a.level == 1);
    CHECK(a.corner[0] == 8); // [1/2, 1)
    CHECK(g.ancestor(q, 0) == q);
    CHECK_THROWS_AS(g.ancestor(q, 3), std::out_of_range);
    DyadicCube finest{4, {3, 0}, 1};
    CHECK_THROWS_AS(g.children(finest), std::out_of_range);
    for (auto& c : g.children(q)) CHECK(g.ancestor(c, 1) == q);
}

TEST_CASE("nesting holds in random shifted grids") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        DyadicGrid g = sample_grid(seed, 0, 6, 1);
        for (int lev = 0; lev < 6; ++lev) {
            auto cubes = g.cubes_at_level(lev, {0, 0}, {64, 1});
            for (const auto& q : cubes) {
                auto ch = g.children(q);
                int64_t w = g.cells_per_axis(q.level + 1);
                CHECK(ch[0].corner[0] == q.corner[0]);
                CHECK(ch[1].corner[0] == q.corner[0] + w);
                for (const auto& c : ch) {
                    CHECK(g.contains(q, c));
                    CHECK(g.parent(c) == q);
                }
            }
        }
    }
}

TEST_CASE("sample_grid determinism and omega statistics") {
    DyadicGrid a = sample_grid(42, 0, 10, 1);
    DyadicGrid b = sample_grid(42, 0, 10, 1);
    CHECK(a.omega == b.omega);
    DyadicGrid zero = standard_grid(1, 0, 10);
    for (int k = 0; k <= 9; ++k) CHECK(zero.shift_cells(k, 0) == 0);

    // empirical mean of omega components ~ 1/2 within 3 binomial sigma
    int64_t ones = 0, total = 0;
    for (uint64_t s = 0; s < 10000; ++s) {
        DyadicGrid g = sample_grid(s * 7919 + 13, 0, 4, 1);
        for (auto w : g.omega) {
            ones += w & 1;
            ++total;
        }
    }
    double mean = double(ones) / double(total);
    double sigma = 0.5 / std::sqrt(double(total));
    CHECK(std::abs(mean - 0.5) <= 3.0 * sigma);
}

TEST_CASE("goodness: boundary-abutting cube is bad, narrow range is good") {
    GoodnessParams p = goodness_params(1.0, 1, 2);
    DyadicGrid g = standard_grid(1, 0, 8);
    // cube abutting the boundary of its 4-fold ancestor: d = 0 <= threshold
    DyadicCube bad{4, {0, 0}, 1};
    CHECK_FALSE(g.is_good(bad, p));
    // no J with l(J) >= 2^r l(I) exists -> vacuously good
    GoodnessParams pr = goodness_params(1.0, 1, 10);
    CHECK(g.is_good(bad, pr));
}

TEST_CASE("goodness: central cube matches brute force over lattice planes") {
    GoodnessParams p = goodness_params(1.0, 1, 2);
    DyadicGrid g = standard_grid(1, 0, 8);
    // brute force: a level-5 cube is good iff every coarser level j <= 3 has
    // boundary gap > l(I)^g l(J)^{1-g}
    for (const auto& q : g.cubes_at_level(5, {0, 0}, {256, 1})) {
        bool good = true;
        for (int j = 0; j <= q.level - p.r; ++j) {
            int64_t wj = g.cells_per_axis(j);
            int64_t wq = g.cells_per_axis(q.level);
            int64_t base = (q.corner[0] / wj) * wj;
            int64_t gap = std::min(q.corner[0] - base, base + wj - q.corner[0] - wq);
            double thr = std::pow(cube_sidelength(q), p.gamma) *
                         std::pow(std::ldexp(1.0, -j), 1.0 - p.gamma);
            if (double(gap) * std::ldexp(1.0, -8) <= thr) good = false;
        }
        CHECK(g.is_good(q, p) == good);
    }
}

TEST_CASE("goodness locality: depends only on coarse omega components") {
    GoodnessParams p = goodness_params(1.0, 1, 2);
    for (uint64_t seed = 0; seed < 40; ++seed) {
        DyadicGrid g = sample_grid(seed, 0, 8, 1);
        DyadicCube q;
        q.level = 5;
        q.dim = 1;
        q.corner[0] = g.shift_cells(5, 0); // reference cube [0,2^-5) + omega
        bool base = g.is_good(q, p);
        // mutating fine components (levels > 5) must not change goodness,
        // but it moves the cube with the grid
        DyadicGrid g2 = g;
        for (int i = 6; i <= 8; ++i) g2.omega[size_t(i - 1)] ^= 1;
        DyadicCube q2 = q;
        q2.corner[0] = g2.shift_cells(5, 0);
        CHECK(g2.is_good(q2, p) == base);
        // position locality: the point set depends only on fine components
        DyadicGrid g3 = g;
        for (int i = 1; i <= 5; ++i) g3.omega[size_t(i - 1)] ^= 1;
        CHECK(g3.shift_cells(5, 0) == g.shift_cells(5, 0));
    }
}

TEST_CASE("pi_good: feasibility threshold, gamma monotonicity, vacuous regime") {
    // With gamma = 1/6 the badness threshold l(I)^g l(J)^{1-g} = l(J) 2^{-m/6}
    // (m the scale gap) exceeds the largest achievable boundary gap ~ l(J)/2
    // whenever 2^{m/6} < 2, i.e. m <= 6. So r = 4 leaves no good cube at any
    // level where the condition is active: pi_good is exactly zero there.
    GoodnessParams p = goodness_params(1.0, 1, 4);
    PiGoodEstimate e = estimate_pi_good(p, 6, 500, 7, 0, 10, 1);
    CHECK(e.estimate == 0.0);
    CHECK(exact_pi_good(6, 0, 10, 1, p) == 0.0);

    // the first feasible r is 7, at base levels close to r (deeper windows
    // stack near-boundary constraints across scales and kill the good set)
    GoodnessParams p7 = goodness_params(1.0, 1, 7);
    double exact7 = exact_pi_good(7, 0, 10, 1, p7);
    CHECK(exact7 == doctest::Approx(0.09375).epsilon(1e-12));
    PiGoodEstimate e7 = estimate_pi_good(p7, 7, 2000, 7, 0, 10, 1);
    CHECK(e7.estimate > 0.0);
    CHECK(std::abs(e7.estimate - exact7) <= 3.0 * e7.std_error + 1e-9);

    // larger gamma lowers the threshold l(I)^g l(J)^{1-g} (since l(I) < l(J)),
    // so goodness can only improve on identical seeds
    GoodnessParams lo = p7, hi = p7;
    lo.gamma = 0.05;
    hi.gamma = 0.3;
    PiGoodEstimate elo = estimate_pi_good(lo, 8, 1500, 99, 0, 10, 1);
    PiGoodEstimate ehi = estimate_pi_good(hi, 8, 1500, 99, 0, 10, 1);
    CHECK(ehi.estimate >= elo.estimate);

    // r beyond the range: everything is good
    GoodnessParams pr = goodness_params(1.0, 1, 20);
    PiGoodEstimate e1 = estimate_pi_good(pr, 6, 200, 3, 0, 10, 1);
    CHECK(e1.estimate == 1.0);
}

TEST_CASE("pi_good: base-level independence within 3 sigma") {
    GoodnessParams p = goodness_params(1.0, 1, 7);
    // shifting the whole window with the base level keeps the geometry
    PiGoodEstimate a = estimate_pi_good(p, 7, 2000, 17, 0, 10, 1);
    PiGoodEstimate b = estimate_pi_good(p, 8, 2000, 91, 1, 11, 1);
    double sigma = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
    CHECK(std::abs(a.estimate - b.estimate) <= 3.0 * sigma);

    // exact enumeration agrees with Monte Carlo within 3 sigma
    double exact = exact_pi_good(7, 0, 10, 1, p);
    CHECK(std::abs(a.estimate - exact) <= 3.0 * a.std_error + 1e-9);
}

TEST_CASE("grid serialization round-trip") {
    DyadicGrid g = sample_grid(5, 0, 10, 1);
    DyadicGrid back = DyadicGrid::from_json(g.to_json());
    CHECK(back.omega == g.omega);
    CHECK(back.L == g.L);
    DyadicCube q{3, {16, 0}, 1};
    DyadicCube qb = cube_from_json(cube_to_json(q));
    CHECK(qb == q);
}

TEST_CASE("two-dimensional grids: goodness and sampling") {
    DyadicGrid g = sample_grid(11, 0, 5, 2);
    GoodnessParams p = goodness_params(1.0, 2, 2); // gamma = 1/10
    CHECK(p.gamma == doctest::Approx(0.1));
    auto cubes = g.cubes_at_level(3, {0, 0}, {32, 32});
    CHECK(cubes.size() >= 64);
    int good = 0;
    for (const auto& q : cubes)
        if (g.is_good(q, p)) ++good;
    // vacuously good below the active range, exact zero fraction otherwise is
    // also fine; only sanity of the classification is checked here
    CHECK(good >= 0);
    for (const auto& q : cubes) {
        auto ch = g.children(q);
        REQUIRE(ch.size() == 4);
        double vol = 0.0;
        for (const auto& c : ch) vol += cube_volume(c);
        CHECK(vol == doctest::Approx(cube_volume(q)));
    }
}
