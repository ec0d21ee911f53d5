#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>

#include "dyad/corpus.hpp"
#include "dyad/mesh.hpp"
#include "dyad/rng.hpp"
#include "dyad/shifts.hpp"

using namespace dyad;

static MeshFunction random_mesh(int n, int L, uint64_t seed) {
    MeshFunction f = MeshFunction::zeros_unit_box(n, L);
    SplitMix64 rng(seed);
    for (auto& v : f.values) v = rng.uniform(-1.0, 1.0);
    return f;
}

TEST_CASE("averages: constants, halves, sampled identity") {
    int L = 10;
    MeshFunction one = MeshFunction::zeros_unit_box(1, L);
    for (auto& v : one.values) v = 1.0;
    DyadicCube Q{1, {0, 0}, 1}; // [0, 1/2)
    CHECK(average(one, Q) == doctest::Approx(1.0).epsilon(1e-14));

    MeshFunction lh = MeshFunction::zeros_unit_box(1, L);
    for (int64_t i = 0; i < lh.extent[0] / 4; ++i) lh.values[size_t(i)] = 1.0; // left half of Q
    CHECK(average(lh, Q) == doctest::Approx(0.5).epsilon(1e-14));

    // x -> x sampled at left endpoints: exact value from the arithmetic sum
    MeshFunction id = sampled_identity(L);
    CHECK(average(id, Q) == doctest::Approx(0.24951171875).epsilon(1e-15));
}

TEST_CASE("haar coefficients: cancellation, orthonormality, identity function") {
    int L = 10;
    MeshFunction c = MeshFunction::zeros_unit_box(1, L);
    for (auto& v : c.values) v = 3.7;
    DyadicCube I{2, {256, 0}, 1};
    CHECK(haar_coeff(c, {I, 1}) == doctest::Approx(0.0).epsilon(1e-14));

    MeshFunction hI = haar_function({I, 1}, L);
    CHECK(haar_coeff(hI, {I, 1}) == doctest::Approx(1.0).epsilon(1e-13));

    // f(x) = x on [0,1), I = [0,1): exact mesh value is -1/4
    MeshFunction id = sampled_identity(L);
    DyadicCube unit{0, {0, 0}, 1};
    CHECK(haar_coeff(id, {unit, 1}) == doctest::Approx(-0.25).epsilon(1e-14));
}

TEST_CASE("martingale differences") {
    int L = 6;
    DyadicCube I{1, {16, 0}, 1};
    MeshFunction c = MeshFunction::zeros_unit_box(1, L);
    for (auto& v : c.values) v = 2.0;
    MeshFunction d = martingale_diff(c, I);
    for (double v : d.values) CHECK(v == 0.0);

    // f = 1_{I'} for the left child: Delta = (1/2)1_{I'} - (1/2)1_{I''}
    MeshFunction f = MeshFunction::zeros_unit_box(1, L);
    for (int64_t i = 16; i < 32; ++i) f.values[size_t(i)] = 1.0;
    MeshFunction d2 = martingale_diff(f, I);
    CHECK(d2.at(16) == doctest::Approx(0.5));
    CHECK(d2.at(32) == doctest::Approx(-0.5));

    // Delta_I f = sum_eta <f,h_I^eta> h_I^eta cellwise on random data
    MeshFunction r = random_mesh(1, L, 99);
    MeshFunction d3 = martingale_diff(r, I);
    double coeff = haar_coeff(r, {I, 1});
    MeshFunction hI = haar_function({I, 1}, L);
    for (int64_t i = 16; i < 48; ++i)
        CHECK(d3.at(i) == doctest::Approx(coeff * hI.at(i)).epsilon(1e-12));
}

TEST_CASE("martingale differences in 2-D sum the three cancellative patterns") {
    int L = 4;
    DyadicCube I{1, {4, 8}, 2};
    MeshFunction r = random_mesh(2, L, 5);
    MeshFunction d = martingale_diff(r, I);
    for (int64_t i0 = 4; i0 < 12; ++i0)
        for (int64_t i1 = 8; i1 < 16; ++i1) {
            double acc = 0.0;
            for (uint8_t eta = 1; eta <= 3; ++eta) {
                MeshFunction he = haar_function({I, eta}, L);
                acc += haar_coeff(r, {I, eta}) * he.at(i0, i1);
            }
            CHECK(d.at(i0, i1) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("projection: finest level identity, constants, tower property") {
    int L = 6;
    DyadicGrid g = sample_grid(3, 0, L, 1);
    MeshFunction r = random_mesh(1, L, 11);
    MeshFunction pL = project_scale(r, g, L);
    for (int64_t i = 0; i < r.extent[0]; ++i) CHECK(pL.at(i) == doctest::Approx(r.at(i)));

    MeshFunction one = MeshFunction::zeros_unit_box(1, L);
    for (auto& v : one.values) v = 1.0;
    MeshFunction p1 = project_scale(one, g, 3);
    DyadicCube probe = g.cube_containing(3, {5, 0});
    CHECK(average(p1, probe) == doctest::Approx(average(one, probe)));

    MeshFunction p3 = project_scale(r, g, 3);
    MeshFunction p2a = project_scale(p3, g, 2);
    MeshFunction p2b = project_scale(r, g, 2);
    for (int64_t i = p2b.origin[0]; i < p2b.origin[0] + p2b.extent[0]; ++i)
        CHECK(p2a.at(i) == doctest::Approx(p2b.at(i)).epsilon(1e-12));
}

TEST_CASE("reconstruction, Parseval, delta projections: exact Haar calculus") {
    int L = 8;
    DyadicGrid g = standard_grid(1, 0, L);
    MeshFunction f = random_mesh(1, L, 21);
    DyadicCube top{0, {0, 0}, 1};

    // f = sum_{I in top} Delta_I f + <f>_top 1_top
    MeshFunction acc = MeshFunction::zeros_unit_box(1, L);
    double avg = average(f, top);
    for (auto& v : acc.values) v = avg;
    for (int lev = 0; lev < L; ++lev)
        for (const auto& I : g.cubes_at_level(lev, {0, 0}, {f.extent[0], 1})) {
            MeshFunction d = martingale_diff(f, I);
            for (int64_t i = d.origin[0]; i < d.origin[0] + d.extent[0]; ++i)
                if (acc.in_box(i, 0)) acc.ref(i) += d.at(i);
        }
    for (int64_t i = 0; i < f.extent[0]; ++i)
        CHECK(acc.at(i) == doctest::Approx(f.at(i)).epsilon(1e-12));

    // Parseval
    double sq = 0.0;
    for (int lev = 0; lev < L; ++lev)
        for (const auto& I : g.cubes_at_level(lev, {0, 0}, {f.extent[0], 1})) {
            double c = haar_coeff(f, {I, 1});
            sq += c * c;
        }
    sq += avg * avg * cube_volume(top);
    double l2 = lp_norm(f, 2.0);
    CHECK(sq == doctest::Approx(l2 * l2).epsilon(1e-10));

    // Delta_I Delta_J = 0 for distinct same-level cubes, Delta_I^2 = Delta_I
    DyadicCube I{2, {0, 0}, 1}, J{2, {64, 0}, 1};
    MeshFunction dI = martingale_diff(f, I);
    MeshFunction dJI = martingale_diff(rebox(dI, {0, 0}, {f.extent[0], 1}), J);
    for (double v : dJI.values) CHECK(std::abs(v) <= 1e-14);
    MeshFunction dII = martingale_diff(rebox(dI, {0, 0}, {f.extent[0], 1}), I);
    for (int64_t i = dI.origin[0]; i < dI.origin[0] + dI.extent[0]; ++i)
        CHECK(dII.at(i) == doctest::Approx(dI.at(i)).epsilon(1e-12));
}

TEST_CASE("orthonormality of the Haar system on the mesh") {
    int L = 5;
    DyadicGrid g = standard_grid(1, 0, L);
    std::vector<HaarIndex> idx;
    for (int lev = 0; lev < L; ++lev)
        for (const auto& I : g.cubes_at_level(lev, {0, 0}, {32, 1})) idx.push_back({I, 1});
    for (const auto& a : idx)
        for (const auto& b : idx) {
            double ip = haar_coeff(haar_function(a, L), b);
            double want = (a.cube == b.cube) ? 1.0 : 0.0;
            CHECK(ip == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("square function: Parseval for mean-zero data") {
    int L = 7;
    DyadicGrid g = standard_grid(1, 0, L);
    MeshFunction f = random_mesh(1, L, 31);
    double avg = average(f, DyadicCube{0, {0, 0}, 1});
    for (auto& v : f.values) v -= avg;
    MeshFunction sf = square_function(f, g);
    CHECK(lp_norm(sf, 2.0) == doctest::Approx(lp_norm(f, 2.0)).epsilon(1e-12));
}

TEST_CASE("maximal functions") {
    int L = 6;
    DyadicGrid g = standard_grid(1, 0, L);
    MeshFunction one = MeshFunction::zeros_unit_box(1, L);
    for (auto& v : one.values) v = 1.0;
    MeshFunction m = dyadic_maximal(one, g);
    for (int64_t i = 0; i < 64; ++i) CHECK(m.at(i) == doctest::Approx(1.0));

    // f = 1_{[0,2^-L)}: on the cell at 1/2 only the root cube contributes
    MeshFunction spike = MeshFunction::zeros_unit_box(1, L);
    spike.values[0] = 1.0;
    MeshFunction ms = dyadic_maximal(spike, g);
    CHECK(ms.at(32) == doctest::Approx(std::ldexp(1.0, -L)).epsilon(1e-12));

    // bilinear ladder maximal dominates each ladder product pointwise
    MeshFunction f = MeshFunction::zeros_unit_box(1, L);
    for (int64_t i = 0; i < 32; ++i) f.values[size_t(i)] = 1.0;
    MeshFunction mm = bilinear_maximal_ball(f, f);
    double h = f.cell_width();
    for (int64_t i = 0; i < 64; ++i) {
        double x = (double(i) + 0.5) * h;
        for (int s = 0; s <= 7; ++s) {
            double rr = std::ldexp(h, s);
            double lo = std::max(0.0, x - rr), hi = std::min(0.5, x + rr);
            double avgf = std::max(0.0, hi - lo) / (2.0 * rr);
            CHECK(mm.at(i) >= avgf * avgf - 1e-9);
        }
    }
}

TEST_CASE("lp norms") {
    int L = 8;
    MeshFunction one = MeshFunction::zeros_unit_box(1, L);
    for (auto& v : one.values) v = 1.0;
    for (double p : {1.0, 2.0, 4.0}) CHECK(lp_norm(one, p) == doctest::Approx(1.0));
    CHECK(lp_norm(one, std::numeric_limits<double>::infinity()) == doctest::Approx(1.0));
    MeshFunction h = haar_function({DyadicCube{3, {32, 0}, 1}, 1}, L);
    CHECK(lp_norm(h, 2.0) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("mesh io round trip and csv") {
    MeshFunction f = random_mesh(1, 5, 77);
    write_mesh(f, "/tmp/dyad_mesh_test");
    MeshFunction bk = read_mesh("/tmp/dyad_mesh_test");
    CHECK(bk.values == f.values);
    CHECK(bk.origin == f.origin);
    write_mesh_csv(f, "/tmp/dyad_mesh_test.csv");
    std::FILE* fp = std::fopen("/tmp/dyad_mesh_test.csv", "r");
    REQUIRE(fp);
    std::fclose(fp);
}
