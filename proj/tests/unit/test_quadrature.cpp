#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dyad/corpus.hpp"
#include "dyad/quadrature.hpp"
#include "dyad/rng.hpp"

using namespace dyad;

static MeshFunction box_indicator(int L, int64_t lo, int64_t hi) {
    MeshFunction f = MeshFunction::zeros(1, L, {lo, 0}, {hi - lo, 1});
    for (auto& v : f.values) v = 1.0;
    return f;
}

TEST_CASE("gauss rules integrate polynomials exactly") {
    for (int order : {2, 4, 8}) {
        const GaussRule& g = gauss_rule(order);
        for (int p = 0; p < 2 * order; ++p) {
            double acc = 0.0;
            for (size_t i = 0; i < g.nodes.size(); ++i)
                acc += g.weights[i] * std::pow(g.nodes[i], p);
            CHECK(acc == doctest::Approx(1.0 / (p + 1)).epsilon(1e-13));
        }
    }
}

TEST_CASE("band with eps2 = eps collapses and smooth beyond the support vanishes") {
    // the degenerate band is the zero operator
    {
        int L = 5;
        MeshFunction f = box_indicator(L, 0, 8);
        BilinearKernel k = builtin_kernel("beurling-re");
        double v = trilinear_pairing(k, TruncationSpec::smooth_band(0.125, 0.125), f, f, f,
                                     QuadratureSpec{});
        CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(TruncationSpec::smooth_band(0.25, 0.125), std::invalid_argument);
    // smooth eps > 2 * diameter of the joint support: s < eps/2 everywhere
    int L = 5;
    MeshFunction f = box_indicator(L, 0, 8); // [0, 1/4)
    BilinearKernel k = builtin_kernel("beurling-re");
    double v = trilinear_pairing(k, TruncationSpec::smooth(1.5), f, f, f, QuadratureSpec{});
    CHECK(v == 0.0);
}

TEST_CASE("trilinear pairing matches the fine-mesh refinement oracle") {
    // f = g = h = 1_{[0,1/4)}, beurling-re, smooth eps = 1/8. The oracle runs
    // the same integrals at L+3 with order-8 quadrature; the value below is
    // frozen from that run and re-derived here.
    int L = 6;
    BilinearKernel k = builtin_kernel("beurling-re");
    TruncationSpec t = TruncationSpec::smooth(0.125);
    MeshFunction f = box_indicator(L, 0, 16);
    double v = trilinear_pairing(k, t, f, f, f, QuadratureSpec{4, 4});

    MeshFunction f9 = box_indicator(L + 3, 0, 128);
    double oracle = trilinear_pairing(k, t, f9, f9, f9, QuadratureSpec{8, 4});
    CHECK(v == doctest::Approx(oracle).epsilon(1e-4));
}

TEST_CASE("pairing is trilinear") {
    int L = 5;
    BilinearKernel k = builtin_kernel("beurling-im");
    TruncationSpec t = TruncationSpec::smooth(0.25);
    QuadratureSpec q;
    SplitMix64 rng(7);
    MeshFunction f = corpus_function(1, L, 1), g = corpus_function(1, L, 2),
                 h = corpus_function(1, L, 3), f2 = corpus_function(1, L, 4);
    double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    MeshFunction comb = mesh_lincomb(a, f, b, f2);
    double lhs = trilinear_pairing(k, t, comb, g, h, q);
    double rhs = a * trilinear_pairing(k, t, rebox(f, comb.origin, comb.extent), g, h, q) +
                 b * trilinear_pairing(k, t, rebox(f2, comb.origin, comb.extent), g, h, q);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("adjoint pairings are exact by construction") {
    int L = 5;
    BilinearKernel k = builtin_kernel("beurling-re");
    TruncationSpec t = TruncationSpec::smooth(0.25);
    QuadratureSpec q;
    MeshFunction f = corpus_function(1, L, 11), g = corpus_function(1, L, 12),
                 h = corpus_function(1, L, 13);
    double d = trilinear_pairing(k, t, f, g, h, q);
    CHECK(adjoint_pairing(1, k, t, h, g, f, q) == d);
    CHECK(adjoint_pairing(2, k, t, f, h, g, q) == d);
    CHECK_THROWS_AS(adjoint_pairing(3, k, t, f, g, h, q), std::invalid_argument);
}

TEST_CASE("size-only kernel on far-apart single cells matches the center value") {
    int L = 6;
    BilinearKernel k = builtin_kernel("size-only");
    QuadratureSpec q;
    MeshFunction a = box_indicator(L, 40, 41), b = box_indicator(L, 0, 1), c = box_indicator(L, 20, 21);
    double v = trilinear_pairing(k, TruncationSpec::none(), b, c, a, q);
    double h = std::ldexp(1.0, -L);
    double xc = 40.5 * h, yc = 0.5 * h, zc = 20.5 * h;
    double want = k(xc, yc, zc) * h * h * h;
    CHECK(v == doctest::Approx(want).epsilon(2e-3));
}

TEST_CASE("sharp truncation below the mesh is reported as infeasible") {
    int L = 6;
    BilinearKernel k = builtin_kernel("beurling-re");
    MeshFunction f = box_indicator(L, 0, 8);
    CHECK_THROWS_AS(trilinear_pairing(k, TruncationSpec::sharp(0.02), f, f, f, QuadratureSpec{}),
                    QuadratureError);
}

TEST_CASE("quadrature convergence: doubling the order moves pairings < 1e-3 relative") {
    int L = 5;
    BilinearKernel k = builtin_kernel("beurling-re");
    TruncationSpec t = TruncationSpec::smooth(0.125);
    for (uint64_t s = 0; s < 3; ++s) {
        MeshFunction f = corpus_function(1, L, 100 + s), g = corpus_function(1, L, 200 + s),
                     h = corpus_function(1, L, 300 + s);
        double v4 = trilinear_pairing(k, t, f, g, h, QuadratureSpec{4, 4});
        double v8 = trilinear_pairing(k, t, f, g, h, QuadratureSpec{8, 4});
        double scale = std::max({std::abs(v4), std::abs(v8), 1e-6});
        CHECK(std::abs(v4 - v8) / scale < 1e-3);
    }
}

TEST_CASE("dense path and translation-invariant path agree") {
    int L = 4;
    BilinearKernel k = builtin_kernel("beurling-re");
    TruncatedEvaluator ev{k, TruncationSpec::smooth(0.25), 0};
    CellRange r{0, 16};
    QuadratureSpec q;
    PairingTable ti = build_pairing_table(ev, L, r, r, r, q, false, false);
    PairingTable dense = build_pairing_table(ev, L, r, r, r, q, false, true);
    MeshFunction f = corpus_function(1, L, 5), g = corpus_function(1, L, 6),
                 h = corpus_function(1, L, 7);
    CHECK(contract3(ti, h, f, g) == doctest::Approx(contract3(dense, h, f, g)).epsilon(1e-13));
    for (int64_t a = 0; a < 16; ++a)
        for (int64_t b = 0; b < 16; ++b)
            for (int64_t c = 0; c < 16; ++c)
                CHECK(ti.entry(a, b, c) == doctest::Approx(dense.entry(a, b, c)).epsilon(1e-13));
}

TEST_CASE("tails: band inside the work box has zero tails and ext equals compact") {
    int L = 5;
    BilinearKernel k = builtin_kernel("beurling-re");
    // eps2 small enough that the band never leaves the work box
    TruncatedEvaluator ev{k, TruncationSpec::smooth_band(0.0625, 0.25), 0};
    CellRange wb{-32, 64}; // [-1, 2)
    QuadratureSpec q;
    PairingTable t = build_pairing_table(ev, L, wb, wb, wb, q, true);
    // the band reaches at most eps2 = 8 cells, so all tails vanish for x-cells
    // at distance > 8 cells from the work-box boundary
    int64_t nz = wb.count();
    for (int64_t a = wb.lo + 9; a < wb.hi - 9; ++a) {
        CHECK(t.tail_c[size_t(a - wb.lo)] == 0.0);
        for (int64_t c = wb.lo; c < wb.hi; ++c) {
            CHECK(t.tail_f[size_t((a - wb.lo) * nz + (c - wb.lo))] == 0.0);
            CHECK(t.tail_g[size_t((a - wb.lo) * nz + (c - wb.lo))] == 0.0);
        }
    }
    // <T(1,1), hK> computed with far slots vs explicit work-box indicators
    MeshFunction hK = haar_function({DyadicCube{2, {8, 0}, 1}, 1}, L);
    MeshFunction oneWB = box_indicator(L, -32, 64);
    double ext = ext_pairing(t, hK, {nullptr, 1.0}, {nullptr, 1.0});
    double cmp = contract3(t, hK, oneWB, oneWB);
    CHECK(ext == doctest::Approx(cmp).epsilon(1e-12));
}

TEST_CASE("tails: ext pairing against 1 matches a brute-force windowed oracle") {
    int L = 5;
    BilinearKernel k = builtin_kernel("beurling-re");
    double e1 = 0.125, e2 = 3.0;
    TruncatedEvaluator ev{k, TruncationSpec::smooth_band(e1, e2), 0};
    CellRange wb{-32, 64};
    QuadratureSpec q;
    PairingTable t = build_pairing_table(ev, L, wb, wb, wb, q, true);
    MeshFunction hK = haar_function({DyadicCube{2, {8, 0}, 1}, 1}, L);
    double ext = ext_pairing(t, hK, {nullptr, 1.0}, {nullptr, 1.0});
    // oracle: the band support is inside [x - e2, x + e2], so a table over a
    // window that wide sees the whole integral
    CellRange wide{-int64_t(e2 * 32) - 40, 32 + int64_t(e2 * 32) + 40};
    PairingTable tw = build_pairing_table(ev, L, CellRange{8, 16}, wide, wide, q, false);
    MeshFunction oneWide = box_indicator(L, wide.lo, wide.hi);
    double oracle = contract3(tw, hK, oneWide, oneWide);
    CHECK(ext == doctest::Approx(oracle).epsilon(2e-4));
}

TEST_CASE("sharp/smooth gap geometry and maximal-function domination") {
    int L = 5;
    BilinearKernel k = builtin_kernel("beurling-re");
    QuadratureSpec q;
    MeshFunction zero = MeshFunction::zeros_unit_box(1, L);
    MeshFunction g0 = sharp_smooth_gap(k, 0.25, zero, zero, q);
    for (double v : g0.values) CHECK(v == 0.0);

    MeshFunction f = box_indicator(L, 0, 16); // 1_{[0,1/2)}
    double eps = 0.25;
    MeshFunction gap = sharp_smooth_gap(k, eps, f, f, q);
    MeshFunction mm = bilinear_maximal_ball(f, f);
    double cmax = 0.0;
    for (int64_t i = gap.origin[0]; i < gap.origin[0] + gap.extent[0]; ++i) {
        double m = mm.at(i);
        double gv = gap.at(i);
        if (m > 0) cmax = std::max(cmax, gv / m);
        // cells farther than eps from the support see no cutoff band at all
        double x = (double(i) + 0.5) * gap.cell_width();
        if (x - 0.5 > eps) CHECK(gv <= 1e-10);
    }
    CHECK(cmax > 0.0);
    CHECK(cmax < 50.0); // |T_eps - T^phi_eps| <= C M(f,g) with a moderate C
}

TEST_CASE("permuted-evaluator tails agree with a windowed direct-table oracle") {
    // <T^{1*}(1,1), h_Z> integrates the permuted kernel against 1 in both
    // free slots. With a band narrow enough to stay inside the work box the
    // same number is a compact contraction of the direct table with the
    // roles relabeled, which exercises the permuted tail geometry.
    int L = 5;
    BilinearKernel k = builtin_kernel("beurling-im");
    TruncationSpec band = TruncationSpec::smooth_band(0.125, 0.5);
    CellRange wb{-32, 64};
    QuadratureSpec q;
    MeshFunction oneWB = MeshFunction::zeros(1, L, {wb.lo, 0}, {wb.count(), 1});
    for (auto& v : oneWB.values) v = 1.0;
    DyadicCube Z{2, {8, 0}, 1};
    MeshFunction hZ = haar_function({Z, 1}, L);

    PairingTable t0 = build_pairing_table({k, band, 0}, L, wb, wb, wb, q, true);
    PairingTable t1 = build_pairing_table({k, band, 1}, L, wb, wb, wb, q, true);
    PairingTable t2 = build_pairing_table({k, band, 2}, L, wb, wb, wb, q, true);

    // direct: <T(1,1), hZ> against the x-slot of the direct table
    double d0 = ext_pairing(t0, hZ, {nullptr, 1.0}, {nullptr, 1.0});
    double o0 = contract3(t0, hZ, oneWB, oneWB);
    CHECK(d0 == doctest::Approx(o0).epsilon(1e-12)); // tails vanish inside

    // adjoint-1: integrand K(y,x,z) h_Z(x) = direct table with x- and y-slots
    // swapped, i.e. h_Z riding the f-slot
    double d1 = ext_pairing(t1, hZ, {nullptr, 1.0}, {nullptr, 1.0});
    double o1 = contract3(t0, oneWB, hZ, oneWB);
    CHECK(d1 == doctest::Approx(o1).epsilon(1e-6));

    // adjoint-2: h_Z riding the g-slot
    double d2 = ext_pairing(t2, hZ, {nullptr, 1.0}, {nullptr, 1.0});
    double o2 = contract3(t0, oneWB, oneWB, hZ);
    CHECK(d2 == doctest::Approx(o2).epsilon(1e-6));
}
