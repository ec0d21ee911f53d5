#include "dyad/representation.hpp"

#include <algorithm>
#include <cmath>

namespace dyad {

CellRange work_range(const DyadicGrid& grid) {
    int64_t box = int64_t(1) << grid.L;
    int64_t margin = grid.cells_per_axis(grid.S);
    return CellRange{-margin, box + margin};
}

namespace {

void require_coverage(const PairingTable& t, const DyadicGrid& grid,
                      std::initializer_list<const MeshFunction*> fns) {
    // contract3 clips to the table ranges, so every level-S cube any function
    // touches must be inside them
    int64_t lo = INT64_MAX, hi = INT64_MIN;
    int64_t w = grid.cells_per_axis(grid.S);
    for (const MeshFunction* f : fns) {
        int64_t s = grid.shift_cells(grid.S, 0);
        int64_t a = f->origin[0], b = f->origin[0] + f->extent[0];
        auto fdiv = [](int64_t x, int64_t d) { int64_t q = x / d, r = x % d; return (r != 0 && ((r < 0) != (d < 0))) ? q - 1 : q; };
        lo = std::min(lo, fdiv(a - s, w) * w + s);
        hi = std::max(hi, (fdiv(b - 1 - s, w) + 1) * w + s);
    }
    if (t.xr.lo > lo || t.xr.hi < hi || t.yr.lo > lo || t.yr.hi < hi || t.zr.lo > lo ||
        t.zr.hi < hi)
        throw std::invalid_argument(
            "pairing table does not cover the grid-snapped support of the inputs");
}

void require_unit_box(const MeshFunction& f, int L, const char* who) {
    if (f.origin[0] < 0 || f.origin[0] + f.extent[0] > (int64_t(1) << L))
        throw std::invalid_argument(std::string(who) + ": functions must live in the unit box");
}

MeshFunction sub(const MeshFunction& a, const MeshFunction& b) { return mesh_lincomb(1.0, a, -1.0, b); }

} // namespace

DecompositionReport martingale_split(const PairingTable& table, const DyadicGrid& grid,
                                     const MeshFunction& f, const MeshFunction& g,
                                     const MeshFunction& h) {
    if (f.n != 1) throw std::invalid_argument("martingale_split: n = 1 only");
    require_coverage(table, grid, {&f, &g, &h});
    int S = grid.S, L = grid.L;
    std::vector<MeshFunction> pf, pg, ph;
    pf.reserve(size_t(L - S + 1));
    for (int k = S; k <= L; ++k) {
        pf.push_back(project_scale(f, grid, k));
        pg.push_back(project_scale(g, grid, k));
        ph.push_back(project_scale(h, grid, k));
    }
    auto P = [&](const std::vector<MeshFunction>& v, int k) -> const MeshFunction& {
        return v[size_t(k - S)];
    };

    DecompositionReport rep;
    rep.reference = contract3(table, h, f, g);
    KahanSum s1, s2, s3;
    for (int c = S; c < L; ++c) {
        MeshFunction Dh = sub(P(ph, c + 1), P(ph, c));
        MeshFunction Af = sub(P(pf, c + 1), P(pf, S));
        MeshFunction Ag = sub(P(pg, c + 1), P(pg, S));
        double v = contract3(table, Dh, Af, Ag);
        rep.sigma1_by_level.push_back(v);
        s1.add(v);
    }
    for (int a = S; a < L; ++a) {
        MeshFunction Df = sub(P(pf, a + 1), P(pf, a));
        MeshFunction Bg = sub(P(pg, a + 1), P(pg, S));
        MeshFunction Bh = sub(P(ph, a), P(ph, S));
        // <T^{1*}(Delta_K h, Delta_J g), Delta_I f> summed = <T(D_a f, Bg), Bh>
        double v = contract3(table, Bh, Df, Bg);
        rep.sigma2_by_level.push_back(v);
        s2.add(v);
    }
    for (int b = S; b < L; ++b) {
        MeshFunction Dg = sub(P(pg, b + 1), P(pg, b));
        MeshFunction Bf = sub(P(pf, b), P(pf, S));
        MeshFunction Bh = sub(P(ph, b), P(ph, S));
        // <T^{2*}(Delta_I f, Delta_K h), Delta_J g> summed = <T(Bf, D_b g), Bh>
        double v = contract3(table, Bh, Bf, Dg);
        rep.sigma3_by_level.push_back(v);
        s3.add(v);
    }
    rep.sigma1 = s1.value();
    rep.sigma2 = s2.value();
    rep.sigma3 = s3.value();
    MeshFunction f0 = sub(f, P(pf, S));
    MeshFunction g0 = sub(g, P(pg, S));
    rep.remainder = contract3(table, h, P(pf, S), g) + contract3(table, h, f0, P(pg, S)) +
                    contract3(table, P(ph, S), f0, g0);
    rep.total = rep.sigma1 + rep.sigma2 + rep.sigma3 + rep.remainder;
    return rep;
}

DecompositionReport martingale_split(const BilinearKernel& k, const TruncationSpec& trunc,
                                     const DyadicGrid& grid, const MeshFunction& f,
                                     const MeshFunction& g, const MeshFunction& h,
                                     const QuadratureSpec& quad) {
    CellRange r = work_range(grid);
    TruncatedEvaluator ev{k, trunc, 0};
    PairingTable t = build_pairing_table(ev, grid.L, r, r, r, quad, false);
    return martingale_split(t, grid, f, g, h);
}

std::optional<DyadicCube> minimal_parent(const DyadicCube& I, const DyadicCube& J,
                                         const DyadicCube& K, const DyadicGrid& grid) {
    DyadicCube q = K;
    for (;;) {
        if (grid.contains(q, I) && grid.contains(q, J) && grid.contains(q, K)) return q;
        if (q.level <= grid.S) return std::nullopt;
        q = grid.parent(q);
    }
}

namespace {

// internal trichotomy shared by the sigma^a (l(X) = 2 l(Y)) and sigma^b
// (l(X) = l(Y)) passes: separation threshold l(Z)^g l(Ysmall)^{1-g}
TripleTag classify_core(const DyadicCube& X, const DyadicCube& Y, const DyadicCube& Z,
                        const DyadicGrid& grid, const GoodnessParams& p) {
    double h = std::ldexp(1.0, -grid.L);
    double lz = cube_sidelength(Z);
    double ly = cube_sidelength(Y);
    double dx = double(cube_distance_cells(Z, X, grid)) * h;
    double dy = double(cube_distance_cells(Z, Y, grid)) * h;
    double thresh = std::pow(lz, p.gamma) * std::pow(ly, 1.0 - p.gamma);
    if (std::max(dx, dy) > thresh) return TripleTag::Separated;
    bool zx_disjoint = cube_distance_cells(Z, X, grid) > 0 ||
                       !(grid.contains(X, Z) || grid.contains(Z, X));
    bool zy_disjoint = cube_distance_cells(Z, Y, grid) > 0 ||
                       !(grid.contains(Y, Z) || grid.contains(Z, Y));
    if (zx_disjoint || Z == X || zy_disjoint) return TripleTag::Diagonal;
    return TripleTag::Nested;
}

} // namespace

TripleBucket classify_triple(const DyadicCube& I, const DyadicCube& J, const DyadicCube& K,
                             const DyadicGrid& grid, const GoodnessParams& params) {
    if (J.level != I.level + 1 || K.level < I.level)
        throw std::invalid_argument("classify_triple: need l(K) <= l(I) = 2 l(J)");
    TripleBucket b;
    b.tag = classify_core(I, J, K, grid, params);
    if (b.tag == TripleTag::Diagonal && K.level - params.r >= grid.S) {
        DyadicCube q = grid.ancestor(K, params.r);
        if (grid.contains(q, I) && grid.contains(q, J)) {
            b.parent = q;
            return b;
        }
    }
    auto q = minimal_parent(I, J, K, grid);
    if (q) b.parent = *q;
    return b;
}

// ------------------------------------------------------------------
// extraction
// ------------------------------------------------------------------

namespace {

struct PatternDef {
    int pattern;
    const MeshFunction *phi1, *phi2, *phi3;
    bool sx_strict, sy_strict;
};

struct NestedMeshes {
    MeshFunction m_s;   // s_J + c on the parent cube (mesh part of s_J)
    MeshFunction oneJ;
    double c = 0.0;     // <h_parent>_J
};

// mesh part of s_J = 1_{J^c}(h_P - <h_P>_J), P = parent of J: equals c on J,
// h_P elsewhere on P, 0 outside (plus far constant -c handled by the caller)
NestedMeshes nested_meshes(const DyadicGrid& grid, const DyadicCube& P, const DyadicCube& J) {
    NestedMeshes nm;
    MeshFunction hP = haar_function({P, 1}, grid.L);
    double c = average(hP, J);
    nm.c = c;
    nm.m_s = hP;
    int64_t w = grid.cells_per_axis(J.level);
    for (int64_t i = J.corner[0]; i < J.corner[0] + w; ++i) nm.m_s.ref(i, 0) = c;
    nm.oneJ = indicator(J, grid.L);
    return nm;
}

struct PatternAccum {
    double target = 0.0;
    double emitted = 0.0;
    double residual = 0.0;
    double scale = 0.0; // sum of absolute term values
};

} // namespace

ExtractionResult extract_representation(const BilinearKernel& kern, const TruncationSpec& band,
                                        const DyadicGrid& grid, const GoodnessParams& params,
                                        const MeshFunction& f, const MeshFunction& g,
                                        const MeshFunction& h, const ExtractionOptions& opts) {
    if (grid.n != 1) throw std::invalid_argument("extract_representation: n = 1 only");
    if (band.kind != TruncationKind::SmoothBand)
        throw std::invalid_argument("extract_representation: needs the band truncation "
                                    "(pairings against 1 are only defined there)");
    require_unit_box(f, grid.L, "extract_representation");
    require_unit_box(g, grid.L, "extract_representation");
    require_unit_box(h, grid.L, "extract_representation");
    ExtractionResult res;
    res.sep_floor_cmin = std::numeric_limits<double>::infinity();
    CellRange r = work_range(grid);

    PairingTable tables[3] = {
        build_pairing_table({kern, band, 0}, grid.L, r, r, r, opts.quad, true),
        build_pairing_table({kern, band, 1}, grid.L, r, r, r, opts.quad, true),
        build_pairing_table({kern, band, 2}, grid.L, r, r, r, opts.quad, true),
    };

    PatternDef defs[3] = {
        {1, &f, &g, &h, false, false},
        {2, &h, &g, &f, true, false},
        {3, &f, &h, &g, true, true},
    };

    int64_t box = int64_t(1) << grid.L;
    std::array<int64_t, 2> blo{0, 0}, bhi{box, 1};
    double meshw = std::ldexp(1.0, -grid.L);

    struct RawPara {
        DyadicCube Z;
        double raw = 0.0;
        double data_full = 0.0; // <phi1>_Z <phi2>_Z <phi3,h_Z>
        double data_acc = 0.0;  // actual nested-pi accumulation (telescoped check)
        double hZdata = 0.0;    // <phi3, h_Z>
    };

    std::map<std::string, std::vector<size_t>> family_members;
    std::array<std::vector<RawPara>, 3> paras;
    std::array<PatternAccum, 3> accum;
    double routed_value = 0.0;

    for (const auto& def : defs) {
        const PairingTable& T = tables[size_t(def.pattern - 1)];
        CubeSums s1 = cube_sums(*def.phi1, grid);
        CubeSums s2 = cube_sums(*def.phi2, grid);
        CubeSums s3 = cube_sums(*def.phi3, grid);
        std::vector<MeshFunction> p1, p2;
        for (int k = grid.S; k <= grid.L; ++k) {
            p1.push_back(project_scale(*def.phi1, grid, k));
            p2.push_back(project_scale(*def.phi2, grid, k));
        }
        auto P1 = [&](int k) -> const MeshFunction& { return p1[size_t(k - grid.S)]; };
        auto P2 = [&](int k) -> const MeshFunction& { return p2[size_t(k - grid.S)]; };
        PatternAccum& pa = accum[size_t(def.pattern - 1)];

        for (int zlev = grid.S; zlev <= grid.L - 1; ++zlev) {
            for (const auto& Z : grid.cubes_at_level(zlev, blo, bhi)) {
                if (!grid.is_good(Z, params)) continue;
                int aZ = zlev + (def.sx_strict ? 0 : 1);
                int bZ = zlev + (def.sy_strict ? 0 : 1);
                MeshFunction dZ = martingale_diff(*def.phi3, Z);
                double hZ = s3.haar(Z, 1);
                MeshFunction hZmesh = haar_function({Z, 1}, grid.L);

                // collapsed target for this Z
                MeshFunction A = sub(P1(aZ), P1(grid.S));
                MeshFunction B = sub(P2(bZ), P2(grid.S));
                pa.target += contract3(T, dZ, A, B);
                // coarse-scale corrections -> residual
                double coarseA = -contract3(T, dZ, A, P2(grid.S));
                double coarseB = 0.0;
                if (bZ - 1 >= grid.S + 1) {
                    MeshFunction Bp = sub(P2(bZ), P2(grid.S + 1));
                    coarseB = -contract3(T, dZ, P1(grid.S), Bp);
                }
                pa.residual += coarseA + coarseB;
                pa.scale += std::abs(coarseA) + std::abs(coarseB);

                double paraU = 0.0; // running nested-pi sum for this Z

                // ---- sigma^a: X at levels S..aZ-1, Y' one level below X ----
                for (int xl = grid.S; xl <= aZ - 1; ++xl) {
                    auto Xs = grid.cubes_at_level(xl, blo, bhi);
                    auto Ys = grid.cubes_at_level(xl + 1, blo, bhi);
                    for (const auto& X : Xs) {
                        double dX = s1.haar(X, 1);
                        for (const auto& Y : Ys) {
                            TripleTag tag = classify_core(X, Y, Z, grid, params);
                            if (tag == TripleTag::Nested) {
                                // Z inside Y, X = parent(Y): split into error
                                // coefficient + paraproduct piece
                                NestedMeshes nm = nested_meshes(grid, X, Y);
                                double E1 = ext_pairing(T, hZmesh, {&nm.m_s, -nm.c}, {&nm.oneJ, 0.0});
                                // 1_{J^c} = 1 - 1_J: mesh part -1_J
                                MeshFunction negJ = nm.oneJ;
                                negJ.scale(-1.0);
                                double E2 = ext_pairing(T, hZmesh, {nullptr, 1.0}, ExtSlot{&negJ, 1.0});
                                double raw = (E1 - nm.c * E2) / std::sqrt(cube_volume(Y));
                                double data = dX * s2.haar(Y, 0) * hZ;
                                double lJ = cube_sidelength(Y), lZ = cube_sidelength(Z);
                                double dec = std::pow(lZ / lJ, 0.5 * params.alpha);
                                res.err_sJ_cmeas = std::max(res.err_sJ_cmeas,
                                    std::abs(E1) / (std::sqrt(cube_volume(Z) / cube_volume(Y)) * dec));
                                res.err_tail_cmeas = std::max(res.err_tail_cmeas,
                                    std::abs(E2) / (std::sqrt(cube_volume(Z)) * dec));
                                CoeffRecord rec;
                                rec.pattern = def.pattern;
                                rec.family = 'e';
                                rec.Q = X;
                                rec.I = X;
                                rec.J = Y;
                                rec.K = Z;
                                rec.i = 0;
                                rec.j = 1;
                                rec.k = zlev - X.level;
                                rec.etaI = 1;
                                rec.etaJ = 0;
                                rec.raw = raw;
                                rec.data = data;
                                double shape = std::sqrt(cube_volume(X) * cube_volume(Y) * cube_volume(Z)) /
                                               (cube_volume(X) * cube_volume(X));
                                rec.bound_shape = shape * std::pow(lZ / cube_sidelength(X), 0.5 * params.alpha);
                                if (opts.geometric_sweep || data != 0.0 || raw != 0.0) {
                                    family_members["p" + std::to_string(def.pattern) + "-error"]
                                        .push_back(res.shifts.size());
                                    res.shifts.push_back(rec);
                                }
                                pa.emitted += raw * data;
                                pa.scale += std::abs(raw * data);
                                paraU += average(martingale_diff(*def.phi1, X), Y) * s2.average(Y);
                                continue;
                            }
                            // separated / diagonal coefficient
                            double raw = contract3(T, hZmesh, haar_function({X, 1}, grid.L),
                                                   haar_function({Y, 0}, grid.L));
                            double data = dX * s2.haar(Y, 0) * hZ;
                            if (!opts.geometric_sweep && data == 0.0 && raw == 0.0) continue;
                            std::optional<DyadicCube> Q;
                            char fam = 's';
                            if (tag == TripleTag::Separated) {
                                Q = minimal_parent(X, Y, Z, grid);
                                if (Q) {
                                    double maxd = std::max(cube_distance_cells(Z, X, grid),
                                                           cube_distance_cells(Z, Y, grid)) * meshw;
                                    double denom = std::pow(cube_sidelength(Z), params.gamma) *
                                                   std::pow(cube_sidelength(*Q), 1.0 - params.gamma);
                                    res.sep_floor_cmin = std::min(res.sep_floor_cmin, maxd / denom);
                                }
                            } else {
                                fam = 'd';
                                if (X.level < zlev - params.r) ++res.step2_cap_violations;
                                if (zlev - params.r >= grid.S) {
                                    DyadicCube q = grid.ancestor(Z, params.r);
                                    if (grid.contains(q, X) && grid.contains(q, Y)) Q = q;
                                    else ++res.parent_violations;
                                }
                                if (!Q) Q = minimal_parent(X, Y, Z, grid);
                            }
                            if (!Q) {
                                ++res.routed_triples;
                                routed_value += raw * data;
                                pa.residual += raw * data;
                                pa.scale += std::abs(raw * data);
                                continue;
                            }
                            CoeffRecord rec;
                            rec.pattern = def.pattern;
                            rec.family = fam;
                            rec.Q = *Q;
                            rec.I = X;
                            rec.J = Y;
                            rec.K = Z;
                            rec.i = X.level - Q->level;
                            rec.j = Y.level - Q->level;
                            rec.k = zlev - Q->level;
                            rec.etaI = 1;
                            rec.etaJ = 0;
                            rec.raw = raw;
                            rec.data = data;
                            double shape = std::sqrt(cube_volume(X) * cube_volume(Y) * cube_volume(Z)) /
                                           (cube_volume(*Q) * cube_volume(*Q));
                            rec.bound_shape = shape * std::pow(cube_sidelength(Z) / cube_sidelength(*Q),
                                                               0.5 * params.alpha);
                            family_members["p" + std::to_string(def.pattern) +
                                           (fam == 's' ? "-separated" : "-diagonal")]
                                .push_back(res.shifts.size());
                            res.shifts.push_back(rec);
                            pa.emitted += raw * data;
                            pa.scale += std::abs(raw * data);
                        }
                    }
                }

                // ---- sigma^b: Y at levels S+1..bZ-1, X' at the same level ----
                for (int yl = grid.S + 1; yl <= bZ - 1; ++yl) {
                    auto Ys = grid.cubes_at_level(yl, blo, bhi);
                    for (const auto& Y : Ys) {
                        double dY = s2.haar(Y, 1);
                        for (const auto& X : Ys) { // X' runs over the same level
                            TripleTag tag = classify_core(X, Y, Z, grid, params);
                            if (tag == TripleTag::Nested) {
                                // Z strictly inside Y = X'
                                DyadicCube Jz = grid.cube_containing(Y.level + 1, Z.corner);
                                NestedMeshes nm = nested_meshes(grid, Y, Jz);
                                MeshFunction oneY = indicator(Y, grid.L);
                                double E1 = ext_pairing(T, hZmesh, ExtSlot{&oneY, 0.0},
                                                        ExtSlot{&nm.m_s, -nm.c});
                                MeshFunction negY = oneY;
                                negY.scale(-1.0);
                                double E2 = ext_pairing(T, hZmesh, ExtSlot{&negY, 1.0}, {nullptr, 1.0});
                                double raw = (E1 - nm.c * E2) / std::sqrt(cube_volume(Y));
                                double data = s1.haar(Y, 0) * dY * hZ;
                                double lJ = cube_sidelength(Y), lZ = cube_sidelength(Z);
                                double dec = std::pow(lZ / lJ, 0.5 * params.alpha);
                                res.err_sJ_cmeas = std::max(res.err_sJ_cmeas,
                                    std::abs(E1) / (std::sqrt(cube_volume(Z) / cube_volume(Y)) * dec));
                                res.err_tail_cmeas = std::max(res.err_tail_cmeas,
                                    std::abs(E2) / (std::sqrt(cube_volume(Z)) * dec));
                                CoeffRecord rec;
                                rec.pattern = def.pattern;
                                rec.family = 'e';
                                rec.Q = Y;
                                rec.I = Y;
                                rec.J = Y;
                                rec.K = Z;
                                rec.i = 0;
                                rec.j = 0;
                                rec.k = zlev - Y.level;
                                rec.etaI = 0;
                                rec.etaJ = 1;
                                rec.raw = raw;
                                rec.data = data;
                                double shape = std::sqrt(cube_volume(Y) * cube_volume(Y) * cube_volume(Z)) /
                                               (cube_volume(Y) * cube_volume(Y));
                                rec.bound_shape = shape * dec;
                                if (opts.geometric_sweep || data != 0.0 || raw != 0.0) {
                                    family_members["p" + std::to_string(def.pattern) + "-error"]
                                        .push_back(res.shifts.size());
                                    res.shifts.push_back(rec);
                                }
                                pa.emitted += raw * data;
                                pa.scale += std::abs(raw * data);
                                paraU += s1.average(Y) * average(martingale_diff(*def.phi2, Y), Jz);
                                continue;
                            }
                            double raw = contract3(T, hZmesh, haar_function({X, 0}, grid.L),
                                                   haar_function({Y, 1}, grid.L));
                            double data = s1.haar(X, 0) * dY * hZ;
                            if (!opts.geometric_sweep && data == 0.0 && raw == 0.0) continue;
                            std::optional<DyadicCube> Q;
                            char fam = 's';
                            if (tag == TripleTag::Separated) {
                                Q = minimal_parent(X, Y, Z, grid);
                                if (Q) {
                                    double maxd = std::max(cube_distance_cells(Z, X, grid),
                                                           cube_distance_cells(Z, Y, grid)) * meshw;
                                    double denom = std::pow(cube_sidelength(Z), params.gamma) *
                                                   std::pow(cube_sidelength(*Q), 1.0 - params.gamma);
                                    res.sep_floor_cmin = std::min(res.sep_floor_cmin, maxd / denom);
                                }
                            } else {
                                fam = 'd';
                                if (X.level < zlev - params.r) ++res.step2_cap_violations;
                                if (zlev - params.r >= grid.S) {
                                    DyadicCube q = grid.ancestor(Z, params.r);
                                    if (grid.contains(q, X) && grid.contains(q, Y)) Q = q;
                                    else ++res.parent_violations;
                                }
                                if (!Q) Q = minimal_parent(X, Y, Z, grid);
                            }
                            if (!Q) {
                                ++res.routed_triples;
                                routed_value += raw * data;
                                pa.residual += raw * data;
                                pa.scale += std::abs(raw * data);
                                continue;
                            }
                            CoeffRecord rec;
                            rec.pattern = def.pattern;
                            rec.family = fam;
                            rec.Q = *Q;
                            rec.I = X;
                            rec.J = Y;
                            rec.K = Z;
                            rec.i = X.level - Q->level;
                            rec.j = Y.level - Q->level;
                            rec.k = zlev - Q->level;
                            rec.etaI = 0;
                            rec.etaJ = 1;
                            rec.raw = raw;
                            rec.data = data;
                            double shape = std::sqrt(cube_volume(X) * cube_volume(Y) * cube_volume(Z)) /
                                           (cube_volume(*Q) * cube_volume(*Q));
                            rec.bound_shape = shape * std::pow(cube_sidelength(Z) / cube_sidelength(*Q),
                                                               0.5 * params.alpha);
                            family_members["p" + std::to_string(def.pattern) +
                                           (fam == 's' ? "-separated" : "-diagonal")]
                                .push_back(res.shifts.size());
                            res.shifts.push_back(rec);
                            pa.emitted += raw * data;
                            pa.scale += std::abs(raw * data);
                        }
                    }
                }

                // ---- combined paraproduct for this Z ----
                if (zlev >= grid.S + 1) {
                    RawPara rp;
                    rp.Z = Z;
                    rp.raw = ext_pairing(T, hZmesh, {nullptr, 1.0}, {nullptr, 1.0});
                    rp.hZdata = hZ;
                    rp.data_full = s1.average(Z) * s2.average(Z) * hZ;
                    rp.data_acc = paraU * hZ;
                    paras[size_t(def.pattern - 1)].push_back(rp);
                    pa.emitted += rp.raw * rp.data_full;
                    pa.residual += rp.raw * (rp.data_acc - rp.data_full);
                    pa.scale += std::abs(rp.raw * rp.data_full) +
                                std::abs(rp.raw * (rp.data_acc - rp.data_full));
                }
            }
        }
    }

    // family divisors: 2x the measured bound constant; predictions reported
    for (auto& [key, members] : family_members) {
        FamilyStats st;
        for (size_t idx : members) {
            const auto& rec = res.shifts[idx];
            if (rec.bound_shape > 0.0)
                st.c_meas = std::max(st.c_meas, std::abs(rec.raw) / rec.bound_shape);
        }
        st.count = int64_t(members.size());
        st.divisor = st.c_meas > 0.0 ? 2.0 * st.c_meas : 1.0;
        if (key.find("separated") != std::string::npos) st.predicted = opts.czk_meas;
        else if (key.find("diagonal") != std::string::npos) st.predicted = opts.czk_meas + opts.wbp_meas;
        else st.predicted = opts.czk_meas;
        for (size_t idx : members) {
            auto& rec = res.shifts[idx];
            double decay = rec.bound_shape > 0.0
                               ? std::pow(cube_sidelength(rec.K) / cube_sidelength(rec.Q),
                                          0.5 * params.alpha)
                               : 1.0;
            rec.alpha = rec.raw / (st.divisor * decay);
            double normshape = rec.bound_shape / decay;
            rec.ratio = normshape > 0.0 ? std::abs(rec.alpha) / normshape : 0.0;
            st.max_ratio = std::max(st.max_ratio, rec.ratio);
        }
        res.families[key] = st;
    }

    // paraproduct normalization per pattern
    res.bmo_estimate = opts.bmo_meas;
    for (int p = 0; p < 3; ++p) {
        auto& list = paras[size_t(p)];
        if (list.empty()) continue;
        std::vector<ParaCoeff> raws;
        for (const auto& rp : list) raws.push_back({rp.Z, 1, rp.raw});
        double sup = carleson_ratio(grid, raws);
        res.carleson_sup = std::max(res.carleson_sup, sup);
        double pred = opts.czk_meas + opts.bmo_meas;
        double divisor = 2.0 * std::max(pred, std::sqrt(sup));
        if (divisor == 0.0) divisor = 1.0;
        FamilyStats st;
        st.c_meas = std::sqrt(sup);
        st.divisor = divisor;
        st.predicted = pred;
        st.count = int64_t(list.size());
        for (const auto& rp : list) {
            ParaRecord rec;
            rec.pattern = p + 1;
            rec.K = rp.Z;
            rec.raw = rp.raw;
            rec.data = rp.data_full;
            rec.alpha = rp.raw / divisor;
            res.paraproducts.push_back(rec);
        }
        st.max_ratio = sup / (divisor * divisor);
        res.para_gate_value = std::max(res.para_gate_value, st.max_ratio);
        res.para_divisor = std::max(res.para_divisor, divisor);
        res.families["p" + std::to_string(p + 1) + "-paraproduct"] = st;
    }

    for (const auto& pa : accum) {
        res.target += pa.target;
        res.reassembled += pa.emitted + pa.residual;
        res.residual += pa.residual;
        res.reassembly_scale += pa.scale;
    }
    if (res.shifts.empty() && res.paraproducts.empty()) res.sep_floor_cmin = 0.0;
    if (!std::isfinite(res.sep_floor_cmin)) res.sep_floor_cmin = 0.0;
    return res;
}

static std::string family_key(int pattern, char family) {
    std::string name = family == 's' ? "separated" : (family == 'd' ? "diagonal" : "error");
    return "p" + std::to_string(pattern) + "-" + name;
}

std::vector<EmittedShift> to_shift_specs(const ExtractionResult& res, const DyadicGrid& grid) {
    // group by (pattern, family, i, j, k)
    std::map<std::tuple<int, char, int, int, int>, std::vector<ShiftCoeff>> groups;
    for (const auto& rec : res.shifts) {
        if (rec.alpha == 0.0) continue;
        ShiftCoeff c;
        c.Q = rec.Q;
        c.I = rec.I;
        c.J = rec.J;
        c.K = rec.K;
        c.etaI = rec.etaI;
        c.etaJ = rec.etaJ;
        c.etaK = 1;
        c.alpha = rec.alpha;
        groups[{rec.pattern, rec.family, rec.i, rec.j, rec.k}].push_back(c);
    }
    std::vector<EmittedShift> out;
    for (auto& [key, coeffs] : groups) {
        auto [pattern, family, i, j, k] = key;
        FormFlavor fl = pattern == 1 ? FormFlavor::Direct
                                     : (pattern == 2 ? FormFlavor::Adjoint1 : FormFlavor::Adjoint2);
        EmittedShift e;
        e.pattern = pattern;
        e.family = family;
        auto it = res.families.find(family_key(pattern, family));
        e.divisor = it != res.families.end() ? it->second.divisor : 1.0;
        e.spec = ShiftSpec::make(i, j, k, fl, grid, std::move(coeffs));
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<EmittedPara> to_paraproduct_specs(const ExtractionResult& res,
                                              const DyadicGrid& grid) {
    std::array<std::vector<ParaCoeff>, 3> groups;
    for (const auto& rec : res.paraproducts)
        if (rec.alpha != 0.0) groups[size_t(rec.pattern - 1)].push_back({rec.K, 1, rec.alpha});
    std::vector<EmittedPara> out;
    for (int p = 0; p < 3; ++p) {
        if (groups[size_t(p)].empty()) continue;
        FormFlavor fl = p == 0 ? FormFlavor::Direct
                               : (p == 1 ? FormFlavor::Adjoint1 : FormFlavor::Adjoint2);
        EmittedPara e;
        e.pattern = p + 1;
        auto it = res.families.find("p" + std::to_string(p + 1) + "-paraproduct");
        e.divisor = it != res.families.end() ? it->second.divisor : 1.0;
        e.spec = ParaproductSpec::make(fl, grid, std::move(groups[size_t(p)]));
        out.push_back(std::move(e));
    }
    return out;
}

GoodnessAverageReport goodness_average(const BilinearKernel& k, const TruncationSpec& trunc,
                                       const GoodnessParams& params, const MeshFunction& f,
                                       const MeshFunction& g, const MeshFunction& h,
                                       int64_t trials, uint64_t seed, int S, int L,
                                       const QuadratureSpec& quad) {
    if (trials < 30) throw std::invalid_argument("goodness_average: need trials >= 30");
    GoodnessAverageReport rep;
    rep.trials = trials;
    for (int lev = S; lev <= L - 1; ++lev)
        rep.pi_by_level.push_back(exact_pi_good(lev, S, L, 1, params));

    DyadicGrid probe = standard_grid(1, S, L);
    CellRange r = work_range(probe);
    PairingTable table = build_pairing_table({k, trunc, 0}, L, r, r, r, quad, false);

    int64_t box = int64_t(1) << L;
    std::array<int64_t, 2> blo{0, 0}, bhi{box, 1};
    SplitMix64 rng(seed);
    std::vector<double> va, vb;
    for (int64_t t = 0; t < trials; ++t) {
        DyadicGrid grid = standard_grid(1, S, L);
        SplitMix64 rr = rng.fork(uint64_t(t));
        for (auto& w : grid.omega) w = uint8_t(rr.next() & 1u);
        double A = 0.0, B = 0.0;
        for (int lev = S; lev <= L - 1; ++lev) {
            double pi = rep.pi_by_level[size_t(lev - S)];
            // levels with pi = 0 (the goodness condition is infeasible there)
            // carry no good cubes: the 1/pi identity is vacuous, so both
            // estimates skip them
            if (pi == 0.0) continue;
            MeshFunction Ef = project_scale(f, grid, lev + 1);
            MeshFunction Eg = project_scale(g, grid, lev + 1);
            for (const auto& K : grid.cubes_at_level(lev, blo, bhi)) {
                MeshFunction dK = martingale_diff(h, K);
                double x = contract3(table, dK, Ef, Eg);
                B += x;
                if (grid.is_good(K, params)) A += x / pi;
            }
        }
        va.push_back(A);
        vb.push_back(B);
    }
    double ma = 0.0, mb = 0.0;
    for (int64_t t = 0; t < trials; ++t) { ma += va[size_t(t)]; mb += vb[size_t(t)]; }
    ma /= double(trials);
    mb /= double(trials);
    rep.mean_reweighted = ma;
    rep.mean_full = mb;
    double var = 0.0;
    for (int64_t t = 0; t < trials; ++t) {
        double d = (va[size_t(t)] - vb[size_t(t)]) - (ma - mb);
        var += d * d;
    }
    var /= double(trials - 1);
    rep.paired_se = std::sqrt(var / double(trials));
    rep.zscore = rep.paired_se > 0.0 ? (ma - mb) / rep.paired_se : 0.0;
    rep.agree_3sigma = std::abs(ma - mb) <= 3.0 * rep.paired_se + 1e-300;
    return rep;
}

Eps2LimitReport eps2_limit_check(const BilinearKernel& k, double eps1, const MeshFunction& f,
                                 const MeshFunction& g, const MeshFunction& h,
                                 const std::vector<double>& eps2_ladder, const DyadicCube& K_probe,
                                 const QuadratureSpec& quad) {
    Eps2LimitReport rep;
    for (double e2 : eps2_ladder)
        if (!(e2 > eps1))
            throw std::invalid_argument("eps2_limit_check: ladder entries must exceed eps1");
    rep.eps2_ladder = eps2_ladder;
    rep.smooth_pairing = trilinear_pairing(k, TruncationSpec::smooth(eps1), f, g, h, quad);
    for (double e2 : eps2_ladder) {
        double v = trilinear_pairing(k, TruncationSpec::smooth_band(eps1, e2), f, g, h, quad);
        rep.band_pairings.push_back(v);
        MeshFunction hK = haar_function({K_probe, 1}, f.L);
        double tail = std::abs(pair_one_one_meanzero({k, TruncationSpec::smooth(e2), 0}, hK, quad));
        rep.para_tail.push_back(tail);
    }
    rep.final_gap = std::abs(rep.band_pairings.back() - rep.smooth_pairing);
    for (size_t i = 1; i < rep.para_tail.size(); ++i)
        if (rep.para_tail[i] > rep.para_tail[i - 1] * 1.02 + 1e-12) rep.tail_decreasing = false;
    return rep;
}

} // namespace dyad
