#include "dyad/shifts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <tuple>

#include "json.hpp"

namespace dyad {

double shift_coeff_bound(const ShiftCoeff& c) {
    return std::sqrt(cube_volume(c.I) * cube_volume(c.J) * cube_volume(c.K)) /
           (cube_volume(c.Q) * cube_volume(c.Q));
}

static void validate_coeff_geometry(const DyadicGrid& g, int i, int j, int k,
                                    const ShiftCoeff& c) {
    if (c.I.level != c.Q.level + i || c.J.level != c.Q.level + j || c.K.level != c.Q.level + k)
        throw std::invalid_argument("shift coeff: level offsets disagree with (i,j,k)");
    if (!g.contains(c.Q, c.I) || !g.contains(c.Q, c.J) || !g.contains(c.Q, c.K))
        throw std::invalid_argument("shift coeff: I,J,K must be inside Q");
    if (c.K.level >= g.L && c.etaK != 0)
        throw std::invalid_argument("shift coeff: output Haar below mesh scale");
}

ShiftSpec ShiftSpec::make(int i, int j, int k, FormFlavor flavor, DyadicGrid grid,
                          std::vector<ShiftCoeff> coeffs) {
    if (i < 0 || j < 0 || k < 0) throw std::invalid_argument("shift: i,j,k must be >= 0");
    ShiftSpec s;
    s.i = i;
    s.j = j;
    s.k = k;
    s.flavor = flavor;
    s.grid = std::move(grid);
    // the coefficient set is a map keyed by (Q,I,J,K,eta): reject duplicates
    std::set<std::tuple<int, int64_t, int64_t, int64_t, int64_t, int, int, int>> seen;
    for (const auto& c : coeffs) {
        validate_coeff_geometry(s.grid, i, j, k, c);
        if (!seen.emplace(c.Q.level, c.Q.corner[0], c.I.corner[0], c.J.corner[0], c.K.corner[0],
                          c.etaI, c.etaJ, c.etaK)
                 .second)
            throw std::invalid_argument("shift: duplicate coefficient key (Q,I,J,K)");
        double bound = shift_coeff_bound(c);
        if (std::abs(c.alpha) > bound * (1.0 + 1e-12)) {
            char msg[256];
            std::snprintf(msg, sizeof msg,
                          "shift coefficient violates |alpha| <= |I|^1/2|J|^1/2|K|^1/2/|Q|^2: "
                          "|%.6g| > %.6g (Q level %d corner %lld)",
                          c.alpha, bound, c.Q.level, (long long)c.Q.corner[0]);
            throw NormalizationError(msg);
        }
    }
    s.coeffs = std::move(coeffs);
    return s;
}

MeshFunction shift_apply(const ShiftSpec& s, const MeshFunction& f, const MeshFunction& g) {
    CubeSums sf = cube_sums(f, s.grid);
    CubeSums sg = cube_sums(g, s.grid);
    // output over the union of all K cubes
    std::array<int64_t, 2> lo{INT64_MAX, INT64_MAX}, hi{INT64_MIN, INT64_MIN};
    for (const auto& c : s.coeffs) {
        int64_t w = s.grid.cells_per_axis(c.K.level);
        for (int a = 0; a < s.grid.n; ++a) {
            lo[a] = std::min(lo[a], c.K.corner[a]);
            hi[a] = std::max(hi[a], c.K.corner[a] + w);
        }
    }
    if (s.coeffs.empty()) return MeshFunction::zeros_unit_box(s.grid.n, s.grid.L);
    if (s.grid.n == 1) { lo[1] = 0; hi[1] = 1; }
    MeshFunction out = MeshFunction::zeros(s.grid.n, s.grid.L, lo, {hi[0] - lo[0], s.grid.n == 2 ? hi[1] - lo[1] : 1});
    for (const auto& c : s.coeffs) {
        double df = c.etaI == 0 ? sf.haar(c.I, 0) : sf.haar(c.I, c.etaI);
        double dg = c.etaJ == 0 ? sg.haar(c.J, 0) : sg.haar(c.J, c.etaJ);
        double w = c.alpha * df * dg;
        if (w == 0.0) continue;
        MeshFunction hk = haar_function({c.K, c.etaK}, s.grid.L);
        for (int64_t i0 = hk.origin[0]; i0 < hk.origin[0] + hk.extent[0]; ++i0)
            for (int64_t i1 = hk.origin[1]; i1 < (s.grid.n == 2 ? hk.origin[1] + hk.extent[1] : hk.origin[1] + 1); ++i1)
                out.ref(i0, s.grid.n == 2 ? i1 : 0) += w * hk.at(i0, s.grid.n == 2 ? i1 : 0);
    }
    return out;
}

static double shift_form_direct(const ShiftSpec& s, const MeshFunction& f, const MeshFunction& g,
                                const MeshFunction& h) {
    CubeSums sf = cube_sums(f, s.grid);
    CubeSums sg = cube_sums(g, s.grid);
    CubeSums sh = cube_sums(h, s.grid);
    KahanSum acc;
    for (const auto& c : s.coeffs) {
        double df = sf.haar(c.I, c.etaI);
        double dg = sg.haar(c.J, c.etaJ);
        double dh = sh.haar(c.K, c.etaK);
        acc.add(c.alpha * df * dg * dh);
    }
    return acc.value();
}

double shift_form(const ShiftSpec& s, const MeshFunction& f, const MeshFunction& g,
                  const MeshFunction& h) {
    switch (s.flavor) {
        case FormFlavor::Direct: return shift_form_direct(s, f, g, h);
        case FormFlavor::Adjoint1: return shift_form_direct(s, h, g, f);
        case FormFlavor::Adjoint2: return shift_form_direct(s, f, h, g);
    }
    return 0.0;
}

ShiftSpec shift_adjoint(const ShiftSpec& s, int which) {
    if (which != 1 && which != 2) throw std::invalid_argument("shift_adjoint: which must be 1 or 2");
    ShiftSpec out = s;
    // composing role permutations: applying the same adjoint twice restores
    // the original form
    auto compose = [&](FormFlavor fl) {
        if (which == 1) {
            if (fl == FormFlavor::Direct) return FormFlavor::Adjoint1;
            if (fl == FormFlavor::Adjoint1) return FormFlavor::Direct;
            return FormFlavor::Adjoint2; // (f,h,g) with f<->h is not a named flavor; unused here
        }
        if (fl == FormFlavor::Direct) return FormFlavor::Adjoint2;
        if (fl == FormFlavor::Adjoint2) return FormFlavor::Direct;
        return FormFlavor::Adjoint1;
    };
    out.flavor = compose(s.flavor);
    return out;
}

double carleson_ratio(const DyadicGrid& grid, const std::vector<ParaCoeff>& coeffs) {
    if (coeffs.empty()) return 0.0;
    // bounding box of coefficient cubes
    std::array<int64_t, 2> lo{INT64_MAX, INT64_MAX}, hi{INT64_MIN, INT64_MIN};
    for (const auto& c : coeffs) {
        int64_t w = grid.cells_per_axis(c.K.level);
        for (int a = 0; a < grid.n; ++a) {
            lo[a] = std::min(lo[a], c.K.corner[a]);
            hi[a] = std::max(hi[a], c.K.corner[a] + w);
        }
    }
    if (grid.n == 1) { lo[1] = 0; hi[1] = 1; }
    double worst = 0.0;
    for (int lev = grid.S; lev <= grid.L; ++lev) {
        for (const auto& K0 : grid.cubes_at_level(lev, lo, hi)) {
            double mass = 0.0;
            for (const auto& c : coeffs)
                if (grid.contains(K0, c.K)) mass += c.alpha * c.alpha;
            worst = std::max(worst, mass / cube_volume(K0));
        }
    }
    return worst;
}

ParaproductSpec ParaproductSpec::make(FormFlavor flavor, DyadicGrid grid,
                                      std::vector<ParaCoeff> coeffs) {
    ParaproductSpec p;
    p.flavor = flavor;
    p.grid = std::move(grid);
    for (const auto& c : coeffs)
        if (c.eta == 0 || c.K.level >= p.grid.L)
            throw std::invalid_argument("paraproduct coeff: needs a cancellative Haar above mesh scale");
    double ratio = carleson_ratio(p.grid, coeffs);
    if (ratio > 1.0 + 1e-12) {
        char msg[128];
        std::snprintf(msg, sizeof msg, "paraproduct violates the Carleson condition: ratio %.6g > 1",
                      ratio);
        throw NormalizationError(msg);
    }
    p.coeffs = std::move(coeffs);
    return p;
}

static double para_form_direct(const ParaproductSpec& p, const MeshFunction& f,
                               const MeshFunction& g, const MeshFunction& h) {
    CubeSums sf = cube_sums(f, p.grid);
    CubeSums sg = cube_sums(g, p.grid);
    CubeSums sh = cube_sums(h, p.grid);
    KahanSum acc;
    for (const auto& c : p.coeffs)
        acc.add(c.alpha * sf.average(c.K) * sg.average(c.K) * sh.haar(c.K, c.eta));
    return acc.value();
}

double paraproduct_form(const ParaproductSpec& p, const MeshFunction& f, const MeshFunction& g,
                        const MeshFunction& h) {
    switch (p.flavor) {
        case FormFlavor::Direct: return para_form_direct(p, f, g, h);
        case FormFlavor::Adjoint1: return para_form_direct(p, h, g, f);
        case FormFlavor::Adjoint2: return para_form_direct(p, f, h, g);
    }
    return 0.0;
}

MeshFunction paraproduct_apply(const ParaproductSpec& p, const MeshFunction& f,
                               const MeshFunction& g) {
    if (p.flavor != FormFlavor::Direct)
        throw std::invalid_argument("paraproduct_apply: adjoint flavors are forms, not operators");
    CubeSums sf = cube_sums(f, p.grid);
    CubeSums sg = cube_sums(g, p.grid);
    std::array<int64_t, 2> lo{INT64_MAX, INT64_MAX}, hi{INT64_MIN, INT64_MIN};
    for (const auto& c : p.coeffs) {
        int64_t w = p.grid.cells_per_axis(c.K.level);
        for (int a = 0; a < p.grid.n; ++a) {
            lo[a] = std::min(lo[a], c.K.corner[a]);
            hi[a] = std::max(hi[a], c.K.corner[a] + w);
        }
    }
    if (p.coeffs.empty()) return MeshFunction::zeros_unit_box(p.grid.n, p.grid.L);
    if (p.grid.n == 1) { lo[1] = 0; hi[1] = 1; }
    MeshFunction out = MeshFunction::zeros(p.grid.n, p.grid.L, lo, {hi[0] - lo[0], p.grid.n == 2 ? hi[1] - lo[1] : 1});
    for (const auto& c : p.coeffs) {
        double w = c.alpha * sf.average(c.K) * sg.average(c.K);
        if (w == 0.0) continue;
        MeshFunction hk = haar_function({c.K, c.eta}, p.grid.L);
        for (int64_t i0 = hk.origin[0]; i0 < hk.origin[0] + hk.extent[0]; ++i0)
            for (int64_t i1 = hk.origin[1]; i1 < (p.grid.n == 2 ? hk.origin[1] + hk.extent[1] : hk.origin[1] + 1); ++i1)
                out.ref(i0, p.grid.n == 2 ? i1 : 0) += w * hk.at(i0, p.grid.n == 2 ? i1 : 0);
    }
    return out;
}

// --- serialization ---

static nlohmann::json cube_json(const DyadicCube& q) {
    nlohmann::json j;
    j["level"] = q.level;
    auto c = nlohmann::json::array();
    for (int a = 0; a < q.dim; ++a) c.push_back(q.corner[a]);
    j["corner"] = c;
    return j;
}

static DyadicCube cube_unjson(const nlohmann::json& j) {
    DyadicCube q;
    q.level = j.at("level").get<int>();
    auto c = j.at("corner");
    q.dim = int(c.size());
    for (int a = 0; a < q.dim && a < 2; ++a) q.corner[a] = c[size_t(a)].get<int64_t>();
    return q;
}

static const char* flavor_name(FormFlavor f) {
    switch (f) {
        case FormFlavor::Direct: return "direct";
        case FormFlavor::Adjoint1: return "adjoint-1";
        case FormFlavor::Adjoint2: return "adjoint-2";
    }
    return "direct";
}

static FormFlavor flavor_parse(const std::string& s) {
    if (s == "direct") return FormFlavor::Direct;
    if (s == "adjoint-1") return FormFlavor::Adjoint1;
    if (s == "adjoint-2") return FormFlavor::Adjoint2;
    throw std::invalid_argument("unknown form flavor: " + s);
}

std::string ShiftSpec::to_json() const {
    nlohmann::json j;
    j["type"] = "shift";
    j["i"] = i;
    j["j"] = this->j;
    j["k"] = k;
    j["flavor"] = flavor_name(flavor);
    j["grid"] = nlohmann::json::parse(grid.to_json());
    auto arr = nlohmann::json::array();
    for (const auto& c : coeffs) {
        nlohmann::json e;
        e["Q"] = cube_json(c.Q);
        e["I"] = cube_json(c.I);
        e["J"] = cube_json(c.J);
        e["K"] = cube_json(c.K);
        e["etaI"] = c.etaI;
        e["etaJ"] = c.etaJ;
        e["etaK"] = c.etaK;
        e["alpha"] = c.alpha;
        arr.push_back(e);
    }
    j["coeffs"] = arr;
    return j.dump();
}

ShiftSpec ShiftSpec::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    if (j.at("type").get<std::string>() != "shift")
        throw std::invalid_argument("ShiftSpec::from_json: not a shift record");
    std::vector<ShiftCoeff> coeffs;
    for (const auto& e : j.at("coeffs")) {
        ShiftCoeff c;
        c.Q = cube_unjson(e.at("Q"));
        c.I = cube_unjson(e.at("I"));
        c.J = cube_unjson(e.at("J"));
        c.K = cube_unjson(e.at("K"));
        c.etaI = uint8_t(e.at("etaI").get<int>());
        c.etaJ = uint8_t(e.at("etaJ").get<int>());
        c.etaK = uint8_t(e.at("etaK").get<int>());
        c.alpha = e.at("alpha").get<double>();
        coeffs.push_back(c);
    }
    return make(j.at("i").get<int>(), j.at("j").get<int>(), j.at("k").get<int>(),
                flavor_parse(j.at("flavor").get<std::string>()),
                DyadicGrid::from_json(j.at("grid").dump()), std::move(coeffs));
}

std::string ParaproductSpec::to_json() const {
    nlohmann::json j;
    j["type"] = "paraproduct";
    j["flavor"] = flavor_name(flavor);
    j["grid"] = nlohmann::json::parse(grid.to_json());
    auto arr = nlohmann::json::array();
    for (const auto& c : coeffs) {
        nlohmann::json e;
        e["K"] = cube_json(c.K);
        e["eta"] = c.eta;
        e["alpha"] = c.alpha;
        arr.push_back(e);
    }
    j["coeffs"] = arr;
    return j.dump();
}

ParaproductSpec ParaproductSpec::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    if (j.at("type").get<std::string>() != "paraproduct")
        throw std::invalid_argument("ParaproductSpec::from_json: not a paraproduct record");
    std::vector<ParaCoeff> coeffs;
    for (const auto& e : j.at("coeffs")) {
        ParaCoeff c;
        c.K = cube_unjson(e.at("K"));
        c.eta = uint8_t(e.at("eta").get<int>());
        c.alpha = e.at("alpha").get<double>();
        coeffs.push_back(c);
    }
    return make(flavor_parse(j.at("flavor").get<std::string>()),
                DyadicGrid::from_json(j.at("grid").dump()), std::move(coeffs));
}

// --- randomized specs and test functions ---

ShiftSpec random_shift(const DyadicGrid& grid, int i, int j, int k, int max_coeffs,
                       uint64_t seed, double coeff_scale) {
    SplitMix64 rng(seed);
    int maxoff = std::max(std::max(i, j), k);
    int qlo = grid.S, qhi = grid.L - maxoff - 1; // leave one level for output Haar
    std::vector<ShiftCoeff> coeffs;
    std::set<std::tuple<int, int64_t, int64_t, int64_t, int64_t, int, int, int>> seen;
    // one haar mode per shift (a mixed-mode shift splits into two of these),
    // so the rho-form adapter keeps ||K_Q||_inf <= |Q|^{-2} pointwise
    bool avg_on_I = (SplitMix64(seed ^ 0x5bd1e995u).next() & 1) != 0;
    if (qhi >= qlo) {
        std::array<int64_t, 2> lo{0, 0};
        std::array<int64_t, 2> hi{grid.cells_per_axis(grid.S), grid.n == 2 ? grid.cells_per_axis(grid.S) : 1};
        for (int t = 0; t < max_coeffs; ++t) {
            int ql = qlo + int(rng.below(uint64_t(qhi - qlo + 1)));
            auto qs = grid.cubes_at_level(ql, lo, hi);
            if (qs.empty()) continue;
            DyadicCube Q = qs[size_t(rng.below(qs.size()))];
            auto pick_sub = [&](int off) {
                DyadicCube c = Q;
                for (int s = 0; s < off; ++s) {
                    auto ch = grid.children(c);
                    c = ch[size_t(rng.below(ch.size()))];
                }
                return c;
            };
            ShiftCoeff c;
            c.Q = Q;
            c.I = pick_sub(i);
            c.J = pick_sub(j);
            c.K = pick_sub(k);
            uint8_t cmask = uint8_t((1u << grid.n) - 1u);
            if (avg_on_I) {
                c.etaI = 0;
                c.etaJ = uint8_t(1 + rng.below(cmask));
            } else {
                c.etaI = uint8_t(1 + rng.below(cmask));
                c.etaJ = 0;
            }
            c.etaK = uint8_t(1 + rng.below(cmask));
            if (!seen.emplace(c.Q.level, c.Q.corner[0], c.I.corner[0], c.J.corner[0],
                              c.K.corner[0], c.etaI, c.etaJ, c.etaK)
                     .second)
                continue;
            c.alpha = coeff_scale * rng.uniform(-1.0, 1.0) * shift_coeff_bound(c);
            coeffs.push_back(c);
        }
    }
    return ShiftSpec::make(i, j, k, FormFlavor::Direct, grid, std::move(coeffs));
}

MeshFunction random_test_function(const DyadicGrid& grid, SplitMix64& rng) {
    MeshFunction f = MeshFunction::zeros_unit_box(grid.n, grid.L);
    if (rng.coin()) {
        // random Haar polynomial at levels <= L-2
        int terms = 4 + int(rng.below(12));
        for (int t = 0; t < terms; ++t) {
            int lev = grid.S + int(rng.below(uint64_t(std::max(1, grid.L - 1 - grid.S))));
            auto cubes = grid.cubes_at_level(lev, {0, 0}, {f.extent[0], grid.n == 2 ? f.extent[1] : 1});
            if (cubes.empty()) continue;
            DyadicCube q = cubes[size_t(rng.below(cubes.size()))];
            uint8_t eta = uint8_t(1 + rng.below((1u << grid.n) - 1u));
            MeshFunction hq = haar_function({q, eta}, grid.L);
            double c = rng.uniform(-1.0, 1.0);
            for (int64_t i0 = hq.origin[0]; i0 < hq.origin[0] + hq.extent[0]; ++i0)
                for (int64_t i1 = hq.origin[1]; i1 < (grid.n == 2 ? hq.origin[1] + hq.extent[1] : hq.origin[1] + 1); ++i1)
                    if (f.in_box(i0, grid.n == 2 ? i1 : 0))
                        f.ref(i0, grid.n == 2 ? i1 : 0) += c * hq.at(i0, grid.n == 2 ? i1 : 0);
        }
    } else {
        // random sum of <= 8 scaled indicators
        int terms = 1 + int(rng.below(8));
        for (int t = 0; t < terms; ++t) {
            int lev = grid.S + int(rng.below(uint64_t(grid.L - grid.S + 1)));
            auto cubes = grid.cubes_at_level(lev, {0, 0}, {f.extent[0], grid.n == 2 ? f.extent[1] : 1});
            if (cubes.empty()) continue;
            DyadicCube q = cubes[size_t(rng.below(cubes.size()))];
            double c = rng.uniform(-2.0, 2.0);
            int64_t w = grid.cells_per_axis(q.level);
            for (int64_t i0 = q.corner[0]; i0 < q.corner[0] + w; ++i0)
                for (int64_t i1 = (grid.n == 2 ? q.corner[1] : 0); i1 < (grid.n == 2 ? q.corner[1] + w : 1); ++i1)
                    if (f.in_box(i0, grid.n == 2 ? i1 : 0)) f.ref(i0, grid.n == 2 ? i1 : 0) += c;
        }
    }
    return f;
}

static NormHarnessReport harness_run(double p, double q, int64_t trials, uint64_t seed,
                                     const DyadicGrid& grid,
                                     const std::function<MeshFunction(const MeshFunction&, const MeshFunction&)>& op) {
    if (!(p > 1.0) || !(q > 1.0)) throw std::invalid_argument("norm_harness: need 1 < p,q");
    NormHarnessReport rep;
    rep.p = p;
    rep.q = q;
    rep.r = 1.0 / (1.0 / p + 1.0 / q);
    rep.trials = trials;
    SplitMix64 rng(seed);
    for (int64_t t = 0; t < trials; ++t) {
        SplitMix64 r = rng.fork(uint64_t(t));
        MeshFunction f = random_test_function(grid, r);
        MeshFunction g = random_test_function(grid, r);
        double nf = lp_norm(f, p), ng = lp_norm(g, q);
        if (nf == 0.0 || ng == 0.0) {
            rep.ratios.push_back(0.0);
            continue;
        }
        MeshFunction out = op(f, g);
        double ratio = lp_norm(out, rep.r) / (nf * ng);
        rep.ratios.push_back(ratio);
        rep.max_ratio = std::max(rep.max_ratio, ratio);
    }
    std::vector<double> sorted = rep.ratios;
    std::sort(sorted.begin(), sorted.end());
    if (!sorted.empty()) rep.median_ratio = sorted[sorted.size() / 2];
    return rep;
}

NormHarnessReport norm_harness_shift(const ShiftSpec& s, double p, double q, int64_t trials,
                                     uint64_t seed) {
    return harness_run(p, q, trials, seed, s.grid,
                       [&](const MeshFunction& f, const MeshFunction& g) { return shift_apply(s, f, g); });
}

NormHarnessReport norm_harness_paraproduct(const ParaproductSpec& s, double p, double q,
                                           int64_t trials, uint64_t seed) {
    return harness_run(p, q, trials, seed, s.grid,
                       [&](const MeshFunction& f, const MeshFunction& g) { return paraproduct_apply(s, f, g); });
}

} // namespace dyad
