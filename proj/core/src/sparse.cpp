#include "dyad/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "dyad/rng.hpp"

namespace dyad {

static int64_t cube_cells(const DyadicGrid& g, const DyadicCube& q) {
    int64_t w = g.cells_per_axis(q.level);
    return g.n == 2 ? w * w : w;
}

SparseVerifyResult verify_sparse(const SparseCollection& s) {
    SparseVerifyResult r;
    r.cubes = int64_t(s.cubes.size());
    if (s.cubes.empty()) {
        r.ok = true;
        r.min_ratio = 1.0;
        return r;
    }
    const DyadicGrid& g = s.grid;
    // nested check: any two cubes are disjoint or contained
    for (size_t i = 0; i < s.cubes.size(); ++i)
        for (size_t j = i + 1; j < s.cubes.size(); ++j) {
            const auto& A = s.cubes[i];
            const auto& B = s.cubes[j];
            bool rel = g.contains(A, B) || g.contains(B, A) || cube_distance_cells(A, B, g) > 0;
            // same-level distinct cubes at distance 0 are adjacent, fine
            if (!rel) {
                int64_t wa = g.cells_per_axis(A.level), wb = g.cells_per_axis(B.level);
                bool overlap = true;
                for (int ax = 0; ax < g.n; ++ax) {
                    int64_t lo = std::max(A.corner[ax], B.corner[ax]);
                    int64_t hi = std::min(A.corner[ax] + wa, B.corner[ax] + wb);
                    if (lo >= hi) overlap = false;
                }
                if (overlap)
                    throw std::invalid_argument(
                        "verify_sparse: family is not nested and no E_Q assignment was supplied");
            }
        }
    // canonical E_Q = Q minus maximal strict subcubes in S
    r.min_ratio = 1.0;
    for (size_t i = 0; i < s.cubes.size(); ++i) {
        const auto& Q = s.cubes[i];
        int64_t total = cube_cells(g, Q);
        int64_t removed = 0;
        for (size_t j = 0; j < s.cubes.size(); ++j) {
            if (j == i) continue;
            const auto& R = s.cubes[j];
            if (!(g.contains(Q, R) && !(R == Q))) continue;
            // maximal: not inside another strict subcube of Q
            bool maximal = true;
            for (size_t l = 0; l < s.cubes.size(); ++l) {
                if (l == i || l == j) continue;
                const auto& M = s.cubes[l];
                if (g.contains(Q, M) && !(M == Q) && g.contains(M, R) && !(M == R)) {
                    maximal = false;
                    break;
                }
            }
            if (maximal) removed += cube_cells(g, R);
        }
        double ratio = double(total - removed) / double(total);
        r.min_ratio = std::min(r.min_ratio, ratio);
    }
    r.ok = r.min_ratio >= s.eta - 1e-12;
    return r;
}

double lambda_form(const SparseCollection& s, const MeshFunction& f1, const MeshFunction& f2,
                   const MeshFunction& f3) {
    // averages of |f_j| via cube sums of |f_j|
    MeshFunction F1 = f1, F2 = f2, F3 = f3;
    for (auto& v : F1.values) v = std::abs(v);
    for (auto& v : F2.values) v = std::abs(v);
    for (auto& v : F3.values) v = std::abs(v);
    CubeSums A = cube_sums(F1, s.grid), B = cube_sums(F2, s.grid), C = cube_sums(F3, s.grid);
    KahanSum acc;
    for (const auto& q : s.cubes)
        acc.add(cube_volume(q) * A.average(q) * B.average(q) * C.average(q));
    return acc.value();
}

double sparse_c0(double eta) {
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("sparse: eta must lie in (0,1)");
    return std::ceil(3.0 / (1.0 - eta));
}

double universal_c(double eta2, int n) {
    if (!(eta2 > 0.0 && eta2 < 1.0)) throw std::invalid_argument("sparse: eta2 must lie in (0,1)");
    double pow8 = std::pow(8.0, n);
    double c = std::ceil(std::pow(3.0 * std::pow(2.0, n) / (1.0 - eta2), 3.0));
    return std::max(pow8, c);
}

static std::optional<DyadicCube> minimal_cube_containing_boxes(const DyadicGrid& g,
                                                               std::array<int64_t, 2> lo,
                                                               std::array<int64_t, 2> hi) {
    for (int lev = g.L; lev >= g.S; --lev) {
        DyadicCube q = g.cube_containing(lev, lo);
        int64_t w = g.cells_per_axis(lev);
        bool ok = true;
        for (int ax = 0; ax < g.n; ++ax)
            if (hi[ax] > q.corner[ax] + w) ok = false;
        if (ok) return q;
    }
    return std::nullopt;
}

SparseCollection build_sparse(const MeshFunction& f1, const MeshFunction& f2,
                              const MeshFunction& f3, double eta, const DyadicGrid& grid,
                              BuildSparseReport* report) {
    double C0 = sparse_c0(eta);
    MeshFunction F[3] = {f1, f2, f3};
    for (auto& F_j : F)
        for (auto& v : F_j.values) v = std::abs(v);
    CubeSums sums[3] = {cube_sums(F[0], grid), cube_sums(F[1], grid), cube_sums(F[2], grid)};

    std::array<int64_t, 2> lo{INT64_MAX, INT64_MAX}, hi{INT64_MIN, INT64_MIN};
    for (const auto& F_j : F)
        for (int ax = 0; ax < grid.n; ++ax) {
            lo[ax] = std::min(lo[ax], F_j.origin[ax]);
            hi[ax] = std::max(hi[ax], F_j.origin[ax] + F_j.extent[ax]);
        }
    if (grid.n == 1) { lo[1] = 0; hi[1] = 1; }
    auto q0 = minimal_cube_containing_boxes(grid, lo, hi);
    if (!q0)
        throw std::invalid_argument(
            "build_sparse: the supports do not fit in a single grid cube at this scale range");

    SparseCollection out;
    out.grid = grid;
    out.eta = eta;
    if (report) *report = BuildSparseReport{};

    std::vector<DyadicCube> roots{*q0};
    int generations = 0;
    while (!roots.empty()) {
        ++generations;
        if (generations > grid.L - q0->level + 2)
            throw std::logic_error("build_sparse: generation guard tripped");
        std::vector<DyadicCube> next;
        for (const auto& root : roots) {
            out.cubes.push_back(root);
            double base[3];
            for (int j = 0; j < 3; ++j) base[j] = sums[j].average(root);
            // maximal stopping descendants
            std::vector<DyadicCube> stopping;
            std::vector<DyadicCube> stack{root};
            while (!stack.empty()) {
                DyadicCube q = stack.back();
                stack.pop_back();
                if (q.level >= grid.L) continue;
                for (const auto& ch : grid.children(q)) {
                    double worst = 0.0;
                    for (int j = 0; j < 3; ++j)
                        if (base[j] > 0.0) worst = std::max(worst, sums[j].average(ch) / base[j]);
                    if (worst > C0)
                        stopping.push_back(ch);
                    else
                        stack.push_back(ch);
                }
            }
            int64_t stop_cells = 0;
            for (const auto& q : stopping) stop_cells += cube_cells(grid, q);
            double frac = double(stop_cells) / double(cube_cells(grid, root));
            if (report) report->worst_stage_fraction = std::max(report->worst_stage_fraction, frac);
            if (frac > (1.0 - eta) + 1e-12)
                throw std::logic_error("build_sparse: stage measure bound violated");
            next.insert(next.end(), stopping.begin(), stopping.end());
        }
        roots = std::move(next);
    }
    if (report) report->generations = generations;
    auto v = verify_sparse(out);
    out.major_ratio_min = v.min_ratio;
    if (!v.ok) throw std::logic_error("build_sparse: result failed its own sparse verification");
    return out;
}

CzDecomposition cz_decompose(const MeshFunction& f, const std::vector<DyadicCube>& stopping,
                             const DyadicCube& Q0) {
    // stopping cubes must be pairwise disjoint and inside Q0
    for (size_t i = 0; i < stopping.size(); ++i) {
        int64_t wi = int64_t(1) << (f.L - stopping[i].level);
        if (stopping[i].corner[0] < Q0.corner[0] ||
            stopping[i].corner[0] + wi > Q0.corner[0] + (int64_t(1) << (f.L - Q0.level)))
            throw std::invalid_argument("cz_decompose: stopping cube outside Q0");
        for (size_t j = i + 1; j < stopping.size(); ++j) {
            int64_t wj = int64_t(1) << (f.L - stopping[j].level);
            int64_t lo = std::max(stopping[i].corner[0], stopping[j].corner[0]);
            int64_t hi = std::min(stopping[i].corner[0] + wi, stopping[j].corner[0] + wj);
            if (lo < hi) throw std::invalid_argument("cz_decompose: stopping cubes overlap");
        }
    }
    CzDecomposition out;
    out.good = f;
    for (const auto& q : stopping) {
        double avg = average(f, q);
        int64_t w = int64_t(1) << (f.L - q.level);
        MeshFunction b = MeshFunction::zeros(f.n, f.L, q.corner, {w, 1});
        for (int64_t i = q.corner[0]; i < q.corner[0] + w; ++i) {
            b.ref(i, 0) = f.at(i, 0) - avg;
            if (out.good.in_box(i, 0)) out.good.ref(i, 0) = avg;
        }
        out.bad.emplace_back(q, std::move(b));
    }
    return out;
}

RhoForm RhoForm::from_shift(const ShiftSpec& s, double bound_B) {
    if (s.grid.n != 1) throw std::invalid_argument("RhoForm::from_shift: n = 1 only");
    RhoForm F;
    F.grid = s.grid;
    F.rho = std::max(std::max(s.i, s.j), s.k);
    F.bound_B = bound_B;
    int cells = 1 << (F.rho + 1);
    std::map<std::pair<int, int64_t>, size_t> index;
    for (const auto& c : s.coeffs) {
        auto key = std::make_pair(c.Q.level, c.Q.corner[0]);
        auto it = index.find(key);
        if (it == index.end()) {
            CubeKernel k;
            k.Q = c.Q;
            k.table.assign(size_t(cells) * size_t(cells) * size_t(cells), 0.0);
            index.emplace(key, F.kernels.size());
            F.kernels.push_back(std::move(k));
            it = index.find(key);
        }
        auto& table = F.kernels[it->second].table;
        // sample the Haar tensor h~_I(x1) h~_J(x2) h_K(x3) on the depth-(rho+1)
        // subcells of Q (each factor is constant there)
        double lQ = cube_sidelength(c.Q);
        double sub = lQ / cells;
        auto haar_val = [&](const DyadicCube& cube, uint8_t eta, double x) {
            double lo = double(cube.corner[0]) * std::ldexp(1.0, -s.grid.L);
            double len = cube_sidelength(cube);
            if (x < lo || x >= lo + len) return 0.0;
            double norm = 1.0 / std::sqrt(len);
            if (eta == 0) return norm;
            return x < lo + 0.5 * len ? norm : -norm;
        };
        double q0 = double(c.Q.corner[0]) * std::ldexp(1.0, -s.grid.L);
        for (int a = 0; a < cells; ++a) {
            double x3 = q0 + (a + 0.5) * sub;
            double hk = haar_val(c.K, c.etaK, x3);
            if (hk == 0.0) continue;
            for (int b = 0; b < cells; ++b) {
                double x1 = q0 + (b + 0.5) * sub;
                double hi = haar_val(c.I, c.etaI, x1);
                if (hi == 0.0) continue;
                for (int d = 0; d < cells; ++d) {
                    double x2 = q0 + (d + 0.5) * sub;
                    double hj = haar_val(c.J, c.etaJ, x2);
                    if (hj == 0.0) continue;
                    // table is (x1,x2,x3)-ordered
                    table[size_t((b * cells + d) * cells + a)] += c.alpha * hi * hj * hk;
                }
            }
        }
    }
    // assumption A check
    for (const auto& k : F.kernels) {
        double bound = 1.0 / (cube_volume(k.Q) * cube_volume(k.Q));
        for (double v : k.table)
            if (std::abs(v) > bound * (1.0 + 1e-9))
                throw NormalizationError("rho-form kernel violates ||K_Q||_inf <= |Q|^-2");
    }
    return F;
}

double rho_form_eval(const RhoForm& F, const MeshFunction& f1, const MeshFunction& f2,
                     const MeshFunction& f3, const std::vector<DyadicCube>* subfamily) {
    int cells = 1 << (F.rho + 1);
    std::set<std::pair<int, int64_t>> allow;
    if (subfamily)
        for (const auto& q : *subfamily) allow.emplace(q.level, q.corner[0]);
    KahanSum acc;
    for (const auto& k : F.kernels) {
        if (subfamily && !allow.count({k.Q.level, k.Q.corner[0]})) continue;
        if (k.Q.level + F.rho + 1 > F.grid.L)
            throw std::invalid_argument("rho_form_eval: table below mesh resolution");
        int64_t w = F.grid.cells_per_axis(k.Q.level) / cells; // mesh cells per subcell
        double vol = double(w) * std::ldexp(1.0, -F.grid.L);
        auto subint = [&](const MeshFunction& f, int idx) {
            int64_t cell0 = k.Q.corner[0] + idx * w;
            double s = 0.0;
            for (int64_t i = cell0; i < cell0 + w; ++i) s += f.at(i, 0);
            return s * std::ldexp(1.0, -F.grid.L);
        };
        (void)vol;
        size_t nsub = size_t(cells);
        std::vector<double> I1(nsub), I2(nsub), I3(nsub);
        for (int i = 0; i < cells; ++i) {
            I1[size_t(i)] = subint(f1, i);
            I2[size_t(i)] = subint(f2, i);
            I3[size_t(i)] = subint(f3, i);
        }
        for (int b = 0; b < cells; ++b)
            for (int d = 0; d < cells; ++d)
                for (int a = 0; a < cells; ++a) {
                    double kv = k.table[size_t((b * cells + d) * cells + a)];
                    if (kv != 0.0) acc.add(kv * I1[size_t(b)] * I2[size_t(d)] * I3[size_t(a)]);
                }
    }
    return acc.value();
}

DominationReport sparse_dominate(const RhoForm& F, const MeshFunction& f1, const MeshFunction& f2,
                                 const MeshFunction& f3, double eta) {
    DominationReport rep;
    rep.sparse = build_sparse(f1, f2, f3, eta, F.grid);
    rep.form_value = rho_form_eval(F, f1, f2, f3);
    rep.lambda = lambda_form(rep.sparse, f1, f2, f3);
    double denom = (F.bound_B + F.rho + 1.0) * rep.lambda;
    rep.ratio = denom > 0.0 ? std::abs(rep.form_value) / denom : 0.0;
    return rep;
}

SparseCollection universal_sparse(const MeshFunction& f1, const MeshFunction& f2,
                                  const MeshFunction& f3, double eta2, const DyadicGrid& grid) {
    double C = universal_c(eta2, grid.n);
    MeshFunction F[3] = {f1, f2, f3};
    for (auto& F_j : F)
        for (auto& v : F_j.values) v = std::abs(v);
    CubeSums sums[3] = {cube_sums(F[0], grid), cube_sums(F[1], grid), cube_sums(F[2], grid)};
    auto product = [&](const DyadicCube& q) {
        return sums[0].average(q) * sums[1].average(q) * sums[2].average(q);
    };

    std::array<int64_t, 2> lo{INT64_MAX, INT64_MAX}, hi{INT64_MIN, INT64_MIN};
    for (const auto& F_j : F)
        for (int ax = 0; ax < grid.n; ++ax) {
            lo[ax] = std::min(lo[ax], F_j.origin[ax]);
            hi[ax] = std::max(hi[ax], F_j.origin[ax] + F_j.extent[ax]);
        }
    if (grid.n == 1) { lo[1] = 0; hi[1] = 1; }

    // dynamic range of the products over cubes meeting the supports
    double pmin = std::numeric_limits<double>::infinity(), pmax = 0.0;
    for (int lev = grid.S; lev <= grid.L; ++lev)
        for (const auto& q : grid.cubes_at_level(lev, lo, hi)) {
            double p = product(q);
            if (p > 0.0) {
                pmin = std::min(pmin, p);
                pmax = std::max(pmax, p);
            }
        }
    SparseCollection out;
    out.grid = grid;
    out.eta = eta2;
    if (pmax == 0.0) {
        out.major_ratio_min = 1.0;
        return out;
    }
    int kmin = int(std::floor(std::log(pmin) / std::log(C))) - 1;
    int kmax = int(std::ceil(std::log(pmax) / std::log(C))) + 1;
    std::set<std::pair<int, int64_t>> seen;
    auto roots = grid.cubes_at_level(grid.S, lo, hi);
    for (int k = kmin; k <= kmax; ++k) {
        double thr = std::pow(C, k);
        // maximal cubes with product > C^k
        std::vector<DyadicCube> stack(roots.begin(), roots.end());
        while (!stack.empty()) {
            DyadicCube q = stack.back();
            stack.pop_back();
            if (product(q) > thr) {
                if (seen.emplace(q.level, q.corner[0]).second) out.cubes.push_back(q);
                continue;
            }
            if (q.level >= grid.L) continue;
            for (const auto& ch : grid.children(q)) stack.push_back(ch);
        }
    }
    auto v = verify_sparse(out);
    out.major_ratio_min = v.min_ratio;
    if (!v.ok) throw std::logic_error("universal_sparse: result failed sparse verification");
    return out;
}

UniversalDominationReport universal_dominates(const SparseCollection& s,
                                              const SparseCollection& u, const MeshFunction& f1,
                                              const MeshFunction& f2, const MeshFunction& f3) {
    UniversalDominationReport rep;
    rep.lambda_s = lambda_form(s, f1, f2, f3);
    rep.lambda_u = lambda_form(u, f1, f2, f3);
    if (rep.lambda_u == 0.0) {
        rep.violation = rep.lambda_s > 0.0;
        rep.ratio = rep.violation ? std::numeric_limits<double>::infinity() : 0.0;
        return rep;
    }
    rep.ratio = rep.lambda_s / rep.lambda_u;
    return rep;
}

SparseCollection random_sparse_family(const DyadicGrid& grid, double eta, uint64_t seed) {
    SplitMix64 rng(seed);
    SparseCollection out;
    out.grid = grid;
    out.eta = eta;
    // random stopping-tree: each selected cube recurses into a child subset
    // whose total measure stays within (1-eta)|Q|
    std::vector<DyadicCube> stack;
    DyadicCube top;
    top.level = grid.S;
    top.dim = grid.n;
    for (int a = 0; a < grid.n; ++a) top.corner[a] = grid.shift_cells(grid.S, a);
    stack.push_back(top);
    while (!stack.empty()) {
        DyadicCube q = stack.back();
        stack.pop_back();
        out.cubes.push_back(q);
        if (q.level >= grid.L) continue;
        // candidate descendants at a random depth 1..2
        int depth = 1 + int(rng.below(2));
        depth = std::min(depth, grid.L - q.level);
        std::vector<DyadicCube> desc{q};
        for (int d = 0; d < depth; ++d) {
            std::vector<DyadicCube> nxt;
            for (const auto& c : desc)
                for (const auto& ch : grid.children(c)) nxt.push_back(ch);
            desc = std::move(nxt);
        }
        int64_t budget = int64_t(double(cube_cells(grid, q)) * (1.0 - eta));
        // keep a random subset within the measure budget
        for (const auto& c : desc) {
            if (rng.uniform() < 0.4 && cube_cells(grid, c) <= budget) {
                budget -= cube_cells(grid, c);
                if (rng.uniform() < 0.8) stack.push_back(c);
            }
        }
    }
    auto v = verify_sparse(out);
    out.major_ratio_min = v.min_ratio;
    if (!v.ok) throw std::logic_error("random_sparse_family: verification failed");
    return out;
}

int threegrid_count(int n) {
    int c = 1;
    for (int i = 0; i < n; ++i) c *= 3;
    return c;
}

std::optional<ThreeGridCover> threegrid_cover(const RealCube& P) {
    if (!(P.side > 0.0)) throw std::invalid_argument("threegrid_cover: degenerate cube");
    int n = P.dim;
    // finest admissible level (2^-k >= side), down to the guaranteed band
    int kfine = int(std::floor(std::log2(1.0 / P.side)));
    int kguar = int(std::floor(std::log2(1.0 / (3.0 * P.side))));
    static const double shifts[3] = {0.0, 1.0 / 3.0, 2.0 / 3.0};
    for (int k = kfine; k >= kguar - 1; --k) {
        double w = std::ldexp(1.0, -k);
        double sgn = (k % 2 == 0) ? 1.0 : -1.0;
        int total = threegrid_count(n);
        for (int gi = 0; gi < total; ++gi) {
            int digits[2] = {gi % 3, (gi / 3) % 3};
            bool ok = true;
            RealCube R;
            R.dim = n;
            R.side = w;
            for (int ax = 0; ax < n; ++ax) {
                double off = sgn * shifts[digits[ax]] * w;
                double m = std::floor((P.corner[size_t(ax)] - off) / w);
                double lo = m * w + off;
                if (P.corner[size_t(ax)] + P.side > lo + w + 1e-15 * w) {
                    ok = false;
                    break;
                }
                R.corner[size_t(ax)] = lo;
            }
            if (ok) {
                ThreeGridCover c;
                c.grid_index = gi;
                c.level = k;
                c.cube = R;
                return c;
            }
        }
    }
    return std::nullopt;
}

CorollaryReport corollary_check(const BilinearKernel& k, const std::vector<double>& eps_ladder,
                                const MeshFunction& f, const MeshFunction& g,
                                const MeshFunction& h, double eta, const DyadicGrid& grid,
                                const QuadratureSpec& quad, double c_est) {
    CorollaryReport rep;
    rep.eps_ladder = eps_ladder;
    rep.c_est = c_est;
    rep.sparse = build_sparse(f, g, h, eta, grid);
    rep.lambda = lambda_form(rep.sparse, f, g, h);
    for (double eps : eps_ladder) {
        double v = trilinear_pairing(k, TruncationSpec::sharp(eps), f, g, h, quad);
        rep.pairings.push_back(v);
        rep.sup_abs = std::max(rep.sup_abs, std::abs(v));
    }
    double denom = c_est * rep.lambda;
    rep.ratio = denom > 0.0 ? rep.sup_abs / denom : (rep.sup_abs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    return rep;
}

std::string SparseCollection::to_json() const {
    nlohmann::json j;
    j["eta"] = eta;
    j["major_ratio_min"] = major_ratio_min;
    j["grid"] = nlohmann::json::parse(grid.to_json());
    auto arr = nlohmann::json::array();
    for (const auto& q : cubes) {
        nlohmann::json e;
        e["level"] = q.level;
        auto c = nlohmann::json::array();
        for (int a = 0; a < q.dim; ++a) c.push_back(q.corner[a]);
        e["corner"] = c;
        arr.push_back(e);
    }
    j["cubes"] = arr;
    return j.dump();
}

SparseCollection SparseCollection::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    SparseCollection s;
    s.eta = j.at("eta").get<double>();
    s.major_ratio_min = j.value("major_ratio_min", 0.0);
    s.grid = DyadicGrid::from_json(j.at("grid").dump());
    for (const auto& e : j.at("cubes")) {
        DyadicCube q;
        q.level = e.at("level").get<int>();
        auto c = e.at("corner");
        q.dim = int(c.size());
        for (int a = 0; a < q.dim && a < 2; ++a) q.corner[a] = c[size_t(a)].get<int64_t>();
        s.cubes.push_back(q);
    }
    return s;
}

} // namespace dyad
