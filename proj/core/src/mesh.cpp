#include "dyad/mesh.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "dyad/rng.hpp"

namespace dyad {

static int64_t floor_div(int64_t a, int64_t b) {
    int64_t q = a / b, r = a % b;
    return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

MeshFunction MeshFunction::zeros(int n, int L, std::array<int64_t, 2> origin,
                                 std::array<int64_t, 2> extent) {
    if (n < 1 || n > 2) throw std::invalid_argument("MeshFunction: n must be 1 or 2");
    MeshFunction f;
    f.n = n;
    f.L = L;
    f.origin = origin;
    f.extent = extent;
    if (n == 1) f.extent[1] = 1;
    f.values.assign(size_t(f.extent[0] * f.extent[1]), 0.0);
    return f;
}

MeshFunction MeshFunction::zeros_unit_box(int n, int L) {
    int64_t m = int64_t(1) << L;
    return zeros(n, L, {0, 0}, {m, n == 2 ? m : 1});
}

double MeshFunction::cell_volume() const {
    double h = cell_width();
    return n == 2 ? h * h : h;
}

MeshFunction& MeshFunction::axpy(double a, const MeshFunction& other) {
    if (other.n != n || other.L != L || other.origin != origin || other.extent != extent)
        throw std::invalid_argument("axpy: mesh boxes differ");
    for (size_t i = 0; i < values.size(); ++i) values[i] += a * other.values[i];
    return *this;
}

MeshFunction& MeshFunction::scale(double a) {
    for (auto& v : values) v *= a;
    return *this;
}

double MeshFunction::sum_values() const {
    KahanSum s;
    for (double v : values) s.add(v);
    return s.value();
}

double MeshFunction::integral() const { return sum_values() * cell_volume(); }

static void check_cube(const MeshFunction& f, const DyadicCube& q, const char* who) {
    if (q.level > f.L) throw std::invalid_argument(std::string(who) + ": cube level below mesh resolution");
    if (q.dim != f.n) throw std::invalid_argument(std::string(who) + ": cube dimension mismatch");
}

MeshFunction indicator(const DyadicCube& q, int L) {
    if (q.level > L) throw std::invalid_argument("indicator: cube level below mesh resolution");
    int64_t w = int64_t(1) << (L - q.level);
    MeshFunction f = MeshFunction::zeros(q.dim, L, q.corner, {w, q.dim == 2 ? w : 1});
    for (auto& v : f.values) v = 1.0;
    return f;
}

MeshFunction haar_function(const HaarIndex& idx, int L) {
    const DyadicCube& q = idx.cube;
    if (idx.eta != 0 && q.level >= L)
        throw std::invalid_argument("haar_function: cancellative Haar needs level < L");
    MeshFunction f = indicator(q, L);
    double s = cube_sidelength(q);
    double norm = std::pow(s, -0.5 * q.dim); // |I|^{-1/2}
    int64_t w = int64_t(1) << (L - q.level);
    int64_t half = w / 2;
    for (int64_t i0 = 0; i0 < w; ++i0) {
        int64_t j1max = q.dim == 2 ? w : 1;
        for (int64_t i1 = 0; i1 < j1max; ++i1) {
            double sign = 1.0;
            if (idx.eta & 1) sign *= (i0 < half) ? 1.0 : -1.0;
            if (q.dim == 2 && (idx.eta & 2)) sign *= (i1 < half) ? 1.0 : -1.0;
            f.values[f.index(q.corner[0] + i0, q.dim == 2 ? q.corner[1] + i1 : 0)] = sign * norm;
        }
    }
    return f;
}

double integral_over(const MeshFunction& f, const DyadicCube& q) {
    check_cube(f, q, "integral_over");
    int64_t w = int64_t(1) << (f.L - q.level);
    int64_t lo0 = std::max(q.corner[0], f.origin[0]);
    int64_t hi0 = std::min(q.corner[0] + w, f.origin[0] + f.extent[0]);
    KahanSum s;
    if (f.n == 1) {
        for (int64_t i = lo0; i < hi0; ++i) s.add(f.values[f.index(i, 0)]);
    } else {
        int64_t lo1 = std::max(q.corner[1], f.origin[1]);
        int64_t hi1 = std::min(q.corner[1] + w, f.origin[1] + f.extent[1]);
        for (int64_t i = lo0; i < hi0; ++i)
            for (int64_t j = lo1; j < hi1; ++j) s.add(f.values[f.index(i, j)]);
    }
    return s.value() * f.cell_volume();
}

double average(const MeshFunction& f, const DyadicCube& q) {
    return integral_over(f, q) / (cube_volume(q));
}

double haar_coeff(const MeshFunction& f, const HaarIndex& idx) {
    const DyadicCube& q = idx.cube;
    check_cube(f, q, "haar_coeff");
    if (idx.eta != 0 && q.level >= f.L)
        throw std::invalid_argument("haar_coeff: cancellative Haar needs level < L");
    double s = cube_sidelength(q);
    double norm = std::pow(s, -0.5 * q.dim);
    if (idx.eta == 0) return norm * integral_over(f, q);
    int64_t half = int64_t(1) << (f.L - q.level - 1);
    KahanSum acc;
    int combos = 1 << q.dim;
    for (int m = 0; m < combos; ++m) {
        DyadicCube child;
        child.level = q.level + 1;
        child.dim = q.dim;
        double sign = 1.0;
        for (int a = 0; a < q.dim; ++a) {
            bool upper = (m >> a) & 1;
            child.corner[a] = q.corner[a] + (upper ? half : 0);
            if (idx.eta & (1u << a)) sign *= upper ? -1.0 : 1.0;
        }
        acc.add(sign * integral_over(f, child));
    }
    return norm * acc.value();
}

MeshFunction martingale_diff(const MeshFunction& f, const DyadicCube& I) {
    check_cube(f, I, "martingale_diff");
    if (I.level >= f.L) throw std::invalid_argument("martingale_diff: cube has no mesh children");
    int64_t w = int64_t(1) << (f.L - I.level);
    int64_t half = w / 2;
    MeshFunction out = MeshFunction::zeros(f.n, f.L, I.corner, {w, f.n == 2 ? w : 1});
    double avg_I = average(f, I);
    int combos = 1 << f.n;
    for (int m = 0; m < combos; ++m) {
        DyadicCube child;
        child.level = I.level + 1;
        child.dim = f.n;
        for (int a = 0; a < f.n; ++a) child.corner[a] = I.corner[a] + (((m >> a) & 1) ? half : 0);
        double v = average(f, child) - avg_I;
        for (int64_t i0 = 0; i0 < half; ++i0)
            for (int64_t i1 = 0; i1 < (f.n == 2 ? half : 1); ++i1)
                out.ref(child.corner[0] + i0, f.n == 2 ? child.corner[1] + i1 : 0) = v;
    }
    return out;
}

// snap a cell box outward to level-k cube boundaries of the grid
static void snapped_box(const MeshFunction& f, const DyadicGrid& grid, int k,
                        std::array<int64_t, 2>& lo, std::array<int64_t, 2>& hi) {
    int64_t w = grid.cells_per_axis(k);
    for (int a = 0; a < f.n; ++a) {
        int64_t s = grid.shift_cells(k, a);
        lo[a] = floor_div(f.origin[a] - s, w) * w + s;
        hi[a] = (floor_div(f.origin[a] + f.extent[a] - 1 - s, w) + 1) * w + s;
    }
    if (f.n == 1) { lo[1] = 0; hi[1] = 1; }
}

MeshFunction project_scale(const MeshFunction& f, const DyadicGrid& grid, int k) {
    if (k < grid.S || k > grid.L) throw std::out_of_range("project_scale: level outside scale range");
    std::array<int64_t, 2> lo, hi;
    snapped_box(f, grid, k, lo, hi);
    MeshFunction out = MeshFunction::zeros(f.n, f.L, lo, {hi[0] - lo[0], f.n == 2 ? hi[1] - lo[1] : 1});
    int64_t w = grid.cells_per_axis(k);
    for (int64_t c0 = lo[0]; c0 < hi[0]; c0 += w) {
        for (int64_t c1 = lo[1]; c1 < (f.n == 2 ? hi[1] : lo[1] + 1); c1 += (f.n == 2 ? w : 1)) {
            DyadicCube q;
            q.level = k;
            q.dim = f.n;
            q.corner = {c0, f.n == 2 ? c1 : 0};
            double v = average(f, q);
            if (v == 0.0) continue;
            for (int64_t i0 = 0; i0 < w; ++i0)
                for (int64_t i1 = 0; i1 < (f.n == 2 ? w : 1); ++i1)
                    out.ref(c0 + i0, f.n == 2 ? c1 + i1 : 0) = v;
        }
    }
    return out;
}

MeshFunction dyadic_maximal(const MeshFunction& f, const DyadicGrid& grid) {
    std::array<int64_t, 2> lo, hi;
    snapped_box(f, grid, grid.S, lo, hi);
    MeshFunction out = MeshFunction::zeros(f.n, f.L, lo, {hi[0] - lo[0], f.n == 2 ? hi[1] - lo[1] : 1});
    for (int k = grid.S; k <= grid.L; ++k) {
        int64_t w = grid.cells_per_axis(k);
        std::array<int64_t, 2> klo, khi;
        snapped_box(f, grid, k, klo, khi);
        for (int64_t c0 = klo[0]; c0 < khi[0]; c0 += w) {
            for (int64_t c1 = klo[1]; c1 < (f.n == 2 ? khi[1] : klo[1] + 1); c1 += (f.n == 2 ? w : 1)) {
                DyadicCube q;
                q.level = k;
                q.dim = f.n;
                q.corner = {c0, f.n == 2 ? c1 : 0};
                // average of |f|
                double v = 0.0;
                {
                    int64_t a0 = std::max(c0, f.origin[0]), b0 = std::min(c0 + w, f.origin[0] + f.extent[0]);
                    KahanSum s;
                    if (f.n == 1) {
                        for (int64_t i = a0; i < b0; ++i) s.add(std::abs(f.values[f.index(i, 0)]));
                    } else {
                        int64_t a1 = std::max(c1, f.origin[1]), b1 = std::min(c1 + w, f.origin[1] + f.extent[1]);
                        for (int64_t i = a0; i < b0; ++i)
                            for (int64_t j = a1; j < b1; ++j) s.add(std::abs(f.values[f.index(i, j)]));
                    }
                    v = s.value() * f.cell_volume() / cube_volume(q);
                }
                if (v == 0.0) continue;
                for (int64_t i0 = std::max(c0, out.origin[0]); i0 < std::min(c0 + w, out.origin[0] + out.extent[0]); ++i0) {
                    if (f.n == 1) {
                        double& r = out.ref(i0, 0);
                        if (v > r) r = v;
                    } else {
                        for (int64_t i1 = std::max(c1, out.origin[1]); i1 < std::min(c1 + w, out.origin[1] + out.extent[1]); ++i1) {
                            double& r = out.ref(i0, i1);
                            if (v > r) r = v;
                        }
                    }
                }
            }
        }
    }
    return out;
}

MeshFunction bilinear_maximal_ball(const MeshFunction& f, const MeshFunction& g) {
    if (f.n != 1 || g.n != 1) throw std::invalid_argument("bilinear_maximal_ball: n = 1 only");
    if (f.L != g.L) throw std::invalid_argument("bilinear_maximal_ball: mesh levels differ");
    int64_t lo = std::min(f.origin[0], g.origin[0]);
    int64_t hi = std::max(f.origin[0] + f.extent[0], g.origin[0] + g.extent[0]);
    MeshFunction out = MeshFunction::zeros(1, f.L, {lo, 0}, {hi - lo, 1});
    // prefix sums of |f|, |g| over [lo, hi)
    int64_t m = hi - lo;
    std::vector<double> pf(size_t(m + 1), 0.0), pg(size_t(m + 1), 0.0);
    for (int64_t i = 0; i < m; ++i) {
        pf[size_t(i + 1)] = pf[size_t(i)] + std::abs(f.at(lo + i));
        pg[size_t(i + 1)] = pg[size_t(i)] + std::abs(g.at(lo + i));
    }
    double h = f.cell_width();
    int ladder_steps = 0;
    while ((int64_t(1) << ladder_steps) < 2 * m) ++ladder_steps;
    for (int64_t i = 0; i < m; ++i) {
        double x = (double(lo + i) + 0.5) * h; // cell center
        double best = 0.0;
        for (int s = 0; s <= ladder_steps; ++s) {
            double r = std::ldexp(h, s); // 2^s cells
            int64_t a = int64_t(std::floor((x - r) / h)) - lo;
            int64_t b = int64_t(std::ceil((x + r) / h)) - lo;
            a = std::max<int64_t>(a, 0);
            b = std::min<int64_t>(b, m);
            if (a >= b) continue;
            // averages over the full ball measure 2r, zero-extended
            double af = (pf[size_t(b)] - pf[size_t(a)]) * h / (2.0 * r);
            double ag = (pg[size_t(b)] - pg[size_t(a)]) * h / (2.0 * r);
            best = std::max(best, af * ag);
        }
        out.values[size_t(i)] = best;
    }
    return out;
}

MeshFunction bilinear_maximal_dyadic(const MeshFunction& f, const MeshFunction& g,
                                     const DyadicGrid& grid) {
    MeshFunction mf = dyadic_maximal(f, grid);
    MeshFunction mg = dyadic_maximal(g, grid);
    MeshFunction out = mf;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] *= mg.values[i];
    return out;
}

double lp_norm(const MeshFunction& f, double p) {
    if (p == std::numeric_limits<double>::infinity()) {
        double m = 0.0;
        for (double v : f.values) m = std::max(m, std::abs(v));
        return m;
    }
    if (!(p > 0.0)) throw std::invalid_argument("lp_norm: p must be positive or inf");
    KahanSum s;
    for (double v : f.values) s.add(std::pow(std::abs(v), p));
    return std::pow(s.value() * f.cell_volume(), 1.0 / p);
}

MeshFunction square_function(const MeshFunction& f, const DyadicGrid& grid) {
    std::array<int64_t, 2> lo, hi;
    snapped_box(f, grid, grid.S, lo, hi);
    MeshFunction acc = MeshFunction::zeros(f.n, f.L, lo, {hi[0] - lo[0], f.n == 2 ? hi[1] - lo[1] : 1});
    // sum_{levels k < L} |E_{k+1} f - E_k f|^2 cellwise
    MeshFunction prev = project_scale(f, grid, grid.S);
    for (int k = grid.S; k < grid.L; ++k) {
        MeshFunction next = project_scale(f, grid, k + 1);
        for (int64_t i0 = acc.origin[0]; i0 < acc.origin[0] + acc.extent[0]; ++i0) {
            for (int64_t i1 = acc.origin[1]; i1 < acc.origin[1] + (f.n == 2 ? acc.extent[1] : 1); ++i1) {
                double d = next.at(i0, i1) - prev.at(i0, i1);
                acc.ref(i0, f.n == 2 ? i1 : 0) += d * d;
            }
        }
        prev = std::move(next);
    }
    for (auto& v : acc.values) v = std::sqrt(v);
    return acc;
}

CubeSums cube_sums(const MeshFunction& f, const DyadicGrid& grid) {
    if (f.L != grid.L) throw std::invalid_argument("cube_sums: mesh level differs from grid L");
    CubeSums cs;
    cs.grid = &grid;
    cs.n = f.n;
    cs.cell_volume = f.cell_volume();
    cs.levels.resize(size_t(grid.L - grid.S + 1));
    for (int k = grid.L; k >= grid.S; --k) {
        auto& lev = cs.levels[size_t(k - grid.S)];
        lev.w = grid.cells_per_axis(k);
        for (int a = 0; a < f.n; ++a) {
            lev.shift[a] = grid.shift_cells(k, a);
            lev.first[a] = floor_div(f.origin[a] - lev.shift[a], lev.w);
            int64_t last = floor_div(f.origin[a] + f.extent[a] - 1 - lev.shift[a], lev.w);
            lev.count[a] = last - lev.first[a] + 1;
        }
        if (f.n == 1) { lev.first[1] = 0; lev.count[1] = 1; lev.shift[1] = 0; }
        lev.sums.assign(size_t(lev.count[0] * lev.count[1]), 0.0);
        if (k == grid.L) {
            for (int64_t i0 = 0; i0 < f.extent[0]; ++i0)
                for (int64_t i1 = 0; i1 < (f.n == 2 ? f.extent[1] : 1); ++i1) {
                    int64_t c0 = f.origin[0] + i0 - lev.first[0];
                    int64_t c1 = (f.n == 2 ? f.origin[1] + i1 : 0) - lev.first[1];
                    lev.sums[size_t(c0 * lev.count[1] + c1)] += f.values[f.index(f.origin[0] + i0, f.n == 2 ? f.origin[1] + i1 : 0)];
                }
        } else {
            const auto& fine = cs.levels[size_t(k + 1 - grid.S)];
            for (int64_t j0 = 0; j0 < fine.count[0]; ++j0)
                for (int64_t j1 = 0; j1 < fine.count[1]; ++j1) {
                    // child cube corner -> parent cube index
                    int64_t cc0 = (fine.first[0] + j0) * fine.w + fine.shift[0];
                    int64_t cc1 = f.n == 2 ? (fine.first[1] + j1) * fine.w + fine.shift[1] : 0;
                    int64_t p0 = floor_div(cc0 - lev.shift[0], lev.w) - lev.first[0];
                    int64_t p1 = f.n == 2 ? floor_div(cc1 - lev.shift[1], lev.w) - lev.first[1] : 0;
                    if (p0 < 0 || p0 >= lev.count[0] || p1 < 0 || p1 >= lev.count[1]) continue;
                    lev.sums[size_t(p0 * lev.count[1] + p1)] += fine.sums[size_t(j0 * fine.count[1] + j1)];
                }
        }
    }
    return cs;
}

double CubeSums::sum(const DyadicCube& q) const {
    const auto& lev = levels.at(size_t(q.level - grid->S));
    int64_t i0 = floor_div(q.corner[0] - lev.shift[0], lev.w) - lev.first[0];
    int64_t i1 = n == 2 ? floor_div(q.corner[1] - lev.shift[1], lev.w) - lev.first[1] : 0;
    if (i0 < 0 || i0 >= lev.count[0] || i1 < 0 || i1 >= lev.count[1]) return 0.0;
    return lev.sums[size_t(i0 * lev.count[1] + i1)];
}

double CubeSums::average(const DyadicCube& q) const {
    double cells = std::pow(double(grid->cells_per_axis(q.level)), n);
    return sum(q) / cells;
}

double CubeSums::haar(const DyadicCube& q, uint8_t eta) const {
    double s = cube_sidelength(q);
    double norm = std::pow(s, -0.5 * n);
    if (eta == 0) return norm * sum(q) * cell_volume;
    int64_t half = grid->cells_per_axis(q.level + 1);
    double acc = 0.0;
    int combos = 1 << n;
    for (int m = 0; m < combos; ++m) {
        DyadicCube child;
        child.level = q.level + 1;
        child.dim = n;
        double sign = 1.0;
        for (int a = 0; a < n; ++a) {
            bool upper = (m >> a) & 1;
            child.corner[a] = q.corner[a] + (upper ? half : 0);
            if (eta & (1u << a)) sign *= upper ? -1.0 : 1.0;
        }
        acc += sign * sum(child);
    }
    return norm * acc * cell_volume;
}

MeshFunction restrict_to(const MeshFunction& f, const DyadicCube& q) {
    int64_t w = int64_t(1) << (f.L - q.level);
    MeshFunction out = MeshFunction::zeros(f.n, f.L, q.corner, {w, f.n == 2 ? w : 1});
    for (int64_t i0 = 0; i0 < w; ++i0)
        for (int64_t i1 = 0; i1 < (f.n == 2 ? w : 1); ++i1)
            out.ref(q.corner[0] + i0, f.n == 2 ? q.corner[1] + i1 : 0) =
                f.at(q.corner[0] + i0, f.n == 2 ? q.corner[1] + i1 : 0);
    return out;
}

MeshFunction rebox(const MeshFunction& f, std::array<int64_t, 2> origin,
                   std::array<int64_t, 2> extent) {
    MeshFunction out = MeshFunction::zeros(f.n, f.L, origin, extent);
    for (int64_t i0 = out.origin[0]; i0 < out.origin[0] + out.extent[0]; ++i0)
        for (int64_t i1 = out.origin[1]; i1 < out.origin[1] + (f.n == 2 ? out.extent[1] : 1); ++i1)
            out.ref(i0, f.n == 2 ? i1 : 0) = f.at(i0, f.n == 2 ? i1 : 0);
    return out;
}

MeshFunction mesh_lincomb(double a, const MeshFunction& x, double b, const MeshFunction& y) {
    if (x.n != y.n || x.L != y.L) throw std::invalid_argument("mesh_lincomb: incompatible meshes");
    std::array<int64_t, 2> lo{std::min(x.origin[0], y.origin[0]), std::min(x.origin[1], y.origin[1])};
    std::array<int64_t, 2> hi{std::max(x.origin[0] + x.extent[0], y.origin[0] + y.extent[0]),
                              std::max(x.origin[1] + x.extent[1], y.origin[1] + y.extent[1])};
    MeshFunction out = MeshFunction::zeros(x.n, x.L, lo, {hi[0] - lo[0], x.n == 2 ? hi[1] - lo[1] : 1});
    for (int64_t i0 = lo[0]; i0 < hi[0]; ++i0)
        for (int64_t i1 = lo[1]; i1 < (x.n == 2 ? hi[1] : lo[1] + 1); ++i1)
            out.ref(i0, x.n == 2 ? i1 : 0) = a * x.at(i0, x.n == 2 ? i1 : 0) + b * y.at(i0, x.n == 2 ? i1 : 0);
    return out;
}

void write_mesh(const MeshFunction& f, const std::string& path_base) {
    nlohmann::json j;
    j["n"] = f.n;
    j["L"] = f.L;
    j["origin"] = {f.origin[0], f.origin[1]};
    j["extent"] = {f.extent[0], f.extent[1]};
    std::ofstream hdr(path_base + ".json");
    hdr << j.dump(2) << "\n";
    std::ofstream bin(path_base + ".f64", std::ios::binary);
    // assumes a little-endian host (x86/aarch64)
    bin.write(reinterpret_cast<const char*>(f.values.data()),
              std::streamsize(f.values.size() * sizeof(double)));
}

MeshFunction read_mesh(const std::string& path_base) {
    std::ifstream hdr(path_base + ".json");
    if (!hdr) throw std::runtime_error("read_mesh: missing header " + path_base + ".json");
    nlohmann::json j;
    hdr >> j;
    MeshFunction f = MeshFunction::zeros(j.at("n").get<int>(), j.at("L").get<int>(),
                                         {j.at("origin")[0].get<int64_t>(), j.at("origin")[1].get<int64_t>()},
                                         {j.at("extent")[0].get<int64_t>(), j.at("extent")[1].get<int64_t>()});
    std::ifstream bin(path_base + ".f64", std::ios::binary);
    if (!bin) throw std::runtime_error("read_mesh: missing payload " + path_base + ".f64");
    bin.read(reinterpret_cast<char*>(f.values.data()), std::streamsize(f.values.size() * sizeof(double)));
    if (size_t(bin.gcount()) != f.values.size() * sizeof(double))
        throw std::runtime_error("read_mesh: payload size mismatch");
    return f;
}

void write_mesh_csv(const MeshFunction& f, const std::string& path) {
    std::FILE* out = std::fopen(path.c_str(), "w");
    if (!out) throw std::runtime_error("write_mesh_csv: cannot open " + path);
    std::fprintf(out, f.n == 1 ? "x,value\n" : "x,y,value\n");
    double h = f.cell_width();
    for (int64_t i0 = 0; i0 < f.extent[0]; ++i0) {
        for (int64_t i1 = 0; i1 < (f.n == 2 ? f.extent[1] : 1); ++i1) {
            double x = double(f.origin[0] + i0) * h;
            if (f.n == 1)
                std::fprintf(out, "%.17g,%.17g\n", x, f.values[f.index(f.origin[0] + i0, 0)]);
            else
                std::fprintf(out, "%.17g,%.17g,%.17g\n", x, double(f.origin[1] + i1) * h,
                             f.values[f.index(f.origin[0] + i0, f.origin[1] + i1)]);
        }
    }
    std::fclose(out);
}

} // namespace dyad
