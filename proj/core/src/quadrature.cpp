#include "dyad/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "dyad/rng.hpp"

namespace dyad {

const GaussRule& gauss_rule(int order) {
    static std::map<int, GaussRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it != cache.end()) return it->second;
    if (order < 1 || order > 64) throw std::invalid_argument("gauss_rule: order out of range");
    GaussRule r;
    r.nodes.resize(size_t(order));
    r.weights.resize(size_t(order));
    // Newton iteration on Legendre P_n over [-1,1], then map to [0,1]
    for (int i = 0; i < (order + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
        double p0 = 0, p1 = 0;
        for (int it2 = 0; it2 < 100; ++it2) {
            p0 = 1.0;
            p1 = 0.0;
            for (int j = 0; j < order; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            double dp = order * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        p0 = 1.0;
        p1 = 0.0;
        for (int j = 0; j < order; ++j) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
        }
        double dp = order * (x * p0 - p1) / (x * x - 1.0);
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[size_t(i)] = 0.5 * (1.0 - x); // descending roots -> ascending nodes
        r.weights[size_t(i)] = 0.5 * w;
        r.nodes[size_t(order - 1 - i)] = 0.5 * (1.0 + x);
        r.weights[size_t(order - 1 - i)] = 0.5 * w;
    }
    auto [ins, ok] = cache.emplace(order, std::move(r));
    return ins->second;
}

namespace {

// s = |P-Q| + |P-R| bounds over a cell triple, in cell units, for the
// evaluator's permutation
struct SBounds {
    double lo = 0, hi = 0;     // l1 separation
    double mlo = 0, mhi = 0;   // max separation (sharp truncation geometry)
};

SBounds s_bounds(int perm, int64_t a, int64_t b, int64_t c) {
    auto absrange = [](int64_t d, double& lo, double& hi) {
        double ad = double(d < 0 ? -d : d);
        lo = std::max(0.0, ad - 1.0);
        hi = ad + 1.0;
    };
    int64_t d1, d2;
    if (perm == 1) { d1 = b - a; d2 = b - c; }      // (y,x),(y,z)
    else if (perm == 2) { d1 = c - b; d2 = c - a; } // (z,y),(z,x)
    else { d1 = a - b; d2 = a - c; }                // (x,y),(x,z)
    SBounds s;
    double l1, h1, l2, h2;
    absrange(d1, l1, h1);
    absrange(d2, l2, h2);
    s.lo = l1 + l2;
    s.hi = h1 + h2;
    s.mlo = std::max(l1, l2);
    s.mhi = std::max(h1, h2);
    return s;
}

// does the truncation make the whole cell triple vanish?
bool prune_zero(const TruncationSpec& t, const SBounds& s, double h) {
    switch (t.kind) {
        case TruncationKind::None:
            return false;
        case TruncationKind::Sharp:
            return s.mhi * h <= t.eps; // entirely inside the removed region
        case TruncationKind::Smooth:
            return s.hi * h <= 0.5 * t.eps;
        case TruncationKind::SmoothBand:
            return t.eps2 <= t.eps || s.hi * h <= 0.5 * t.eps || s.lo * h >= t.eps2;
    }
    return false;
}

bool needs_refine(const TruncationSpec& t, const SBounds& s, double h, int near_factor) {
    if (s.lo <= double(near_factor)) return true; // near the diagonal
    auto crosses = [&](double r) { return s.lo * h < r && s.hi * h > r; };
    switch (t.kind) {
        case TruncationKind::None:
            return false;
        case TruncationKind::Sharp:
            return s.mlo * h < t.eps && s.mhi * h > t.eps;
        case TruncationKind::Smooth:
            return crosses(0.5 * t.eps) || crosses(t.eps);
        case TruncationKind::SmoothBand:
            return crosses(0.5 * t.eps) || crosses(t.eps) || crosses(0.5 * t.eps2) ||
                   crosses(t.eps2);
    }
    return false;
}

// Tensor Gauss over the triple of sub-cells [x0,x0+w] x [y0,..] x [z0,..].
// The x-integral runs innermost and is split at the kink planes x = y and
// x = z (kernels built from |x-y|, |x-z| are only piecewise smooth there).
double gauss_cell(const TruncatedEvaluator& ev, const GaussRule& g, double x0, double y0,
                  double z0, double w) {
    const size_t m = g.nodes.size();
    double acc = 0.0;
    for (size_t j = 0; j < m; ++j) {
        double y = y0 + w * g.nodes[j];
        for (size_t k = 0; k < m; ++k) {
            double z = z0 + w * g.nodes[k];
            double wjk = g.weights[j] * g.weights[k];
            double cuts[2];
            int ncuts = 0;
            if (y > x0 && y < x0 + w) cuts[ncuts++] = y;
            if (z > x0 && z < x0 + w && z != y) cuts[ncuts++] = z;
            if (ncuts == 2 && cuts[0] > cuts[1]) std::swap(cuts[0], cuts[1]);
            double inner = 0.0;
            double seg0 = x0;
            for (int c = 0; c <= ncuts; ++c) {
                double seg1 = c < ncuts ? cuts[c] : x0 + w;
                double sw = seg1 - seg0;
                if (sw > 0.0) {
                    for (size_t i = 0; i < m; ++i)
                        inner += g.weights[i] * sw * ev(seg0 + sw * g.nodes[i], y, z);
                }
                seg0 = seg1;
            }
            acc += wjk * inner;
        }
    }
    return acc * w * w;
}

struct EntryResult {
    double value = 0.0;
    bool refined = false;
    bool cut = false;
    double residual = 0.0;
};

EntryResult compute_entry(const TruncatedEvaluator& ev, const QuadratureSpec& quad, double h,
                          int64_t a, int64_t b, int64_t c) {
    EntryResult r;
    SBounds s = s_bounds(ev.permutation, a, b, c);
    if (prune_zero(ev.trunc, s, h)) return r;
    const GaussRule& g = gauss_rule(quad.order);
    double x0 = double(a) * h, y0 = double(b) * h, z0 = double(c) * h;
    if (!needs_refine(ev.trunc, s, h, quad.near_factor)) {
        r.value = gauss_cell(ev, g, x0, y0, z0, h);
        return r;
    }
    r.refined = true;
    int nf = std::max(1, quad.near_factor);
    double hs = h / nf;
    KahanSum acc;
    for (int i = 0; i < nf; ++i)
        for (int j = 0; j < nf; ++j)
            for (int k = 0; k < nf; ++k) {
                double sx = x0 + i * hs, sy = y0 + j * hs, sz = z0 + k * hs;
                double v = gauss_cell(ev, g, sx, sy, sz, hs);
                acc.add(v);
                if (ev.trunc.kind == TruncationKind::Sharp) {
                    // does the sharp boundary cross this sub-triple?
                    double mlo = std::max(std::max(0.0, std::abs(sx - sy) - hs),
                                          std::max(0.0, std::abs(sx - sz) - hs));
                    double mhi = std::max(std::abs(sx - sy) + hs, std::abs(sx - sz) + hs);
                    if (ev.permutation == 1) {
                        mlo = std::max(std::max(0.0, std::abs(sy - sx) - hs),
                                       std::max(0.0, std::abs(sy - sz) - hs));
                        mhi = std::max(std::abs(sy - sx) + hs, std::abs(sy - sz) + hs);
                    } else if (ev.permutation == 2) {
                        mlo = std::max(std::max(0.0, std::abs(sz - sy) - hs),
                                       std::max(0.0, std::abs(sz - sx) - hs));
                        mhi = std::max(std::abs(sz - sy) + hs, std::abs(sz - sx) + hs);
                    }
                    if (mlo < ev.trunc.eps && mhi > ev.trunc.eps) {
                        r.cut = true;
                        r.residual += std::abs(v);
                    }
                }
            }
    r.value = acc.value();
    return r;
}

// y-interval splits for the tail integrals: cutoff kink radii plus dyadic
// padding, solved per permutation (s is piecewise linear in each variable)
void add_radius_splits(int perm, double x, double z, double r, std::vector<double>& out) {
    double C = std::abs(x - z);
    if (perm == 1) {
        if (r >= C) {
            out.push_back(std::min(x, z) - 0.5 * (r - C));
            out.push_back(std::max(x, z) + 0.5 * (r - C));
        }
    } else {
        double center = (perm == 2) ? z : x;
        double rest = (perm == 2) ? std::abs(z - x) : C;
        if (r >= rest) {
            out.push_back(center - (r - rest));
            out.push_back(center + (r - rest));
        }
    }
}

std::vector<double> tail_radii(const TruncationSpec& t) {
    std::vector<double> radii{0.5 * t.eps, t.eps};
    if (t.kind == TruncationKind::SmoothBand) {
        for (double r = 2.0 * t.eps; r < t.eps2; r *= 2.0) radii.push_back(r);
        radii.push_back(0.5 * t.eps2);
        radii.push_back(t.eps2);
    }
    return radii;
}

// integrate ev over y in [ylo,yhi] \ [blo,bhi] for fixed x,z (1-D), with
// panels split at the cutoff kinks
double line_integral_outside(const TruncatedEvaluator& ev, double x, double z, double ylo,
                             double yhi, double blo, double bhi, const std::vector<double>& radii,
                             const GaussRule& g, bool var_is_y) {
    std::vector<std::pair<double, double>> segs;
    if (ylo < blo) segs.emplace_back(ylo, std::min(yhi, blo));
    if (yhi > bhi) segs.emplace_back(std::max(ylo, bhi), yhi);
    double total = 0.0;
    for (auto [s0, s1] : segs) {
        if (s1 <= s0) continue;
        std::vector<double> pts{s0, s1, x, z};
        for (double r : radii) {
            if (var_is_y)
                add_radius_splits(ev.permutation, x, z, r, pts);
            else {
                // splитting in z for fixed (x,y): roles of the helper flip
                if (ev.permutation == 0) {
                    double rest = std::abs(x - z); // here z holds the fixed y
                    (void)rest;
                    double c = x, other = std::abs(x - z);
                    if (r >= other) {
                        pts.push_back(c - (r - other));
                        pts.push_back(c + (r - other));
                    }
                } else if (ev.permutation == 1) {
                    double c = z, other = std::abs(z - x); // z holds y; s = |y-x|+|y-zvar|
                    if (r >= other) {
                        pts.push_back(c - (r - other));
                        pts.push_back(c + (r - other));
                    }
                } else {
                    // perm2: s = |zvar-y| + |zvar-x| is piecewise linear in zvar with
                    // kinks at y and x; solve on the flanks
                    double lo2 = std::min(x, z), hi2 = std::max(x, z), base = hi2 - lo2;
                    if (r >= base) {
                        pts.push_back(lo2 - 0.5 * (r - base));
                        pts.push_back(hi2 + 0.5 * (r - base));
                    }
                }
            }
        }
        std::sort(pts.begin(), pts.end());
        for (size_t i = 0; i + 1 < pts.size(); ++i) {
            double p0 = std::max(pts[i], s0), p1 = std::min(pts[i + 1], s1);
            if (p1 <= p0) continue;
            double w = p1 - p0, acc = 0.0;
            for (size_t q = 0; q < g.nodes.size(); ++q) {
                double t = p0 + w * g.nodes[q];
                acc += g.weights[q] * (var_is_y ? ev(x, t, z) : ev(x, z, t));
            }
            total += acc * w;
        }
    }
    return total;
}

} // namespace

PairingTable build_pairing_table(const TruncatedEvaluator& ev, int L, CellRange x, CellRange y,
                                 CellRange z, const QuadratureSpec& quad, bool with_tails,
                                 bool force_dense) {
    if (ev.kernel.n != 1)
        throw std::invalid_argument("build_pairing_table: kernel quadrature is n = 1 only");
    double h = std::ldexp(1.0, -L);
    if (ev.trunc.kind == TruncationKind::Sharp && ev.trunc.eps < 2.0 * h)
        throw QuadratureError("sharp truncation boundary below mesh resolution (eps < 2*2^-L)");

    PairingTable t;
    t.ev = ev;
    t.quad = quad;
    t.L = L;
    t.xr = x;
    t.yr = y;
    t.zr = z;
    t.ti = ev.translation_invariant() && !force_dense;

    if (t.ti) {
        t.dy0 = y.lo - (x.hi - 1);
        t.dz0 = z.lo - (x.hi - 1);
        t.Ny = (y.hi - y.lo) + (x.hi - x.lo) - 1;
        t.Nz = (z.hi - z.lo) + (x.hi - x.lo) - 1;
        t.w3d.assign(size_t(t.Ny * t.Nz), 0.0);
        for (int64_t iy = 0; iy < t.Ny; ++iy) {
            int64_t dy = t.dy0 + iy;
            for (int64_t iz = 0; iz < t.Nz; ++iz) {
                int64_t dz = t.dz0 + iz;
                EntryResult r = compute_entry(ev, quad, h, 0, dy, dz);
                t.w3d[size_t(iy * t.Nz + iz)] = r.value;
                ++t.report.entries;
                if (r.refined) ++t.report.refined;
                if (r.cut) {
                    ++t.report.cut;
                    t.report.residual_estimate += r.residual / std::max(1, quad.near_factor);
                }
            }
        }
    } else {
        int64_t nx = x.count(), ny = y.count(), nz = z.count();
        t.w3.assign(size_t(nx * ny * nz), 0.0);
        for (int64_t a = x.lo; a < x.hi; ++a)
            for (int64_t b = y.lo; b < y.hi; ++b)
                for (int64_t c = z.lo; c < z.hi; ++c) {
                    EntryResult r = compute_entry(ev, quad, h, a, b, c);
                    t.w3[size_t(((a - x.lo) * ny + (b - y.lo)) * nz + (c - z.lo))] = r.value;
                    ++t.report.entries;
                    if (r.refined) ++t.report.refined;
                    if (r.cut) {
                        ++t.report.cut;
                        t.report.residual_estimate += r.residual / std::max(1, quad.near_factor);
                    }
                }
    }

    if (with_tails) {
        if (ev.trunc.kind != TruncationKind::SmoothBand)
            throw std::invalid_argument(
                "build_pairing_table: tails (pairings against 1) need the band truncation");
        const GaussRule& g = gauss_rule(quad.order);
        auto radii = tail_radii(ev.trunc);
        double reach = ev.trunc.eps2;
        int64_t nx = x.count(), ny = y.count(), nz = z.count();
        double bylo = double(y.lo) * h, byhi = double(y.hi) * h;
        double bzlo = double(z.lo) * h, bzhi = double(z.hi) * h;
        t.tail_f.assign(size_t(nx * nz), 0.0);
        t.tail_g.assign(size_t(nx * ny), 0.0);
        t.tail_c.assign(size_t(nx), 0.0);

        for (int64_t a = x.lo; a < x.hi; ++a) {
            double x0 = double(a) * h;
            // tail_f: z in a work-box cell, y outside the work box
            for (int64_t c = z.lo; c < z.hi; ++c) {
                double z0 = double(c) * h;
                KahanSum acc;
                for (size_t qi = 0; qi < g.nodes.size(); ++qi) {
                    double xx = x0 + h * g.nodes[qi];
                    for (size_t qk = 0; qk < g.nodes.size(); ++qk) {
                        double zz = z0 + h * g.nodes[qk];
                        double lo2 = std::min(xx, zz) - reach, hi2 = std::max(xx, zz) + reach;
                        double v = line_integral_outside(ev, xx, zz, lo2, hi2, bylo, byhi, radii,
                                                         g, true);
                        acc.add(g.weights[qi] * g.weights[qk] * v);
                    }
                }
                t.tail_f[size_t((a - x.lo) * nz + (c - z.lo))] = acc.value() * h * h;
            }
            // tail_g: y in a work-box cell, z outside
            for (int64_t b = y.lo; b < y.hi; ++b) {
                double y0 = double(b) * h;
                KahanSum acc;
                for (size_t qi = 0; qi < g.nodes.size(); ++qi) {
                    double xx = x0 + h * g.nodes[qi];
                    for (size_t qj = 0; qj < g.nodes.size(); ++qj) {
                        double yy = y0 + h * g.nodes[qj];
                        double lo2 = std::min(xx, yy) - reach, hi2 = std::max(xx, yy) + reach;
                        double v = line_integral_outside(ev, xx, yy, lo2, hi2, bzlo, bzhi, radii,
                                                         g, false);
                        acc.add(g.weights[qi] * g.weights[qj] * v);
                    }
                }
                t.tail_g[size_t((a - x.lo) * ny + (b - y.lo))] = acc.value() * h * h;
            }
            // tail_c: y and z both outside
            {
                KahanSum acc;
                for (size_t qi = 0; qi < g.nodes.size(); ++qi) {
                    double xx = x0 + h * g.nodes[qi];
                    double ylo2 = xx - 2.0 * reach, yhi2 = xx + 2.0 * reach;
                    std::vector<std::pair<double, double>> ysegs;
                    if (ylo2 < bylo) ysegs.emplace_back(ylo2, bylo);
                    if (yhi2 > byhi) ysegs.emplace_back(byhi, yhi2);
                    for (auto [s0, s1] : ysegs) {
                        std::vector<double> pts{s0, s1};
                        for (double r : radii) add_radius_splits(ev.permutation, xx, xx, r, pts);
                        // dyadic padding away from x
                        for (double d = h; d < 2.0 * reach; d *= 2.0) {
                            pts.push_back(xx - d);
                            pts.push_back(xx + d);
                        }
                        std::sort(pts.begin(), pts.end());
                        for (size_t i = 0; i + 1 < pts.size(); ++i) {
                            double p0 = std::max(pts[i], s0), p1 = std::min(pts[i + 1], s1);
                            if (p1 <= p0) continue;
                            double w = p1 - p0;
                            for (size_t q = 0; q < g.nodes.size(); ++q) {
                                double yy = p0 + w * g.nodes[q];
                                double zl = std::min(xx, yy) - reach, zh = std::max(xx, yy) + reach;
                                double v = line_integral_outside(ev, xx, yy, zl, zh, bzlo, bzhi,
                                                                 radii, g, false);
                                acc.add(g.weights[qi] * g.weights[q] * w * v);
                            }
                        }
                    }
                }
                t.tail_c[size_t(a - x.lo)] = acc.value() * h;
            }
        }

        // margins over the stored y/z ranges
        t.m_ab.assign(size_t(nx * ny), 0.0);
        t.m_ac.assign(size_t(nx * nz), 0.0);
        t.m_a.assign(size_t(nx), 0.0);
        t.tf_row.assign(size_t(nx), 0.0);
        t.tg_row.assign(size_t(nx), 0.0);
        for (int64_t a = x.lo; a < x.hi; ++a) {
            KahanSum ta;
            for (int64_t b = y.lo; b < y.hi; ++b) {
                KahanSum s;
                for (int64_t c = z.lo; c < z.hi; ++c) s.add(t.entry(a, b, c));
                t.m_ab[size_t((a - x.lo) * ny + (b - y.lo))] = s.value();
                ta.add(s.value());
            }
            t.m_a[size_t(a - x.lo)] = ta.value();
            for (int64_t c = z.lo; c < z.hi; ++c) {
                KahanSum s;
                for (int64_t b = y.lo; b < y.hi; ++b) s.add(t.entry(a, b, c));
                t.m_ac[size_t((a - x.lo) * nz + (c - z.lo))] = s.value();
            }
            KahanSum sf, sg;
            for (int64_t c = z.lo; c < z.hi; ++c) sf.add(t.tail_f[size_t((a - x.lo) * nz + (c - z.lo))]);
            for (int64_t b = y.lo; b < y.hi; ++b) sg.add(t.tail_g[size_t((a - x.lo) * ny + (b - y.lo))]);
            t.tf_row[size_t(a - x.lo)] = sf.value();
            t.tg_row[size_t(a - x.lo)] = sg.value();
        }
        t.tails_built = true;
    }
    return t;
}

double contract3(const PairingTable& t, const MeshFunction& w, const MeshFunction& u,
                 const MeshFunction& v) {
    int64_t ax0 = std::max(t.xr.lo, w.origin[0]), ax1 = std::min(t.xr.hi, w.origin[0] + w.extent[0]);
    int64_t by0 = std::max(t.yr.lo, u.origin[0]), by1 = std::min(t.yr.hi, u.origin[0] + u.extent[0]);
    int64_t cz0 = std::max(t.zr.lo, v.origin[0]), cz1 = std::min(t.zr.hi, v.origin[0] + v.extent[0]);
    if (ax0 >= ax1 || by0 >= by1 || cz0 >= cz1) return 0.0;
    KahanSum acc;
    for (int64_t a = ax0; a < ax1; ++a) {
        double wa = w.values[w.index(a, 0)];
        if (wa == 0.0) continue;
        for (int64_t b = by0; b < by1; ++b) {
            double ub = u.values[u.index(b, 0)];
            if (ub == 0.0) continue;
            double row = 0.0;
            if (t.ti) {
                const double* p = &t.w3d[size_t((b - a - t.dy0) * t.Nz)];
                const double* vv = &v.values[v.index(cz0, 0)];
                int64_t off = cz0 - a - t.dz0;
                for (int64_t c = 0; c < cz1 - cz0; ++c) row += vv[c] * p[off + c];
            } else {
                for (int64_t c = cz0; c < cz1; ++c)
                    row += v.values[v.index(c, 0)] * t.entry(a, b, c);
            }
            acc.add(wa * ub * row);
        }
    }
    return acc.value();
}

double ext_pairing(const PairingTable& t, const MeshFunction& w, const ExtSlot& f,
                   const ExtSlot& g) {
    static const MeshFunction empty = MeshFunction::zeros(1, 1, {0, 0}, {0, 1});
    const MeshFunction& fm = f.mesh ? *f.mesh : empty;
    const MeshFunction& gm = g.mesh ? *g.mesh : empty;
    double total = 0.0;
    if (f.mesh && g.mesh) total += contract3(t, w, fm, gm);
    if (f.far == 0.0 && g.far == 0.0) return total;
    if (!t.tails_built)
        throw std::logic_error("ext_pairing: constant slots need a table built with tails");

    int64_t nx = 0;
    (void)nx;
    int64_t ny = t.yr.count(), nz = t.zr.count();
    int64_t ax0 = std::max(t.xr.lo, w.origin[0]), ax1 = std::min(t.xr.hi, w.origin[0] + w.extent[0]);
    if (g.far != 0.0 && f.mesh) { // <T(f_mesh, 1), w> over full z
        KahanSum acc;
        int64_t by0 = std::max(t.yr.lo, fm.origin[0]), by1 = std::min(t.yr.hi, fm.origin[0] + fm.extent[0]);
        for (int64_t a = ax0; a < ax1; ++a) {
            double wa = w.values[w.index(a, 0)];
            if (wa == 0.0) continue;
            for (int64_t b = by0; b < by1; ++b) {
                double ub = fm.values[fm.index(b, 0)];
                if (ub == 0.0) continue;
                size_t i = size_t((a - t.xr.lo) * ny + (b - t.yr.lo));
                acc.add(wa * ub * (t.m_ab[i] + t.tail_g[i]));
            }
        }
        total += g.far * acc.value();
    }
    if (f.far != 0.0 && g.mesh) { // <T(1, g_mesh), w> over full y
        KahanSum acc;
        int64_t cz0 = std::max(t.zr.lo, gm.origin[0]), cz1 = std::min(t.zr.hi, gm.origin[0] + gm.extent[0]);
        for (int64_t a = ax0; a < ax1; ++a) {
            double wa = w.values[w.index(a, 0)];
            if (wa == 0.0) continue;
            for (int64_t c = cz0; c < cz1; ++c) {
                double vc = gm.values[gm.index(c, 0)];
                if (vc == 0.0) continue;
                size_t i = size_t((a - t.xr.lo) * nz + (c - t.zr.lo));
                acc.add(wa * vc * (t.m_ac[i] + t.tail_f[i]));
            }
        }
        total += f.far * acc.value();
    }
    if (f.far != 0.0 && g.far != 0.0) { // <T(1,1), w>
        KahanSum acc;
        for (int64_t a = ax0; a < ax1; ++a) {
            double wa = w.values[w.index(a, 0)];
            if (wa == 0.0) continue;
            size_t i = size_t(a - t.xr.lo);
            acc.add(wa * (t.m_a[i] + t.tf_row[i] + t.tg_row[i] + t.tail_c[i]));
        }
        total += f.far * g.far * acc.value();
    }
    return total;
}

MeshFunction apply_cellavg(const PairingTable& t, const MeshFunction& u, const MeshFunction& v) {
    MeshFunction out = MeshFunction::zeros(1, t.L, {t.xr.lo, 0}, {t.xr.count(), 1});
    double h = out.cell_width();
    int64_t by0 = std::max(t.yr.lo, u.origin[0]), by1 = std::min(t.yr.hi, u.origin[0] + u.extent[0]);
    int64_t cz0 = std::max(t.zr.lo, v.origin[0]), cz1 = std::min(t.zr.hi, v.origin[0] + v.extent[0]);
    for (int64_t a = t.xr.lo; a < t.xr.hi; ++a) {
        KahanSum acc;
        for (int64_t b = by0; b < by1; ++b) {
            double ub = u.values[u.index(b, 0)];
            if (ub == 0.0) continue;
            double row = 0.0;
            for (int64_t c = cz0; c < cz1; ++c) row += v.values[v.index(c, 0)] * t.entry(a, b, c);
            acc.add(ub * row);
        }
        out.ref(a, 0) = acc.value() / h;
    }
    return out;
}

static CellRange support_range(const MeshFunction& f) {
    return CellRange{f.origin[0], f.origin[0] + f.extent[0]};
}

double trilinear_pairing(const BilinearKernel& k, const TruncationSpec& trunc,
                         const MeshFunction& f, const MeshFunction& g, const MeshFunction& h,
                         const QuadratureSpec& quad) {
    if (f.n != 1 || g.n != 1 || h.n != 1)
        throw std::invalid_argument("trilinear_pairing: n = 1 only");
    if (f.L != g.L || f.L != h.L)
        throw std::invalid_argument("trilinear_pairing: functions live on different meshes");
    TruncatedEvaluator ev{k, trunc, 0};
    PairingTable t = build_pairing_table(ev, f.L, support_range(h), support_range(f),
                                         support_range(g), quad, false);
    return contract3(t, h, f, g);
}

double adjoint_pairing(int which, const BilinearKernel& k, const TruncationSpec& trunc,
                       const MeshFunction& a, const MeshFunction& b, const MeshFunction& c,
                       const QuadratureSpec& quad) {
    // <T^{1*}(a,b), c> = <T(c,b), a>,  <T^{2*}(a,b), c> = <T(a,c), b>
    if (which == 1) return trilinear_pairing(k, trunc, c, b, a, quad);
    if (which == 2) return trilinear_pairing(k, trunc, a, c, b, quad);
    throw std::invalid_argument("adjoint_pairing: which must be 1 or 2");
}

MeshFunction sharp_smooth_gap(const BilinearKernel& k, double eps, const MeshFunction& f,
                              const MeshFunction& g, const QuadratureSpec& quad) {
    int64_t lo = std::min(f.origin[0], g.origin[0]);
    int64_t hi = std::max(f.origin[0] + f.extent[0], g.origin[0] + g.extent[0]);
    CellRange r{lo, hi};
    TruncatedEvaluator sharp{k, TruncationSpec::sharp(eps), 0};
    TruncatedEvaluator smooth{k, TruncationSpec::smooth(eps), 0};
    PairingTable ts = build_pairing_table(sharp, f.L, r, support_range(f), support_range(g), quad, false);
    PairingTable tm = build_pairing_table(smooth, f.L, r, support_range(f), support_range(g), quad, false);
    MeshFunction a = apply_cellavg(ts, f, g);
    MeshFunction b = apply_cellavg(tm, f, g);
    for (size_t i = 0; i < a.values.size(); ++i) a.values[i] = std::abs(a.values[i] - b.values[i]);
    return a;
}

} // namespace dyad
