#include "dyad/bmo.hpp"

#include <cmath>

#include "dyad/rng.hpp"

namespace dyad {

namespace {

// Integral over a (y,z) rectangle of phi(x) [ev(x,y,z) - ev(c,y,z)] with the
// x-integral outermost. For each x-node the (y,z)-integrand is piecewise
// analytic with kinks only on the lines y = x, z = x, y = c, z = c, so the
// panels are split there and Gauss converges at its nominal rate.
double rect_integral(const TruncatedEvaluator& ev, const MeshFunction& phi, double subtract_at,
                     bool compensate, double y0, double y1, double z0, double z1, int panels,
                     const GaussRule& g) {
    if (y1 <= y0 || z1 <= z0) return 0.0;
    double h = phi.cell_width();
    auto segments = [&](double a, double b, double x) {
        std::vector<double> pts{a, b};
        if (x > a && x < b) pts.push_back(x);
        if (compensate && subtract_at > a && subtract_at < b) pts.push_back(subtract_at);
        std::sort(pts.begin(), pts.end());
        return pts;
    };
    KahanSum acc;
    for (int64_t c = phi.origin[0]; c < phi.origin[0] + phi.extent[0]; ++c) {
        double pv = phi.values[phi.index(c, 0)];
        if (pv == 0.0) continue;
        for (size_t qx = 0; qx < g.nodes.size(); ++qx) {
            double x = (double(c) + g.nodes[qx]) * h;
            double wx = g.weights[qx] * h * pv;
            auto ys = segments(y0, y1, x);
            auto zs = segments(z0, z1, x);
            double yz = 0.0;
            for (size_t si = 0; si + 1 < ys.size(); ++si) {
                double sy0 = ys[si], wyseg = (ys[si + 1] - ys[si]) / panels;
                if (wyseg <= 0.0) continue;
                for (int py = 0; py < panels; ++py)
                    for (size_t qy = 0; qy < g.nodes.size(); ++qy) {
                        double y = sy0 + (py + g.nodes[qy]) * wyseg;
                        double wy = g.weights[qy] * wyseg;
                        for (size_t sj = 0; sj + 1 < zs.size(); ++sj) {
                            double sz0 = zs[sj], wzseg = (zs[sj + 1] - zs[sj]) / panels;
                            if (wzseg <= 0.0) continue;
                            for (int pz = 0; pz < panels; ++pz)
                                for (size_t qz = 0; qz < g.nodes.size(); ++qz) {
                                    double z = sz0 + (pz + g.nodes[qz]) * wzseg;
                                    double v = ev(x, y, z);
                                    if (compensate) v -= ev(subtract_at, y, z);
                                    yz += g.weights[qz] * wzseg * wy * v;
                                }
                        }
                    }
            }
            acc.add(wx * yz);
        }
    }
    return acc.value();
}

} // namespace

BmoPairingResult bmo_pairing(const TruncatedEvaluator& ev, const MeshFunction& phi,
                             const DyadicCube& R, int C, const QuadratureSpec& quad,
                             double far_tol) {
    if (phi.n != 1) throw std::invalid_argument("bmo_pairing: n = 1 only");
    if (C < 3 || C % 2 == 0) throw std::invalid_argument("bmo_pairing: C must be odd and >= 3");
    double lR = cube_sidelength(R);
    double eps = ev.trunc.kind == TruncationKind::None ? 0.0 : ev.trunc.eps;
    if (!(0.5 * (C - 1) * lR > eps))
        throw std::invalid_argument("bmo_pairing: need (C-1)/2 * l(R) > eps");
    // phi must be supported in R with zero mean and sup norm <= 1
    int64_t w = int64_t(1) << (phi.L - R.level);
    if (phi.origin[0] < R.corner[0] || phi.origin[0] + phi.extent[0] > R.corner[0] + w)
        throw std::invalid_argument("bmo_pairing: phi is not supported in R");
    if (std::abs(phi.sum_values()) > 1e-9 * double(phi.values.size()))
        throw std::invalid_argument("bmo_pairing: phi must have zero mean");
    for (double v : phi.values)
        if (std::abs(v) > 1.0 + 1e-12)
            throw std::invalid_argument("bmo_pairing: ||phi||_inf must be <= 1");

    BmoPairingResult res;
    const GaussRule& g = gauss_rule(std::max(quad.order, 8));
    double h = phi.cell_width();

    // local part over CR x CR through mesh-cell quadrature: the same cell
    // values appear for every admissible C, so (R,C)-independence is limited
    // only by the far field
    int64_t half = (int64_t(C) - 1) / 2 * w;
    CellRange xr{phi.origin[0], phi.origin[0] + phi.extent[0]};
    CellRange yr{R.corner[0] - half, R.corner[0] + w + half};
    PairingTable t = build_pairing_table(ev, phi.L, xr, yr, yr, quad, false);
    DyadicCube CRcube; // CR as a cell box
    CRcube.level = R.level; // only used to build the indicator mesh below
    MeshFunction oneCR = MeshFunction::zeros(1, phi.L, {yr.lo, 0}, {yr.count(), 1});
    for (auto& v : oneCR.values) v = 1.0;
    res.local = contract3(t, phi, oneCR, oneCR);

    // far field over dyadic frames around CR, x-Holder compensated at c_R
    double cR = (double(R.corner[0]) + double(w) * 0.5) * h;
    double alpha = ev.kernel.constants.alpha;
    double cz = ev.kernel.constants.cz_norm;
    double phi_l1 = 0.0;
    for (double v : phi.values) phi_l1 += std::abs(v);
    phi_l1 *= h;

    KahanSum far;
    double inner_lo = double(yr.lo) * h, inner_hi = double(yr.hi) * h;
    for (int m = 0; m < 64; ++m) {
        double outer_lo = cR - (inner_hi - inner_lo), outer_hi = cR + (inner_hi - inner_lo);
        // frame = outer^2 \ inner^2 in (y,z): four rectangles
        int panels = 2;
        double fm = 0.0;
        fm += rect_integral(ev, phi, cR, true, outer_lo, inner_lo, outer_lo, outer_hi, panels, g);
        fm += rect_integral(ev, phi, cR, true, inner_hi, outer_hi, outer_lo, outer_hi, panels, g);
        fm += rect_integral(ev, phi, cR, true, inner_lo, inner_hi, outer_lo, inner_lo, panels, g);
        fm += rect_integral(ev, phi, cR, true, inner_lo, inner_hi, inner_hi, outer_hi, panels, g);
        far.add(fm);
        ++res.annuli;
        // Holder tail beyond the current outer box: |K(x,..)-K(c_R,..)| <=
        // cz (l(R)/2)^a / s^{2+a}, integrated over s > dist(c_R, frame edge)
        double dist = (outer_hi - cR) - 0.5 * lR;
        res.tail_bound = cz * std::pow(0.5 * lR, alpha) * phi_l1 * 8.0 / alpha *
                         std::pow(dist, -alpha) / dist * dist; // ~ 8/alpha * dist^-alpha
        res.tail_bound = cz * std::pow(0.5 * lR, alpha) * phi_l1 * (8.0 / alpha) * std::pow(dist, -alpha);
        inner_lo = outer_lo;
        inner_hi = outer_hi;
        if (res.tail_bound < far_tol * (std::abs(far.value()) + std::abs(res.local)) + 1e-300)
            break;
    }
    res.far = far.value();
    res.value = res.local + res.far;
    return res;
}

double wbp_constant(const BilinearKernel& k, const TruncationSpec& trunc,
                    const std::vector<DyadicCube>& cubes, int L_mesh, const QuadratureSpec& quad) {
    if (cubes.empty()) throw std::invalid_argument("wbp_constant: need at least one cube");
    double best = 0.0;
    for (const auto& q : cubes) {
        MeshFunction one = indicator(q, L_mesh);
        double v = trilinear_pairing(k, trunc, one, one, one, quad);
        best = std::max(best, std::abs(v) / cube_volume(q));
    }
    return best;
}

std::vector<BmoTestCase> make_bmo_test_family(int L, int count, uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<BmoTestCase> out;
    for (int i = 0; i < count; ++i) {
        BmoTestCase tc;
        int lev = 2 + int(rng.below(3)); // R at levels 2..4
        int64_t w = int64_t(1) << (L - lev);
        int64_t maxcorner = (int64_t(1) << L) - w;
        tc.R.level = lev;
        tc.R.dim = 1;
        tc.R.corner = {int64_t(rng.below(uint64_t(maxcorner / w + 1))) * w, 0};
        tc.phi = MeshFunction::zeros(1, L, tc.R.corner, {w, 1});
        int mode = int(rng.below(4));
        if (mode == 3) {
            // even about the center, zero mean: +1 middle half, -1 outer quarters
            for (int64_t c = 0; c < w; ++c)
                tc.phi.values[size_t(c)] = (c >= w / 4 && c < 3 * w / 4) ? 1.0 : -1.0;
        } else if (mode == 0) {
            // Haar-type: +1 on the left half, -1 on the right
            for (int64_t c = 0; c < w; ++c) tc.phi.values[size_t(c)] = c < w / 2 ? 1.0 : -1.0;
        } else if (mode == 1) {
            // random +-1 pattern balanced in pairs
            for (int64_t c = 0; c + 1 < w; c += 2) {
                double s = rng.coin() ? 1.0 : -1.0;
                tc.phi.values[size_t(c)] = s;
                tc.phi.values[size_t(c + 1)] = -s;
            }
        } else {
            // smooth-ish odd profile around the center, zero mean by symmetry
            for (int64_t c = 0; c < w; ++c) {
                double t = (double(c) + 0.5) / double(w) - 0.5;
                tc.phi.values[size_t(c)] = std::sin(2.0 * M_PI * t);
            }
            double mean = tc.phi.sum_values() / double(w);
            for (auto& v : tc.phi.values) v -= mean;
            double mx = 0.0;
            for (double v : tc.phi.values) mx = std::max(mx, std::abs(v));
            if (mx > 0) for (auto& v : tc.phi.values) v /= mx;
        }
        out.push_back(std::move(tc));
    }
    return out;
}

BmoSweepResult bmo_sweep(const TruncatedEvaluator& ev, const std::vector<BmoTestCase>& family,
                         int C, const QuadratureSpec& quad, double far_tol) {
    BmoSweepResult r;
    for (const auto& tc : family) {
        double lR = cube_sidelength(tc.R);
        double eps = ev.trunc.kind == TruncationKind::None ? 0.0 : ev.trunc.eps;
        if (!(0.5 * (C - 1) * lR > eps)) continue; // inadmissible pair for this eps
        BmoPairingResult p = bmo_pairing(ev, tc.phi, tc.R, C, quad, far_tol);
        r.max_ratio = std::max(r.max_ratio, std::abs(p.value) / cube_volume(tc.R));
        ++r.cases;
    }
    return r;
}

T1Constants measure_t1_constants(const BilinearKernel& k, const std::vector<double>& eps_ladder,
                                 int L, int bmo_cases, uint64_t seed, const QuadratureSpec& quad) {
    T1Constants c;
    c.czk = measure_kernel_constants(k, 100000, seed).cz_norm();
    // mesh fine enough for the sharpest ladder point
    double min_eps = eps_ladder.empty() ? 0.25 : eps_ladder[0];
    for (double e : eps_ladder) min_eps = std::min(min_eps, e);
    int L_mesh = L;
    while (std::ldexp(1.0, -L_mesh) > 0.5 * min_eps) ++L_mesh;
    std::vector<DyadicCube> cubes;
    for (int lev = 2; lev <= std::min(6, L_mesh - 1); ++lev) {
        DyadicCube q;
        q.level = lev;
        q.dim = 1;
        q.corner = {0, 0};
        cubes.push_back(q);
        q.corner = {int64_t(1) << (L_mesh - lev - 1), 0};
        cubes.push_back(q);
    }
    auto family = make_bmo_test_family(L, bmo_cases, seed + 1);
    for (double eps : eps_ladder) {
        c.wbp = std::max(c.wbp, wbp_constant(k, TruncationSpec::sharp(eps), cubes, L_mesh, quad));
        for (int perm = 0; perm < 3; ++perm) {
            TruncatedEvaluator ev{k, TruncationSpec::sharp(eps), perm};
            BmoSweepResult s = bmo_sweep(ev, family, 3, quad);
            c.bmo[perm] = std::max(c.bmo[perm], s.max_ratio);
        }
    }
    return c;
}

double pair_one_one_meanzero(const TruncatedEvaluator& ev, const MeshFunction& w,
                             const QuadratureSpec& quad, double far_tol) {
    if (w.n != 1) throw std::invalid_argument("pair_one_one_meanzero: n = 1 only");
    if (std::abs(w.sum_values()) > 1e-9 * double(w.values.size()))
        throw std::invalid_argument("pair_one_one_meanzero: weight must have zero mean");
    const GaussRule& g = gauss_rule(std::max(quad.order, 8));
    double h = w.cell_width();
    double c0 = (double(w.origin[0]) + 0.5 * double(w.extent[0])) * h;
    double lw = double(w.extent[0]) * h;
    double alpha = ev.kernel.constants.alpha;
    double cz = ev.kernel.constants.cz_norm;
    double w_l1 = 0.0;
    for (double v : w.values) w_l1 += std::abs(v);
    w_l1 *= h;

    KahanSum acc;
    double inner_lo = c0 - lw, inner_hi = c0 + lw;
    // center box first (no compensation available; the x-integral itself is
    // mean-zero so the truncated kernel is integrable here)
    acc.add(rect_integral(ev, w, 0.0, false, inner_lo, inner_hi, inner_lo, inner_hi, 8, g));
    for (int m = 0; m < 64; ++m) {
        double outer_lo = c0 - 2.0 * (c0 - inner_lo), outer_hi = c0 + 2.0 * (inner_hi - c0);
        int panels = 6;
        double fm = 0.0;
        fm += rect_integral(ev, w, 0.0, false, outer_lo, inner_lo, outer_lo, outer_hi, panels, g);
        fm += rect_integral(ev, w, 0.0, false, inner_hi, outer_hi, outer_lo, outer_hi, panels, g);
        fm += rect_integral(ev, w, 0.0, false, inner_lo, inner_hi, outer_lo, inner_lo, panels, g);
        fm += rect_integral(ev, w, 0.0, false, inner_lo, inner_hi, inner_hi, outer_hi, panels, g);
        acc.add(fm);
        double dist = (outer_hi - c0) - 0.5 * lw;
        double tail = cz * std::pow(0.5 * lw, alpha) * w_l1 * (8.0 / alpha) * std::pow(dist, -alpha);
        inner_lo = outer_lo;
        inner_hi = outer_hi;
        if (tail < far_tol * std::abs(acc.value()) + 1e-300) break;
        // band truncations vanish identically far out
        if (ev.trunc.kind == TruncationKind::SmoothBand && dist > ev.trunc.eps2) break;
    }
    return acc.value();
}

} // namespace dyad
