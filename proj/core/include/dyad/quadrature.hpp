#pragma once

#include <stdexcept>
#include <vector>

#include "dyad/kernel.hpp"
#include "dyad/mesh.hpp"

namespace dyad {

struct QuadratureSpec {
    int order = 4;       // tensor Gauss-Legendre order per axis
    int near_factor = 4; // subdivisions per axis near the diagonal / cutoff
};

struct QuadratureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Gauss-Legendre nodes/weights on [0,1]
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
const GaussRule& gauss_rule(int order);

struct CellRange {
    int64_t lo = 0, hi = 0;
    int64_t count() const { return hi - lo; }
};

struct PairingTableReport {
    int64_t entries = 0;
    int64_t refined = 0;
    int64_t cut = 0;               // sharp boundary cuts the cell triple
    double residual_estimate = 0.0; // crude bound on the cut-cell quadrature error
};

// Per-cell-triple integrals of a truncated kernel over x-range x y-range x
// z-range. Every trilinear pairing in the library is a contraction of one of
// these tables (plus, for the band truncation, tail tables covering the
// constant function 1 beyond the work box), so algebraic identities between
// pairings hold to roundoff: both sides combine the same primitive values.
//
// Translation-invariant kernels store one entry per cell offset (dy, dz) =
// (ycell - xcell, zcell - xcell); general kernels store the dense tensor.
struct PairingTable {
    TruncatedEvaluator ev;
    QuadratureSpec quad;
    int L = 0;
    CellRange xr, yr, zr;
    bool ti = false;
    PairingTableReport report;

    // TI storage: w3d[(dy-dy0)*Nz + (dz-dz0)]
    int64_t dy0 = 0, dz0 = 0, Ny = 0, Nz = 0;
    std::vector<double> w3d;
    // dense storage: w3[((a-xr.lo)*ny + (b-yr.lo))*nz + (c-zr.lo)]
    std::vector<double> w3;

    // tails (band truncation only): integrals with one or both of y,z
    // outside the work box
    bool tails_built = false;
    std::vector<double> tail_f;   // [(a-xr.lo)*nz + (c-zr.lo)], y outside
    std::vector<double> tail_g;   // [(a-xr.lo)*ny + (b-yr.lo)], z outside
    std::vector<double> tail_c;   // [a-xr.lo], both outside
    // margins over the stored y/z ranges (built with tails)
    std::vector<double> m_ab;     // sum over c of w3 entries
    std::vector<double> m_ac;     // sum over b
    std::vector<double> m_a;      // sum over b,c
    std::vector<double> tf_row;   // sum over c of tail_f
    std::vector<double> tg_row;   // sum over b of tail_g

    double entry(int64_t a, int64_t b, int64_t c) const {
        if (ti) {
            int64_t dy = b - a - dy0, dz = c - a - dz0;
            return w3d[size_t(dy * Nz + dz)];
        }
        return w3[size_t(((a - xr.lo) * yr.count() + (b - yr.lo)) * zr.count() + (c - zr.lo))];
    }
};

PairingTable build_pairing_table(const TruncatedEvaluator& ev, int L, CellRange x, CellRange y,
                                 CellRange z, const QuadratureSpec& quad, bool with_tails,
                                 bool force_dense = false);

// <T(u,v), w> for compactly supported mesh functions (w in the x slot)
double contract3(const PairingTable& t, const MeshFunction& w, const MeshFunction& u,
                 const MeshFunction& v);

// slot value = far + mesh(x); mesh supported inside the table's y/z range
struct ExtSlot {
    const MeshFunction* mesh = nullptr;
    double far = 0.0;
};

// <T(F,G), w> where F,G are constant + compact; needs tails when far != 0
double ext_pairing(const PairingTable& t, const MeshFunction& w, const ExtSlot& f,
                   const ExtSlot& g);

// cell averages of T(u,v) over the table's x-range
MeshFunction apply_cellavg(const PairingTable& t, const MeshFunction& u, const MeshFunction& v);

// --- spec-level convenience operations (each builds its own table) ---

double trilinear_pairing(const BilinearKernel& k, const TruncationSpec& trunc,
                         const MeshFunction& f, const MeshFunction& g, const MeshFunction& h,
                         const QuadratureSpec& quad);

// which = 1: <T^{1*}(a,b), c>; which = 2: <T^{2*}(a,b), c>. Evaluated through
// the defining permutation so the adjoint identities are exact.
double adjoint_pairing(int which, const BilinearKernel& k, const TruncationSpec& trunc,
                       const MeshFunction& a, const MeshFunction& b, const MeshFunction& c,
                       const QuadratureSpec& quad);

// cellwise |T_eps(f,g) - T^phi_eps(f,g)| on the joint support box
MeshFunction sharp_smooth_gap(const BilinearKernel& k, double eps, const MeshFunction& f,
                              const MeshFunction& g, const QuadratureSpec& quad);

} // namespace dyad
