#pragma once

#include <vector>

#include "dyad/quadrature.hpp"

namespace dyad {

struct BmoPairingResult {
    double value = 0.0;
    double local = 0.0;     // <T_trunc(1_CR, 1_CR), phi>
    double far = 0.0;       // compensated far-field integral
    int annuli = 0;         // dyadic frames summed before the tail bound won
    double tail_bound = 0.0;
};

// The compensated pairing <T_eps(1,1), phi>: local part over CR plus
// the x-Holder-compensated far field, summed over dyadic frames until the
// analytic tail bound drops below far_tol of the running value.
// Preconditions: phi supported in R with zero mean and ||phi||_inf <= 1;
// C odd, C >= 3, (C-1)/2 * l(R) > eps.
BmoPairingResult bmo_pairing(const TruncatedEvaluator& ev, const MeshFunction& phi,
                             const DyadicCube& R, int C, const QuadratureSpec& quad,
                             double far_tol = 1e-8);

// max over cubes of |<T(1_I,1_I), 1_I>| / |I|; cube corners are cells of the
// shared mesh level L_mesh
double wbp_constant(const BilinearKernel& k, const TruncationSpec& trunc,
                    const std::vector<DyadicCube>& cubes, int L_mesh, const QuadratureSpec& quad);

struct BmoTestCase {
    DyadicCube R;
    MeshFunction phi;
};

// deterministic family of (R, phi) pairs: Haar-type sign patterns and random
// mean-zero cell patterns with ||phi||_inf <= 1
std::vector<BmoTestCase> make_bmo_test_family(int L, int count, uint64_t seed);

struct BmoSweepResult {
    double max_ratio = 0.0; // measured BMO constant: max |pairing| / |R|
    int cases = 0;
};

BmoSweepResult bmo_sweep(const TruncatedEvaluator& ev, const std::vector<BmoTestCase>& family,
                         int C, const QuadratureSpec& quad, double far_tol = 1e-8);

// Measured T1-type constants entering divisor predictions and the
// end-to-end domination budget C_est = 8 (C_K + WBP + BMO + BMO^{1*} + BMO^{2*}); the factor 8 is a
// pinned stand-in for the dimensional constant the estimates leave implicit.
struct T1Constants {
    double czk = 0.0;
    double wbp = 0.0;
    double bmo[3] = {0.0, 0.0, 0.0}; // direct, adjoint-1, adjoint-2
    double c_est() const { return 8.0 * (czk + wbp + bmo[0] + bmo[1] + bmo[2]); }
};

T1Constants measure_t1_constants(const BilinearKernel& k, const std::vector<double>& eps_ladder,
                                 int L, int bmo_cases, uint64_t seed, const QuadratureSpec& quad);

// mean-zero-compensated pairing <T(1,1), w> for a compactly supported w with
// zero mean (e.g. a Haar function), by expanding (y,z) frames around w's
// support until the Holder tail bound wins. Works for any truncation whose
// kernel decays like the CZ class (used for the eps2 -> infinity check).
double pair_one_one_meanzero(const TruncatedEvaluator& ev, const MeshFunction& w,
                             const QuadratureSpec& quad, double far_tol = 1e-8);

} // namespace dyad
