#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dyad/bmo.hpp"
#include "dyad/quadrature.hpp"
#include "dyad/shifts.hpp"

namespace dyad {

// --- martingale decomposition ---

struct DecompositionReport {
    double sigma1 = 0.0, sigma2 = 0.0, sigma3 = 0.0;
    double remainder = 0.0; // all terms touching the coarse component P_S
    double total = 0.0;
    double reference = 0.0;
    std::vector<double> sigma1_by_level, sigma2_by_level, sigma3_by_level;
    double rel_error() const {
        double scale = std::max(std::abs(reference), 1e-300);
        return std::abs(total - reference) / scale;
    }
};

// <T(f,g),h> = Sigma1 + Sigma2 + Sigma3 + remainder, split by which of the
// three martingale scales is finest (Sigma2/Sigma3 evaluated through the
// adjoint pairings; the totals share every cell-triple value with the
// reference, so the identity is exact up to roundoff).
DecompositionReport martingale_split(const PairingTable& table, const DyadicGrid& grid,
                                     const MeshFunction& f, const MeshFunction& g,
                                     const MeshFunction& h);
DecompositionReport martingale_split(const BilinearKernel& k, const TruncationSpec& trunc,
                                     const DyadicGrid& grid, const MeshFunction& f,
                                     const MeshFunction& g, const MeshFunction& h,
                                     const QuadratureSpec& quad);

// --- triple classification ---

enum class TripleTag { Separated, Diagonal, Nested };

struct TripleBucket {
    TripleTag tag = TripleTag::Separated;
    std::optional<DyadicCube> parent; // minimal parent / K^(r), when in range
};

// pre: l(K) <= l(I) = 2 l(J), all in the grid
TripleBucket classify_triple(const DyadicCube& I, const DyadicCube& J, const DyadicCube& K,
                             const DyadicGrid& grid, const GoodnessParams& params);

// minimal Q in the grid containing I, J and K; empty when the scale window
// has no common ancestor
std::optional<DyadicCube> minimal_parent(const DyadicCube& I, const DyadicCube& J,
                                         const DyadicCube& K, const DyadicGrid& grid);

// --- coefficient extraction ---

struct CoeffRecord {
    int pattern = 1;      // 1 = Sigma^1, 2 = Sigma^2 (adjoint-1), 3 = Sigma^3 (adjoint-2)
    char family = 's';    // 's' separated, 'd' diagonal, 'e' error
    DyadicCube Q, I, J, K;
    int i = 0, j = 0, k = 0;
    uint8_t etaI = 1, etaJ = 0;
    double raw = 0.0;         // pairing numerator
    double data = 0.0;        // <phi1-coeff> * <phi2-coeff> * <phi3, h_K>
    double bound_shape = 0.0; // |I|^{1/2}|J|^{1/2}|K|^{1/2}/|Q|^2 * (l(K)/l(Q))^{a/2}
    double alpha = 0.0;
    double ratio = 0.0;       // |alpha| / gate bound, target < 1
};

struct ParaRecord {
    int pattern = 1;
    DyadicCube K;
    double raw = 0.0;  // <T(1,1), h_K>
    double data = 0.0; // <phi1>_K <phi2>_K <phi3, h_K>
    double alpha = 0.0;
};

struct FamilyStats {
    double c_meas = 0.0;    // empirical sup of |raw| / bound_shape
    double divisor = 1.0;   // 2 * c_meas (1 when the family is empty)
    double predicted = 0.0; // kernel/WBP/BMO-based prediction for c_meas
    double max_ratio = 0.0;
    int64_t count = 0;
};

struct ExtractionResult {
    std::vector<CoeffRecord> shifts;
    std::vector<ParaRecord> paraproducts;
    std::map<std::string, FamilyStats> families; // keys like "p1-separated"
    // error-term sub-bounds (s_J and complement-tail pairings)
    double err_sJ_cmeas = 0.0;     // |<T(s_J,1_J),h_K>| / (|K|^{1/2}|J|^{-1/2}(lK/lJ)^{a/2})
    double err_tail_cmeas = 0.0;   // |<T(1,1_{J^c}),h_K>| / (|K|^{1/2}(lK/lJ)^{a/2})
    // paraproduct normalization
    double carleson_sup = 0.0;     // sup_K0 (1/|K0|) sum |<T(1,1),h_K>|^2 over good K
    double para_divisor = 1.0;
    double para_gate_value = 0.0;  // Carleson ratio of the emitted alphas (<= 1)
    double bmo_estimate = 0.0;     // measured BMO constant entering the prediction
    // finite-range bookkeeping
    double residual = 0.0;         // coarse corrections + paraproduct top terms + routed triples
    int64_t routed_triples = 0;    // no in-range common ancestor
    int64_t parent_violations = 0; // diagonal triples with good K outside K^(r) (expected 0)
    // reassembly check: emitted + residual vs good-restricted sums
    double reassembled = 0.0;
    double target = 0.0;
    double reassembly_scale = 0.0; // sum of |term| over everything reassembled
    double reassembly_rel_error() const {
        return std::abs(reassembled - target) /
               std::max({std::abs(target), reassembly_scale, 1.0e-12});
    }
    // empirical minimum of max(d(K,I),d(K,J)) / (l(K)^g l(Q)^(1-g)) over
    // separated triples (the minimal-parent separation floor)
    double sep_floor_cmin = 0.0;
    // diagonal scale cap: triples with good output cube obey l(I) <= 2^r l(K)
    int64_t step2_cap_violations = 0;
};

struct ExtractionOptions {
    bool geometric_sweep = false; // enumerate all box-meeting triples, not only data-nonzero
    QuadratureSpec quad;
    double wbp_meas = 0.0;  // measured constants entering the predictions
    double czk_meas = 0.0;
    double bmo_meas = 0.0;
};

// The extraction engine: processes Sigma^1..Sigma^3 through one pattern code
// path (output variable good-restricted), classifies every triple, extracts
// shift/paraproduct coefficients with their divisors, tracks finite-range
// remainders, and verifies reassembly.
ExtractionResult extract_representation(const BilinearKernel& k, const TruncationSpec& band,
                                        const DyadicGrid& grid, const GoodnessParams& params,
                                        const MeshFunction& f, const MeshFunction& g,
                                        const MeshFunction& h, const ExtractionOptions& opts);

// group emitted coefficient records into dyadic-models specs (one per
// (pattern, family, i, j, k)); alphas carry the family divisor already, so
// sum_specs divisor * 2^{-alpha k/2} * form + paraproducts + residual
// reproduces the good-restricted sums
struct EmittedShift {
    int pattern = 1;
    char family = 's';
    double divisor = 1.0;
    ShiftSpec spec;
};
struct EmittedPara {
    int pattern = 1;
    double divisor = 1.0;
    ParaproductSpec spec;
};
std::vector<EmittedShift> to_shift_specs(const ExtractionResult& res, const DyadicGrid& grid);
std::vector<EmittedPara> to_paraproduct_specs(const ExtractionResult& res,
                                              const DyadicGrid& grid);

// --- goodness averaging (Monte Carlo) ---

struct GoodnessAverageReport {
    int64_t trials = 0;
    double mean_reweighted = 0.0; // E_w[ sum_{K good} X_K / pi_good(lev K) ]
    double mean_full = 0.0;       // E_w[ sum_K X_K ]
    double paired_se = 0.0;       // standard error of the paired difference
    double zscore = 0.0;
    bool agree_3sigma = true;
    std::vector<double> pi_by_level;
};

GoodnessAverageReport goodness_average(const BilinearKernel& k, const TruncationSpec& trunc,
                                       const GoodnessParams& params, const MeshFunction& f,
                                       const MeshFunction& g, const MeshFunction& h,
                                       int64_t trials, uint64_t seed, int S, int L,
                                       const QuadratureSpec& quad);

// --- eps2 -> infinity limit ---

struct Eps2LimitReport {
    std::vector<double> eps2_ladder;
    std::vector<double> band_pairings;   // <T^phi_{eps1,eps2}(f,g),h>
    double smooth_pairing = 0.0;         // <T^phi_{eps1}(f,g),h>
    double final_gap = 0.0;              // |band(last) - smooth|
    std::vector<double> para_tail;       // |<T^phi_{eps2}(1,1), h_K>| along the ladder
    bool tail_decreasing = true;
};

Eps2LimitReport eps2_limit_check(const BilinearKernel& k, double eps1, const MeshFunction& f,
                                 const MeshFunction& g, const MeshFunction& h,
                                 const std::vector<double>& eps2_ladder, const DyadicCube& K_probe,
                                 const QuadratureSpec& quad);

// work box for a grid: every grid cube meeting the unit support box fits
CellRange work_range(const DyadicGrid& grid);

} // namespace dyad
