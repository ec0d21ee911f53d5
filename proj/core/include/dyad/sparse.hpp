#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dyad/quadrature.hpp"
#include "dyad/shifts.hpp"

namespace dyad {

struct SparseCollection {
    DyadicGrid grid;
    double eta = 0.5;
    std::vector<DyadicCube> cubes;
    double major_ratio_min = 0.0; // min |E_Q|/|Q| achieved by the canonical assignment

    std::string to_json() const;
    static SparseCollection from_json(const std::string& text);
};

struct SparseVerifyResult {
    bool ok = false;
    double min_ratio = 0.0;
    int64_t cubes = 0;
};

// Canonical major sets for nested-generated families:
// E_Q = Q minus the maximal strict S-subcubes of Q. Exact cell arithmetic.
// Throws on families that are not nested (no E_Q assignment supplied).
SparseVerifyResult verify_sparse(const SparseCollection& s);

// Lambda_S(f1,f2,f3) = sum_Q |Q| <|f1|>_Q <|f2|>_Q <|f3|>_Q
double lambda_form(const SparseCollection& s, const MeshFunction& f1, const MeshFunction& f2,
                   const MeshFunction& f3);

struct BuildSparseReport {
    int generations = 0;
    double worst_stage_fraction = 0.0; // max over stages of sum|E-cubes| / |root|
};

// Stopping-time family with C0 = ceil(3/(1-eta)); every stage
// obeys sum_{stopping} |Q| <= (1-eta)|root| exactly (asserted).
SparseCollection build_sparse(const MeshFunction& f1, const MeshFunction& f2,
                              const MeshFunction& f3, double eta, const DyadicGrid& grid,
                              BuildSparseReport* report = nullptr);

double sparse_c0(double eta);     // ceil(3/(1-eta))
double universal_c(double eta2, int n); // max(8^n, ceil((3*2^n/(1-eta2))^3))

struct CzDecomposition {
    MeshFunction good;
    std::vector<std::pair<DyadicCube, MeshFunction>> bad; // b_Q = (f - <f>_Q) 1_Q
};

// pre: stopping cubes pairwise disjoint, inside Q0
CzDecomposition cz_decompose(const MeshFunction& f, const std::vector<DyadicCube>& stopping,
                             const DyadicCube& Q0);

// Abstract rho-form: per-cube kernels constant on the (rho+1)-level cell
// decomposition of Q^3, sup bounded by |Q|^{-2} (assumptions A and C).
struct RhoForm {
    DyadicGrid grid;
    int rho = 0;
    double bound_B = 1.0; // assumption B constant for (p,q,r')
    double p = 4.0, q = 4.0, r = 2.0;
    struct CubeKernel {
        DyadicCube Q;
        std::vector<double> table; // (2^(rho+1))^3 values, x-major
    };
    std::vector<CubeKernel> kernels;

    static RhoForm from_shift(const ShiftSpec& s, double bound_B);
};

// exact sum of per-cube table contractions, optionally over a subfamily
double rho_form_eval(const RhoForm& F, const MeshFunction& f1, const MeshFunction& f2,
                     const MeshFunction& f3,
                     const std::vector<DyadicCube>* subfamily = nullptr);

struct DominationReport {
    double form_value = 0.0;
    double lambda = 0.0;
    double ratio = 0.0; // |S^rho| / ((B + rho + 1) Lambda_S)
    SparseCollection sparse;
};

DominationReport sparse_dominate(const RhoForm& F, const MeshFunction& f1, const MeshFunction& f2,
                                 const MeshFunction& f3, double eta);

// layered maximal-cube family, verified eta2-sparse; dominates the sparse
// form of every other sparse family on the same functions
SparseCollection universal_sparse(const MeshFunction& f1, const MeshFunction& f2,
                                  const MeshFunction& f3, double eta2, const DyadicGrid& grid);

struct UniversalDominationReport {
    double lambda_s = 0.0;
    double lambda_u = 0.0;
    double ratio = 0.0;
    bool violation = false; // Lambda_U = 0 while Lambda_S > 0 (should not happen)
};

UniversalDominationReport universal_dominates(const SparseCollection& s,
                                              const SparseCollection& u, const MeshFunction& f1,
                                              const MeshFunction& f2, const MeshFunction& f3);

// random nested eta-sparse family for Monte Carlo sweeps (verified on return)
SparseCollection random_sparse_family(const DyadicGrid& grid, double eta, uint64_t seed);

// --- the 3^n-grid covering (one-third construction) ---

struct RealCube {
    std::array<double, 2> corner{0, 0};
    double side = 1.0;
    int dim = 1;
};

struct ThreeGridCover {
    int grid_index = 0; // in {0..3^n-1}
    int level = 0;      // cube sidelength 2^-level (negative levels allowed)
    RealCube cube;
};

int threegrid_count(int n); // 3^n

// covering cube R with P inside R and l(R) <= 6 l(P); tries the smallest
// admissible level first so dyadic inputs come back at <= 2 l(P)
std::optional<ThreeGridCover> threegrid_cover(const RealCube& P);

struct CorollaryReport {
    std::vector<double> eps_ladder;
    std::vector<double> pairings; // <T_eps(f,g), h> per ladder point
    double sup_abs = 0.0;
    double lambda = 0.0;
    double c_est = 0.0;
    double ratio = 0.0; // sup / (c_est * lambda)
    SparseCollection sparse;
};

CorollaryReport corollary_check(const BilinearKernel& k, const std::vector<double>& eps_ladder,
                                const MeshFunction& f, const MeshFunction& g,
                                const MeshFunction& h, double eta, const DyadicGrid& grid,
                                const QuadratureSpec& quad, double c_est);

} // namespace dyad
