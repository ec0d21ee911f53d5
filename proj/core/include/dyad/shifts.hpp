#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dyad/mesh.hpp"

namespace dyad {

// thrown when a coefficient violates its normalization gate
struct NormalizationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class FormFlavor { Direct, Adjoint1, Adjoint2 };

// One coefficient of a cancellative bilinear shift:
// alpha <f, h_I^etaI> <g, h_J^etaJ> h_K^etaK with I,J,K inside Q at fixed
// level offsets. eta = 0 is the averaging function h^0; nonzero bitmasks are
// cancellative patterns.
struct ShiftCoeff {
    DyadicCube Q, I, J, K;
    uint8_t etaI = 1, etaJ = 0, etaK = 1;
    double alpha = 0.0;
};

// |alpha| <= |I|^{1/2}|J|^{1/2}|K|^{1/2}/|Q|^2
double shift_coeff_bound(const ShiftCoeff& c);

struct ShiftSpec {
    int i = 0, j = 0, k = 0;
    FormFlavor flavor = FormFlavor::Direct;
    DyadicGrid grid;
    std::vector<ShiftCoeff> coeffs;

    // validates level offsets and the normalization gate; throws loudly
    static ShiftSpec make(int i, int j, int k, FormFlavor flavor, DyadicGrid grid,
                          std::vector<ShiftCoeff> coeffs);

    std::string to_json() const;
    static ShiftSpec from_json(const std::string& text);
};

// sum over Q of A_Q(f,g) (Direct flavor semantics)
MeshFunction shift_apply(const ShiftSpec& s, const MeshFunction& f, const MeshFunction& g);
// trilinear form; adjoint flavors permute which argument carries which slot:
//   Adjoint1(f,g,h) = Direct(h,g,f),  Adjoint2(f,g,h) = Direct(f,h,g)
double shift_form(const ShiftSpec& s, const MeshFunction& f, const MeshFunction& g,
                  const MeshFunction& h);
// the adjoint form spec (coefficients unchanged, flavor composed)
ShiftSpec shift_adjoint(const ShiftSpec& s, int which);

struct ParaCoeff {
    DyadicCube K;
    uint8_t eta = 1;
    double alpha = 0.0;
};

struct ParaproductSpec {
    FormFlavor flavor = FormFlavor::Direct;
    DyadicGrid grid;
    std::vector<ParaCoeff> coeffs;

    // validates the Carleson condition sum_{K subset K0} |a_K|^2 <= |K0|
    // over every candidate K0 in range; throws NormalizationError
    static ParaproductSpec make(FormFlavor flavor, DyadicGrid grid, std::vector<ParaCoeff> coeffs);

    std::string to_json() const;
    static ParaproductSpec from_json(const std::string& text);
};

// largest Carleson ratio sup_{K0} (1/|K0|) sum_{K subset K0} |a_K|^2
double carleson_ratio(const DyadicGrid& grid, const std::vector<ParaCoeff>& coeffs);

MeshFunction paraproduct_apply(const ParaproductSpec& p, const MeshFunction& f,
                               const MeshFunction& g);
double paraproduct_form(const ParaproductSpec& p, const MeshFunction& f, const MeshFunction& g,
                        const MeshFunction& h);

// random admissible shift for harness / sparse sweeps
ShiftSpec random_shift(const DyadicGrid& grid, int i, int j, int k, int max_coeffs,
                       uint64_t seed, double coeff_scale = 1.0);

struct NormHarnessReport {
    double p = 4.0, q = 4.0, r = 2.0;
    int64_t trials = 0;
    double max_ratio = 0.0;
    double median_ratio = 0.0;
    std::vector<double> ratios;
};

// max over random (f,g) of ||op(f,g)||_r / (||f||_p ||g||_q)
NormHarnessReport norm_harness_shift(const ShiftSpec& s, double p, double q, int64_t trials,
                                     uint64_t seed);
NormHarnessReport norm_harness_paraproduct(const ParaproductSpec& s, double p, double q,
                                           int64_t trials, uint64_t seed);

// harness test functions: random Haar polynomials and indicator sums
MeshFunction random_test_function(const DyadicGrid& grid, SplitMix64& rng);

} // namespace dyad
