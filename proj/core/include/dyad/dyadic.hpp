#pragma once

#include <cmath>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dyad/rng.hpp"

namespace dyad {

// Cube coordinates are kept in units of the finest mesh cell 2^-L, so all
// geometry (nesting, distances, boundary gaps) is exact integer arithmetic.
// A cube of level k spans 2^(L-k) cells per axis.
struct DyadicCube {
    int level = 0;
    std::array<int64_t, 2> corner{0, 0}; // in mesh cells; axes beyond dim unused
    int dim = 1;

    friend bool operator==(const DyadicCube&, const DyadicCube&) = default;
};

struct GoodnessParams {
    int r = 4;
    double gamma = 1.0 / 6.0; // alpha/(2(2n+alpha))
    double alpha = 1.0;
};

// gamma = alpha / (2 (2n + alpha)); throws std::domain_error outside (0,1]
double gamma_of(double alpha, int n);
GoodnessParams goodness_params(double alpha, int n, int r = 4);

// Shifted dyadic grid over a finite scale window: levels S (coarsest cubes,
// sidelength 2^-S) through L (mesh cells). A level-k cube is translated by
// sum_{i=k+1..L} 2^(L-i) omega_i cells, so only shifts at scales finer than
// the cube move it and nesting is preserved.
struct DyadicGrid {
    int n = 1;
    int S = 0;
    int L = 10;
    // omega[j] is the shift bitmask for scale level S+1+j (bit a = axis a),
    // j = 0 .. L-S-1.
    std::vector<uint8_t> omega;

    int levels() const { return L - S + 1; }
    int64_t cells_per_axis(int level) const { return int64_t(1) << (L - level); }

    // component of omega for scale level i (S+1 <= i <= L), per axis
    int omega_bit(int i, int axis) const;

    // shift of level-k cubes along `axis`, in mesh cells
    int64_t shift_cells(int k, int axis) const;

    DyadicCube cube_containing(int level, const std::array<int64_t, 2>& cell) const;
    DyadicCube parent(const DyadicCube& q) const;
    DyadicCube ancestor(const DyadicCube& q, int k) const;
    std::vector<DyadicCube> children(const DyadicCube& q) const;
    bool contains(const DyadicCube& outer, const DyadicCube& inner) const;

    // cubes of a given level intersecting the half-open cell box
    // [lo, hi) per axis
    std::vector<DyadicCube> cubes_at_level(int level, const std::array<int64_t, 2>& lo,
                                           const std::array<int64_t, 2>& hi) const;

    bool is_good(const DyadicCube& q, const GoodnessParams& p) const;

    std::string to_json() const;
    static DyadicGrid from_json(const std::string& text);
};

// all-zero shift (the standard grid D_0)
DyadicGrid standard_grid(int n, int S, int L);

// each omega^i drawn independently and uniformly from {0,1}^n
DyadicGrid sample_grid(uint64_t seed, int S, int L, int n);

// l^infty distance between cubes in cell units (0 when they intersect)
int64_t cube_distance_cells(const DyadicCube& a, const DyadicCube& b, const DyadicGrid& g);

// sidelength in absolute units (2^-level)
double cube_sidelength(const DyadicCube& q);
double cube_volume(const DyadicCube& q);

std::string cube_to_json(const DyadicCube& q);
DyadicCube cube_from_json(const std::string& text, int dim_hint = 1);

// Exact pi_good for a level: enumerates the 2^((lev-S)*n) coarse shift
// configurations that goodness depends on. Cheap for desk-scale windows.
double exact_pi_good(int level, int S, int L, int n, const GoodnessParams& p);

struct PiGoodEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    int64_t trials = 0;
    int64_t good = 0;
};

// Monte Carlo pi_good for the reference cube [0,2^-base_level)^n.
PiGoodEstimate estimate_pi_good(const GoodnessParams& p, int base_level, int64_t trials,
                                uint64_t seed, int S, int L, int n);

} // namespace dyad
