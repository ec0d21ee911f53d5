#pragma once

#include <limits>

#include <cmath>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dyad/dyadic.hpp"

namespace dyad {

// Piecewise-constant function on the level-L mesh. Values live on the cell
// box [origin, origin+extent) (cell units); the function is 0 outside.
// Integrals and Haar coefficients are then exact sums.
struct MeshFunction {
    int n = 1;
    int L = 10;
    std::array<int64_t, 2> origin{0, 0};
    std::array<int64_t, 2> extent{0, 1}; // extent[1] == 1 when n == 1
    std::vector<double> values;

    static MeshFunction zeros(int n, int L, std::array<int64_t, 2> origin,
                              std::array<int64_t, 2> extent);
    // the unit reference box [0,1)^n
    static MeshFunction zeros_unit_box(int n, int L);

    double cell_width() const { return std::ldexp(1.0, -L); }
    double cell_volume() const;

    bool in_box(int64_t i0, int64_t i1) const {
        if (i0 < origin[0] || i0 >= origin[0] + extent[0]) return false;
        if (n == 2 && (i1 < origin[1] || i1 >= origin[1] + extent[1])) return false;
        return true;
    }
    size_t index(int64_t i0, int64_t i1) const {
        return size_t((i0 - origin[0]) * (n == 2 ? extent[1] : 1) + (n == 2 ? (i1 - origin[1]) : 0));
    }
    double at(int64_t i0, int64_t i1 = 0) const {
        return in_box(i0, i1) ? values[index(i0, i1)] : 0.0;
    }
    double& ref(int64_t i0, int64_t i1 = 0) { return values[index(i0, i1)]; }

    // in-place linear algebra on the common grid (boxes must match)
    MeshFunction& axpy(double a, const MeshFunction& other);
    MeshFunction& scale(double a);

    double integral() const;     // sum * cell_volume
    double sum_values() const;
};

struct HaarIndex {
    DyadicCube cube;
    uint8_t eta = 1; // bitmask over axes; 0 means the averaging function h^0
};

MeshFunction indicator(const DyadicCube& q, int L);
// h_I^eta materialized on the mesh (requires cube.level < L for eta != 0)
MeshFunction haar_function(const HaarIndex& idx, int L);

// exact mean of cell values over Q (cells outside f's box count as 0)
double average(const MeshFunction& f, const DyadicCube& q);
// integral of f over Q
double integral_over(const MeshFunction& f, const DyadicCube& q);
// exact inner product <f, h_I^eta>
double haar_coeff(const MeshFunction& f, const HaarIndex& idx);
// Delta_I f as a mesh function supported on I
MeshFunction martingale_diff(const MeshFunction& f, const DyadicCube& I);
// conditional expectation onto level-k cubes of the grid
MeshFunction project_scale(const MeshFunction& f, const DyadicGrid& grid, int k);

MeshFunction dyadic_maximal(const MeshFunction& f, const DyadicGrid& grid);
// pointwise products of ball averages over a geometric ladder of radii
// r = 2^-L, 2^-L+1, ..., >= diam (n = 1 only)
MeshFunction bilinear_maximal_ball(const MeshFunction& f, const MeshFunction& g);
MeshFunction bilinear_maximal_dyadic(const MeshFunction& f, const MeshFunction& g,
                                     const DyadicGrid& grid);

double lp_norm(const MeshFunction& f, double p);
MeshFunction square_function(const MeshFunction& f, const DyadicGrid& grid);

// Per-(grid,function) cube sums for every level in range: O(1) averages and
// Haar coefficients afterwards. All downstream machinery (shifts, the
// representation engine) goes through this.
struct CubeSums {
    const DyadicGrid* grid = nullptr;
    int n = 1;
    struct Level {
        int64_t w = 1;                    // cube width in cells
        std::array<int64_t, 2> shift{0, 0};
        std::array<int64_t, 2> first{0, 0}; // cube index range per axis
        std::array<int64_t, 2> count{0, 0};
        std::vector<double> sums;
    };
    std::vector<Level> levels; // index 0 = level S

    double sum(const DyadicCube& q) const;     // raw cell-value sum over q
    double average(const DyadicCube& q) const; // sum / full cell count
    double haar(const DyadicCube& q, uint8_t eta) const; // <f, h_q^eta>
    double cell_volume = 0.0;
};

CubeSums cube_sums(const MeshFunction& f, const DyadicGrid& grid);

// f restricted to the mesh cells of cube q (exact), as a mesh function
MeshFunction restrict_to(const MeshFunction& f, const DyadicCube& q);

// copy f onto a new cell box (values outside f's box are 0)
MeshFunction rebox(const MeshFunction& f, std::array<int64_t, 2> origin,
                   std::array<int64_t, 2> extent);
// a*x + b*y on the union box
MeshFunction mesh_lincomb(double a, const MeshFunction& x, double b, const MeshFunction& y);

// I/O: flat little-endian float64 payload + JSON header {n,L,origin,extent}
void write_mesh(const MeshFunction& f, const std::string& path_base);
MeshFunction read_mesh(const std::string& path_base);
void write_mesh_csv(const MeshFunction& f, const std::string& path);

} // namespace dyad
