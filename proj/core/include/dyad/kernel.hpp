#pragma once

#include <cstdint>

#include <cmath>

#include <functional>
#include <memory>
#include <string>

namespace dyad {

struct KernelConstants {
    double alpha = 1.0;   // Holder exponent in (0,1]
    double cz_norm = 0.0; // declared ||K||_{CZ_alpha}
};

// Smooth cutoff phi: [0,inf) -> [0,1], phi = 0 on [0,1/2], phi = 1 on [1,inf),
// ||phi'||_inf <= 10.
struct SmoothCutoff {
    double operator()(double t) const {
        if (t <= 0.5) return 0.0;
        if (t >= 1.0) return 1.0;
        double u = 2.0 * t - 1.0;
        return u * u * (3.0 - 2.0 * u); // smoothstep, max slope 3
    }
};

SmoothCutoff smooth_cutoff_default();

enum class TruncationKind { None, Sharp, Smooth, SmoothBand };

struct TruncationSpec {
    TruncationKind kind = TruncationKind::Smooth;
    double eps = 0.125;
    double eps2 = 0.0; // band only, must exceed eps
    SmoothCutoff phi;

    static TruncationSpec none();
    static TruncationSpec sharp(double eps);
    static TruncationSpec smooth(double eps);
    static TruncationSpec smooth_band(double eps1, double eps2);
};

// A bilinear kernel K(x,y,z) in n = 1 together with its declared constants.
// translation_invariant marks kernels of the form kappa(x-y, x-z), which is
// what the quadrature tables exploit.
struct BilinearKernel {
    std::string name;
    int n = 1;
    KernelConstants constants;
    bool translation_invariant = true;
    std::function<double(double, double, double)> evaluate; // (x,y,z)

    double operator()(double x, double y, double z) const { return evaluate(x, y, z); }
};

// name in {beurling-re, beurling-im, size-only, zero}; throws on unknown names
BilinearKernel builtin_kernel(const std::string& name);

// Truncated kernel value (the object every pairing integrates)
double truncated_value(const BilinearKernel& k, const TruncationSpec& t, double x, double y,
                       double z);

// Kernel with permuted roles: which = 1 swaps x <-> y (the T^{1*} kernel),
// which = 2 swaps x <-> z (T^{2*}). Truncation permutes with it, so pass the
// truncation here, not to the pairing.
struct TruncatedEvaluator {
    BilinearKernel kernel;
    TruncationSpec trunc;
    int permutation = 0; // 0 direct, 1 adjoint-1, 2 adjoint-2

    double operator()(double x, double y, double z) const {
        if (permutation == 1) return truncated_value(kernel, trunc, y, x, z);
        if (permutation == 2) return truncated_value(kernel, trunc, z, y, x);
        return truncated_value(kernel, trunc, x, y, z);
    }
    bool translation_invariant() const { return kernel.translation_invariant; }
};

struct MeasuredConstants {
    double size = 0.0;      // sup |K| (|x-y|+|x-z|)^{2n}
    double holder_x = 0.0;  // sup of the x-Holder ratio
    double holder_y = 0.0;
    double holder_z = 0.0;
    double cz_norm() const {
        return std::max(std::max(size, holder_x), std::max(holder_y, holder_z));
    }
    long samples = 0;
};

// Sampled sup of the four defining ratios over quasi-random admissible
// tuples. Reported as a measurement, not claimed as the true sup.
MeasuredConstants measure_kernel_constants(const BilinearKernel& k, long samples, uint64_t seed);

} // namespace dyad
