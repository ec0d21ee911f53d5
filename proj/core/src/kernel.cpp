#include "dyad/kernel.hpp"

#include <cmath>
#include <stdexcept>

#include "dyad/rng.hpp"

namespace dyad {

SmoothCutoff smooth_cutoff_default() { return SmoothCutoff{}; }

TruncationSpec TruncationSpec::none() {
    TruncationSpec t;
    t.kind = TruncationKind::None;
    t.eps = 0.0;
    return t;
}

TruncationSpec TruncationSpec::sharp(double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("truncation: eps must be positive");
    TruncationSpec t;
    t.kind = TruncationKind::Sharp;
    t.eps = eps;
    return t;
}

TruncationSpec TruncationSpec::smooth(double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("truncation: eps must be positive");
    TruncationSpec t;
    t.kind = TruncationKind::Smooth;
    t.eps = eps;
    return t;
}

TruncationSpec TruncationSpec::smooth_band(double eps1, double eps2) {
    // eps2 == eps1 is the identically-zero band
    if (!(eps1 > 0.0) || !(eps2 >= eps1))
        throw std::invalid_argument("truncation: band requires 0 < eps1 <= eps2");
    TruncationSpec t;
    t.kind = TruncationKind::SmoothBand;
    t.eps = eps1;
    t.eps2 = eps2;
    return t;
}

BilinearKernel builtin_kernel(const std::string& name) {
    BilinearKernel k;
    k.name = name;
    k.n = 1;
    if (name == "beurling-re" || name == "beurling-im") {
        // ((x-y) + i(x-z))^{-2}; the canonical smooth 1-D bilinear CZ kernel
        bool re = name == "beurling-re";
        k.constants = {1.0, 64.0};
        k.evaluate = [re](double x, double y, double z) {
            double u = x - y, v = x - z;
            double m2 = u * u + v * v;
            if (m2 == 0.0) return 0.0;
            // w^{-2} = conj(w)^2 / |w|^4
            double rr = (u * u - v * v) / (m2 * m2);
            double ii = -2.0 * u * v / (m2 * m2);
            return re ? rr : ii;
        };
    } else if (name == "size-only") {
        // non-cancellative reference kernel for constant-measurement tests
        const double delta0 = 0x1p-8;
        k.constants = {1.0, 48.0};
        k.evaluate = [delta0](double x, double y, double z) {
            double s = std::abs(x - y) + std::abs(x - z) + delta0;
            return 1.0 / (s * s);
        };
    } else if (name == "zero") {
        k.constants = {1.0, 0.0};
        k.evaluate = [](double, double, double) { return 0.0; };
    } else {
        throw std::invalid_argument("builtin_kernel: unknown name '" + name +
                                    "' (known: beurling-re, beurling-im, size-only, zero)");
    }
    return k;
}

double truncated_value(const BilinearKernel& k, const TruncationSpec& t, double x, double y,
                       double z) {
    double s = std::abs(x - y) + std::abs(x - z);
    switch (t.kind) {
        case TruncationKind::None:
            return k(x, y, z);
        case TruncationKind::Sharp:
            return std::max(std::abs(x - y), std::abs(x - z)) > t.eps ? k(x, y, z) : 0.0;
        case TruncationKind::Smooth:
            if (s <= 0.5 * t.eps) return 0.0;
            return k(x, y, z) * t.phi(s / t.eps);
        case TruncationKind::SmoothBand: {
            if (s <= 0.5 * t.eps || s >= t.eps2) return 0.0;
            double w = t.phi(s / t.eps) - t.phi(s / t.eps2);
            return w == 0.0 ? 0.0 : k(x, y, z) * w;
        }
    }
    return 0.0;
}

MeasuredConstants measure_kernel_constants(const BilinearKernel& k, long samples, uint64_t seed) {
    MeasuredConstants m;
    m.samples = samples;
    SplitMix64 rng(seed);
    for (long i = 0; i < samples; ++i) {
        // sample points in a dyadic range of separations to cover all scales
        double scale = std::ldexp(1.0, -int(rng.below(12)));
        double x = rng.uniform(-1.0, 1.0);
        double y = x + scale * rng.uniform(-1.0, 1.0);
        double z = x + scale * rng.uniform(-1.0, 1.0);
        double s = std::abs(x - y) + std::abs(x - z);
        if (s < 1e-12) continue;
        double denom = std::pow(s, 2.0);
        m.size = std::max(m.size, std::abs(k(x, y, z)) * denom);

        double step = 0.5 * std::max(std::abs(x - y), std::abs(x - z));
        double dd = step * rng.uniform(0.05, 1.0);
        double denomH = std::pow(s, 2.0 + k.constants.alpha);
        double da = std::pow(dd, k.constants.alpha);
        if (da > 0.0) {
            m.holder_x = std::max(m.holder_x,
                                  std::abs(k(x + dd, y, z) - k(x, y, z)) * denomH / da);
            m.holder_y = std::max(m.holder_y,
                                  std::abs(k(x, y + dd, z) - k(x, y, z)) * denomH / da);
            m.holder_z = std::max(m.holder_z,
                                  std::abs(k(x, y, z + dd) - k(x, y, z)) * denomH / da);
        }
    }
    return m;
}

} // namespace dyad
