#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ergo/density.hpp"
#include "ergo/geometry.hpp"
#include "ergo/kernels.hpp"
#include "ergo/quadrature.hpp"

namespace ergo {

namespace detail {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 FFT.
inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * kPi / double(len) * (inverse ? 1.0 : -1.0);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                auto u = a[i + k], v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= double(n);
}

}  // namespace detail

/// Laplace-Beltrami eigenstructure on the lattice grids of the flat torus and
/// circle: frequencies k with |k|_inf <= res/2 - 1 and lambda_k = (2pi/s)^2 |k|^2.
/// Transforms are exact for band-limited functions on the periodic lattice.
class FourierBasis {
public:
    explicit FourierBasis(const QuadratureGrid& grid) : grid_(&grid) {
        const Manifold& M = grid.manifold;
        if (M.kind() == ManifoldKind::Sphere)
            throw std::invalid_argument("fourier basis: torus/circle only");
        if (!detail::is_pow2(grid.resolution))
            throw std::invalid_argument("fourier basis: resolution must be a power of two");
        d_ = M.intrinsic_dim();
        res_ = grid.resolution;
        s_ = M.size();
        n_ = grid.size();
    }

    int dimension() const { return d_; }
    int resolution() const { return res_; }
    int k_max() const { return res_ / 2 - 1; }
    double spectral_gap() const { return std::pow(2.0 * kPi / s_, 2); }

    /// coefficients c_k with f(x_j) = sum_k c_k exp(2 pi i k.x_j / s)
    std::vector<std::complex<double>> forward(const std::vector<double>& f) const {
        if (f.size() != n_) throw std::invalid_argument("fourier: size mismatch");
        std::vector<std::complex<double>> c(f.begin(), f.end());
        transform(c, false);
        for (auto& z : c) z /= double(n_);
        return c;
    }

    std::vector<double> inverse(std::vector<std::complex<double>> c) const {
        if (c.size() != n_) throw std::invalid_argument("fourier: size mismatch");
        for (auto& z : c) z *= double(n_);
        transform(c, true);
        std::vector<double> f(n_);
        for (std::size_t i = 0; i < n_; ++i) f[i] = c[i].real();
        return f;
    }

    /// integer frequency vector of the flat index (components in (-res/2, res/2])
    void frequency(std::size_t flat, int* k) const {
        for (int i = d_ - 1; i >= 0; --i) {
            int j = int(flat % res_);
            k[i] = j <= res_ / 2 ? j : j - res_;
            flat /= res_;
        }
    }

    double eigenvalue(const int* k) const {
        double k2 = 0;
        for (int i = 0; i < d_; ++i) k2 += double(k[i]) * k[i];
        return std::pow(2.0 * kPi / s_, 2) * k2;
    }

    bool aliased(const int* k) const {
        for (int i = 0; i < d_; ++i)
            if (std::abs(k[i]) > k_max()) return true;
        return false;
    }

    /// Parseval sum V * sum |c_k|^2 (equals the L2 norm squared for grid-resolved f).
    double l2_norm_sq(const std::vector<double>& f) const {
        auto c = forward(f);
        double acc = 0;
        for (const auto& z : c) acc += std::norm(z);
        return acc * grid_->manifold.total_volume();
    }

private:
    void transform(std::vector<std::complex<double>>& a, bool inverse) const {
        // row-column decomposition along each axis
        std::vector<std::complex<double>> line(res_);
        std::size_t stride = 1;
        for (int axis = d_ - 1; axis >= 0; --axis) {
            std::size_t block = stride * std::size_t(res_);
            for (std::size_t base = 0; base < n_; base += block)
                for (std::size_t off = 0; off < stride; ++off) {
                    for (int j = 0; j < res_; ++j) line[j] = a[base + off + j * stride];
                    detail::fft_pow2(line, inverse);
                    for (int j = 0; j < res_; ++j) a[base + off + j * stride] = line[j];
                }
            stride = block;
        }
    }

    const QuadratureGrid* grid_;
    int d_ = 1, res_ = 0;
    double s_ = 1;
    std::size_t n_ = 0;
};

/// || (-Delta)^{-1/2} f ||_{L2} for a zero-mean grid function, by dividing each
/// mode by sqrt(lambda_k); aliased modes (|k| = res/2) are excluded.
inline double neg_sobolev_half(const std::vector<double>& f, const QuadratureGrid& grid) {
    FourierBasis basis(grid);
    auto c = basis.forward(f);
    double rms = 0;
    for (const auto& z : c) rms += std::norm(z);
    rms = std::sqrt(rms);
    if (std::abs(c[0]) > 1e-8 * std::max(1.0, rms))
        throw std::invalid_argument("neg_sobolev_half: input must have zero mean");
    int k[kMaxIntrinsic];
    double acc = 0;
    for (std::size_t flat = 1; flat < c.size(); ++flat) {
        basis.frequency(flat, k);
        if (basis.aliased(k)) continue;
        acc += std::norm(c[flat]) / basis.eigenvalue(k);
    }
    return std::sqrt(acc * grid.manifold.total_volume());
}

/// Upper bound for W2^2(p1 dx, p2 dx): (4/p_min) ||(-Delta)^{-1/2}(p1-p2)||^2.
inline double peyre_bound(const std::vector<double>& p1, const std::vector<double>& p2,
                          double p_min, const QuadratureGrid& grid) {
    if (p1.size() != p2.size() || p1.size() != grid.size())
        throw std::invalid_argument("peyre_bound: size mismatch");
    if (p_min <= 0) throw std::invalid_argument("peyre_bound: p_min must be positive");
    std::vector<double> diff(p1.size());
    for (std::size_t i = 0; i < p1.size(); ++i) diff[i] = p1[i] - p2[i];
    double ns = neg_sobolev_half(diff, grid);
    return 4.0 / p_min * ns * ns;
}

/// Residual of sum_alpha P_alpha(P_alpha f) against the analytic Laplacian at
/// x, with nested central differences along the projected frame directions.
inline double laplacian_identity_check(const Manifold& M,
                                       const std::function<double(const ManifoldPoint&)>& f,
                                       const std::function<double(const ManifoldPoint&)>& lap_f,
                                       const ManifoldPoint& x, double delta = 1e-3) {
    const int m = M.ambient_dim();
    auto p_alpha = [&](const ManifoldPoint& y, int alpha) {
        TangentProjector P = tangent_projection(M, y);
        AmbientVec v{};
        for (int i = 0; i < m; ++i) v[i] = P.at(i, alpha);
        return v;
    };
    auto d_alpha = [&](const ManifoldPoint& y, int alpha) {
        AmbientVec v = p_alpha(y, alpha);
        AmbientVec fwd = v, bwd = v;
        for (int i = 0; i < m; ++i) {
            fwd[i] *= delta;
            bwd[i] *= -delta;
        }
        return (f(exp_map(M, y, fwd)) - f(exp_map(M, y, bwd))) / (2.0 * delta);
    };
    double acc = 0;
    for (int alpha = 0; alpha < m; ++alpha) {
        AmbientVec v = p_alpha(x, alpha);
        AmbientVec fwd = v, bwd = v;
        for (int i = 0; i < m; ++i) {
            fwd[i] *= delta;
            bwd[i] *= -delta;
        }
        acc += (d_alpha(exp_map(M, x, fwd), alpha) - d_alpha(exp_map(M, x, bwd), alpha)) /
               (2.0 * delta);
    }
    return std::fabs(acc - lap_f(x));
}

// ---------------------------------------------------------------------------
// smoothing bias decay through the Fourier multiplier of the kernel
// ---------------------------------------------------------------------------

namespace detail {

/// Marginal of the radial kernel along one axis:
/// g(t) = int_{R^{d-1}} K(sqrt(t^2 + |w|^2)) dw for |t| <= 1.
inline double kernel_axis_marginal(const KernelProfile& K, double t) {
    t = std::fabs(t);
    if (t >= 1.0) return 0.0;
    if (K.dim == 1) return K.eval(t);
    double rmax = std::sqrt(1.0 - t * t);
    if (K.dim == 2) {
        auto f = [&](double r) { return K.eval(std::sqrt(t * t + r * r)); };
        return 2.0 * integrate_panels(f, 0.0, rmax, 64);
    }
    auto f = [&](double r) {
        return K.eval(std::sqrt(t * t + r * r)) * std::pow(r, K.dim - 2);
    };
    return unit_sphere_area(K.dim - 1) * integrate_panels(f, 0.0, rmax, 64);
}

/// Fourier multiplier m(a) = int K(|u|) cos(a u_1) du at wavenumber a.
inline double kernel_multiplier(const KernelProfile& K, double a) {
    auto f = [&](double t) { return kernel_axis_marginal(K, t) * std::cos(a * t); };
    return 2.0 * integrate_panels(f, 0.0, 1.0, 256);
}

}  // namespace detail

struct BiasDecayReport {
    std::vector<double> h;
    std::vector<double> norm_sq;  // ||(-Delta)^{-1/2}(p_h - p)||^2
    double exponent = 0;          // fitted slope of log norm_sq vs log h
};

/// Smoothing-bias decay of the negative-Sobolev norm for a trig density in
/// geodesic mode: p_h - p has the same modes as p with coefficients scaled by
/// (m(2 pi k h / s) - 1), so the norm is exact up to the 1D multiplier
/// quadrature and the decay exponent can be fitted noise-free.
inline BiasDecayReport bias_decay_check(const Density& p, const KernelProfile& K,
                                        const std::vector<double>& h_sweep) {
    if (p.manifold.kind() == ManifoldKind::Sphere)
        throw std::invalid_argument("bias_decay_check: torus/circle only");
    BiasDecayReport rep;
    rep.h = h_sweep;
    const double s = p.manifold.size();
    const double V = p.manifold.total_volume();
    for (double h : h_sweep) {
        double acc = 0;
        for (std::size_t j = 0; j < p.trig_amps.size(); ++j) {
            double kfreq = double(j + 1);
            double lam = std::pow(2.0 * kPi * kfreq / s, 2);
            double m = detail::kernel_multiplier(K, 2.0 * kPi * kfreq * h / s);
            // cos mode amplitude a/V splits over the +-k exponentials
            double c2 = std::pow(p.trig_amps[j] / V / 2.0, 2) * 2.0;
            acc += c2 * (m - 1.0) * (m - 1.0) / lam;
        }
        rep.norm_sq.push_back(acc * V);
    }
    // least squares slope of log norm_sq against log h
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < rep.h.size(); ++i) {
        if (rep.norm_sq[i] <= 0) continue;
        double lx = std::log(rep.h[i]), ly = std::log(rep.norm_sq[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    rep.exponent = (n >= 2) ? (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx) : 0.0;
    return rep;
}

}  // namespace ergo
