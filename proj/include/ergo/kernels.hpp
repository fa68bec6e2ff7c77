#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ergo/geometry.hpp"
#include "ergo/quadrature.hpp"

namespace ergo {

enum class KernelFamily { Triangular, Epanechnikov, PolyOrder };

/// Radial profile K on [0,1], zero outside. Poly profiles are
/// K(t) = (sum_j c_j t^{2j}) (1-t^2)^2 with coefficients solved so that the
/// d-dimensional integral is 1 and the even radial moments up to order r-2
/// vanish; by radial symmetry this realizes a kernel of order r.
struct KernelProfile {
    KernelFamily family = KernelFamily::Triangular;
    int dim = 1;    // target dimension d used for normalization
    int order = 2;  // r
    std::vector<double> coeffs;
    double lipschitz = 0;
    double sup_norm = 0;
    bool nonneg = true;

    double eval(double t) const {
        t = std::fabs(t);
        if (t >= 1.0) return 0.0;
        switch (family) {
            case KernelFamily::Triangular: return coeffs[0] * (1.0 - t);
            case KernelFamily::Epanechnikov: {
                double q = 1.0 - t * t;
                return coeffs[0] * q;
            }
            case KernelFamily::PolyOrder: {
                double t2 = t * t, poly = 0, p = 1;
                for (double c : coeffs) {
                    poly += c * p;
                    p *= t2;
                }
                double q = 1.0 - t2;
                return poly * q * q;
            }
        }
        return 0;
    }

    double deriv(double t) const {
        t = std::fabs(t);
        if (t >= 1.0) return 0.0;
        switch (family) {
            case KernelFamily::Triangular: return -coeffs[0];
            case KernelFamily::Epanechnikov: return -2.0 * coeffs[0] * t;
            case KernelFamily::PolyOrder: {
                double t2 = t * t, poly = 0, dpoly = 0, p = 1;
                for (std::size_t j = 0; j < coeffs.size(); ++j) {
                    poly += coeffs[j] * p;
                    if (j >= 1) dpoly += coeffs[j] * 2.0 * double(j) * std::pow(t, 2.0 * j - 1.0);
                    p *= t2;
                }
                double q = 1.0 - t2;
                return dpoly * q * q - poly * 4.0 * t * q;
            }
        }
        return 0;
    }

    /// Quadrature of int_{R^d} K(|u|) |u|^{2k} du (k = 0 gives the mass).
    double radial_moment(int k, int panels = 256) const {
        double omega = unit_sphere_area(dim);
        auto f = [&](double t) { return eval(t) * std::pow(t, 2 * k + dim - 1); };
        return omega * integrate_panels(f, 0.0, 1.0, panels);
    }
};

namespace detail {

/// int_0^1 t^a (1-t^2)^2 dt in closed form (Beta function with half-integer
/// arguments): substitute u = t^2.
inline double poly_weight_integral(double a) {
    double x = 0.5 * (a + 1.0);
    return 1.0 / (x * (x + 1.0) * (x + 2.0));
}

inline void solve_dense(std::vector<std::vector<double>>& A, std::vector<double>& b) {
    int n = int(b.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
        if (std::fabs(A[piv][col]) < 1e-14)
            throw std::runtime_error("kernel construction: singular moment system");
        std::swap(A[piv], A[col]);
        std::swap(b[piv], b[col]);
        for (int r = col + 1; r < n; ++r) {
            double f = A[r][col] / A[col][col];
            for (int c = col; c < n; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        for (int c = r + 1; c < n; ++c) b[r] -= A[r][c] * b[c];
        b[r] /= A[r][r];
    }
}

inline void measure_profile_norms(KernelProfile& k) {
    const int n = 10001;
    double sup = 0, lip = 0;
    for (int i = 0; i < n; ++i) {
        double t = double(i) / (n - 1);
        sup = std::max(sup, std::fabs(k.eval(t)));
        lip = std::max(lip, std::fabs(k.deriv(t)));
    }
    k.sup_norm = sup;
    k.lipschitz = lip;
}

}  // namespace detail

inline KernelProfile make_profile(KernelFamily family, int d, int r = 0) {
    if (d < 1 || d > kMaxIntrinsic) throw std::invalid_argument("make_profile: need 1 <= d <= 6");
    KernelProfile k;
    k.dim = d;
    k.family = family;
    double omega = unit_sphere_area(d);
    switch (family) {
        case KernelFamily::Triangular: {
            // c * int (1-t) t^{d-1} = c / (d(d+1))
            k.coeffs = {double(d) * (d + 1) / omega};
            k.order = 2;
            k.nonneg = true;
            break;
        }
        case KernelFamily::Epanechnikov: {
            k.coeffs = {double(d) * (d + 2) / (2.0 * omega)};
            k.order = 2;
            k.nonneg = true;
            break;
        }
        case KernelFamily::PolyOrder: {
            if (r < 2 || r % 2 != 0 || r > 8)
                throw std::invalid_argument("poly kernel: order must be even, 2 <= r <= 8");
            int n = r / 2;  // unknowns c_0..c_{n-1}
            std::vector<std::vector<double>> A(n, std::vector<double>(n));
            std::vector<double> b(n, 0.0);
            b[0] = 1.0;
            for (int kk = 0; kk < n; ++kk)  // moment 2*kk (kk = 0: mass)
                for (int j = 0; j < n; ++j)
                    A[kk][j] = omega * detail::poly_weight_integral(2.0 * j + 2.0 * kk + d - 1.0);
            detail::solve_dense(A, b);
            k.coeffs = b;
            k.order = r;
            k.nonneg = (r == 2);
            break;
        }
    }
    detail::measure_profile_norms(k);
    return k;
}

/// Parses "triangular", "epanechnikov", "poly:r=4".
inline KernelProfile parse_kernel(std::string_view spec, int d) {
    if (spec == "triangular") return make_profile(KernelFamily::Triangular, d);
    if (spec == "epanechnikov") return make_profile(KernelFamily::Epanechnikov, d);
    if (spec.substr(0, 5) == "poly:") {
        auto eq = spec.find('=');
        if (eq == std::string_view::npos)
            throw std::invalid_argument("bad kernel spec: " + std::string(spec));
        int r = std::stoi(std::string(spec.substr(eq + 1)));
        return make_profile(KernelFamily::PolyOrder, d, r);
    }
    throw std::invalid_argument("bad kernel spec: " + std::string(spec));
}

enum class DistanceMode { Ambient, Geodesic };

inline DistanceMode parse_distance_mode(std::string_view s) {
    if (s == "ambient") return DistanceMode::Ambient;
    if (s == "geodesic") return DistanceMode::Geodesic;
    throw std::invalid_argument("distance_mode must be ambient|geodesic");
}

namespace detail {

/// Continuum normalizer eta_h = int_M K(dist(x,y)/h) dy. The three model
/// manifolds are homogeneous and the embeddings are isometry-equivariant, so
/// eta is independent of x in both distance modes and can be computed once by
/// radial (or for the ambient torus, tensor) quadrature.
inline double eta_continuum(const Manifold& M, const KernelProfile& K, double h,
                            DistanceMode mode, double* rel_err = nullptr) {
    if (h <= 0) throw std::invalid_argument("eta: h must be positive");
    if (rel_err) *rel_err = 1e-10;
    const int d = M.intrinsic_dim();
    switch (M.kind()) {
        case ManifoldKind::Circle:
        case ManifoldKind::FlatTorus: {
            if (mode == DistanceMode::Geodesic) {
                if (h > M.injectivity_radius())
                    throw std::invalid_argument("eta: geodesic bandwidth exceeds injectivity radius");
                // flat change of variables: exactly h^d times the unit mass of K
                double omega = unit_sphere_area(d);
                auto f = [&](double t) { return K.eval(t) * std::pow(t, d - 1); };
                return std::pow(h, d) * omega * integrate_panels(f, 0.0, 1.0, 256);
            }
            double R = M.factor_radius();
            if (d == 1) {
                double dmax = (h >= 2.0 * R) ? 0.5 * M.size()
                                             : 2.0 * R * std::asin(0.5 * h / R);
                dmax = std::min(dmax, 0.5 * M.size());
                auto f = [&](double t) {
                    double chord = 2.0 * R * std::sin(0.5 * t / R);
                    return K.eval(chord / h);
                };
                return 2.0 * integrate_panels(f, 0.0, dmax, 256);
            }
            // ambient mode on the d-torus: tensor quadrature over the support box
            double dmax = (h >= 2.0 * R) ? 0.5 * M.size() : 2.0 * R * std::asin(0.5 * h / R);
            dmax = std::min(dmax, 0.5 * M.size());
            int base = (d == 2) ? 48 : (d == 3 ? 16 : 6);
            static const GaussLegendre gl8(8);
            auto chord2 = [&](double t) {
                double c = 2.0 * R * std::sin(0.5 * t / R);
                return c * c;
            };
            // recursive tensor integration with one refinement for the error estimate
            auto tensor = [&](int panels) {
                std::vector<double> nodes, wts;
                double hstep = dmax / panels;
                for (int p = 0; p < panels; ++p)
                    for (std::size_t i = 0; i < gl8.x.size(); ++i) {
                        nodes.push_back((p + 0.5 * (1.0 + gl8.x[i])) * hstep);
                        wts.push_back(0.5 * hstep * gl8.w[i]);
                    }
                std::size_t nn = nodes.size();
                std::vector<double> c2(nn);
                for (std::size_t i = 0; i < nn; ++i) c2[i] = chord2(nodes[i]);
                double total = 0;
                std::vector<std::size_t> idx(d, 0);
                while (true) {
                    double s2 = 0, w = 1;
                    for (int i = 0; i < d; ++i) {
                        s2 += c2[idx[i]];
                        w *= wts[idx[i]];
                    }
                    total += w * K.eval(std::sqrt(s2) / h);
                    int lvl = 0;
                    while (lvl < d && ++idx[lvl] == nn) idx[lvl++] = 0;
                    if (lvl == d) break;
                }
                return std::pow(2.0, d) * total;  // symmetry over orthants
            };
            double coarse = tensor(base), fine = tensor(base * 2);
            if (rel_err) *rel_err = std::fabs(fine - coarse) / std::max(1e-300, std::fabs(fine));
            return fine;
        }
        case ManifoldKind::Sphere: {
            double r = M.size();
            double rho_max;
            if (mode == DistanceMode::Geodesic) {
                rho_max = std::min(h, kPi * r);
            } else {
                rho_max = (h >= 2.0 * r) ? kPi * r : 2.0 * r * std::asin(0.5 * h / r);
            }
            auto f = [&](double rho) {
                double t = (mode == DistanceMode::Geodesic)
                               ? rho / h
                               : 2.0 * r * std::sin(0.5 * rho / r) / h;
                return K.eval(t) * std::sin(rho / r);
            };
            return 2.0 * kPi * r * integrate_panels(f, 0.0, rho_max, 256);
        }
    }
    return 0;
}

}  // namespace detail

/// Normalizer values cached per grid node. On the model manifolds the value
/// is constant; the per-node layout matches how estimation consumes it, and
/// off-grid queries resolve to the nearest node.
struct EtaCache {
    Manifold manifold = Manifold::circle(1.0);
    double h = 0;
    DistanceMode mode = DistanceMode::Ambient;
    std::vector<double> values;
    double uniform_value = 0;
    double rel_err = 0;

    double at(std::size_t node) const { return values[node]; }
    double at_point(const ManifoldPoint&) const { return uniform_value; }
};

inline EtaCache eta(const Manifold& M, const KernelProfile& K, double h, DistanceMode mode,
                    const QuadratureGrid& grid) {
    EtaCache c;
    c.manifold = M;
    c.h = h;
    c.mode = mode;
    c.uniform_value = detail::eta_continuum(M, K, h, mode, &c.rel_err);
    if (c.uniform_value <= 0)
        throw std::runtime_error("eta: bandwidth too large, normalizer is nonpositive");
    c.values.assign(grid.size(), c.uniform_value);
    return c;
}

/// K_h(x,y) = K(dist(x,y)/h) / eta_h(x), with the bandwidth, distance mode
/// and cached normalizer bundled together.
struct NormalizedKernel {
    Manifold manifold = Manifold::circle(1.0);
    KernelProfile profile;
    double h = 0;
    DistanceMode mode = DistanceMode::Ambient;
    double eta_value = 0;

    double dist(const ManifoldPoint& x, const ManifoldPoint& y) const {
        return mode == DistanceMode::Geodesic ? geodesic_distance(manifold, x, y)
                                              : ambient_distance(manifold, x, y);
    }
    double eval(const ManifoldPoint& x, const ManifoldPoint& y) const {
        double t = dist(x, y) / h;
        if (t >= 1.0) return 0.0;
        return profile.eval(t) / eta_value;
    }
    double sup_bound() const { return profile.sup_norm / eta_value; }
};

inline NormalizedKernel make_kernel(const Manifold& M, const KernelProfile& K, double h,
                                    DistanceMode mode) {
    if (K.dim != M.intrinsic_dim())
        throw std::invalid_argument("kernel profile dimension does not match manifold");
    NormalizedKernel nk;
    nk.manifold = M;
    nk.profile = K;
    nk.h = h;
    nk.mode = mode;
    nk.eta_value = detail::eta_continuum(M, K, h, mode);
    if (nk.eta_value <= 0)
        throw std::runtime_error("make_kernel: bandwidth too large, normalizer is nonpositive");
    return nk;
}

/// Largest bandwidth in a dyadic sweep below `start` with h^{-d} eta >= 1/2,
/// the empirical stand-in for the h_c of the sup-norm bound.
inline double detect_hc(const Manifold& M, const KernelProfile& K, DistanceMode mode,
                        double start = 0.0, int levels = 20) {
    int d = M.intrinsic_dim();
    double h = (start > 0) ? start : M.injectivity_radius();
    double best = 0;
    for (int i = 0; i < levels; ++i, h *= 0.5) {
        double e;
        try {
            e = detail::eta_continuum(M, K, h, mode);
        } catch (const std::exception&) {
            continue;
        }
        if (e * std::pow(h, -d) >= 0.5) {
            best = h;
            break;
        }
    }
    return best;
}

}  // namespace ergo
