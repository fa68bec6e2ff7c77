#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace ergo {

/// Gauss-Legendre rule on [-1,1]; nodes by Newton on the Legendre recurrence.
struct GaussLegendre {
    std::vector<double> x, w;

    explicit GaussLegendre(int n) : x(n), w(n) {
        for (int i = 0; i < n; ++i) {
            double t = std::cos(3.141592653589793 * (i + 0.75) / (n + 0.5));
            double p0, p1, dp;
            for (int it = 0; it < 100; ++it) {
                p0 = 1.0;
                p1 = t;
                for (int k = 2; k <= n; ++k) {
                    double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (t * p1 - p0) / (t * t - 1.0);
                double dt = p1 / dp;
                t -= dt;
                if (std::fabs(dt) < 1e-15) break;
            }
            x[i] = t;
            w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
    }

    template <class F>
    double integrate(F&& f, double a, double b) const {
        double mid = 0.5 * (a + b), half = 0.5 * (b - a), s = 0;
        for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * f(mid + half * x[i]);
        return s * half;
    }
};

/// Composite Gauss-Legendre: fixed panels, for integrands with limited
/// smoothness (kernel profiles are only Lipschitz/C^1 at the support edge).
template <class F>
double integrate_panels(F&& f, double a, double b, int panels, const GaussLegendre& gl) {
    double s = 0, hstep = (b - a) / panels;
    for (int p = 0; p < panels; ++p) s += gl.integrate(f, a + p * hstep, a + (p + 1) * hstep);
    return s;
}

template <class F>
double integrate_panels(F&& f, double a, double b, int panels = 64) {
    static const GaussLegendre gl16(16);
    return integrate_panels(f, a, b, panels, gl16);
}

inline double gamma_half_int(int twice) {
    // Gamma(twice/2) for twice >= 1
    if (twice == 1) return std::sqrt(3.141592653589793);
    if (twice == 2) return 1.0;
    return (twice / 2.0 - 1.0) * gamma_half_int(twice - 2);
}

/// Surface area of the unit sphere S^{d-1} in R^d.
inline double unit_sphere_area(int d) {
    return 2.0 * std::pow(3.141592653589793, d / 2.0) / gamma_half_int(d);
}

/// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) { return unit_sphere_area(d) / d; }

}  // namespace ergo
