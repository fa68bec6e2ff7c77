#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ergo/geometry.hpp"
#include "ergo/quadrature.hpp"
#include "ergo/rng.hpp"

namespace ergo {

/// Probability density w.r.t. the volume measure, with analytic log-gradient.
/// grad_log returns a vector in T_xM (ambient coordinates). factor_grad_log
/// gives the components along the circle-factor tangents for torus/circle
/// manifolds, which the SDE stepper consumes directly.
struct Density {
    Manifold manifold = Manifold::circle(1.0);
    std::function<double(const ManifoldPoint&)> eval;
    std::function<AmbientVec(const ManifoldPoint&)> grad_log;
    std::function<void(const ManifoldPoint&, double*)> factor_grad_log;  // d slots
    double p_min = 0, p_max = 0;
    double c1_norm = 0;
    int sobolev_order = 0;
    std::string spec;
    // harmonic amplitudes along the first axis when the density is trig-type;
    // lets spectral diagnostics work directly on the mode coefficients
    std::vector<double> trig_amps;
};

/// Positive C^2 function on M (the q of the generalized generator). Unlike a
/// Density it is not normalized.
struct PositiveFunction {
    Manifold manifold = Manifold::circle(1.0);
    std::function<double(const ManifoldPoint&)> eval;
    std::function<void(const ManifoldPoint&, double*)> factor_grad;  // d slots, intrinsic
    double min_value = 0, max_value = 0;
    std::string spec;
};

namespace detail {

/// amplitudes a_j attached to harmonics (j+1) along the first coordinate:
/// g(x) = 1 + sum_j a_j cos(2 pi (j+1) x_1 / s)
struct TrigData {
    double s = 1;
    std::vector<double> amps;

    double value(const ManifoldPoint& p) const {
        double g = 1.0;
        for (std::size_t j = 0; j < amps.size(); ++j)
            g += amps[j] * std::cos(2.0 * kPi * double(j + 1) * p.intrinsic[0] / s);
        return g;
    }
    double d1(const ManifoldPoint& p) const {
        double g = 0.0;
        for (std::size_t j = 0; j < amps.size(); ++j) {
            double w = 2.0 * kPi * double(j + 1) / s;
            g -= amps[j] * w * std::sin(w * p.intrinsic[0]);
        }
        return g;
    }
    double amp_sum() const {
        double t = 0;
        for (double a : amps) t += std::fabs(a);
        return t;
    }
    double deriv_bound() const {
        double t = 0;
        for (std::size_t j = 0; j < amps.size(); ++j)
            t += std::fabs(amps[j]) * 2.0 * kPi * double(j + 1) / s;
        return t;
    }
};

inline std::vector<double> parse_amp_list(std::string_view body) {
    // "a1=0.5" or "a=(0.3,0.1)"
    std::vector<double> amps;
    auto eq = body.find('=');
    if (eq == std::string_view::npos)
        throw std::invalid_argument("bad trig spec: " + std::string(body));
    std::string_view key = body.substr(0, eq);
    std::string_view val = body.substr(eq + 1);
    if (key == "a1") {
        amps.push_back(std::stod(std::string(val)));
    } else if (key == "a") {
        if (val.size() < 2 || val.front() != '(' || val.back() != ')')
            throw std::invalid_argument("bad trig amplitude list: " + std::string(val));
        std::string inner(val.substr(1, val.size() - 2));
        std::size_t pos = 0;
        while (pos < inner.size()) {
            auto comma = inner.find(',', pos);
            std::string tok = inner.substr(pos, comma == std::string::npos ? std::string::npos
                                                                           : comma - pos);
            amps.push_back(std::stod(tok));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    } else {
        throw std::invalid_argument("bad trig spec key: " + std::string(key));
    }
    return amps;
}

}  // namespace detail

/// Builds a density from a spec string: "uniform", "trig:a1=0.5",
/// "trig:a=(0.3,0.1)" (torus/circle), "sphere_poly:beta=0.5" (sphere).
inline Density make_density(const Manifold& M, std::string_view spec) {
    Density p;
    p.manifold = M;
    p.spec = std::string(spec);
    const double V = M.total_volume();
    const int d = M.intrinsic_dim();

    if (spec == "uniform") {
        p.eval = [V](const ManifoldPoint&) { return 1.0 / V; };
        p.grad_log = [](const ManifoldPoint&) { return AmbientVec{}; };
        p.factor_grad_log = [d](const ManifoldPoint&, double* out) {
            for (int i = 0; i < d; ++i) out[i] = 0.0;
        };
        p.p_min = p.p_max = 1.0 / V;
        p.c1_norm = 1.0 / V;
        p.sobolev_order = 0;
        return p;
    }

    if (spec.substr(0, 5) == "trig:") {
        if (M.kind() == ManifoldKind::Sphere)
            throw std::invalid_argument("trig densities live on the circle/torus");
        auto data = std::make_shared<detail::TrigData>();
        data->s = M.size();
        data->amps = detail::parse_amp_list(spec.substr(5));
        if (data->amp_sum() >= 1.0)
            throw std::invalid_argument("trig density: sum |a_k| must be < 1 for positivity");
        p.eval = [data, V](const ManifoldPoint& x) { return data->value(x) / V; };
        p.factor_grad_log = [data, d](const ManifoldPoint& x, double* out) {
            double g = data->d1(x) / data->value(x);
            out[0] = g;
            for (int i = 1; i < d; ++i) out[i] = 0.0;
        };
        Manifold man = M;
        p.grad_log = [data, man](const ManifoldPoint& x) {
            AmbientVec v{};
            double g = data->d1(x) / data->value(x);
            double t0, t1;
            factor_tangent(man, x, 0, t0, t1);
            v[0] = g * t0;
            v[1] = g * t1;
            return v;
        };
        // extrema are exact for a single harmonic, conservative otherwise
        p.p_min = (1.0 - data->amp_sum()) / V;
        p.p_max = (1.0 + data->amp_sum()) / V;
        p.c1_norm = std::max(p.p_max, data->deriv_bound() / V);
        p.sobolev_order = 2;
        p.trig_amps = data->amps;
        return p;
    }

    if (spec.substr(0, 12) == "sphere_poly:") {
        if (M.kind() != ManifoldKind::Sphere)
            throw std::invalid_argument("sphere_poly densities live on the sphere");
        auto eq = spec.find('=');
        double beta = std::stod(std::string(spec.substr(eq + 1)));
        double r = M.size();
        if (std::fabs(beta) * r >= 1.0)
            throw std::invalid_argument("sphere_poly: |beta| r must be < 1 for positivity");
        double c = 1.0 / V;  // odd term integrates to zero
        p.eval = [c, beta](const ManifoldPoint& x) { return c * (1.0 + beta * x.ambient[2]); };
        Manifold man = M;
        p.grad_log = [beta, man, r](const ManifoldPoint& x) {
            // grad z = P(x) e3
            TangentProjector P = tangent_projection(man, x);
            AmbientVec e3{};
            e3[2] = 1.0;
            AmbientVec g = P.apply(e3);
            double f = beta / (1.0 + beta * x.ambient[2]);
            for (int i = 0; i < 3; ++i) g[i] *= f;
            return g;
        };
        p.factor_grad_log = [](const ManifoldPoint&, double*) {
            throw std::logic_error("factor gradients are torus/circle only");
        };
        p.p_min = c * (1.0 - std::fabs(beta) * r);
        p.p_max = c * (1.0 + std::fabs(beta) * r);
        p.c1_norm = std::max(p.p_max, c * std::fabs(beta));
        p.sobolev_order = 2;
        return p;
    }

    throw std::invalid_argument("bad density spec: " + std::string(spec));
}

/// q-spec for the generalized generator: "one" (Langevin), "const:0.1"
/// (uniform time change), or "trig:..." giving 1 + sum a_j cos(...) without
/// normalization.
inline PositiveFunction make_positive_function(const Manifold& M, std::string_view spec) {
    PositiveFunction q;
    q.manifold = M;
    q.spec = std::string(spec);
    const int d = M.intrinsic_dim();
    if (spec == "one" || spec == "uniform") {
        q.eval = [](const ManifoldPoint&) { return 1.0; };
        q.factor_grad = [d](const ManifoldPoint&, double* out) {
            for (int i = 0; i < d; ++i) out[i] = 0.0;
        };
        q.min_value = q.max_value = 1.0;
        return q;
    }
    if (spec.substr(0, 6) == "const:") {
        double v = std::stod(std::string(spec.substr(6)));
        if (v <= 0) throw std::invalid_argument("q: constant must be positive");
        q.eval = [v](const ManifoldPoint&) { return v; };
        q.factor_grad = [d](const ManifoldPoint&, double* out) {
            for (int i = 0; i < d; ++i) out[i] = 0.0;
        };
        q.min_value = q.max_value = v;
        return q;
    }
    if (spec.substr(0, 5) == "trig:") {
        if (M.kind() == ManifoldKind::Sphere)
            throw std::invalid_argument("trig q lives on the circle/torus");
        auto data = std::make_shared<detail::TrigData>();
        data->s = M.size();
        data->amps = detail::parse_amp_list(spec.substr(5));
        if (data->amp_sum() >= 1.0)
            throw std::invalid_argument("q: sum |a_k| must be < 1 for positivity");
        q.eval = [data](const ManifoldPoint& x) { return data->value(x); };
        q.factor_grad = [data, d](const ManifoldPoint& x, double* out) {
            out[0] = data->d1(x);
            for (int i = 1; i < d; ++i) out[i] = 0.0;
        };
        q.min_value = 1.0 - data->amp_sum();
        q.max_value = 1.0 + data->amp_sum();
        return q;
    }
    throw std::invalid_argument("bad q spec: " + std::string(spec));
}

/// i.i.d. draws from mu = p dvol, by rejection against uniform volume
/// sampling with envelope p_max. Acceptance rate is 1/(p_max vol(M)).
inline std::vector<ManifoldPoint> sample_mu(const Density& p, std::size_t n,
                                            std::uint64_t seed,
                                            std::size_t* proposals = nullptr) {
    if (n < 1) throw std::invalid_argument("sample_mu: n must be >= 1");
    const Manifold& M = p.manifold;
    Rng rng(seed);
    std::vector<ManifoldPoint> out;
    out.reserve(n);
    if (proposals) *proposals = 0;
    while (out.size() < n) {
        if (proposals) ++*proposals;
        IntrinsicVec x{};
        switch (M.kind()) {
            case ManifoldKind::Circle:
                x[0] = M.size() * rng.uniform();
                break;
            case ManifoldKind::FlatTorus:
                for (int i = 0; i < M.intrinsic_dim(); ++i) x[i] = M.size() * rng.uniform();
                break;
            case ManifoldKind::Sphere: {
                double z = 2.0 * rng.uniform() - 1.0;
                x[0] = std::acos(std::clamp(z, -1.0, 1.0));
                x[1] = 2.0 * kPi * rng.uniform();
                break;
            }
        }
        ManifoldPoint cand = M.embed(x);
        if (rng.uniform() * p.p_max <= p.eval(cand)) out.push_back(cand);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bump family for the minimax construction
// ---------------------------------------------------------------------------

namespace detail {

inline double expm_inv(double x) { return x > 0 ? std::exp(-1.0 / x) : 0.0; }
inline double expm_inv_d(double x) { return x > 0 ? std::exp(-1.0 / x) / (x * x) : 0.0; }

/// Smooth transition: 1 for t <= a, 0 for t >= b.
inline double smoothstep_down(double t, double a, double b) {
    if (t <= a) return 1.0;
    if (t >= b) return 0.0;
    double u = (t - a) / (b - a);
    double A = expm_inv(1.0 - u), B = expm_inv(u);
    return A / (A + B);
}
inline double smoothstep_down_d(double t, double a, double b) {
    if (t <= a || t >= b) return 0.0;
    double u = (t - a) / (b - a);
    double A = expm_inv(1.0 - u), B = expm_inv(u);
    double Ad = -expm_inv_d(1.0 - u), Bd = expm_inv_d(u);
    return (Ad * B - A * Bd) / ((A + B) * (A + B)) / (b - a);
}

/// Smooth bump on [a,b], equal to 1 at the midpoint.
inline double annulus_bump(double t, double a, double b) {
    if (t <= a || t >= b) return 0.0;
    double q = (t - a) * (b - t);
    double c0 = 0.25 * (b - a) * (b - a);
    return std::exp(1.0 - c0 / q);
}
inline double annulus_bump_d(double t, double a, double b) {
    if (t <= a || t >= b) return 0.0;
    double q = (t - a) * (b - t);
    double c0 = 0.25 * (b - a) * (b - a);
    double qd = (a + b - 2.0 * t);
    return std::exp(1.0 - c0 / q) * c0 * qd / (q * q);
}

constexpr double kCapIn = 1.0 / 6.0, kCapOut = 1.0 / 3.0;
constexpr double kRingIn = 1.0 / 3.0, kRingOut = 1.0 / 2.0;

/// Radial volume density ratio to flat space at geodesic radius t.
inline double radial_jacobian(const Manifold& M, double t) {
    if (M.kind() != ManifoldKind::Sphere) return 1.0;
    double u = t / M.size();
    return u < 1e-8 ? 1.0 : std::sin(u) / u;
}

}  // namespace detail

/// Sign-indexed family of zero-mean bumps: centers >= 2 eps apart, each bump
/// supported in B(x_j, eps) with integral 0 (a positive cap plus a negative
/// annulus ring, balanced per dimension) and int phi^2 = eps^d exactly by
/// rescaling. member(tau) builds the perturbed density p_tau.
struct BumpFamily {
    Manifold manifold = Manifold::circle(1.0);
    std::vector<ManifoldPoint> centers;
    double epsilon = 0;
    double amplitude = 0;  // v
    double kappa = 0;      // measured: max(sup|phi|, eps * sup|grad phi|)
    int ell = 0;
    double lambda_ring = 0;  // ring weight balancing the cap integral
    double scale_c = 0;      // L2 normalization

    std::size_t count() const { return centers.size(); }

    double mother(double t) const {
        return detail::smoothstep_down(t, detail::kCapIn, detail::kCapOut) -
               lambda_ring * detail::annulus_bump(t, detail::kRingIn, detail::kRingOut);
    }
    double mother_d(double t) const {
        return detail::smoothstep_down_d(t, detail::kCapIn, detail::kCapOut) -
               lambda_ring * detail::annulus_bump_d(t, detail::kRingIn, detail::kRingOut);
    }

    double phi(std::size_t j, const ManifoldPoint& y) const {
        double rho = geodesic_distance(manifold, centers[j], y);
        if (rho >= 0.5 * epsilon) return 0.0;
        return scale_c * mother(rho / epsilon) / detail::radial_jacobian(manifold, rho);
    }

    /// d phi / d rho at geodesic radius rho from center j.
    double phi_radial_deriv(std::size_t j, const ManifoldPoint& y) const {
        double rho = geodesic_distance(manifold, centers[j], y);
        if (rho >= 0.5 * epsilon) return 0.0;
        double J = detail::radial_jacobian(manifold, rho);
        double Jd = 0.0;
        if (manifold.kind() == ManifoldKind::Sphere) {
            double r = manifold.size(), u = rho / r;
            Jd = u < 1e-8 ? 0.0 : (std::cos(u) / u - std::sin(u) / (u * u)) / r;
        }
        return scale_c * (mother_d(rho / epsilon) / epsilon / J -
                          mother(rho / epsilon) * Jd / (J * J));
    }

    AmbientVec grad_phi(std::size_t j, const ManifoldPoint& y) const {
        AmbientVec g{};
        double rho = geodesic_distance(manifold, centers[j], y);
        if (rho >= 0.5 * epsilon || rho < 1e-14) return g;
        AmbientVec away = log_map(manifold, y, centers[j]);  // points toward the center
        double dr = phi_radial_deriv(j, y);
        for (int i = 0; i < manifold.ambient_dim(); ++i) g[i] = -dr * away[i] / rho;
        return g;
    }

    Density member(const std::vector<int>& tau) const;
};

inline BumpFamily make_bump_family(const Manifold& M, double eps, int ell, double v,
                                   std::uint64_t seed = 0) {
    if (eps <= 0) throw std::invalid_argument("bump family: eps must be positive");
    if (v < 0 || v > std::pow(eps, ell) + 1e-12)
        throw std::invalid_argument("bump family: need 0 <= v <= eps^ell");
    BumpFamily fam;
    fam.manifold = M;
    fam.epsilon = eps;
    fam.amplitude = v;
    fam.ell = ell;

    const int d = M.intrinsic_dim();

    // centers
    switch (M.kind()) {
        case ManifoldKind::Circle:
        case ManifoldKind::FlatTorus: {
            int per_axis = int(std::floor(M.size() / (2.0 * eps)));
            if (per_axis < 2)
                throw std::invalid_argument("bump family: eps too large to place 2 centers");
            std::size_t J = 1;
            for (int i = 0; i < d; ++i) J *= per_axis;
            for (std::size_t id = 0; id < J; ++id) {
                IntrinsicVec x{};
                std::size_t rem = id;
                for (int i = d - 1; i >= 0; --i) {
                    x[i] = M.size() * double(rem % per_axis) / per_axis;
                    rem /= per_axis;
                }
                fam.centers.push_back(M.embed(x));
            }
            break;
        }
        case ManifoldKind::Sphere: {
            // Fibonacci points filtered by first-fit to 2 eps separation
            double r = M.size();
            int n_cand = std::max(16, int(16.0 * r * r / (eps * eps)));
            double golden = kPi * (3.0 - std::sqrt(5.0));
            for (int i = 0; i < n_cand; ++i) {
                double z = 1.0 - 2.0 * (i + 0.5) / n_cand;
                IntrinsicVec x{};
                x[0] = std::acos(std::clamp(z, -1.0, 1.0));
                x[1] = wrap_coord(golden * i, 2.0 * kPi);
                ManifoldPoint cand = M.embed(x);
                bool ok = true;
                for (const auto& c : fam.centers)
                    if (geodesic_distance(M, c, cand) < 2.0 * eps) {
                        ok = false;
                        break;
                    }
                if (ok) fam.centers.push_back(cand);
            }
            if (fam.centers.size() < 2)
                throw std::invalid_argument("bump family: eps too large to place 2 centers");
            break;
        }
    }
    (void)seed;

    // ring weight: cap and ring masses against the d-dimensional radial weight
    auto cap = [&](double t) {
        return detail::smoothstep_down(t, detail::kCapIn, detail::kCapOut) * std::pow(t, d - 1);
    };
    auto ring = [&](double t) {
        return detail::annulus_bump(t, detail::kRingIn, detail::kRingOut) * std::pow(t, d - 1);
    };
    double cap_mass = integrate_panels(cap, 0.0, detail::kCapOut, 512);
    double ring_mass = integrate_panels(ring, detail::kRingIn, detail::kRingOut, 512);
    fam.lambda_ring = cap_mass / ring_mass;

    // L2 normalization: int_M phi^2 = eps^d
    fam.scale_c = 1.0;
    auto sq = [&](double t) {
        double m = fam.mother(t / eps);
        return m * m / detail::radial_jacobian(M, t) * std::pow(t, d - 1);
    };
    double I2 = unit_sphere_area(d) * integrate_panels(sq, 0.0, 0.5 * eps, 512);
    fam.scale_c = std::pow(eps, d * 0.5) / std::sqrt(I2);

    // measured norm constant
    double sup_phi = 0, sup_grad = 0;
    for (int i = 0; i <= 4000; ++i) {
        double rho = 0.5 * eps * double(i) / 4000.0;
        double J = detail::radial_jacobian(M, rho);
        sup_phi = std::max(sup_phi, std::fabs(fam.scale_c * fam.mother(rho / eps) / J));
        double Jd = 0.0;
        if (M.kind() == ManifoldKind::Sphere) {
            double r = M.size(), u = rho / r;
            Jd = u < 1e-8 ? 0.0 : (std::cos(u) / u - std::sin(u) / (u * u)) / r;
        }
        double dr = fam.scale_c * (fam.mother_d(rho / eps) / eps / J -
                                   fam.mother(rho / eps) * Jd / (J * J));
        sup_grad = std::max(sup_grad, std::fabs(dr));
    }
    fam.kappa = std::max(sup_phi, eps * sup_grad);
    return fam;
}

inline Density BumpFamily::member(const std::vector<int>& tau) const {
    if (tau.size() != centers.size())
        throw std::invalid_argument("bump member: sign vector has wrong length");
    Density p;
    p.manifold = manifold;
    p.spec = "bump_member";
    const double V = manifold.total_volume();
    auto fam = std::make_shared<BumpFamily>(*this);
    auto signs = std::make_shared<std::vector<int>>(tau);

    auto raw = [fam, signs](const ManifoldPoint& y) {
        double g = 1.0;
        for (std::size_t j = 0; j < fam->centers.size(); ++j) {
            double ph = fam->phi(j, y);
            if (ph != 0.0) g += double((*signs)[j]) * (fam->amplitude / (2.0 * fam->kappa)) * ph;
        }
        return g;
    };
    p.eval = [raw, V](const ManifoldPoint& y) { return raw(y) / V; };
    p.grad_log = [fam, signs, raw](const ManifoldPoint& y) {
        AmbientVec g{};
        for (std::size_t j = 0; j < fam->centers.size(); ++j) {
            AmbientVec gj = fam->grad_phi(j, y);
            double a = double((*signs)[j]) * fam->amplitude / (2.0 * fam->kappa);
            for (int i = 0; i < fam->manifold.ambient_dim(); ++i) g[i] += a * gj[i];
        }
        double val = raw(y);
        for (int i = 0; i < fam->manifold.ambient_dim(); ++i) g[i] /= val;
        return g;
    };
    Manifold man = manifold;
    int d = manifold.intrinsic_dim();
    auto gl = p.grad_log;
    p.factor_grad_log = [gl, man, d](const ManifoldPoint& y, double* out) {
        AmbientVec g = gl(y);
        for (int i = 0; i < d; ++i) {
            double t0, t1;
            factor_tangent(man, y, i, t0, t1);
            out[i] = g[2 * i] * t0 + g[2 * i + 1] * t1;
        }
    };
    // sup |(v/2k) sum tau phi| <= v/2 since |phi| <= kappa and supports are disjoint
    p.p_min = (1.0 - 0.5 * amplitude) / V;
    p.p_max = (1.0 + 0.5 * amplitude) / V;
    p.c1_norm = (1.0 + 0.5 * amplitude / epsilon) / V;
    p.sobolev_order = ell;
    return p;
}

/// Reference quadrature grid sized for the manifold's dimension; density and
/// KL functionals default to this when no grid is supplied.
inline QuadratureGrid default_reference_grid(const Manifold& M) {
    switch (M.kind()) {
        case ManifoldKind::Circle: return quadrature_grid(M, 4096);
        case ManifoldKind::Sphere: return quadrature_grid(M, 128);
        case ManifoldKind::FlatTorus: {
            int d = M.intrinsic_dim();
            int res = d == 1 ? 4096 : d == 2 ? 256 : d == 3 ? 40 : d == 4 ? 16 : 8;
            return quadrature_grid(M, res);
        }
    }
    return quadrature_grid(M, 64);
}

enum class KlWeight { P, PSquared };

/// Path-space KL rate by quadrature: T/4 * int ||grad log p - grad log q||^2 w,
/// with w = p (stationarity route) or w = p^2 (as displayed in the source
/// formula). Both are exposed; the Girsanov Monte Carlo decides empirically.
inline double kl_quadrature(const Density& p, const Density& q, double T, KlWeight mode,
                            const QuadratureGrid& grid) {
    require_same_manifold(p.manifold, q.manifold);
    require_same_manifold(p.manifold, grid.manifold);
    const int m = p.manifold.ambient_dim();
    double acc = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const ManifoldPoint& y = grid.nodes[i];
        AmbientVec gp = p.grad_log(y), gq = q.grad_log(y);
        double n2 = 0;
        for (int k = 0; k < m; ++k) {
            double dgl = gp[k] - gq[k];
            n2 += dgl * dgl;
        }
        double w = p.eval(y);
        if (mode == KlWeight::PSquared) w *= w;
        acc += n2 * w * grid.weights[i];
    }
    return 0.25 * T * acc;
}

inline double kl_quadrature(const Density& p, const Density& q, double T, KlWeight mode) {
    return kl_quadrature(p, q, T, mode, default_reference_grid(p.manifold));
}

}  // namespace ergo
