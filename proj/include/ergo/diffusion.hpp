#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/density.hpp"
#include "ergo/geometry.hpp"
#include "ergo/measure.hpp"
#include "ergo/rng.hpp"

namespace ergo {

enum class GeneratorKind { Langevin, Apq };

/// Diffusion generator: Langevin (q = 1) or the q-weighted elliptic operator
/// q Lap + <q grad ln(pq), grad .>. The carre du champ is q |grad f|^2, so the
/// ellipticity window [kappa_min, kappa_max] is just the range of q.
struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::Langevin;
    Density density;
    PositiveFunction q;
    double kappa_min = 1.0, kappa_max = 1.0;

    static GeneratorSpec langevin(Density p) {
        GeneratorSpec g;
        g.kind = GeneratorKind::Langevin;
        g.q = make_positive_function(p.manifold, "one");
        g.density = std::move(p);
        return g;
    }

    static GeneratorSpec apq(Density p, PositiveFunction qf) {
        require_same_manifold(p.manifold, qf.manifold);
        GeneratorSpec g;
        g.kind = GeneratorKind::Apq;
        g.kappa_min = qf.min_value;
        g.kappa_max = qf.max_value;
        g.density = std::move(p);
        g.q = std::move(qf);
        return g;
    }

    /// "langevin" or "apq:q=<positive fn spec>".
    static GeneratorSpec parse(const Density& p, std::string_view spec) {
        if (spec == "langevin") return langevin(p);
        if (spec.substr(0, 6) == "apq:q=")
            return apq(p, make_positive_function(p.manifold, spec.substr(6)));
        throw std::invalid_argument("bad generator spec: " + std::string(spec));
    }

    std::string to_string() const {
        return kind == GeneratorKind::Langevin ? "langevin" : "apq:q=" + q.spec;
    }
};

enum class InitKind { Point, Invariant, Uniform };

struct SdeConfig {
    GeneratorSpec generator;
    double T = 1.0;
    double dt = 1e-3;
    InitKind init = InitKind::Invariant;
    ManifoldPoint init_point{};
    std::uint64_t seed = 0;

    void validate() const {
        if (dt <= 0 || dt > T) throw std::invalid_argument("sde config: need 0 < dt <= T");
    }
};

/// Time-ordered sample path; intrinsic coordinates stored flat, one block of
/// d doubles per step. The final step may be shorter than dt.
struct DiffusionPath {
    Manifold manifold = Manifold::circle(1.0);
    double dt = 0;
    double T = 0;
    std::uint64_t seed = 0;
    std::string generator_spec, density_spec;
    std::vector<double> coords;

    std::size_t points() const {
        return coords.empty() ? 0 : coords.size() / manifold.intrinsic_dim();
    }
    ManifoldPoint point(std::size_t i) const {
        IntrinsicVec x{};
        const int d = manifold.intrinsic_dim();
        for (int k = 0; k < d; ++k) x[k] = coords[i * d + k];
        return manifold.embed(x);
    }
    double time_at(std::size_t i) const { return std::min(double(i) * dt, T); }
};

namespace detail {

inline ManifoldPoint initial_point(const SdeConfig& cfg) {
    const Manifold& M = cfg.generator.density.manifold;
    switch (cfg.init) {
        case InitKind::Point: return cfg.init_point;
        case InitKind::Invariant:
            return sample_mu(cfg.generator.density, 1, split_seed(cfg.seed, "init"))[0];
        case InitKind::Uniform:
            return sample_volume(M, 1, split_seed(cfg.seed, "init"))[0];
    }
    return cfg.init_point;
}

}  // namespace detail

/// Tangent Euler-Maruyama with exact geodesic update: per step draw tangent
/// noise sqrt(2 q dt) Proj xi, add drift [q Proj grad ln p + (1/2) Proj grad q] dt
/// and move along the exact exponential map. Streaming form: visit(i, point)
/// is called for every stored point including the initial one.
template <class Visitor>
void simulate_streaming(const SdeConfig& cfg, Visitor&& visit) {
    cfg.validate();
    const Manifold& M = cfg.generator.density.manifold;
    const Density& p = cfg.generator.density;
    const PositiveFunction& qf = cfg.generator.q;
    const bool weighted = cfg.generator.kind == GeneratorKind::Apq;
    const int d = M.intrinsic_dim();
    const double inj = M.injectivity_radius();

    Rng rng(split_seed(cfg.seed, "path"));
    ManifoldPoint x = detail::initial_point(cfg);

    std::size_t nsteps = std::size_t(std::ceil(cfg.T / cfg.dt - 1e-12));
    long rejected = 0;
    visit(std::size_t(0), x);

    if (M.kind() != ManifoldKind::Sphere) {
        // factor-frame fast path: the tangent space splits into d circle factors.
        // The Stratonovich drift (1/2) grad q picks up another (1/2) grad q when
        // the sqrt(2q) dB term is rewritten in Ito form for the Euler step.
        double glog[kMaxIntrinsic], gq[kMaxIntrinsic];
        for (std::size_t i = 1; i <= nsteps; ++i) {
            double step_dt = std::min(cfg.dt, cfg.T - double(i - 1) * cfg.dt);
            p.factor_grad_log(x, glog);
            double qv = 1.0;
            if (weighted) {
                qv = qf.eval(x);
                qf.factor_grad(x, gq);
            }
            double sig = std::sqrt(2.0 * qv * step_dt);
            while (true) {
                double norm2 = 0;
                IntrinsicVec y = x.intrinsic;
                for (int k = 0; k < d; ++k) {
                    double b = qv * glog[k] * step_dt;
                    if (weighted) b += gq[k] * step_dt;
                    double move = sig * rng.normal() + b;
                    norm2 += move * move;
                    y[k] = wrap_coord(y[k] + move, M.size());
                }
                if (norm2 < inj * inj) {
                    x = M.embed(y);
                    break;
                }
                if (++rejected > 1000)
                    throw std::runtime_error("simulate: step exceeds injectivity radius persistently; reduce dt");
            }
            visit(i, x);
        }
        return;
    }

    // sphere: ambient noise projected to the tangent plane
    const int m = M.ambient_dim();
    for (std::size_t i = 1; i <= nsteps; ++i) {
        double step_dt = std::min(cfg.dt, cfg.T - double(i - 1) * cfg.dt);
        AmbientVec gl = p.grad_log(x);
        double qv = weighted ? qf.eval(x) : 1.0;
        TangentProjector P = tangent_projection(M, x);
        double sig = std::sqrt(2.0 * qv * step_dt);
        while (true) {
            AmbientVec xi{};
            for (int k = 0; k < m; ++k) xi[k] = rng.normal();
            AmbientVec u = P.apply(xi);
            double norm2 = 0;
            AmbientVec v{};
            for (int k = 0; k < m; ++k) {
                v[k] = sig * u[k] + qv * gl[k] * step_dt;
                norm2 += v[k] * v[k];
            }
            if (norm2 < inj * inj) {
                x = exp_map(M, x, v);
                break;
            }
            if (++rejected > 1000)
                throw std::runtime_error("simulate: step exceeds injectivity radius persistently; reduce dt");
        }
        visit(i, x);
    }
}

inline DiffusionPath simulate(const SdeConfig& cfg) {
    DiffusionPath path;
    const Manifold& M = cfg.generator.density.manifold;
    path.manifold = M;
    path.dt = cfg.dt;
    path.T = cfg.T;
    path.seed = cfg.seed;
    path.generator_spec = cfg.generator.to_string();
    path.density_spec = cfg.generator.density.spec;
    const int d = M.intrinsic_dim();
    std::size_t nsteps = std::size_t(std::ceil(cfg.T / cfg.dt - 1e-12));
    path.coords.reserve((nsteps + 1) * d);
    simulate_streaming(cfg, [&](std::size_t, const ManifoldPoint& x) {
        for (int k = 0; k < d; ++k) path.coords.push_back(x.intrinsic[k]);
    });
    return path;
}

/// Occupation measure of the path: support = path points, weights = trapezoid
/// time weights normalized to total mass one. stride > 1 consumes every
/// stride-th point (a coarser quadrature of the same time integral).
inline DiscreteMeasure occupation_measure(const DiffusionPath& path, std::size_t stride = 1) {
    std::size_t n = path.points();
    if (n == 0) throw std::invalid_argument("occupation_measure: empty path");
    if (stride < 1) stride = 1;

    DiscreteMeasure mu;
    mu.manifold = path.manifold;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
    if (idx.back() != n - 1) idx.push_back(n - 1);

    if (idx.size() == 1) {
        mu.support = {path.point(0)};
        mu.weights = {1.0};
        return mu;
    }
    std::vector<double> t(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) t[k] = path.time_at(idx[k]);
    mu.support.reserve(idx.size());
    mu.weights.resize(idx.size());
    double total = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        double w;
        if (k == 0) w = 0.5 * (t[1] - t[0]);
        else if (k + 1 == idx.size()) w = 0.5 * (t[k] - t[k - 1]);
        else w = 0.5 * (t[k + 1] - t[k - 1]);
        mu.weights[k] = w;
        total += w;
        mu.support.push_back(path.point(idx[k]));
    }
    for (double& w : mu.weights) w /= total;
    return mu;
}

struct GirsanovStats {
    double martingale = 0;        // reconstructed stochastic-integral part
    double quadratic = 0;         // (1/4) sum ||grad ln p - grad ln q||^2 dt
    double max_residual = 0;      // non-tangential reconstruction residual
    bool residual_warning = false;
};

/// Discretized log dP_p/dP_q along a path simulated under the Langevin law of
/// p. Per step the Brownian tangent increment is recovered as
/// (log_map increment - drift dt)/sqrt(2), and
///   log ratio = sum (1/2) <glp - glq, increment - drift dt>
///             + (1/4) sum ||glp - glq||^2 dt.
/// Under P_p the mean of the first sum is zero, so E[log ratio] is the KL
/// contribution with stationary weight p.
inline double girsanov_log_ratio(const DiffusionPath& path, const Density& p, const Density& q,
                                 GirsanovStats* stats = nullptr) {
    require_same_manifold(path.manifold, p.manifold);
    require_same_manifold(p.manifold, q.manifold);
    const Manifold& M = path.manifold;
    const int m = M.ambient_dim();
    std::size_t n = path.points();
    if (n < 2) return 0.0;

    double mart = 0, quad = 0, maxres = 0;
    ManifoldPoint x = path.point(0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        ManifoldPoint y = path.point(i + 1);
        double dt_i = path.time_at(i + 1) - path.time_at(i);
        AmbientVec v = log_map(M, x, y);
        AmbientVec glp = p.grad_log(x), glq = q.grad_log(x);
        double inc = 0, n2 = 0;
        for (int k = 0; k < m; ++k) {
            double diff = glp[k] - glq[k];
            inc += diff * (v[k] - glp[k] * dt_i);
            n2 += diff * diff;
        }
        mart += 0.5 * inc;
        quad += 0.25 * n2 * dt_i;

        // tangency residual of the reconstructed increment
        TangentProjector P = tangent_projection(M, x);
        AmbientVec pv = P.apply(v);
        double res = 0;
        for (int k = 0; k < m; ++k) res += (pv[k] - v[k]) * (pv[k] - v[k]);
        maxres = std::max(maxres, std::sqrt(res));
        x = y;
    }
    if (stats) {
        stats->martingale = mart;
        stats->quadratic = quad;
        stats->max_residual = maxres;
        stats->residual_warning = maxres > 1e-8;
    }
    return mart + quad;
}

}  // namespace ergo
