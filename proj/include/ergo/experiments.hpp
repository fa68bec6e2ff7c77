#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ergo/density.hpp"
#include "ergo/diffusion.hpp"
#include "ergo/estimator.hpp"
#include "ergo/io.hpp"
#include "ergo/spectral.hpp"
#include "ergo/transport.hpp"

namespace ergo {

struct SlopeFit {
    double slope = 0;
    double stderr_ = 0;
    double intercept = 0;
    std::size_t used = 0;
};

/// OLS on (log T, log y); nonpositive y values are skipped (and counted via
/// `used`). Requires at least 4 distinct abscissas.
inline SlopeFit fit_slope(const std::vector<double>& T, const std::vector<double>& y) {
    if (T.size() != y.size()) throw std::invalid_argument("fit_slope: size mismatch");
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < T.size(); ++i)
        if (y[i] > 0 && T[i] > 0) {
            xs.push_back(std::log(T[i]));
            ys.push_back(std::log(y[i]));
        }
    std::vector<double> uniq = xs;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end(),
                           [](double a, double b) { return std::fabs(a - b) < 1e-12; }),
               uniq.end());
    if (uniq.size() < 4) throw std::invalid_argument("fit_slope: need at least 4 distinct T");
    double n = double(xs.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    SlopeFit fit;
    double denom = n * sxx - sx * sx;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double r = ys[i] - fit.intercept - fit.slope * xs[i];
        ss += r * r;
    }
    std::size_t dof = xs.size() > 2 ? xs.size() - 2 : 1;
    fit.stderr_ = std::sqrt(ss / double(dof) / (sxx - sx * sx / n));
    fit.used = xs.size();
    return fit;
}

namespace detail {

template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

}  // namespace detail

enum class EstimatorMode { Occupation, Smoothed };

struct ExperimentConfig {
    std::string manifold_spec = "circle:c=1";
    std::string density_spec = "trig:a1=0.5";
    std::string generator_spec = "langevin";
    std::vector<double> T_grid;
    int replicas = 8;
    EstimatorMode mode = EstimatorMode::Occupation;
    std::string kernel_spec = "poly:r=4";
    int ell = 2;
    double bandwidth_c = 1.0;
    DistanceMode distance_mode = DistanceMode::Geodesic;
    int grid_resolution = 0;  // 0: per-manifold default
    double dt = 1e-3;
    std::size_t max_estimator_points = 200000;
    W2Protocol protocol;
    std::uint64_t master_seed = 1;
    int workers = 2;
    std::string out_csv;

    void validate() const {
        if (T_grid.size() < 4) throw std::invalid_argument("experiment: need >= 4 T values");
        for (std::size_t i = 1; i < T_grid.size(); ++i)
            if (T_grid[i] <= T_grid[i - 1])
                throw std::invalid_argument("experiment: T grid must increase");
        if (replicas < 1) throw std::invalid_argument("experiment: replicas must be >= 1");
    }

    std::string echo() const {
        std::string s = "manifold=" + manifold_spec + " density=" + density_spec +
                        " generator=" + generator_spec + " mode=";
        s += (mode == EstimatorMode::Occupation ? "occupation" : "smoothed");
        s += " kernel=" + kernel_spec + " ell=" + std::to_string(ell);
        s += " c=" + std::to_string(bandwidth_c) + " seed=" + std::to_string(master_seed);
        return s;
    }
};

struct RateRow {
    double T = 0;
    int replica = 0;
    std::uint64_t seed = 0;
    double h = 0, dt = 0;
    bool positivity_ok = true, certified = true;
    bool guard_main = true, guard_variance = true;
    double w2sq_raw = 0, w2sq = 0;
    double wall_ms = 0;
    bool failed = false;
    std::string error;
};

struct RateReport {
    std::vector<RateRow> rows;
    std::vector<double> T_values, mean_w2sq_raw, mean_w2sq;
    double floor_estimate = 0;
    SlopeFit fit;
    double theory_slope = 0;
    std::string config_echo, protocol_echo;
};

inline double theory_rate_slope(int d, EstimatorMode mode, int ell) {
    if (mode == EstimatorMode::Occupation)
        return d <= 4 ? -1.0 : -2.0 / double(d - 2);
    return -(2.0 * ell + 2.0) / (2.0 * ell + d - 2.0);
}

/// Simulates replicas across the T grid, estimates (occupation or smoothed),
/// evaluates the sampled W2^2 risk per row and fits the log-log slope of the
/// per-T means. Fully deterministic given the master seed; replica seeds are
/// index-derived so execution order is irrelevant.
inline RateReport run_rate_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    Manifold M = Manifold::parse(cfg.manifold_spec);
    Density p = make_density(M, cfg.density_spec);
    GeneratorSpec gen = GeneratorSpec::parse(p, cfg.generator_spec);
    const int d = M.intrinsic_dim();

    int res = cfg.grid_resolution;
    if (res == 0) res = d == 1 ? 1024 : d == 2 ? 64 : d == 3 ? 24 : d == 4 ? 12 : 8;
    std::shared_ptr<const QuadratureGrid> grid;
    KernelProfile prof;
    if (cfg.mode == EstimatorMode::Smoothed) {
        grid = std::make_shared<const QuadratureGrid>(quadrature_grid(M, res));
        prof = parse_kernel(cfg.kernel_spec, d);
    }

    RateReport rep;
    rep.theory_slope = theory_rate_slope(d, cfg.mode, cfg.ell);
    rep.config_echo = cfg.echo();
    rep.protocol_echo = cfg.protocol.to_string();
    const std::size_t n_rows = cfg.T_grid.size() * std::size_t(cfg.replicas);
    rep.rows.resize(n_rows);

    // protocol-constant two-sample floor, estimated once from mu itself
    if (cfg.protocol.subtract_two_sample_floor &&
        cfg.protocol.compression == RiskCompression::Multinomial) {
        double fl = 0;
        for (std::size_t k = 0; k < cfg.protocol.floor_pairs; ++k) {
            auto s1 = DiscreteMeasure::from_points(
                M, sample_mu(p, cfg.protocol.n_est, split_seed(cfg.master_seed, "floor-a", k)));
            auto s2 = DiscreteMeasure::from_points(
                M, sample_mu(p, cfg.protocol.n_ref, split_seed(cfg.master_seed, "floor-b", k)));
            fl += detail::one_w2(s1, s2, cfg.protocol.solver, cfg.protocol.eps);
        }
        rep.floor_estimate = fl / double(cfg.protocol.floor_pairs);
    }

    detail::parallel_for(n_rows, cfg.workers, [&](std::size_t task) {
        std::size_t ti = task / cfg.replicas;
        int replica = int(task % cfg.replicas);
        RateRow& row = rep.rows[task];
        row.T = cfg.T_grid[ti];
        row.replica = replica;
        row.seed = split_seed(cfg.master_seed, "replica", ti, std::uint64_t(replica));
        auto t0 = std::chrono::steady_clock::now();
        try {
            double h = bandwidth_rule(row.T, d, cfg.ell, cfg.bandwidth_c,
                                      cfg.mode == EstimatorMode::Occupation
                                          ? BandwidthMode::EmpiricalComparison
                                          : BandwidthMode::Smoothed,
                                      0.9 * M.injectivity_radius());
            row.h = h;
            row.dt = cfg.mode == EstimatorMode::Smoothed
                         ? std::min(cfg.dt, h * h / 10.0)
                         : cfg.dt;
            row.guard_main = guard_condition(row.T, h, d, 1.0);
            row.guard_variance = guard_condition_variance(row.T, h, d, 1.0);

            SdeConfig sde;
            sde.generator = gen;
            sde.T = row.T;
            sde.dt = row.dt;
            sde.seed = row.seed;
            sde.init = InitKind::Invariant;
            auto path = simulate(sde);
            std::size_t stride =
                std::max<std::size_t>(1, path.points() / cfg.max_estimator_points);
            auto occ = occupation_measure(path, stride);

            DiscreteMeasure measure;
            if (cfg.mode == EstimatorMode::Occupation) {
                measure = occ;
            } else {
                auto nk = make_kernel(M, prof, h, cfg.distance_mode);
                auto est = smooth(occ, nk, grid, row.T, cfg.kernel_spec);
                row.positivity_ok = est.positivity_ok;
                row.certified = est.certified_positive;
                measure = est.measure();
            }
            W2Protocol proto = cfg.protocol;
            proto.seed = split_seed(row.seed, "protocol");
            proto.subtract_two_sample_floor = false;  // handled experiment-wide
            auto risk = risk_w2(measure, p, proto);
            row.w2sq_raw = risk.raw_mean;
            row.w2sq = risk.raw_mean - rep.floor_estimate;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        row.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
    });

    // per-T means of the debiased risk
    for (std::size_t ti = 0; ti < cfg.T_grid.size(); ++ti) {
        double acc = 0, acc_raw = 0;
        int cnt = 0;
        for (int r = 0; r < cfg.replicas; ++r) {
            const RateRow& row = rep.rows[ti * cfg.replicas + r];
            if (row.failed) continue;
            acc += row.w2sq;
            acc_raw += row.w2sq_raw;
            ++cnt;
        }
        if (cnt == 0) continue;
        rep.T_values.push_back(cfg.T_grid[ti]);
        rep.mean_w2sq.push_back(acc / cnt);
        rep.mean_w2sq_raw.push_back(acc_raw / cnt);
    }
    rep.fit = fit_slope(rep.T_values, rep.mean_w2sq);

    if (!cfg.out_csv.empty()) {
        std::ofstream out(cfg.out_csv);
        if (!out) throw std::runtime_error("cannot open " + cfg.out_csv);
        out << "# schema_version=" << kSchemaVersion << "\n";
        out << "# kind=rate_report\n# config=" << rep.config_echo << "\n";
        out << "# protocol=" << rep.protocol_echo << "\n";
        out << "# floor=" << detail::fmt_g17(rep.floor_estimate) << "\n";
        out << "# fitted_slope=" << detail::fmt_g17(rep.fit.slope) << " stderr="
            << detail::fmt_g17(rep.fit.stderr_) << " theory=" << rep.theory_slope << "\n";
        out << "T,replica,seed,h,dt,positivity_ok,certified,guard_main,guard_variance,"
               "w2sq_raw,w2sq_debiased,failed,wall_ms\n";
        for (const auto& row : rep.rows) {
            out << detail::fmt_g17(row.T) << ',' << row.replica << ',' << row.seed << ','
                << detail::fmt_g17(row.h) << ',' << detail::fmt_g17(row.dt) << ','
                << int(row.positivity_ok) << ',' << int(row.certified) << ','
                << int(row.guard_main) << ',' << int(row.guard_variance) << ','
                << detail::fmt_g17(row.w2sq_raw) << ',' << detail::fmt_g17(row.w2sq) << ','
                << int(row.failed) << ',' << detail::fmt_g17(row.wall_ms) << '\n';
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Girsanov / quadrature KL cross-check
// ---------------------------------------------------------------------------

struct KlCheckConfig {
    std::string manifold_spec = "circle:c=1";
    std::string density_spec = "trig:a1=0.6";
    std::string reference_spec = "uniform";
    double T = 10.0;
    double dt = 1e-3;
    int paths = 200;
    std::uint64_t master_seed = 1;
    int workers = 2;
};

enum class KlMatch { WeightP, WeightPSquared, Ambiguous, Neither };

struct KlReport {
    double mc_mean = 0, mc_se = 0;
    double quad_p = 0, quad_p2 = 0;
    double z_p = 0, z_p2 = 0;
    KlMatch match = KlMatch::Neither;
    int paths = 0;

    const char* match_name() const {
        switch (match) {
            case KlMatch::WeightP: return "p";
            case KlMatch::WeightPSquared: return "p_squared";
            case KlMatch::Ambiguous: return "ambiguous";
            case KlMatch::Neither: return "neither";
        }
        return "?";
    }
};

/// Monte Carlo mean of the Girsanov log-ratio against the two quadrature
/// weight modes; declares the mode whose z-score is within 2 (adjudicating
/// the stationary-weight question empirically).
inline KlReport run_kl_check(const KlCheckConfig& cfg) {
    Manifold M = Manifold::parse(cfg.manifold_spec);
    Density p = make_density(M, cfg.density_spec);
    Density q = make_density(M, cfg.reference_spec);
    KlReport rep;
    rep.paths = cfg.paths;
    std::vector<double> vals(cfg.paths, 0.0);
    detail::parallel_for(std::size_t(cfg.paths), cfg.workers, [&](std::size_t k) {
        SdeConfig sde;
        sde.generator = GeneratorSpec::langevin(p);
        sde.T = cfg.T;
        sde.dt = cfg.dt;
        sde.seed = split_seed(cfg.master_seed, "kl-path", k);
        sde.init = InitKind::Invariant;
        auto path = simulate(sde);
        vals[k] = girsanov_log_ratio(path, p, q);
    });
    double acc = 0, acc2 = 0;
    for (double v : vals) {
        acc += v;
        acc2 += v * v;
    }
    rep.mc_mean = acc / cfg.paths;
    rep.mc_se = std::sqrt((acc2 / cfg.paths - rep.mc_mean * rep.mc_mean) / double(cfg.paths));
    rep.quad_p = kl_quadrature(p, q, cfg.T, KlWeight::P);
    rep.quad_p2 = kl_quadrature(p, q, cfg.T, KlWeight::PSquared);
    auto zscore = [&](double target) {
        double gap = std::fabs(rep.mc_mean - target);
        if (rep.mc_se > 0) return gap / rep.mc_se;
        return gap < 1e-9 ? 0.0 : std::numeric_limits<double>::infinity();
    };
    rep.z_p = zscore(rep.quad_p);
    rep.z_p2 = zscore(rep.quad_p2);
    bool ok_p = rep.z_p <= 2.0, ok_p2 = rep.z_p2 <= 2.0;
    rep.match = ok_p && ok_p2 ? KlMatch::Ambiguous
                : ok_p        ? KlMatch::WeightP
                : ok_p2       ? KlMatch::WeightPSquared
                              : KlMatch::Neither;
    return rep;
}

// ---------------------------------------------------------------------------
// minimax bump diagnostics
// ---------------------------------------------------------------------------

struct MinimaxConfig {
    int dim = 1;  // torus dimension, 1 or 2
    std::vector<double> eps_grid = {0.05, 0.1};
    std::vector<double> v_fractions = {0.25, 0.5, 1.0};  // of eps^ell
    int ell = 2;
    double T = 1.0;
    int pairs = 4;  // sampled sign-vector pairs per (eps, v)
    int max_flips = 3;
    int grid_resolution = 0;
    std::uint64_t master_seed = 1;
};

struct MinimaxRow {
    double eps = 0, v = 0;
    int hamming = 0;
    bool fixed_v_sweep = false;
    double w1 = 0;
    double assouad_lower = 0;  // (v eps^{d+1} / kappa^2) * d_H
    double kl = 0;
};

struct MinimaxReport {
    std::vector<MinimaxRow> rows;
    double v_exponent = 0;    // KL ~ v^2 at fixed eps
    double eps_exponent = 0;  // KL ~ eps^{d-2} at fixed v
    int separation_violations = 0;
    double kappa = 0;
    std::size_t bumps = 0;
};

namespace detail {

/// Exact W1 between grid measures sharing their support. W1 depends only on
/// the signed difference, so route the positive part to the negative part;
/// this keeps the dense solver on the (small) flipped-bump support.
inline double w1_signed_difference(const Manifold& M, const QuadratureGrid& grid,
                                   const std::vector<double>& wa,
                                   const std::vector<double>& wb) {
    DiscreteMeasure plus, minus;
    plus.manifold = minus.manifold = M;
    double mass_p = 0, mass_m = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double diff = wa[g] - wb[g];
        if (diff > 0) {
            plus.support.push_back(grid.nodes[g]);
            plus.weights.push_back(diff);
            mass_p += diff;
        } else if (diff < 0) {
            minus.support.push_back(grid.nodes[g]);
            minus.weights.push_back(-diff);
            mass_m -= diff;
        }
    }
    if (plus.support.empty() || minus.support.empty()) return 0.0;
    for (auto& w : plus.weights) w /= mass_p;
    for (auto& w : minus.weights) w /= mass_m;
    ExactOptions o;
    o.cost = CostMode::Geodesic;
    o.method = ExactMethod::Simplex;
    double mass = 0.5 * (mass_p + mass_m);
    return mass * w2_exact(plus, minus, o).cost;
}

}  // namespace detail

inline MinimaxReport run_minimax_diagnostic(const MinimaxConfig& cfg) {
    if (cfg.dim != 1 && cfg.dim != 2)
        throw std::invalid_argument("minimax diagnostic: torus dimension 1 or 2");
    Manifold M = Manifold::flat_torus(cfg.dim, 1.0);
    int res = cfg.grid_resolution ? cfg.grid_resolution : (cfg.dim == 1 ? 4096 : 256);
    auto grid = quadrature_grid(M, res);
    MinimaxReport rep;

    double eps_min = cfg.eps_grid.front();
    for (double e : cfg.eps_grid) eps_min = std::min(eps_min, e);
    const double v_fixed = 0.5 * std::pow(eps_min, cfg.ell);

    Rng rng(split_seed(cfg.master_seed, "minimax"));
    auto run_case = [&](double eps, double v, bool fixed_sweep) {
        auto fam = make_bump_family(M, eps, cfg.ell, v, cfg.master_seed);
        rep.kappa = fam.kappa;
        rep.bumps = fam.count();
        for (int pair = 0; pair < cfg.pairs; ++pair) {
            std::vector<int> tau(fam.count());
            for (auto& t : tau) t = rng.uniform() < 0.5 ? -1 : 1;
            auto tau2 = tau;
            int flips = 1 + int(rng.below(std::uint64_t(cfg.max_flips)));
            for (int f = 0; f < flips; ++f) {
                std::size_t j = rng.below(fam.count());
                tau2[j] = -tau2[j];
            }
            int dh = 0;
            for (std::size_t j = 0; j < tau.size(); ++j)
                if (tau[j] != tau2[j]) ++dh;
            if (dh == 0) {
                tau2[0] = -tau2[0];
                dh = 1;
            }
            auto pa = fam.member(tau), pb = fam.member(tau2);
            std::vector<double> wa(grid.size()), wb(grid.size());
            double sa = 0, sb = 0;
            for (std::size_t g = 0; g < grid.size(); ++g) {
                wa[g] = pa.eval(grid.nodes[g]) * grid.weights[g];
                wb[g] = pb.eval(grid.nodes[g]) * grid.weights[g];
                sa += wa[g];
                sb += wb[g];
            }
            for (auto& w : wa) w /= sa;
            for (auto& w : wb) w /= sb;

            MinimaxRow row;
            row.eps = eps;
            row.v = v;
            row.hamming = dh;
            row.fixed_v_sweep = fixed_sweep;
            row.w1 = detail::w1_signed_difference(M, grid, wa, wb);
            row.assouad_lower = v * std::pow(eps, cfg.dim + 1) / (fam.kappa * fam.kappa) * dh;
            row.kl = kl_quadrature(pa, pb, cfg.T, KlWeight::P, grid);
            if (row.w1 < row.assouad_lower * (1.0 - 1e-9)) ++rep.separation_violations;
            rep.rows.push_back(row);
        }
    };

    // v sweep at the smallest eps (KL ~ v^2), then eps sweep at fixed v
    for (double vf : cfg.v_fractions) run_case(eps_min, vf * std::pow(eps_min, cfg.ell), false);
    for (double eps : cfg.eps_grid) run_case(eps, v_fixed, true);

    auto fit_exponent = [&](auto key, auto xval) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        std::size_t n = 0;
        for (const auto& row : rep.rows) {
            if (!key(row) || row.kl <= 0 || row.hamming == 0) continue;
            double x = std::log(xval(row)), y = std::log(row.kl / row.hamming);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++n;
        }
        if (n < 2) return 0.0;
        return (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx);
    };
    rep.v_exponent = fit_exponent(
        [&](const MinimaxRow& r) { return !r.fixed_v_sweep; },
        [](const MinimaxRow& r) { return r.v; });
    rep.eps_exponent = fit_exponent(
        [&](const MinimaxRow& r) { return r.fixed_v_sweep; },
        [](const MinimaxRow& r) { return r.eps; });
    return rep;
}

}  // namespace ergo
