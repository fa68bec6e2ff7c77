// Command-line front end: simulate diffusions, build kernel-smoothed
// estimates, evaluate transport distances and run the rate / KL / minimax
// experiment suites with reproducible seeded outputs.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ergo/experiments.hpp"
#include "ergo/io.hpp"

using namespace ergo;
using nlohmann::json;

namespace {

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

DiscreteMeasure load_measure(const std::string& file) {
    if (file.size() > 5 && file.substr(file.size() - 5) == ".json")
        return read_estimate_json(file).measure();
    return read_measure_csv(file);
}

int cmd_simulate(const std::string& manifold, const std::string& density,
                 const std::string& generator, double T, double dt, std::uint64_t seed,
                 const std::string& init, const std::string& out) {
    Manifold M = Manifold::parse(manifold);
    SdeConfig cfg;
    cfg.generator = GeneratorSpec::parse(make_density(M, density), generator);
    cfg.T = T;
    cfg.dt = dt;
    cfg.seed = seed;
    cfg.init = init == "uniform" ? InitKind::Uniform
               : init == "point" ? InitKind::Point
                                 : InitKind::Invariant;
    if (cfg.init == InitKind::Point) cfg.init_point = M.embed(IntrinsicVec{});
    auto path = simulate(cfg);
    write_path_csv(path, out);
    std::printf("wrote %zu points to %s\n", path.points(), out.c_str());
    return 0;
}

int cmd_estimate(const std::string& path_file, const std::string& kernel, double h, int grid_res,
                 const std::string& mode, std::size_t stride, const std::string& out) {
    auto path = read_path_csv(path_file);
    const Manifold& M = path.manifold;
    auto prof = parse_kernel(kernel, M.intrinsic_dim());
    auto nk = make_kernel(M, prof, h, parse_distance_mode(mode));
    auto grid = std::make_shared<const QuadratureGrid>(quadrature_grid(M, grid_res));
    auto est = smooth(occupation_measure(path, stride), nk, grid, path.T, kernel);
    write_estimate_json(est, out);
    std::printf("estimate: mass=%.12g positivity_ok=%d certified=%d -> %s\n", est.mass(),
                int(est.positivity_ok), int(est.certified_positive), out.c_str());
    return 0;
}

int cmd_w2(const std::string& a_file, const std::string& b_file, const std::string& solver,
           double eps, const std::string& out) {
    auto a = load_measure(a_file), b = load_measure(b_file);
    TransportResult r;
    if (solver == "entropic") {
        EntropicOptions o;
        o.eps = eps;
        r = w2_entropic(a, b, o);
    } else {
        r = w2_exact(a, b);
    }
    json j;
    j["schema_version"] = kSchemaVersion;
    j["cost"] = r.cost;
    j["solver"] = r.solver;
    j["marginal_residual"] = r.marginal_residual;
    j["dual_residual"] = r.dual_residual;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream f(out);
        f << j.dump(2) << "\n";
        std::printf("cost=%.12g -> %s\n", r.cost, out.c_str());
    }
    return 0;
}

int cmd_peyre(const std::string& manifold, const std::string& p1_spec,
              const std::string& p2_spec, int grid_res, const std::string& modes_csv) {
    Manifold M = Manifold::parse(manifold);
    auto grid = quadrature_grid(M, grid_res);
    auto p1 = make_density(M, p1_spec), p2 = make_density(M, p2_spec);
    std::vector<double> v1(grid.size()), v2(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        v1[j] = p1.eval(grid.nodes[j]);
        v2[j] = p2.eval(grid.nodes[j]);
    }
    double bound = peyre_bound(v1, v2, std::min(p1.p_min, p2.p_min), grid);
    std::printf("peyre_bound = %.12g  (p_min = %.6g)\n", bound,
                std::min(p1.p_min, p2.p_min));
    if (!modes_csv.empty()) {
        FourierBasis basis(grid);
        std::vector<double> diff(grid.size());
        for (std::size_t j = 0; j < grid.size(); ++j) diff[j] = v1[j] - v2[j];
        auto c = basis.forward(diff);
        std::ofstream out(modes_csv);
        out << "flat_index,eigenvalue,coeff_sq,contribution\n";
        int k[kMaxIntrinsic];
        for (std::size_t flat = 1; flat < c.size(); ++flat) {
            basis.frequency(flat, k);
            if (basis.aliased(k)) continue;
            double lam = basis.eigenvalue(k), c2 = std::norm(c[flat]);
            if (c2 < 1e-24) continue;
            out << flat << ',' << lam << ',' << c2 << ','
                << 4.0 / std::min(p1.p_min, p2.p_min) * c2 / lam * M.total_volume() << "\n";
        }
        std::printf("per-mode breakdown -> %s\n", modes_csv.c_str());
    }
    return 0;
}

ExperimentConfig rate_config_from(const std::map<std::string, std::string>& kv) {
    ExperimentConfig cfg;
    auto get = [&](const char* key, const std::string& dflt) {
        auto it = kv.find(key);
        return it == kv.end() ? dflt : it->second;
    };
    cfg.manifold_spec = get("manifold", cfg.manifold_spec);
    cfg.density_spec = get("density", cfg.density_spec);
    cfg.generator_spec = get("generator", cfg.generator_spec);
    cfg.T_grid = parse_list(get("T_grid", "64,128,256,512"));
    cfg.replicas = std::stoi(get("replicas", "8"));
    cfg.mode = get("mode", "occupation") == "smoothed" ? EstimatorMode::Smoothed
                                                       : EstimatorMode::Occupation;
    cfg.kernel_spec = get("kernel", cfg.kernel_spec);
    cfg.ell = std::stoi(get("ell", "2"));
    cfg.bandwidth_c = std::stod(get("c", "1.0"));
    cfg.distance_mode = parse_distance_mode(get("distance_mode", "geodesic"));
    cfg.grid_resolution = std::stoi(get("grid", "0"));
    cfg.dt = std::stod(get("dt", "1e-3"));
    cfg.protocol.n_ref = std::stoul(get("n_ref", "1000"));
    cfg.protocol.n_est = std::stoul(get("n_est", "1000"));
    cfg.protocol.solver =
        get("solver", "exact") == "entropic" ? RiskSolver::Entropic : RiskSolver::Exact;
    cfg.protocol.eps = std::stod(get("eps", "0"));
    cfg.protocol.repeats = std::stoi(get("repeats", "1"));
    cfg.protocol.compression = get("compression", "multinomial") == "quantile"
                                   ? RiskCompression::Quantile
                                   : RiskCompression::Multinomial;
    cfg.protocol.subtract_two_sample_floor = get("floor_subtract", "0") == "1";
    cfg.protocol.floor_pairs = std::stoul(get("floor_pairs", "8"));
    cfg.protocol.paired_reference = get("paired", "0") == "1";
    cfg.protocol.base_draws = std::stoul(get("base_draws", "1"));
    cfg.protocol.est_draw = get("est_draw", "multinomial") == "systematic"
                                ? RiskDraw::Systematic
                                : RiskDraw::Multinomial;
    cfg.master_seed = std::stoull(get("seed", "1"));
    cfg.workers = std::stoi(get("workers", "2"));
    cfg.out_csv = get("out", "");
    return cfg;
}

int cmd_rate(const ExperimentConfig& cfg, const std::string& summary_out) {
    auto rep = run_rate_experiment(cfg);
    std::printf("config: %s\n", rep.config_echo.c_str());
    std::printf("protocol: %s\n", rep.protocol_echo.c_str());
    if (rep.floor_estimate > 0) std::printf("two-sample floor: %.6g\n", rep.floor_estimate);
    for (std::size_t i = 0; i < rep.T_values.size(); ++i)
        std::printf("  T=%8.6g  mean W2^2 = %.6g (raw %.6g)\n", rep.T_values[i],
                    rep.mean_w2sq[i], rep.mean_w2sq_raw[i]);
    std::printf("fitted slope = %.4f +- %.4f   (theory %.4f)\n", rep.fit.slope,
                rep.fit.stderr_, rep.theory_slope);
    if (!summary_out.empty()) {
        json j;
        j["schema_version"] = kSchemaVersion;
        j["config"] = rep.config_echo;
        j["protocol"] = rep.protocol_echo;
        j["T"] = rep.T_values;
        j["mean_w2sq"] = rep.mean_w2sq;
        j["mean_w2sq_raw"] = rep.mean_w2sq_raw;
        j["floor"] = rep.floor_estimate;
        j["slope"] = rep.fit.slope;
        j["slope_stderr"] = rep.fit.stderr_;
        j["theory_slope"] = rep.theory_slope;
        std::ofstream f(summary_out);
        f << j.dump(2) << "\n";
    }
    return 0;
}

int cmd_kl_check(const KlCheckConfig& cfg) {
    auto rep = run_kl_check(cfg);
    std::printf("MC mean = %.6g  (se %.4g, %d paths)\n", rep.mc_mean, rep.mc_se, rep.paths);
    std::printf("quadrature weight p   : %.6g   z = %.3f\n", rep.quad_p, rep.z_p);
    std::printf("quadrature weight p^2 : %.6g   z = %.3f\n", rep.quad_p2, rep.z_p2);
    std::printf("matching mode: %s\n", rep.match_name());
    return 0;
}

int cmd_minimax(const MinimaxConfig& cfg) {
    auto rep = run_minimax_diagnostic(cfg);
    std::printf("bumps per family: %zu   measured kappa = %.4g\n", rep.bumps, rep.kappa);
    std::printf("rows: %zu   separation violations: %d\n", rep.rows.size(),
                rep.separation_violations);
    std::printf("KL exponent in v  : %.3f (theory 2)\n", rep.v_exponent);
    std::printf("KL exponent in eps: %.3f (theory d-2)\n", rep.eps_exponent);
    for (const auto& row : rep.rows)
        std::printf("  eps=%.3g v=%.3g dH=%d  W1=%.4g lower=%.4g  KL=%.4g\n", row.eps, row.v,
                    row.hamming, row.w1, row.assouad_lower, row.kl);
    return 0;
}

int cmd_kernel_check(const std::string& kernel, int d, double tol) {
    auto K = parse_kernel(kernel, d);
    bool ok = true;
    double mass = K.radial_moment(0, 4096);
    std::printf("kernel %s in d=%d: order %d, |K|_inf=%.4g, Lip=%.4g\n", kernel.c_str(), d,
                K.order, K.sup_norm, K.lipschitz);
    std::printf("  mass          = %.12g  %s\n", mass,
                std::fabs(mass - 1.0) <= tol ? "ok" : "FAIL");
    ok = ok && std::fabs(mass - 1.0) <= tol;
    for (int k = 1; k <= (K.order - 2) / 2; ++k) {
        double m = K.radial_moment(k, 4096);
        bool pass = std::fabs(m) <= tol;
        std::printf("  moment |u|^%d  = %.3e  %s\n", 2 * k, m, pass ? "ok" : "FAIL");
        ok = ok && pass;
    }
    std::printf("%s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stationary-measure estimation from manifold diffusion paths"};
    app.require_subcommand(1);

    // simulate
    std::string manifold = "circle:c=1", density = "trig:a1=0.5", generator = "langevin";
    std::string init = "invariant", out = "path.csv";
    double T = 100.0, dt = 1e-3;
    std::uint64_t seed = 7;
    auto* sim = app.add_subcommand("simulate", "simulate a diffusion path");
    sim->add_option("--manifold", manifold);
    sim->add_option("--density", density);
    sim->add_option("--generator", generator);
    sim->add_option("--T", T);
    sim->add_option("--dt", dt);
    sim->add_option("--seed", seed);
    sim->add_option("--init", init)->check(CLI::IsMember({"invariant", "uniform", "point"}));
    sim->add_option("--out", out);

    // estimate
    std::string path_file = "path.csv", kernel = "poly:r=4", dist_mode = "ambient";
    std::string est_out = "est.json";
    double h = 0.25;
    int grid_res = 64;
    std::size_t stride = 1;
    auto* est = app.add_subcommand("estimate", "kernel-smooth an occupation measure");
    est->set_help_flag("--help", "print help");  // frees -h for the bandwidth
    est->add_option("--path", path_file);
    est->add_option("--kernel", kernel);
    est->add_option("--h", h);
    est->add_option("--grid", grid_res);
    est->add_option("--distance-mode", dist_mode)->check(CLI::IsMember({"ambient", "geodesic"}));
    est->add_option("--stride", stride);
    est->add_option("--out", est_out);

    // w2
    std::string a_file, b_file, solver = "exact", w2_out;
    double eps = 0.0;
    auto* w2 = app.add_subcommand("w2", "transport distance between discrete measures");
    w2->add_option("--a", a_file)->required();
    w2->add_option("--b", b_file)->required();
    w2->add_option("--solver", solver)->check(CLI::IsMember({"exact", "entropic"}));
    w2->add_option("--eps", eps);
    w2->add_option("--out", w2_out);

    // peyre
    std::string p1_spec = "trig:a1=0.3", p2_spec = "uniform", modes_csv;
    int peyre_grid = 256;
    auto* pey = app.add_subcommand("peyre", "negative-Sobolev upper bound for W2^2");
    pey->add_option("--manifold", manifold);
    pey->add_option("--p1", p1_spec);
    pey->add_option("--p2", p2_spec);
    pey->add_option("--grid", peyre_grid);
    pey->add_option("--modes-csv", modes_csv);

    // rate
    std::string rate_config_file, rate_summary;
    std::map<std::string, std::string> inline_kv;
    std::vector<std::string> rate_sets;
    auto* rate = app.add_subcommand("rate", "convergence-rate experiment");
    rate->add_option("--config", rate_config_file, "flat key=value config file");
    rate->add_option("--set", rate_sets, "override key=value")->take_all();
    rate->add_option("--summary", rate_summary, "summary json path");

    // kl-check
    KlCheckConfig klcfg;
    auto* kl = app.add_subcommand("kl-check", "Girsanov vs quadrature KL cross-check");
    kl->add_option("--manifold", klcfg.manifold_spec);
    kl->add_option("--density", klcfg.density_spec);
    kl->add_option("--reference", klcfg.reference_spec);
    kl->add_option("--T", klcfg.T);
    kl->add_option("--dt", klcfg.dt);
    kl->add_option("--paths", klcfg.paths);
    kl->add_option("--seed", klcfg.master_seed);

    // minimax
    MinimaxConfig mmcfg;
    std::string eps_list = "0.05,0.1", vf_list = "0.25,0.5,1.0";
    auto* mm = app.add_subcommand("minimax", "bump-family minimax diagnostics");
    mm->add_option("--dim", mmcfg.dim);
    mm->add_option("--eps", eps_list);
    mm->add_option("--v-fractions", vf_list);
    mm->add_option("--ell", mmcfg.ell);
    mm->add_option("--T", mmcfg.T);
    mm->add_option("--pairs", mmcfg.pairs);
    mm->add_option("--grid", mmcfg.grid_resolution);
    mm->add_option("--seed", mmcfg.master_seed);

    // kernel-check
    std::string kc_kernel = "poly:r=4";
    int kc_d = 5;
    double kc_tol = 1e-8;
    auto* kc = app.add_subcommand("kernel-check", "verify kernel moment conditions");
    kc->add_option("--kernel", kc_kernel);
    kc->add_option("--d", kc_d);
    kc->add_option("--tol", kc_tol);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return cmd_simulate(manifold, density, generator, T, dt, seed, init, out);
        if (est->parsed())
            return cmd_estimate(path_file, kernel, h, grid_res, dist_mode, stride, est_out);
        if (w2->parsed()) return cmd_w2(a_file, b_file, solver, eps, w2_out);
        if (pey->parsed()) return cmd_peyre(manifold, p1_spec, p2_spec, peyre_grid, modes_csv);
        if (rate->parsed()) {
            std::map<std::string, std::string> kv;
            if (!rate_config_file.empty()) kv = read_config_file(rate_config_file);
            for (const auto& s : rate_sets) {
                auto eq = s.find('=');
                if (eq == std::string::npos) throw std::invalid_argument("--set needs key=value");
                kv[s.substr(0, eq)] = s.substr(eq + 1);
            }
            return cmd_rate(rate_config_from(kv), rate_summary);
        }
        if (kl->parsed()) return cmd_kl_check(klcfg);
        if (mm->parsed()) {
            mmcfg.eps_grid = parse_list(eps_list);
            mmcfg.v_fractions = parse_list(vf_list);
            return cmd_minimax(mmcfg);
        }
        if (kc->parsed()) return cmd_kernel_check(kc_kernel, kc_d, kc_tol);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
