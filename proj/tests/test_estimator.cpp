#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "ergo/estimator.hpp"

using namespace ergo;

static std::shared_ptr<const QuadratureGrid> make_grid(const Manifold& M, int res) {
    return std::make_shared<const QuadratureGrid>(quadrature_grid(M, res));
}

TEST(Estimator, ConstantPathReproducesKernelRow) {
    Manifold M = Manifold::circle(1.0);
    auto K = make_profile(KernelFamily::Triangular, 1);
    auto nk = make_kernel(M, K, 0.1, DistanceMode::Geodesic);
    auto grid = make_grid(M, 1024);

    DiffusionPath path;
    path.manifold = M;
    path.dt = 0.1;
    path.T = 1.0;
    for (int i = 0; i <= 10; ++i) path.coords.push_back(0.5);
    auto est = smooth(path, nk, grid);
    EXPECT_TRUE(est.positivity_ok);
    EXPECT_NEAR(est.mass(), 1.0, 1e-12);
    auto x = M.point({0.5});
    for (std::size_t j = 0; j < grid->size(); j += 17) {
        double want = nk.eval(x, grid->nodes[j]);
        EXPECT_NEAR(est.values[j], want, 2e-3 * nk.sup_bound() + 1e-12);
    }
}

TEST(Estimator, MassIsOneToMachinePrecision) {
    // the self-normalized quadrature conserves unit mass on every grid,
    // including coarse high-dimensional ones with a signed kernel
    struct Case {
        Manifold M;
        int res;
        const char* kernel;
        double h;
        DistanceMode mode;
    } cases[] = {
        {Manifold::circle(1.0), 256, "triangular", 0.12, DistanceMode::Geodesic},
        {Manifold::circle(1.0), 512, "poly:r=4", 0.2, DistanceMode::Ambient},
        {Manifold::flat_torus(2, 1.0), 64, "poly:r=4", 0.22, DistanceMode::Geodesic},
        {Manifold::flat_torus(5, 1.0), 8, "poly:r=4", 0.42, DistanceMode::Geodesic},
    };
    for (const auto& c : cases) {
        auto p = make_density(c.M, "uniform");
        SdeConfig cfg;
        cfg.generator = GeneratorSpec::langevin(p);
        cfg.T = 20.0;
        cfg.dt = 1e-2;
        cfg.seed = 5;
        auto path = simulate(cfg);
        auto K = parse_kernel(c.kernel, c.M.intrinsic_dim());
        auto nk = make_kernel(c.M, K, c.h, c.mode);
        auto est = smooth(path, nk, make_grid(c.M, c.res));
        EXPECT_NEAR(est.mass(), 1.0, 1e-10) << c.kernel << " d=" << c.M.intrinsic_dim();
    }
}

TEST(Estimator, LongPathUniformDensityIsFlat) {
    Manifold M = Manifold::circle(1.0);
    auto p = make_density(M, "uniform");
    auto K = make_profile(KernelFamily::Triangular, 1);
    auto nk = make_kernel(M, K, 0.15, DistanceMode::Geodesic);
    auto grid = make_grid(M, 256);
    int bad = 0;
    const int reps = 4;
    for (int k = 0; k < reps; ++k) {
        SdeConfig cfg;
        cfg.generator = GeneratorSpec::langevin(p);
        cfg.T = 500.0;
        cfg.dt = 1e-3;
        cfg.seed = 8000 + k;
        auto path = simulate(cfg);
        auto est = smooth(occupation_measure(path, 10), nk, grid, path.T);
        double worst = 0;
        for (double v : est.values) worst = std::max(worst, std::fabs(v - 1.0));
        if (worst >= 0.1) ++bad;
    }
    EXPECT_LE(bad, 1);
}

TEST(Estimator, MixtureLinearity) {
    Manifold M = Manifold::circle(1.0);
    auto K = make_profile(KernelFamily::PolyOrder, 1, 4);
    auto nk = make_kernel(M, K, 0.2, DistanceMode::Geodesic);
    auto grid = make_grid(M, 512);
    auto pts_a = sample_volume(M, 50, 3), pts_b = sample_volume(M, 80, 4);
    double T1 = 2.0, T2 = 6.0;
    auto occ_a = DiscreteMeasure::from_points(M, pts_a);
    auto occ_b = DiscreteMeasure::from_points(M, pts_b);
    DiscreteMeasure mix;
    mix.manifold = M;
    for (std::size_t i = 0; i < occ_a.size(); ++i) {
        mix.support.push_back(occ_a.support[i]);
        mix.weights.push_back(occ_a.weights[i] * T1 / (T1 + T2));
    }
    for (std::size_t i = 0; i < occ_b.size(); ++i) {
        mix.support.push_back(occ_b.support[i]);
        mix.weights.push_back(occ_b.weights[i] * T2 / (T1 + T2));
    }
    auto ea = smooth(occ_a, nk, grid, T1);
    auto eb = smooth(occ_b, nk, grid, T2);
    auto em = smooth(mix, nk, grid, T1 + T2);
    for (std::size_t j = 0; j < grid->size(); ++j) {
        double want = (T1 * ea.values[j] + T2 * eb.values[j]) / (T1 + T2);
        EXPECT_NEAR(em.values[j], want, 1e-12 * std::max(1.0, std::fabs(want)));
    }
}

TEST(Estimator, SignedKernelFallbackOnSparseData) {
    // a single atom smoothed with a signed kernel has a negative ring, which
    // must trip the fallback to the Dirac at the first grid node
    Manifold M = Manifold::circle(1.0);
    auto K = make_profile(KernelFamily::PolyOrder, 1, 4);
    auto nk = make_kernel(M, K, 0.2, DistanceMode::Geodesic);
    auto grid = make_grid(M, 512);
    auto occ = DiscreteMeasure::dirac(M, M.point({0.37}));
    auto est = smooth(occ, nk, grid, 1.0);
    EXPECT_FALSE(est.positivity_ok);
    EXPECT_NEAR(est.mass(), 1.0, 1e-12);  // signed values still integrate to one
    auto mu = est.measure();
    ASSERT_EQ(mu.size(), 1u);
    EXPECT_EQ(mu.support[0].intrinsic[0], grid->nodes[0].intrinsic[0]);
}

TEST(Estimator, PositivityCertificateOnDenseData) {
    Manifold M = Manifold::circle(1.0);
    auto p = make_density(M, "trig:a1=0.3");
    SdeConfig cfg;
    cfg.generator = GeneratorSpec::langevin(p);
    cfg.T = 400.0;
    cfg.dt = 1e-3;
    cfg.seed = 17;
    auto path = simulate(cfg);
    auto K = make_profile(KernelFamily::PolyOrder, 1, 4);
    auto nk = make_kernel(M, K, 0.25, DistanceMode::Geodesic);
    auto est = smooth(occupation_measure(path, 5), nk, make_grid(M, 1024), path.T);
    EXPECT_TRUE(est.positivity_ok);
    EXPECT_TRUE(est.certified_positive);
    auto mu = est.measure();
    EXPECT_NO_THROW(mu.validate());
}

TEST(Estimator, PositivityFrequencyUnderGuard) {
    // signed kernel in the guarded regime: fallback should be rare
    Manifold M = Manifold::circle(1.0);
    auto p = make_density(M, "trig:a1=0.3");
    auto K = make_profile(KernelFamily::PolyOrder, 1, 4);
    const double T = 200.0;
    double h = bandwidth_rule(T, 1, 2, 1.0, BandwidthMode::Smoothed, 0.3);
    ASSERT_TRUE(guard_condition(T, h, 1, 1.0));
    auto nk = make_kernel(M, K, h, DistanceMode::Geodesic);
    auto grid = make_grid(M, 512);
    int fallbacks = 0;
    const int reps = 20;
    for (int k = 0; k < reps; ++k) {
        SdeConfig cfg;
        cfg.generator = GeneratorSpec::langevin(p);
        cfg.T = T;
        cfg.dt = 1e-3;
        cfg.seed = 33000 + k;
        auto path = simulate(cfg);
        auto est = smooth(occupation_measure(path, 5), nk, grid, path.T);
        if (!est.positivity_ok) ++fallbacks;
    }
    EXPECT_LE(double(fallbacks) / reps, 0.05);
}

TEST(Estimator, StreamingSmootherMatchesBatch) {
    Manifold M = Manifold::flat_torus(2, 1.0);
    auto p = make_density(M, "trig:a1=0.4");
    SdeConfig cfg;
    cfg.generator = GeneratorSpec::langevin(p);
    cfg.T = 10.0;
    cfg.dt = 1e-3;
    cfg.seed = 51;
    auto path = simulate(cfg);
    auto occ = occupation_measure(path);
    auto K = make_profile(KernelFamily::Triangular, 2);
    auto nk = make_kernel(M, K, 0.2, DistanceMode::Geodesic);
    auto grid = make_grid(M, 32);
    auto batch = smooth(occ, nk, grid, path.T);
    StreamingSmoother stream(nk, grid);
    for (std::size_t i = 0; i < occ.size(); ++i) stream.add(occ.support[i], occ.weights[i]);
    auto est = stream.finalize(path.T);
    for (std::size_t j = 0; j < grid->size(); ++j)
        EXPECT_DOUBLE_EQ(est.values[j], batch.values[j]);
}

// ---------------------------------------------------------------------------
// population smoothing
// ---------------------------------------------------------------------------

TEST(PopulationSmooth, UniformIsExactlyFlat) {
    Manifold M = Manifold::flat_torus(2, 1.0);
    auto p = make_density(M, "uniform");
    auto K = make_profile(KernelFamily::Triangular, 2);
    auto nk = make_kernel(M, K, 0.2, DistanceMode::Geodesic);
    auto vals = population_smooth(p, nk, make_grid(M, 64));
    for (double v : vals) EXPECT_NEAR(v, 1.0, 1e-6);
}

TEST(PopulationSmooth, ConvergesUniformlyToDensity) {
    Manifold M = Manifold::circle(1.0);
    auto p = make_density(M, "trig:a1=0.5");
    auto K = make_profile(KernelFamily::Triangular, 1);
    auto grid = make_grid(M, 2048);
    double prev = 1e9;
    for (double h : {0.2, 0.1, 0.05}) {
        auto nk = make_kernel(M, K, h, DistanceMode::Geodesic);
        auto vals = population_smooth(p, nk, grid);
        double sup = 0;
        for (std::size_t j = 0; j < grid->size(); ++j)
            sup = std::max(sup, std::fabs(vals[j] - p.eval(grid->nodes[j])));
        EXPECT_LT(sup, prev);
        prev = sup;
    }
    EXPECT_LT(prev, 0.01);
}

TEST(PopulationSmooth, StaysWithinDensityEnvelope) {
    Manifold M = Manifold::circle(1.0);
    auto p = make_density(M, "trig:a1=0.5");
    auto K = make_profile(KernelFamily::PolyOrder, 1, 4);
    auto grid = make_grid(M, 2048);
    for (double h : {0.1, 0.05}) {
        auto nk = make_kernel(M, K, h, DistanceMode::Geodesic);
        auto vals = population_smooth(p, nk, grid);
        for (double v : vals) {
            EXPECT_GE(v, 0.5 * p.p_min);
            EXPECT_LE(v, 2.0 * p.p_max);
        }
    }
}

// ---------------------------------------------------------------------------
// bandwidth rule and guard
// ---------------------------------------------------------------------------

TEST(Bandwidth, RuleValues) {
    EXPECT_NEAR(bandwidth_rule(1024.0, 5, 2, 1.0), std::pow(1024.0, -1.0 / 7.0), 1e-12);
    EXPECT_NEAR(bandwidth_rule(1024.0, 5, 2, 1.0), 0.3715, 5e-4);
    EXPECT_NEAR(bandwidth_rule(100.0, 3, 0, 1.0, BandwidthMode::EmpiricalComparison), 0.1,
                1e-12);
    EXPECT_LT(bandwidth_rule(2048.0, 5, 2, 1.0), bandwidth_rule(1024.0, 5, 2, 1.0));
    EXPECT_THROW(bandwidth_rule(100.0, 1, 0, 1.0), std::invalid_argument);
    EXPECT_DOUBLE_EQ(bandwidth_rule(1e9, 5, 2, 1.0, BandwidthMode::Smoothed, 0.05), 0.05);
}

TEST(Bandwidth, GuardCondition) {
    EXPECT_TRUE(guard_condition(1e4, 0.3, 5, 1.0));
    EXPECT_FALSE(guard_condition(10.0, 0.01, 5, 1.0));
    double T = 500.0, c = 1.0;
    int d = 3;
    double hstar = std::pow(c * std::log(T) / T, 1.0 / d);
    EXPECT_TRUE(guard_condition(T, hstar * (1 + 1e-9), d, c));
    EXPECT_FALSE(guard_condition(T, hstar * (1 - 1e-9), d, c));
    EXPECT_TRUE(guard_condition_variance(1e3, 0.2, 4, 1.0) ==
                (1e3 * std::pow(0.2, 2) >= std::log(1e3)));
}

TEST(Estimator, VarianceShrinksWithTime) {
    Manifold M = Manifold::circle(1.0);
    auto p = make_density(M, "trig:a1=0.3");
    auto K = make_profile(KernelFamily::Triangular, 1);
    auto nk = make_kernel(M, K, 0.2, DistanceMode::Geodesic);
    auto grid = make_grid(M, 128);
    auto node_variance = [&](double T, std::uint64_t base) {
        const int reps = 12;
        double acc = 0, acc2 = 0;
        for (int k = 0; k < reps; ++k) {
            SdeConfig cfg;
            cfg.generator = GeneratorSpec::langevin(p);
            cfg.T = T;
            cfg.dt = 1e-3;
            cfg.seed = base + k;
            auto est = smooth(occupation_measure(simulate(cfg), 5), nk, grid, T);
            double v = est.values[7];
            acc += v;
            acc2 += v * v;
        }
        acc /= reps;
        return acc2 / reps - acc * acc;
    };
    EXPECT_LT(node_variance(128.0, 100), node_variance(32.0, 200));
}

TEST(Estimator, EmptyPathRejected) {
    Manifold M = Manifold::circle(1.0);
    auto K = make_profile(KernelFamily::Triangular, 1);
    auto nk = make_kernel(M, K, 0.1, DistanceMode::Geodesic);
    DiscreteMeasure empty;
    empty.manifold = M;
    EXPECT_THROW(smooth(empty, nk, make_grid(M, 64), 1.0), std::invalid_argument);
}
