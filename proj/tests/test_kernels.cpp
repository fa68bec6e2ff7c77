#include <gtest/gtest.h>

#include <cmath>

#include "ergo/density.hpp"
#include "ergo/kernels.hpp"

using namespace ergo;

// Independent check: radial moments by plain composite Simpson, no Gauss
// machinery and no closed-form Beta integrals shared with the construction.
static double simpson_radial_moment(const KernelProfile& K, int k, int n = 200001) {
    double h = 1.0 / (n - 1), acc = 0;
    for (int i = 0; i < n; ++i) {
        double t = i * h;
        double f = K.eval(t) * std::pow(t, 2 * k + K.dim - 1);
        double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * f;
    }
    return unit_sphere_area(K.dim) * acc * h / 3.0;
}

TEST(Kernels, TriangularUnitMass1D) {
    auto K = make_profile(KernelFamily::Triangular, 1);
    EXPECT_NEAR(K.coeffs[0], 1.0, 1e-14);  // c = 1 in d = 1
    EXPECT_NEAR(simpson_radial_moment(K, 0), 1.0, 1e-8);
    EXPECT_TRUE(K.nonneg);
}

TEST(Kernels, UnitMassAcrossDimensions) {
    for (int d : {1, 2, 3, 5}) {
        for (auto fam : {KernelFamily::Triangular, KernelFamily::Epanechnikov}) {
            auto K = make_profile(fam, d);
            EXPECT_NEAR(simpson_radial_moment(K, 0), 1.0, 1e-8) << "d=" << d;
        }
        auto P4 = make_profile(KernelFamily::PolyOrder, d, 4);
        EXPECT_NEAR(simpson_radial_moment(P4, 0), 1.0, 1e-8) << "d=" << d;
    }
}

TEST(Kernels, PolyOrder2IsNonnegative) {
    auto K = make_profile(KernelFamily::PolyOrder, 2, 2);
    EXPECT_TRUE(K.nonneg);
    for (int i = 0; i <= 1000; ++i) EXPECT_GE(K.eval(i / 1000.0), 0.0);
}

TEST(Kernels, PolyOrder4SecondMomentVanishes) {
    auto K = make_profile(KernelFamily::PolyOrder, 2, 4);
    EXPECT_NEAR(simpson_radial_moment(K, 1), 0.0, 1e-8);
    EXPECT_FALSE(K.nonneg);
}

TEST(Kernels, MomentOracleHigherOrders) {
    // order r kills the even radial moments below r; odd multi-index moments
    // vanish by radial symmetry
    for (int d : {1, 2, 3}) {
        for (int r : {4, 6}) {
            auto K = make_profile(KernelFamily::PolyOrder, d, r);
            EXPECT_NEAR(simpson_radial_moment(K, 0), 1.0, 1e-8);
            for (int k = 1; k <= (r - 2) / 2; ++k)
                EXPECT_NEAR(simpson_radial_moment(K, k), 0.0, 1e-8)
                    << "d=" << d << " r=" << r << " k=" << k;
        }
    }
}

TEST(Kernels, SupportAndNormsMeasured) {
    auto K = make_profile(KernelFamily::PolyOrder, 3, 4);
    EXPECT_EQ(K.eval(1.0), 0.0);
    EXPECT_EQ(K.eval(1.5), 0.0);
    // Lipschitz constant verified on a 1e4 grid against the recorded value
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
        double a = i / 10000.0, b = (i + 1) / 10000.0;
        worst = std::max(worst, std::fabs(K.eval(b) - K.eval(a)) / (b - a));
    }
    EXPECT_LE(worst, K.lipschitz * (1.0 + 1e-6));
    double sup = 0;
    for (int i = 0; i <= 10000; ++i) sup = std::max(sup, std::fabs(K.eval(i / 10000.0)));
    EXPECT_NEAR(sup, K.sup_norm, 1e-12);
}

TEST(Kernels, KernelSpecParsing) {
    EXPECT_EQ(parse_kernel("triangular", 2).family, KernelFamily::Triangular);
    EXPECT_EQ(parse_kernel("epanechnikov", 2).family, KernelFamily::Epanechnikov);
    EXPECT_EQ(parse_kernel("poly:r=4", 2).order, 4);
    EXPECT_THROW(parse_kernel("poly:r=3", 2), std::invalid_argument);
    EXPECT_THROW(parse_kernel("gauss", 2), std::invalid_argument);
}

TEST(Kernels, EtaFlatTorusGeodesicIsExact) {
    // |eta_h - h^d| <= 1e-6 on the flat torus in geodesic mode
    for (int d : {1, 2, 3}) {
        Manifold M = d == 1 ? Manifold::circle(1.0) : Manifold::flat_torus(d, 1.0);
        auto grid = quadrature_grid(M, d == 1 ? 64 : 16);
        for (auto fam : {KernelFamily::Triangular, KernelFamily::PolyOrder}) {
            auto K = fam == KernelFamily::PolyOrder ? make_profile(fam, d, 4)
                                                    : make_profile(fam, d);
            for (double h : {0.05, 0.1, 0.2}) {
                auto cache = eta(M, K, h, DistanceMode::Geodesic, grid);
                EXPECT_NEAR(cache.uniform_value, std::pow(h, d), 1e-6)
                    << "d=" << d << " h=" << h;
            }
        }
    }
}

TEST(Kernels, EtaSphereApproachesFlatLimit) {
    Manifold M = Manifold::sphere(1.0);
    auto K = make_profile(KernelFamily::Triangular, 2);
    auto grid = quadrature_grid(M, 16);
    double prev_gap = 1e9;
    for (double h : {0.4, 0.2, 0.1, 0.05}) {
        auto cache = eta(M, K, h, DistanceMode::Geodesic, grid);
        double gap = std::fabs(cache.uniform_value / (h * h) - 1.0);
        EXPECT_LT(gap, prev_gap);  // monotone trend toward 1
        prev_gap = gap;
    }
    EXPECT_LT(prev_gap, 0.01);
}

TEST(Kernels, EtaGeodesicDeviationIsQuadratic) {
    // sup_x |h^{-d} eta~_h - 1| <= kappa h^2 with kappa stable under halving.
    // The h^2 term is carried by the kernel's second moment, so probe it with
    // a kernel that has one (triangular); an order-4 kernel kills it.
    Manifold M = Manifold::sphere(1.0);
    auto grid = quadrature_grid(M, 16);
    auto K = make_profile(KernelFamily::Triangular, 2);
    double h1 = 0.2, h2 = 0.1;
    double k1 = std::fabs(eta(M, K, h1, DistanceMode::Geodesic, grid).uniform_value /
                              (h1 * h1) - 1.0) / (h1 * h1);
    double k2 = std::fabs(eta(M, K, h2, DistanceMode::Geodesic, grid).uniform_value /
                              (h2 * h2) - 1.0) / (h2 * h2);
    EXPECT_GT(k1, 0.0);
    EXPECT_LT(std::fabs(k1 / k2 - 1.0), 0.1);  // fitted constant stable

    auto K4 = make_profile(KernelFamily::PolyOrder, 2, 4);
    double g1 = std::fabs(eta(M, K4, h1, DistanceMode::Geodesic, grid).uniform_value /
                              (h1 * h1) - 1.0);
    EXPECT_LT(g1, k1 * h1 * h1 * 0.1);  // vanishing second moment: far below the h^2 law
}

TEST(Kernels, EtaAmbientModeConsistent) {
    // tensor-quadrature ambient normalizer on the 2-torus against an
    // independent fine-lattice sum
    Manifold T2 = Manifold::flat_torus(2, 1.0);
    auto K2 = make_profile(KernelFamily::Triangular, 2);
    auto g2 = quadrature_grid(T2, 32);
    double h = 0.1;
    auto e2 = eta(T2, K2, h, DistanceMode::Ambient, g2);
    double R = T2.factor_radius();
    const int n = 4096;
    double lattice = 0;
    int win = int(std::ceil(h * n)) + 2;
    for (int i = -win; i <= win; ++i)
        for (int j = -win; j <= win; ++j) {
            double dx = 2.0 * R * std::sin(0.5 * (double(i) / n) / R);
            double dy = 2.0 * R * std::sin(0.5 * (double(j) / n) / R);
            lattice += K2.eval(std::sqrt(dx * dx + dy * dy) / h) / double(n) / double(n);
        }
    EXPECT_NEAR(e2.uniform_value / lattice, 1.0, 1e-4);
    EXPECT_LT(e2.rel_err, 1e-5);
    // chordal support reaches further in geodesic radius, so eta > h^d
    EXPECT_GT(e2.uniform_value, h * h);
    EXPECT_NEAR(e2.uniform_value / (h * h), 1.0, 0.03);
}

TEST(Kernels, KernelEvalSupportAndPeak) {
    Manifold M = Manifold::circle(1.0);
    auto K = make_profile(KernelFamily::Triangular, 1);
    auto nk = make_kernel(M, K, 0.1, DistanceMode::Geodesic);
    auto x = M.point({0.3}), far = M.point({0.8});
    EXPECT_EQ(nk.eval(x, far), 0.0);
    EXPECT_NEAR(nk.eval(x, x), 1.0 / 0.1, 1e-6);  // profile(0)/h^d with eta = h^d

    Manifold T2 = Manifold::flat_torus(2, 1.0);
    auto K2 = make_profile(KernelFamily::Triangular, 2);
    auto nk2 = make_kernel(T2, K2, 0.2, DistanceMode::Geodesic);
    auto y = T2.point({0.5, 0.5});
    EXPECT_NEAR(nk2.eval(y, y), K2.eval(0.0) / std::pow(0.2, 2), 1e-4);
}

TEST(Kernels, NormalizationIntegralOnFineGrid) {
    // Lemma (ii): int_M K_h(x, .) dy = 1 within 1e-6, via an independent fine
    // trapezoid sum against the continuum normalizer.
    Manifold M = Manifold::circle(1.0);
    auto K = make_profile(KernelFamily::PolyOrder, 1, 4);
    auto nk = make_kernel(M, K, 0.15, DistanceMode::Geodesic);
    auto grid = quadrature_grid(M, 32768);
    auto xs = sample_volume(M, 100, 303);
    for (const auto& x : xs) {
        double s = 0;
        for (std::size_t j = 0; j < grid.size(); ++j)
            s += nk.eval(x, grid.nodes[j]) * grid.weights[j];
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Kernels, SupBoundBelowHc) {
    for (auto mode : {DistanceMode::Geodesic, DistanceMode::Ambient}) {
        Manifold M = Manifold::flat_torus(2, 1.0);
        auto K = make_profile(KernelFamily::PolyOrder, 2, 4);
        double hc = detect_hc(M, K, mode);
        EXPECT_GT(hc, 0.0);
        for (double h = hc; h > hc / 8; h *= 0.5) {
            auto nk = make_kernel(M, K, h, mode);
            EXPECT_LE(nk.sup_bound(), 2.0 * K.sup_norm * std::pow(h, -2) * (1 + 1e-9));
        }
    }
}

TEST(Kernels, LipschitzInSecondArgument) {
    Manifold M = Manifold::circle(1.0);
    auto K = make_profile(KernelFamily::PolyOrder, 1, 4);
    double h = 0.2;
    auto nk = make_kernel(M, K, h, DistanceMode::Geodesic);
    double bound = 2.0 * K.lipschitz * std::pow(h, -2);
    Rng rng(7);
    auto xs = sample_volume(M, 200, 55);
    for (const auto& x : xs) {
        double y0 = rng.uniform();
        double y1 = y0 + 0.01 * (rng.uniform() - 0.5);
        auto a = M.point({y0}), b = M.point({y1});
        double lhs = std::fabs(nk.eval(x, a) - nk.eval(x, b));
        EXPECT_LE(lhs, bound * geodesic_distance(M, a, b) + 1e-12);
    }
}

TEST(Kernels, EtaRejectsOversizeBandwidth) {
    Manifold M = Manifold::circle(1.0);
    auto K = make_profile(KernelFamily::Triangular, 1);
    auto grid = quadrature_grid(M, 64);
    EXPECT_THROW(eta(M, K, 0.7, DistanceMode::Geodesic, grid), std::invalid_argument);
}
