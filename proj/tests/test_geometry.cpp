#include <gtest/gtest.h>

#include <cmath>

#include "ergo/geometry.hpp"

using namespace ergo;

TEST(Geometry, CircleArcDistance) {
    Manifold M = Manifold::circle(1.0);
    EXPECT_NEAR(geodesic_distance(M, M.point({0.0}), M.point({0.25})), 0.25, 1e-15);
    EXPECT_NEAR(geodesic_distance(M, M.point({0.1}), M.point({0.9})), 0.2, 1e-15);
}

TEST(Geometry, TorusWrapDistance) {
    Manifold M = Manifold::flat_torus(2, 1.0);
    auto x = M.point({0.9, 0.0}), y = M.point({0.1, 0.0});
    EXPECT_NEAR(geodesic_distance(M, x, y), 0.2, 1e-15);
}

TEST(Geometry, SphereQuarterCircle) {
    Manifold M = Manifold::sphere(1.0);
    auto north = M.point({0.0, 0.0});
    auto equator = M.point({kPi / 2, 0.0});
    EXPECT_NEAR(geodesic_distance(M, north, equator), kPi / 2, 1e-12);
}

TEST(Geometry, AmbientDistances) {
    Manifold S = Manifold::sphere(1.0);
    auto n = S.point({0.0, 0.0}), s = S.point({kPi, 0.0});
    EXPECT_NEAR(ambient_distance(S, n, s), 2.0, 1e-12);

    Manifold C = Manifold::circle(2.0 * kPi);  // unit radius
    auto a = C.point({0.0}), b = C.point({kPi / 2});
    EXPECT_NEAR(ambient_distance(C, a, b), std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(ambient_distance(C, a, a), 0.0, 1e-15);
}

TEST(Geometry, ClosedFormConstants) {
    EXPECT_DOUBLE_EQ(Manifold::circle(1.0).total_volume(), 1.0);
    EXPECT_DOUBLE_EQ(Manifold::sphere(1.0).total_volume(), 4.0 * kPi);
    EXPECT_DOUBLE_EQ(Manifold::flat_torus(5, 1.0).total_volume(), 1.0);
    EXPECT_GT(Manifold::flat_torus(3, 1.0).injectivity_radius(), 0.0);
    EXPECT_LT(Manifold::flat_torus(3, 1.0).diameter(), 1e9);
}

TEST(Geometry, ProjectorAtSpherePole) {
    Manifold M = Manifold::sphere(1.0);
    auto P = tangent_projection(M, M.point({0.0, 0.0}));  // (0,0,1)
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double want = (i == j && i < 2) ? 1.0 : 0.0;
            EXPECT_NEAR(P.at(i, j), want, 1e-12);
        }
}

TEST(Geometry, ProjectorOnCircleFactor) {
    Manifold M = Manifold::flat_torus(1, 1.0);
    auto P = tangent_projection(M, M.point({0.0}));  // tangent is e2
    EXPECT_NEAR(P.at(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(P.at(1, 1), 1.0, 1e-12);
    EXPECT_NEAR(P.at(0, 1), 0.0, 1e-12);
}

TEST(Geometry, ProjectorRankAndIdempotence) {
    for (auto M : {Manifold::sphere(1.0), Manifold::flat_torus(3, 1.0), Manifold::circle(2.0)}) {
        auto pts = sample_volume(M, 100, 11);
        for (const auto& x : pts) {
            auto P = tangent_projection(M, x);
            EXPECT_NEAR(P.trace(), double(M.intrinsic_dim()), 1e-10);
            int m = M.ambient_dim();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) {
                    double pij2 = 0;
                    for (int k = 0; k < m; ++k) pij2 += P.at(i, k) * P.at(k, j);
                    EXPECT_NEAR(pij2, P.at(i, j), 1e-12);
                    EXPECT_NEAR(P.at(i, j), P.at(j, i), 1e-12);
                }
        }
    }
}

TEST(Geometry, ExpMapSphereQuarter) {
    Manifold M = Manifold::sphere(1.0);
    auto x = M.point_from_ambient({1.0, 0.0, 0.0});
    AmbientVec v{};
    v[1] = kPi / 2;
    auto y = exp_map(M, x, v);
    EXPECT_NEAR(y.ambient[0], 0.0, 1e-12);
    EXPECT_NEAR(y.ambient[1], 1.0, 1e-12);
    EXPECT_NEAR(y.ambient[2], 0.0, 1e-12);
}

TEST(Geometry, ExpMapTorusWrap) {
    Manifold M = Manifold::flat_torus(2, 1.0);
    auto x = M.point({0.9, 0.5});
    double t0, t1;
    factor_tangent(M, x, 0, t0, t1);
    AmbientVec v{};
    v[0] = 0.2 * t0;
    v[1] = 0.2 * t1;
    auto y = exp_map(M, x, v);
    EXPECT_NEAR(y.intrinsic[0], 0.1, 1e-12);
    EXPECT_NEAR(y.intrinsic[1], 0.5, 1e-12);
}

TEST(Geometry, ExpMapZeroVector) {
    for (auto M : {Manifold::sphere(1.0), Manifold::flat_torus(2, 1.0)}) {
        auto x = sample_volume(M, 1, 3)[0];
        auto y = exp_map(M, x, AmbientVec{});
        EXPECT_NEAR(geodesic_distance(M, x, y), 0.0, 1e-14);
    }
}

TEST(Geometry, ExpMapRejectsNonTangent) {
    Manifold M = Manifold::sphere(1.0);
    auto x = M.point_from_ambient({1.0, 0.0, 0.0});
    AmbientVec v{};
    v[0] = 0.5;  // radial, not tangent
    EXPECT_THROW(exp_map(M, x, v), std::invalid_argument);
}

TEST(Geometry, ExpMapPreservesConstraintAndDistance) {
    Rng rng(5);
    for (auto M : {Manifold::sphere(1.3), Manifold::flat_torus(3, 2.0)}) {
        auto pts = sample_volume(M, 50, 17);
        for (const auto& x : pts) {
            AmbientVec raw{};
            for (int k = 0; k < M.ambient_dim(); ++k) raw[k] = rng.normal();
            auto P = tangent_projection(M, x);
            AmbientVec v = P.apply(raw);
            double nv = 0;
            for (int k = 0; k < M.ambient_dim(); ++k) nv += v[k] * v[k];
            nv = std::sqrt(nv);
            double scale = 0.5 * M.injectivity_radius() / std::max(nv, 1e-12);
            for (auto& c : v) c *= scale;
            auto y = exp_map(M, x, v);
            // on-manifold check: embed(intrinsic) is the ambient by construction
            if (M.kind() == ManifoldKind::Sphere) {
                double r2 = 0;
                for (int k = 0; k < 3; ++k) r2 += y.ambient[k] * y.ambient[k];
                EXPECT_NEAR(std::sqrt(r2), M.size(), 1e-12);
            }
            EXPECT_NEAR(geodesic_distance(M, x, y), nv * scale, 1e-10);
        }
    }
}

TEST(Geometry, LogMapInvertsExp) {
    Rng rng(9);
    for (auto M : {Manifold::sphere(1.0), Manifold::flat_torus(2, 1.0)}) {
        auto pts = sample_volume(M, 20, 23);
        for (const auto& x : pts) {
            AmbientVec raw{};
            for (int k = 0; k < M.ambient_dim(); ++k) raw[k] = 0.1 * rng.normal();
            AmbientVec v = tangent_projection(M, x).apply(raw);
            auto y = exp_map(M, x, v);
            AmbientVec w = log_map(M, x, y);
            for (int k = 0; k < M.ambient_dim(); ++k) EXPECT_NEAR(w[k], v[k], 1e-10);
        }
    }
}

TEST(Geometry, MetricAxiomsOnRandomTriples) {
    for (auto M : {Manifold::circle(1.0), Manifold::sphere(1.0), Manifold::flat_torus(3, 1.0)}) {
        auto pts = sample_volume(M, 3 * 3334, 29);
        double diam = M.diameter();
        for (std::size_t i = 0; i + 2 < pts.size(); i += 3) {
            const auto &a = pts[i], &b = pts[i + 1], &c = pts[i + 2];
            double ab = geodesic_distance(M, a, b);
            double ba = geodesic_distance(M, b, a);
            double ac = geodesic_distance(M, a, c);
            double cb = geodesic_distance(M, c, b);
            EXPECT_DOUBLE_EQ(ab, ba);
            EXPECT_GE(ab, 0.0);
            EXPECT_LE(ab, diam * (1 + 1e-12));
            EXPECT_LE(ab, ac + cb + 1e-12);
            EXPECT_LE(ambient_distance(M, a, b), ab + 1e-12);
        }
    }
}

TEST(Geometry, SphereEquivalenceConstant) {
    Manifold M = Manifold::sphere(1.0);
    auto pts = sample_volume(M, 2 * 10000, 31);
    for (std::size_t i = 0; i + 1 < pts.size(); i += 2) {
        double g = geodesic_distance(M, pts[i], pts[i + 1]);
        double a = ambient_distance(M, pts[i], pts[i + 1]);
        EXPECT_LE(g, 0.5 * kPi * a + 1e-9);
    }
}

TEST(Geometry, SampleVolumeMoments) {
    Manifold C = Manifold::circle(1.0);
    const std::size_t n = 100000;
    auto pts = sample_volume(C, n, 101);
    double mean = 0;
    for (const auto& p : pts) mean += p.intrinsic[0];
    mean /= double(n);
    double sigma = 1.0 / std::sqrt(12.0);
    EXPECT_NEAR(mean, 0.5, 3.0 * sigma / std::sqrt(double(n)));

    Manifold S = Manifold::sphere(1.0);
    auto sp = sample_volume(S, n, 103);
    double mx = 0, my = 0, mz = 0;
    for (const auto& p : sp) {
        mx += p.ambient[0];
        my += p.ambient[1];
        mz += p.ambient[2];
    }
    double bound = 3.0 / std::sqrt(double(n));
    EXPECT_NEAR(mx / double(n), 0.0, bound);
    EXPECT_NEAR(my / double(n), 0.0, bound);
    EXPECT_NEAR(mz / double(n), 0.0, bound);
}

TEST(Geometry, SampleVolumeDeterminism) {
    Manifold M = Manifold::flat_torus(2, 1.0);
    auto a = sample_volume(M, 1000, 42), b = sample_volume(M, 1000, 42);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int k = 0; k < 2; ++k) EXPECT_EQ(a[i].intrinsic[k], b[i].intrinsic[k]);
}

TEST(Geometry, TorusQuadrature) {
    Manifold M = Manifold::flat_torus(2, 1.0);
    auto g = quadrature_grid(M, 32);
    ASSERT_EQ(g.size(), 1024u);
    double total = 0, integral = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        total += g.weights[i];
        integral += std::cos(2.0 * kPi * g.nodes[i].intrinsic[0]) * g.weights[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(integral, 0.0, 1e-12);
}

TEST(Geometry, SphereQuadratureArea) {
    Manifold M = Manifold::sphere(1.0);
    auto g = quadrature_grid(M, 128);
    double total = 0;
    for (double w : g.weights) total += w;
    EXPECT_NEAR(total, 4.0 * kPi, 1e-6);
    EXPECT_THROW(quadrature_grid(M, 1), std::invalid_argument);
}

TEST(Geometry, SpecStringsRoundTrip) {
    for (const char* s : {"circle:c=1", "sphere:r=1", "torus:d=5,s=1"}) {
        Manifold M = Manifold::parse(s);
        EXPECT_EQ(Manifold::parse(M.to_string()), M);
    }
    EXPECT_EQ(Manifold::parse("torus:d=2,s=1").intrinsic_dim(), 2);
    EXPECT_EQ(Manifold::parse("torus:d=2,s=1").ambient_dim(), 4);
    EXPECT_THROW(Manifold::parse("klein:q=1"), std::invalid_argument);
}

TEST(Geometry, EmbedIsSourceOfTruth) {
    for (auto M : {Manifold::circle(1.0), Manifold::sphere(2.0), Manifold::flat_torus(3, 1.5)}) {
        auto pts = sample_volume(M, 50, 77);
        for (const auto& p : pts) {
            auto q = M.embed(p.intrinsic);
            for (int k = 0; k < M.ambient_dim(); ++k) EXPECT_EQ(p.ambient[k], q.ambient[k]);
        }
    }
}
