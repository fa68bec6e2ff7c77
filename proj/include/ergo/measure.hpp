#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ergo/geometry.hpp"
#include "ergo/rng.hpp"

namespace ergo {

/// Weighted point cloud on a manifold: occupation measures, estimator
/// outputs on grids, and empirical samples all share this shape.
struct DiscreteMeasure {
    Manifold manifold = Manifold::circle(1.0);
    std::vector<ManifoldPoint> support;
    std::vector<double> weights;

    std::size_t size() const { return support.size(); }

    void validate() const {
        if (support.empty()) throw std::invalid_argument("measure: empty support");
        if (support.size() != weights.size())
            throw std::invalid_argument("measure: support/weight size mismatch");
        double s = 0;
        for (double w : weights) {
            if (w < 0) throw std::invalid_argument("measure: negative weight");
            s += w;
        }
        if (std::fabs(s - 1.0) > 1e-10)
            throw std::invalid_argument("measure: weights must sum to 1");
    }

    static DiscreteMeasure dirac(const Manifold& M, const ManifoldPoint& x) {
        DiscreteMeasure m;
        m.manifold = M;
        m.support = {x};
        m.weights = {1.0};
        return m;
    }

    static DiscreteMeasure from_points(const Manifold& M, std::vector<ManifoldPoint> pts) {
        DiscreteMeasure m;
        m.manifold = M;
        m.weights.assign(pts.size(), 1.0 / double(pts.size()));
        m.support = std::move(pts);
        return m;
    }
};

/// n i.i.d. draws from a discrete measure (CDF inversion).
inline std::vector<ManifoldPoint> multinomial_sample(const DiscreteMeasure& m, std::size_t n,
                                                     std::uint64_t seed) {
    std::vector<double> cdf(m.weights.size());
    double acc = 0;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        acc += m.weights[i];
        cdf[i] = acc;
    }
    Rng rng(seed);
    std::vector<ManifoldPoint> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        double u = rng.uniform() * acc;
        auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        std::size_t idx = std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1);
        out.push_back(m.support[idx]);
    }
    return out;
}

/// Systematic (stratified-CDF) resampling: one uniform offset, n equispaced
/// strata. Unbiased for the measure with far lower variance than multinomial.
inline std::vector<ManifoldPoint> systematic_sample(const DiscreteMeasure& m, std::size_t n,
                                                    std::uint64_t seed) {
    Rng rng(seed);
    double u0 = rng.uniform();
    std::vector<ManifoldPoint> out;
    out.reserve(n);
    double acc = 0;
    std::size_t i = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double target = (double(k) + u0) / double(n);
        while (i + 1 < m.weights.size() && acc + m.weights[i] < target) acc += m.weights[i++];
        out.push_back(m.support[i]);
    }
    return out;
}

}  // namespace ergo
