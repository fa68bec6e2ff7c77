#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/density.hpp"
#include "ergo/diffusion.hpp"
#include "ergo/geometry.hpp"
#include "ergo/kernels.hpp"
#include "ergo/measure.hpp"

namespace ergo {

/// Grid values of the kernel-smoothed occupation density, the positivity
/// event surrogate and the resulting measure. positivity_ok records whether
/// all node values are nonnegative (the discrete p_{T,h} >= 0 event, which
/// decides the delta_{x0} fallback); certified_positive additionally requires
/// the Lipschitz margin 2 Lip(K) h^{-d-1} * covering radius, which rules out
/// sign dips between nodes.
struct SmoothedEstimate {
    std::shared_ptr<const QuadratureGrid> grid;
    std::vector<double> values;
    bool positivity_ok = false;
    bool certified_positive = false;
    std::size_t fallback_node = 0;
    double h = 0, T = 0;
    DistanceMode mode = DistanceMode::Ambient;
    std::string kernel_spec;

    double mass() const {
        double m = 0;
        for (std::size_t j = 0; j < values.size(); ++j) m += values[j] * grid->weights[j];
        return m;
    }
    double min_value() const {
        double m = values.empty() ? 0 : values[0];
        for (double v : values) m = std::min(m, v);
        return m;
    }
    DiscreteMeasure measure() const {
        if (!positivity_ok) return DiscreteMeasure::dirac(grid->manifold, grid->nodes[fallback_node]);
        DiscreteMeasure out;
        out.manifold = grid->manifold;
        out.support = grid->nodes;
        out.weights.resize(values.size());
        double total = 0;
        for (std::size_t j = 0; j < values.size(); ++j) {
            out.weights[j] = std::max(0.0, values[j]) * grid->weights[j];
            total += out.weights[j];
        }
        for (double& w : out.weights) w /= total;
        return out;
    }
};

namespace detail {

/// Window iteration over lattice grids: for each source point visit the grid
/// nodes within the kernel support. Callback gets (node index, profile value).
/// The per-source row sum against the grid weights is exactly the quadrature
/// normalizer eta at that point, so accumulating value/rowsum conserves the
/// total mass to machine precision regardless of grid resolution.
class KernelAccumulator {
public:
    KernelAccumulator(const NormalizedKernel& nk, std::shared_ptr<const QuadratureGrid> grid)
        : nk_(nk), grid_(std::move(grid)) {
        const Manifold& M = nk_.manifold;
        require_same_manifold(M, grid_->manifold);
        acc_.assign(grid_->size(), 0.0);
        if (grid_->is_lattice()) {
            double s = M.size(), R = M.factor_radius();
            double reach = nk_.h;
            if (nk_.mode == DistanceMode::Ambient)
                reach = (nk_.h >= 2.0 * R) ? 0.5 * s : 2.0 * R * std::asin(0.5 * nk_.h / R);
            reach = std::min(reach, 0.5 * s);
            int halfwin = int(std::ceil(reach / grid_->mesh())) + 1;
            // per-axis span never exceeds the resolution (no wrap double count)
            span_ = std::min(2 * halfwin + 1, grid_->resolution);
        }
        scratch_idx_.reserve(4096);
        scratch_val_.reserve(4096);
    }

    void add(const ManifoldPoint& x, double time_weight) {
        scratch_idx_.clear();
        scratch_val_.clear();
        double rowsum = 0;
        auto visit = [&](std::size_t j, double kval) {
            scratch_idx_.push_back(j);
            scratch_val_.push_back(kval);
            rowsum += kval * grid_->weights[j];
        };
        if (grid_->is_lattice())
            for_window(x, visit);
        else
            for (std::size_t j = 0; j < grid_->size(); ++j) {
                double t = nk_.dist(x, grid_->nodes[j]) / nk_.h;
                if (t < 1.0) visit(j, nk_.profile.eval(t));
            }
        if (rowsum <= 0.0) {
            if (!nk_.profile.nonneg)
                throw std::runtime_error(
                    "smooth: quadrature normalizer is nonpositive at a path point "
                    "(bandwidth too large for this grid)");
            // support smaller than a cell: deposit on the nearest node
            std::size_t jbest = 0;
            double dbest = 1e300;
            for (std::size_t j = 0; j < grid_->size(); ++j) {
                double dd = nk_.dist(x, grid_->nodes[j]);
                if (dd < dbest) {
                    dbest = dd;
                    jbest = j;
                }
            }
            acc_[jbest] += time_weight / grid_->weights[jbest];
        } else {
            double f = time_weight / rowsum;
            for (std::size_t k = 0; k < scratch_idx_.size(); ++k)
                acc_[scratch_idx_[k]] += f * scratch_val_[k];
        }
        total_weight_ += time_weight;
    }

    std::vector<double> finalize() {
        std::vector<double> out = acc_;
        for (double& v : out) v /= total_weight_;
        return out;
    }

    double total_weight() const { return total_weight_; }

private:
    template <class Visit>
    void for_window(const ManifoldPoint& x, Visit&& visit) {
        const Manifold& M = nk_.manifold;
        const int d = M.intrinsic_dim();
        const int res = grid_->resolution;
        const double s = M.size();
        const double R = M.factor_radius();
        const int lo = -(span_ - 1) / 2;
        int base[kMaxIntrinsic], off[kMaxIntrinsic];
        double dist_axis[kMaxIntrinsic];
        const bool geo = nk_.mode == DistanceMode::Geodesic;
        auto axis_dist2 = [&](int i, int offset) {
            int c = base[i] + offset;
            c %= res;
            if (c < 0) c += res;
            double delta = wrap_diff(x.intrinsic[i], s * double(c) / res, s);
            if (!geo) delta = 2.0 * R * std::sin(0.5 * delta / R);
            return delta * delta;
        };
        for (int i = 0; i < d; ++i) {
            base[i] = int(std::floor(x.intrinsic[i] / s * res + 0.5));
            off[i] = lo;
            dist_axis[i] = axis_dist2(i, lo);
        }
        while (true) {
            double dist2 = 0;
            std::size_t idx = 0;
            for (int i = 0; i < d; ++i) {
                int c = base[i] + off[i];
                c %= res;
                if (c < 0) c += res;
                idx = idx * res + std::size_t(c);
                dist2 += dist_axis[i];
            }
            double t = std::sqrt(dist2) / nk_.h;
            if (t < 1.0) visit(idx, nk_.profile.eval(t));
            int lvl = 0;
            while (lvl < d) {
                if (++off[lvl] < lo + span_) {
                    dist_axis[lvl] = axis_dist2(lvl, off[lvl]);
                    break;
                }
                off[lvl] = lo;
                dist_axis[lvl] = axis_dist2(lvl, lo);
                ++lvl;
            }
            if (lvl == d) break;
        }
    }

    const NormalizedKernel nk_;
    std::shared_ptr<const QuadratureGrid> grid_;
    std::vector<double> acc_;
    std::vector<std::size_t> scratch_idx_;
    std::vector<double> scratch_val_;
    double total_weight_ = 0;
    int span_ = 1;
};

inline SmoothedEstimate finalize_estimate(KernelAccumulator& acc, const NormalizedKernel& nk,
                                          std::shared_ptr<const QuadratureGrid> grid, double T,
                                          const std::string& kernel_spec) {
    SmoothedEstimate est;
    est.grid = std::move(grid);
    est.values = acc.finalize();
    est.h = nk.h;
    est.T = T;
    est.mode = nk.mode;
    est.kernel_spec = kernel_spec;
    est.fallback_node = 0;
    double mn = est.min_value();
    est.positivity_ok = mn >= 0.0;
    double lip_bound = 2.0 * nk.profile.lipschitz *
                       std::pow(nk.h, -double(nk.manifold.intrinsic_dim()) - 1.0);
    est.certified_positive = mn >= lip_bound * est.grid->covering_radius();
    return est;
}

}  // namespace detail

/// Consumes path points on the fly; avoids materializing paths with more
/// than ~1e7 steps.
class StreamingSmoother {
public:
    StreamingSmoother(const NormalizedKernel& nk, std::shared_ptr<const QuadratureGrid> grid,
                      std::string kernel_spec = {})
        : nk_(nk), grid_(grid), acc_(nk, grid), kernel_spec_(std::move(kernel_spec)) {}

    void add(const ManifoldPoint& x, double time_weight) { acc_.add(x, time_weight); }

    SmoothedEstimate finalize(double T) {
        return detail::finalize_estimate(acc_, nk_, grid_, T, kernel_spec_);
    }

private:
    NormalizedKernel nk_;
    std::shared_ptr<const QuadratureGrid> grid_;
    detail::KernelAccumulator acc_;
    std::string kernel_spec_;
};

inline SmoothedEstimate smooth(const DiscreteMeasure& occupation, const NormalizedKernel& nk,
                               std::shared_ptr<const QuadratureGrid> grid, double T,
                               const std::string& kernel_spec = {}) {
    if (occupation.support.empty()) throw std::invalid_argument("smooth: empty occupation measure");
    require_same_manifold(occupation.manifold, nk.manifold);
    detail::KernelAccumulator acc(nk, grid);
    for (std::size_t i = 0; i < occupation.size(); ++i)
        acc.add(occupation.support[i], occupation.weights[i]);
    return detail::finalize_estimate(acc, nk, grid, T, kernel_spec);
}

inline SmoothedEstimate smooth(const DiffusionPath& path, const NormalizedKernel& nk,
                               std::shared_ptr<const QuadratureGrid> grid,
                               std::size_t stride = 1, const std::string& kernel_spec = {}) {
    return smooth(occupation_measure(path, stride), nk, grid, path.T, kernel_spec);
}

/// Population smoothing p_h on the grid, with the same self-normalized
/// quadrature convolution the estimator uses.
inline std::vector<double> population_smooth(const Density& p, const NormalizedKernel& nk,
                                             std::shared_ptr<const QuadratureGrid> grid) {
    require_same_manifold(p.manifold, nk.manifold);
    detail::KernelAccumulator acc(nk, grid);
    for (std::size_t i = 0; i < grid->size(); ++i)
        acc.add(grid->nodes[i], grid->weights[i] * p.eval(grid->nodes[i]));
    std::vector<double> vals = acc.finalize();
    // finalize() divides by the total weight (the grid quadrature of p); undo
    // that so the output is p_h itself rather than p_h / int p.
    double tw = acc.total_weight();
    for (double& v : vals) v *= tw;
    return vals;
}

enum class BandwidthMode { Smoothed, EmpiricalComparison };

/// h = c T^{-1/(2l+d-2)} for the smoothed estimator; for the occupation
/// comparison h = c T^{-1/2} (d <= 4) or c T^{-1/(d-2)} (d >= 5).
inline double bandwidth_rule(double T, int d, int ell, double c,
                             BandwidthMode mode = BandwidthMode::Smoothed,
                             double h_max = 0.0) {
    if (T < 2.0) throw std::invalid_argument("bandwidth_rule: T must be >= 2");
    if (c <= 0) throw std::invalid_argument("bandwidth_rule: c must be positive");
    double h;
    if (mode == BandwidthMode::EmpiricalComparison) {
        h = (d <= 4) ? c * std::pow(T, -0.5) : c * std::pow(T, -1.0 / double(d - 2));
    } else {
        double denom = 2.0 * ell + d - 2.0;
        if (denom <= 0) throw std::invalid_argument("bandwidth_rule: 2l + d - 2 must be positive");
        h = c * std::pow(T, -1.0 / denom);
    }
    if (h_max > 0) h = std::min(h, h_max);
    return h;
}

/// Signed-kernel validity flag: T h^d >= c ln T.
inline bool guard_condition(double T, double h, int d, double c) {
    return T * std::pow(h, d) >= c * std::log(T);
}

/// The variance-proposition variant: T h^{d-2} >= c ln T.
inline bool guard_condition_variance(double T, double h, int d, double c) {
    return T * std::pow(h, d - 2) >= c * std::log(T);
}

}  // namespace ergo
