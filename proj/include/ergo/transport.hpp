#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/density.hpp"
#include "ergo/geometry.hpp"
#include "ergo/measure.hpp"
#include "ergo/rng.hpp"

namespace ergo {

enum class CostMode { GeodesicSquared, Geodesic, AmbientSquared };

inline double transport_cost(const Manifold& M, const ManifoldPoint& x, const ManifoldPoint& y,
                             CostMode mode) {
    switch (mode) {
        case CostMode::GeodesicSquared: {
            double d = geodesic_distance(M, x, y);
            return d * d;
        }
        case CostMode::Geodesic: return geodesic_distance(M, x, y);
        case CostMode::AmbientSquared: {
            double d = ambient_distance(M, x, y);
            return d * d;
        }
    }
    return 0;
}

struct PlanEntry {
    std::uint32_t i, j;
    double mass;
};

struct TransportResult {
    double cost = 0;  // optimal objective; W2^2 for squared-geodesic cost
    std::vector<PlanEntry> plan;
    std::string solver;
    double marginal_residual = 0;  // exact: plan-vs-input marginals; entropic: violation
    double dual_residual = 0;      // exact: worst negative reduced cost at optimum
    int iterations = 0;
    bool converged = true;
};

namespace detail {

// ---------------------------------------------------------------------------
// dense transportation simplex (tree basis, block pricing, perturbed supplies)
// ---------------------------------------------------------------------------

class TransportSimplex {
public:
    TransportSimplex(std::vector<double> supply, std::vector<double> demand,
                     const std::vector<double>& cost /* n*m row major */)
        : n_(supply.size()), m_(demand.size()), cost_(cost), a_(std::move(supply)),
          b_(std::move(demand)) {}

    TransportResult solve(bool want_plan) {
        balance_and_perturb();
        northwest_tree();
        refresh_tree();

        const std::size_t nm = n_ * m_;
        const std::size_t block = std::max<std::size_t>(4096, nm / 64);
        std::size_t cursor = 0;
        long pivots = 0;
        const long pivot_cap = 200 * long(n_ + m_) + 20000;
        const double tol = 1e-12 * (1.0 + max_abs_cost());
        while (true) {
            // block pricing: best reduced cost within a rotating window
            double best = -tol;
            std::size_t best_arc = nm;
            std::size_t scanned = 0;
            while (scanned < nm) {
                std::size_t end = std::min(cursor + block, nm);
                for (std::size_t e = cursor; e < end; ++e) {
                    double r = cost_[e] - u_[e / m_] - v_[e % m_];
                    if (r < best) {
                        best = r;
                        best_arc = e;
                    }
                }
                scanned += end - cursor;
                cursor = end < nm ? end : 0;
                if (best_arc != nm) break;
            }
            if (best_arc == nm) break;
            pivot(best_arc / m_, best_arc % m_);
            refresh_tree();
            if (++pivots > pivot_cap)
                throw std::runtime_error("transport simplex: pivot cap exceeded");
        }

        // final flows on the optimal tree from the unperturbed marginals
        restore_exact_flows();
        TransportResult out;
        out.solver = "exact:simplex";
        out.iterations = int(pivots);
        double total = 0;
        double resid = 0;
        std::vector<double> row(n_, 0.0), col(m_, 0.0);
        for (std::size_t vtx = 1; vtx < n_ + m_; ++vtx) {
            auto [i, j] = arc_of(vtx);
            double f = std::max(0.0, flow_[vtx]);
            total += f * cost_[i * m_ + j];
            row[i] += f;
            col[j] += f;
            if (want_plan && f > 0) out.plan.push_back({std::uint32_t(i), std::uint32_t(j), f});
        }
        for (std::size_t i = 0; i < n_; ++i) resid = std::max(resid, std::fabs(row[i] - a0_[i]));
        for (std::size_t j = 0; j < m_; ++j) resid = std::max(resid, std::fabs(col[j] - b0_[j]));
        out.cost = total;
        out.marginal_residual = resid;
        double worst = 0;
        for (std::size_t e = 0; e < nm; ++e)
            worst = std::min(worst, cost_[e] - u_[e / m_] - v_[e % m_]);
        out.dual_residual = -worst;
        return out;
    }

private:
    std::size_t n_, m_;
    const std::vector<double>& cost_;
    std::vector<double> a_, b_, a0_, b0_;
    // tree encoded per non-root vertex: parent and the flow on the parent arc
    std::vector<int> parent_, depth_;
    std::vector<double> flow_, u_, v_;

    std::size_t node(std::size_t i) const { return i; }            // sources 0..n-1
    std::size_t node_sink(std::size_t j) const { return n_ + j; }  // sinks n..n+m-1

    std::pair<std::size_t, std::size_t> arc_of(std::size_t vtx) const {
        std::size_t p = std::size_t(parent_[vtx]);
        return vtx < n_ ? std::pair<std::size_t, std::size_t>{vtx, p - n_}
                        : std::pair<std::size_t, std::size_t>{p, vtx - n_};
    }

    double max_abs_cost() const {
        double m = 0;
        for (double c : cost_) m = std::max(m, std::fabs(c));
        return m;
    }

    void balance_and_perturb() {
        a0_ = a_;
        b0_ = b_;
        double sa = 0, sb = 0;
        for (double x : a_) sa += x;
        for (double x : b_) sb += x;
        for (double& x : b_) x *= sa / sb;  // exact balance
        // deterministic jitter kills degenerate pivots
        double scale = 1e-11 * sa / double(n_ + m_);
        double extra = 0;
        for (std::size_t i = 0; i < n_; ++i) {
            double d = scale * (0.5 + double(mix64(2 * i + 1) >> 11) * 0x1.0p-53);
            a_[i] += d;
            extra += d;
        }
        double used = 0;
        for (std::size_t j = 0; j + 1 < m_; ++j) {
            double d = extra * (j + 1.0) / (m_ * (m_ + 1.0) / 2.0);
            b_[j] += d;
            used += d;
        }
        b_[m_ - 1] += extra - used;
    }

    void northwest_tree() {
        parent_.assign(n_ + m_, -1);
        flow_.assign(n_ + m_, 0.0);
        std::vector<double> a = a_, b = b_;
        std::size_t i = 0, j = 0;
        // staircase path: each step closes either a row or a column
        std::vector<std::vector<int>> adj(n_ + m_);
        std::vector<double> f(n_ + m_ + n_ * 0);
        struct Arc {
            std::size_t i, j;
            double f;
        };
        std::vector<Arc> arcs;
        while (i < n_ && j < m_) {
            double t = std::min(a[i], b[j]);
            arcs.push_back({i, j, t});
            a[i] -= t;
            b[j] -= t;
            if (arcs.size() == n_ + m_ - 1) break;
            if (a[i] <= b[j]) ++i;
            else ++j;
        }
        for (const auto& arc : arcs) {
            adj[node(arc.i)].push_back(int(node_sink(arc.j)));
            adj[node_sink(arc.j)].push_back(int(node(arc.i)));
        }
        // orient the tree from root 0 by DFS; record flows per child vertex
        std::vector<int> stack = {0};
        std::vector<char> seen(n_ + m_, 0);
        seen[0] = 1;
        parent_[0] = 0;
        while (!stack.empty()) {
            int vtx = stack.back();
            stack.pop_back();
            for (int w : adj[vtx])
                if (!seen[w]) {
                    seen[w] = 1;
                    parent_[w] = vtx;
                    stack.push_back(w);
                }
        }
        for (const auto& arc : arcs) {
            std::size_t s = node(arc.i), t = node_sink(arc.j);
            std::size_t child = (parent_[t] == int(s)) ? t : s;
            flow_[child] = arc.f;
        }
    }

    /// Recompute depths and dual potentials from the tree (full DFS pass).
    void refresh_tree() {
        depth_.assign(n_ + m_, 0);
        u_.assign(n_, 0.0);
        v_.assign(m_, 0.0);
        std::vector<std::vector<int>> children(n_ + m_);
        for (std::size_t vtx = 1; vtx < n_ + m_; ++vtx) children[parent_[vtx]].push_back(int(vtx));
        std::vector<int> stack = {0};
        std::vector<char> done(n_ + m_, 0);
        done[0] = 1;
        while (!stack.empty()) {
            int vtx = stack.back();
            stack.pop_back();
            for (int w : children[vtx]) {
                depth_[w] = depth_[vtx] + 1;
                auto [i, j] = arc_of(std::size_t(w));
                if (std::size_t(w) < n_) u_[i] = cost_[i * m_ + j] - v_[j];
                else v_[j] = cost_[i * m_ + j] - u_[i];
                stack.push_back(w);
            }
        }
    }

    void pivot(std::size_t ei, std::size_t ej) {
        std::size_t s = node(ei), t = node_sink(ej);
        // walk both endpoints to the junction; arcs "toward s" carry +flow when
        // we push along s<-...<-junction->...->t plus the entering arc t->s
        std::vector<std::size_t> up_s, up_t;
        std::size_t x = s, y = t;
        while (x != y) {
            if (depth_[x] >= depth_[y]) {
                up_s.push_back(x);
                x = std::size_t(parent_[x]);
            } else {
                up_t.push_back(y);
                y = std::size_t(parent_[y]);
            }
        }
        // direction of circulation: entering arc sends mass s -> t, so the
        // path from t up to the junction and down to s returns it. An arc
        // (child -> parent) on the s-side gains flow when child is a sink,
        // loses when child is a source; mirrored on the t-side.
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave = 0;
        bool leave_on_s = false;
        auto consider = [&](std::size_t child, bool gains, bool on_s) {
            if (!gains && flow_[child] < theta) {
                theta = flow_[child];
                leave = child;
                leave_on_s = on_s;
            }
        };
        for (std::size_t child : up_s) consider(child, child >= n_, true);
        for (std::size_t child : up_t) consider(child, child < n_, false);
        if (!std::isfinite(theta)) throw std::runtime_error("transport simplex: unbounded cycle");

        for (std::size_t child : up_s) flow_[child] += (child >= n_) ? theta : -theta;
        for (std::size_t child : up_t) flow_[child] += (child < n_) ? theta : -theta;

        // re-hang: the entering arc replaces the leaving arc; reverse parent
        // pointers from the entering endpoint up to the leaving arc
        std::size_t from = leave_on_s ? s : t;
        std::size_t other = leave_on_s ? t : s;
        std::size_t prev = other;
        double carry = theta;
        std::size_t cur = from;
        while (true) {
            std::size_t next = std::size_t(parent_[cur]);
            double old_flow = flow_[cur];
            parent_[cur] = int(prev);
            std::swap(carry, flow_[cur]);
            if (cur == leave) break;
            prev = cur;
            cur = next;
            carry = old_flow;
        }
    }

    /// Flows for the unperturbed marginals on the final tree (leaf stripping).
    void restore_exact_flows() {
        std::vector<double> excess(n_ + m_);
        for (std::size_t i = 0; i < n_; ++i) excess[i] = a0_[i];
        {
            double sa = 0, sb = 0;
            for (std::size_t i = 0; i < n_; ++i) sa += a0_[i];
            for (std::size_t j = 0; j < m_; ++j) sb += b0_[j];
            for (std::size_t j = 0; j < m_; ++j) excess[n_ + j] = -b0_[j] * sa / sb;
        }
        std::vector<int> order;
        std::vector<std::vector<int>> children(n_ + m_);
        for (std::size_t vtx = 1; vtx < n_ + m_; ++vtx) children[parent_[vtx]].push_back(int(vtx));
        std::vector<int> stack = {0};
        while (!stack.empty()) {
            int vtx = stack.back();
            stack.pop_back();
            order.push_back(vtx);
            for (int w : children[vtx]) stack.push_back(w);
        }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            std::size_t vtx = std::size_t(*it);
            if (vtx == 0) continue;
            // arc child->parent carries source mass toward sinks
            double f = (vtx < n_) ? excess[vtx] : -excess[vtx];
            flow_[vtx] = f;
            excess[parent_[vtx]] += excess[vtx];
        }
    }
};

// ---------------------------------------------------------------------------
// shortest augmenting path assignment (dense, with potentials)
// ---------------------------------------------------------------------------

inline double assignment_cost(const std::vector<double>& cost, std::size_t n,
                              std::vector<int>* match_out) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> pot_u(n + 1, 0.0), pot_v(n + 1, 0.0), minv(n + 1);
    std::vector<int> way(n + 1, 0), matched(n + 1, 0);  // matched[j] = row for column j
    // 1-indexed textbook formulation; column 0 is the virtual start
    for (std::size_t i = 1; i <= n; ++i) {
        matched[0] = int(i);
        std::size_t j0 = 0;
        std::vector<char> used(n + 1, 0);
        std::fill(minv.begin(), minv.end(), inf);
        do {
            used[j0] = 1;
            std::size_t i0 = std::size_t(matched[j0]), j1 = 0;
            double delta = inf;
            for (std::size_t j = 1; j <= n; ++j)
                if (!used[j]) {
                    double cur = cost[(i0 - 1) * n + (j - 1)] - pot_u[i0] - pot_v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = int(j0);
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    pot_u[std::size_t(matched[j])] += delta;
                    pot_v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (matched[j0] != 0);
        do {
            std::size_t j1 = std::size_t(way[j0]);
            matched[j0] = matched[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0;
    if (match_out) match_out->assign(n, -1);
    for (std::size_t j = 1; j <= n; ++j) {
        if (matched[j] > 0) {
            total += cost[std::size_t(matched[j] - 1) * n + (j - 1)];
            if (match_out) (*match_out)[std::size_t(matched[j] - 1)] = int(j - 1);
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// exact W2 on the circle: shifted quantile coupling, unimodal in the shift
// ---------------------------------------------------------------------------

struct CircleSide {
    std::vector<double> pos;  // sorted in [0, c)
    std::vector<double> cum;  // cumulative weights, cum.back() == 1
};

inline CircleSide circle_side(const DiscreteMeasure& mu) {
    std::vector<std::size_t> idx(mu.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return mu.support[a].intrinsic[0] < mu.support[b].intrinsic[0];
    });
    CircleSide s;
    double acc = 0;
    for (std::size_t k : idx) {
        double w = mu.weights[k];
        if (w <= 0) continue;
        s.pos.push_back(mu.support[k].intrinsic[0]);
        acc += w;
        s.cum.push_back(acc);
    }
    if (!s.cum.empty()) s.cum.back() = 1.0;
    return s;
}

/// cost(t) = int_0^1 (F^{-1}(u) - G^{-1}(u - t) - lift)^2 du with the
/// periodic lift of G; exact piecewise evaluation by merging breakpoints.
inline double circle_shift_cost(const CircleSide& F, const CircleSide& G, double t, double c) {
    double u = 0, total = 0;
    std::size_t i = 0;  // F segment: F.cum[i-1] <= u < F.cum[i]
    // locate G segment containing v = u - t (with winding k)
    double v0 = -t;
    double k = std::floor(v0);
    double frac = v0 - k;
    std::size_t j = std::size_t(std::lower_bound(G.cum.begin(), G.cum.end(), frac + 1e-18) -
                                G.cum.begin());
    if (j >= G.cum.size()) {
        j = 0;
        k += 1.0;
    }
    while (u < 1.0 - 1e-15) {
        double fu_end = F.cum[i];
        double gu_end = (j < G.cum.size() ? G.cum[j] : 1.0) + k + t;  // in u coordinates
        double seg_end = std::min(fu_end, std::min(gu_end, 1.0));
        double len = seg_end - u;
        if (len > 0) {
            double diff = F.pos[i] - (G.pos[j] + k * c);
            total += len * diff * diff;
            u = seg_end;
        }
        if (std::fabs(seg_end - fu_end) < 1e-15 && fu_end <= gu_end) ++i;
        if (seg_end >= gu_end - 1e-15) {
            if (++j >= G.cum.size()) {
                j = 0;
                k += 1.0;
            }
        }
        if (i >= F.pos.size()) break;
    }
    return total;
}

inline double w2_circle_exact(const DiscreteMeasure& a, const DiscreteMeasure& b, double c) {
    CircleSide F = circle_side(a), G = circle_side(b);
    if (F.pos.empty() || G.pos.empty()) throw std::invalid_argument("w2: empty measure");
    auto cost = [&](double t) { return circle_shift_cost(F, G, t, c); };
    // The shift objective is convex on the real line (the winding is coupled
    // to the mass shift, so it is not 1-periodic). Bracket over [-2, 2] and
    // refine by ternary search.
    const int coarse = 512;
    const double lo0 = -2.0, hi0 = 2.0;
    double best_t = 0, best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= coarse; ++k) {
        double t = lo0 + (hi0 - lo0) * double(k) / coarse;
        double v = cost(t);
        if (v < best) {
            best = v;
            best_t = t;
        }
    }
    double step = (hi0 - lo0) / coarse;
    double lo = best_t - step, hi = best_t + step;
    for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
        double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (cost(m1) <= cost(m2)) hi = m2;
        else lo = m1;
    }
    return std::min(best, cost(0.5 * (lo + hi)));
}

inline std::vector<double> cost_matrix(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                       CostMode mode) {
    std::vector<double> C(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            C[i * b.size() + j] = transport_cost(a.manifold, a.support[i], b.support[j], mode);
    return C;
}

inline bool uniform_equal_sizes(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    if (a.size() != b.size()) return false;
    double w = 1.0 / double(a.size());
    for (double x : a.weights)
        if (std::fabs(x - w) > 1e-12 * w) return false;
    for (double x : b.weights)
        if (std::fabs(x - w) > 1e-12 * w) return false;
    return true;
}

}  // namespace detail

enum class ExactMethod { Auto, Simplex, Assignment, Circle };

struct ExactOptions {
    CostMode cost = CostMode::GeodesicSquared;
    ExactMethod method = ExactMethod::Auto;
    bool want_plan = false;
    std::size_t budget = 4'000'000;  // max |a| * |b| for the dense matrix
};

/// Optimal transport cost between discrete measures. Squared geodesic cost
/// gives W2^2. Dispatches between the dense transportation simplex, the
/// shortest-augmenting-path assignment solver (uniform equal sizes) and the
/// shifted-quantile method on the circle.
inline TransportResult w2_exact(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                ExactOptions opts = {}) {
    require_same_manifold(a.manifold, b.manifold);
    a.validate();
    b.validate();

    ExactMethod method = opts.method;
    bool circle_ok = a.manifold.kind() == ManifoldKind::Circle &&
                     opts.cost == CostMode::GeodesicSquared;
    if (method == ExactMethod::Auto) {
        if (circle_ok && a.size() * b.size() > 65536 && !opts.want_plan)
            method = ExactMethod::Circle;
        else if (detail::uniform_equal_sizes(a, b) && a.size() > 96)
            method = ExactMethod::Assignment;
        else
            method = ExactMethod::Simplex;
    }
    if (method == ExactMethod::Circle) {
        if (!circle_ok)
            throw std::invalid_argument("w2_exact: circle method needs a circle manifold and squared geodesic cost");
        TransportResult r;
        r.solver = "exact:circle";
        r.cost = detail::w2_circle_exact(a, b, a.manifold.size());
        return r;
    }
    if (a.size() * b.size() > opts.budget)
        throw std::invalid_argument(
            "w2_exact: cost matrix exceeds the dense budget, use w2_entropic");
    auto C = detail::cost_matrix(a, b, opts.cost);
    if (method == ExactMethod::Assignment) {
        if (!detail::uniform_equal_sizes(a, b))
            throw std::invalid_argument("w2_exact: assignment method needs uniform equal sizes");
        std::vector<int> match;
        double total = detail::assignment_cost(C, a.size(), opts.want_plan ? &match : nullptr);
        TransportResult r;
        r.solver = "exact:assignment";
        r.cost = total / double(a.size());
        if (opts.want_plan)
            for (std::size_t i = 0; i < match.size(); ++i)
                r.plan.push_back({std::uint32_t(i), std::uint32_t(match[i]), 1.0 / a.size()});
        return r;
    }
    detail::TransportSimplex simplex(a.weights, b.weights, C);
    return simplex.solve(opts.want_plan);
}

struct EntropicOptions {
    CostMode cost = CostMode::GeodesicSquared;
    double eps = 0.0;  // 0: defaults to 0.01 * diam^2
    int max_iter = 5000;
    double tol = 1e-6;  // L1 marginal violation
    bool debias = true;
};

namespace detail {

struct SinkhornOut {
    double value = 0;        // dual objective <f,a> + <g,b>
    double sharp_value = 0;  // transport cost <pi, C> of the entropic plan
    double residual = 0;
    int iterations = 0;
    bool converged = false;
};

/// Sinkhorn in scaling form with epsilon annealing: start at a quarter of the
/// cost range and halve down to the target, warm-starting the potentials.
/// Potentials f = eps ln u, g = eps ln v give the dual value <f,a> + <g,b>.
inline SinkhornOut sinkhorn_dual(const std::vector<double>& C, const std::vector<double>& a,
                                 const std::vector<double>& b, double eps, int max_iter,
                                 double tol) {
    const std::size_t n = a.size(), m = b.size();
    double cmax = 0;
    for (double c : C) cmax = std::max(cmax, c);
    std::vector<double> f(n, 0.0), g(m, 0.0);  // dual potentials carried across stages
    std::vector<double> K(n * m), u(n, 1.0), v(m, 1.0), Ktu(m);
    SinkhornOut out;

    std::vector<double> stages;
    for (double e = std::max(eps, 0.25 * cmax); e > eps * 1.5; e *= 0.5) stages.push_back(e);
    stages.push_back(eps);

    for (std::size_t stage = 0; stage < stages.size(); ++stage) {
        double e = stages[stage];
        bool last = stage + 1 == stages.size();
        for (std::size_t idx = 0; idx < n * m; ++idx)
            K[idx] = std::exp((-C[idx] + f[idx / m] + g[idx % m]) / e);
        std::fill(u.begin(), u.end(), 1.0);
        std::fill(v.begin(), v.end(), 1.0);
        double stage_tol = last ? tol : std::max(tol, 1e-4);
        int stage_cap = last ? max_iter : std::min(max_iter, 500);
        for (int it = 0; it < stage_cap; ++it) {
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0;
                const double* row = &K[i * m];
                for (std::size_t j = 0; j < m; ++j) s += row[j] * v[j] * b[j];
                u[i] = 1.0 / std::max(s, 1e-280);
            }
            for (std::size_t j = 0; j < m; ++j) Ktu[j] = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = &K[i * m];
                double ua = u[i] * a[i];
                for (std::size_t j = 0; j < m; ++j) Ktu[j] += row[j] * ua;
            }
            double resid = 0;
            for (std::size_t j = 0; j < m; ++j) {
                resid += std::fabs(v[j] * Ktu[j] * b[j] - b[j]);
                v[j] = 1.0 / std::max(Ktu[j], 1e-280);
            }
            ++out.iterations;
            out.residual = resid;
            if (resid < stage_tol) {
                out.converged = last;
                break;
            }
        }
        for (std::size_t i = 0; i < n; ++i) f[i] += e * std::log(std::max(u[i], 1e-280));
        for (std::size_t j = 0; j < m; ++j) g[j] += e * std::log(std::max(v[j], 1e-280));
    }
    double val = 0;
    for (std::size_t i = 0; i < n; ++i) val += a[i] * f[i];
    for (std::size_t j = 0; j < m; ++j) val += b[j] * g[j];
    out.value = val;
    double sharp = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double pi = a[i] * b[j] * std::exp((f[i] + g[j] - C[i * m + j]) / eps);
            sharp += pi * C[i * m + j];
        }
    out.sharp_value = sharp;
    return out;
}

}  // namespace detail

/// Debiased entropic cost S_eps(a,b) = OT_eps(a,b) - (OT_eps(a,a)+OT_eps(b,b))/2.
/// OT_eps is taken as the transport cost <pi, C> of the converged entropic
/// plan (the sharp value); calibration against the exact solver shows this
/// debiasing tracks W2^2 within a few percent at eps = 0.01 diam^2, where the
/// dual-objective variant is ~10% low.
inline TransportResult w2_entropic(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                   EntropicOptions opts = {}) {
    require_same_manifold(a.manifold, b.manifold);
    a.validate();
    b.validate();
    double eps = opts.eps;
    if (eps <= 0) {
        double diam = a.manifold.diameter();
        eps = 0.01 * diam * diam;
    }
    auto Cab = detail::cost_matrix(a, b, opts.cost);
    auto main = detail::sinkhorn_dual(Cab, a.weights, b.weights, eps, opts.max_iter, opts.tol);
    TransportResult r;
    r.solver = "entropic";
    r.iterations = main.iterations;
    r.converged = main.converged;
    r.marginal_residual = main.residual;
    if (!opts.debias) {
        r.cost = main.sharp_value;
        return r;
    }
    auto Caa = detail::cost_matrix(a, a, opts.cost);
    auto Cbb = detail::cost_matrix(b, b, opts.cost);
    auto da = detail::sinkhorn_dual(Caa, a.weights, a.weights, eps, opts.max_iter, opts.tol);
    auto db = detail::sinkhorn_dual(Cbb, b.weights, b.weights, eps, opts.max_iter, opts.tol);
    r.cost = main.sharp_value - 0.5 * (da.sharp_value + db.sharp_value);
    r.converged = main.converged && da.converged && db.converged;
    r.marginal_residual = std::max(main.residual, std::max(da.residual, db.residual));
    r.iterations = main.iterations + da.iterations + db.iterations;
    return r;
}

// ---------------------------------------------------------------------------
// sampled two-sample W2 risk protocol
// ---------------------------------------------------------------------------

enum class RiskSolver { Exact, Entropic };
enum class RiskCompression { Multinomial, Quantile };
enum class RiskDraw { Multinomial, Systematic };

struct W2Protocol {
    std::size_t n_ref = 1000;
    std::size_t n_est = 1000;
    RiskSolver solver = RiskSolver::Exact;
    double eps = 0.0;  // entropic regularization; 0 = default
    int repeats = 1;
    RiskCompression compression = RiskCompression::Multinomial;
    bool subtract_two_sample_floor = false;
    std::size_t floor_pairs = 8;
    // paired design: subtract W2^2(mu-sample, ref) computed against the SAME
    // reference sample, so the two-sample sampling noise largely cancels
    bool paired_reference = false;
    std::size_t base_draws = 1;  // paired control samples averaged per repeat
    RiskDraw est_draw = RiskDraw::Multinomial;
    std::uint64_t seed = 0;

    std::string to_string() const {
        std::string s = "n_ref=" + std::to_string(n_ref) + ",n_est=" + std::to_string(n_est);
        s += ",solver=";
        s += (solver == RiskSolver::Exact ? "exact" : "entropic");
        if (solver == RiskSolver::Entropic) s += ",eps=" + std::to_string(eps);
        s += ",repeats=" + std::to_string(repeats);
        s += ",compression=";
        s += (compression == RiskCompression::Multinomial ? "multinomial" : "quantile");
        s += ",floor_subtract=";
        s += (subtract_two_sample_floor ? "1" : "0");
        s += ",paired=";
        s += (paired_reference ? "1" : "0");
        if (paired_reference) s += ",base_draws=" + std::to_string(base_draws);
        s += ",est_draw=";
        s += (est_draw == RiskDraw::Multinomial ? "multinomial" : "systematic");
        return s;
    }
};

struct RiskResult {
    double mean = 0;          // mean W2^2 over repeats (floor-subtracted if enabled)
    double raw_mean = 0;      // before floor subtraction
    double floor = 0;         // estimated two-sample floor
    std::vector<double> values;
    std::string protocol;
};

namespace detail {

/// n-point quantile compression of a measure on the circle (deterministic).
inline DiscreteMeasure quantile_compress_circle(const DiscreteMeasure& mu, std::size_t n) {
    CircleSide side = circle_side(mu);
    DiscreteMeasure out;
    out.manifold = mu.manifold;
    out.weights.assign(n, 1.0 / double(n));
    out.support.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        double u = (k + 0.5) / double(n);
        std::size_t i = std::size_t(std::lower_bound(side.cum.begin(), side.cum.end(), u) -
                                    side.cum.begin());
        i = std::min(i, side.pos.size() - 1);
        out.support.push_back(mu.manifold.point({side.pos[i]}));
    }
    return out;
}

/// n-point quantile discretization of a density on the circle via its CDF.
inline DiscreteMeasure quantile_points_circle(const Density& p, std::size_t n) {
    const Manifold& M = p.manifold;
    const int res = 1 << 16;
    std::vector<double> cdf(res + 1, 0.0);
    double c = M.size();
    for (int i = 0; i < res; ++i) {
        double x = c * (i + 0.5) / res;
        cdf[i + 1] = cdf[i] + p.eval(M.point({x})) * (c / res);
    }
    for (auto& v : cdf) v /= cdf[res];
    DiscreteMeasure out;
    out.manifold = M;
    out.weights.assign(n, 1.0 / double(n));
    for (std::size_t k = 0; k < n; ++k) {
        double u = (k + 0.5) / double(n);
        auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        std::size_t i = std::min<std::size_t>(it - cdf.begin(), res) - 0;
        if (i == 0) i = 1;
        // linear interpolation within the cell
        double t = (u - cdf[i - 1]) / std::max(cdf[i] - cdf[i - 1], 1e-300);
        double x = c * (double(i - 1) + t) / res;
        out.support.push_back(M.point({x}));
    }
    return out;
}

inline double one_w2(const DiscreteMeasure& lhs, const DiscreteMeasure& rhs, RiskSolver solver,
                     double eps) {
    if (solver == RiskSolver::Exact) {
        ExactOptions o;
        return w2_exact(lhs, rhs, o).cost;
    }
    EntropicOptions o;
    o.eps = eps;
    return w2_entropic(lhs, rhs, o).cost;
}

}  // namespace detail

/// Mean two-sample W2^2 between samples of the estimate and reference samples
/// of mu, under a fully pinned protocol. The sampled value is a biased
/// estimate of W2^2(estimate, mu); the two-sample floor is protocol-constant
/// and can optionally be estimated (mu vs mu) and subtracted.
inline RiskResult risk_w2(const DiscreteMeasure& estimate, const Density& mu,
                          const W2Protocol& proto) {
    require_same_manifold(estimate.manifold, mu.manifold);
    const Manifold& M = mu.manifold;
    RiskResult out;
    out.protocol = proto.to_string();

    const bool quantile = proto.compression == RiskCompression::Quantile;
    if (quantile && M.kind() != ManifoldKind::Circle)
        throw std::invalid_argument("risk_w2: quantile compression is circle-only");

    int reps = quantile ? 1 : proto.repeats;
    for (int r = 0; r < reps; ++r) {
        DiscreteMeasure est_side, ref_side;
        if (quantile) {
            est_side = detail::quantile_compress_circle(estimate, proto.n_est);
            ref_side = detail::quantile_points_circle(mu, proto.n_ref);
        } else {
            auto est_pts = proto.est_draw == RiskDraw::Systematic
                               ? systematic_sample(estimate, proto.n_est,
                                                   split_seed(proto.seed, "risk-est", r))
                               : multinomial_sample(estimate, proto.n_est,
                                                    split_seed(proto.seed, "risk-est", r));
            est_side = DiscreteMeasure::from_points(M, std::move(est_pts));
            ref_side = DiscreteMeasure::from_points(
                M, sample_mu(mu, proto.n_ref, split_seed(proto.seed, "risk-ref", r)));
        }
        double value = detail::one_w2(est_side, ref_side, proto.solver, proto.eps);
        if (proto.paired_reference && !quantile) {
            double ctrl = 0;
            std::size_t nb = std::max<std::size_t>(1, proto.base_draws);
            for (std::size_t b = 0; b < nb; ++b) {
                auto base = DiscreteMeasure::from_points(
                    M, sample_mu(mu, proto.n_est, split_seed(proto.seed, "risk-base", r, b)));
                ctrl += detail::one_w2(base, ref_side, proto.solver, proto.eps);
            }
            value -= ctrl / double(nb);
        }
        out.values.push_back(value);
    }
    double acc = 0;
    for (double v : out.values) acc += v;
    out.raw_mean = acc / double(out.values.size());
    out.mean = out.raw_mean;

    if (proto.subtract_two_sample_floor && !quantile) {
        double fl = 0;
        for (std::size_t k = 0; k < proto.floor_pairs; ++k) {
            auto s1 = DiscreteMeasure::from_points(
                M, sample_mu(mu, proto.n_est, split_seed(proto.seed, "floor-a", k)));
            auto s2 = DiscreteMeasure::from_points(
                M, sample_mu(mu, proto.n_ref, split_seed(proto.seed, "floor-b", k)));
            fl += detail::one_w2(s1, s2, proto.solver, proto.eps);
        }
        out.floor = fl / double(proto.floor_pairs);
        out.mean = out.raw_mean - out.floor;
    }
    return out;
}

}  // namespace ergo
