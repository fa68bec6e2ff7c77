#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ergo/rng.hpp"

namespace ergo {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr int kMaxIntrinsic = 6;
inline constexpr int kMaxAmbient = 12;

using IntrinsicVec = std::array<double, kMaxIntrinsic>;
using AmbientVec = std::array<double, kMaxAmbient>;

/// Wrap into [0, s).
inline double wrap_coord(double x, double s) {
    double y = std::fmod(x, s);
    return y < 0 ? y + s : y;
}

/// Signed representative of x - y on the circle of circumference s, in [-s/2, s/2).
inline double wrap_diff(double x, double y, double s) {
    double d = std::fmod(x - y, s);
    if (d < -0.5 * s) d += s;
    if (d >= 0.5 * s) d -= s;
    return d;
}

enum class ManifoldKind { Circle, Sphere, FlatTorus };

struct ManifoldPoint {
    IntrinsicVec intrinsic{};
    AmbientVec ambient{};
};

/// One of the three model manifolds: a circle of circumference c embedded in
/// R^2, a round 2-sphere of radius r in R^3, or a flat d-torus [0,s)^d whose
/// ambient embedding sends each coordinate to a circle of circumference s in
/// R^2 (so m = 2d). All geodesics, exponential maps and volumes are closed
/// form; the torus metric is the coordinate-wise wrapped Euclidean one.
class Manifold {
public:
    static Manifold circle(double c) {
        if (c <= 0) throw std::invalid_argument("circle: circumference must be positive");
        return Manifold(ManifoldKind::Circle, 1, c);
    }
    static Manifold sphere(double r) {
        if (r <= 0) throw std::invalid_argument("sphere: radius must be positive");
        return Manifold(ManifoldKind::Sphere, 2, r);
    }
    static Manifold flat_torus(int d, double s) {
        if (d < 1 || d > kMaxIntrinsic) throw std::invalid_argument("torus: need 1 <= d <= 6");
        if (s <= 0) throw std::invalid_argument("torus: side must be positive");
        return Manifold(ManifoldKind::FlatTorus, d, s);
    }

    /// Parses "circle:c=1", "sphere:r=2", "torus:d=5,s=1".
    static Manifold parse(std::string_view spec);

    ManifoldKind kind() const { return kind_; }
    int intrinsic_dim() const { return d_; }
    int ambient_dim() const { return kind_ == ManifoldKind::Sphere ? 3 : 2 * d_; }
    double size() const { return size_; }  // c, r, or s depending on kind

    double total_volume() const {
        switch (kind_) {
            case ManifoldKind::Circle: return size_;
            case ManifoldKind::Sphere: return 4.0 * kPi * size_ * size_;
            case ManifoldKind::FlatTorus: return std::pow(size_, d_);
        }
        return 0;
    }
    double injectivity_radius() const {
        switch (kind_) {
            case ManifoldKind::Circle: return 0.5 * size_;
            case ManifoldKind::Sphere: return kPi * size_;
            case ManifoldKind::FlatTorus: return 0.5 * size_;
        }
        return 0;
    }
    double diameter() const {
        switch (kind_) {
            case ManifoldKind::Circle: return 0.5 * size_;
            case ManifoldKind::Sphere: return kPi * size_;
            case ManifoldKind::FlatTorus: return 0.5 * size_ * std::sqrt(double(d_));
        }
        return 0;
    }

    /// Radius of the circle factor (circle/torus embeddings).
    double factor_radius() const { return size_ / (2.0 * kPi); }

    ManifoldPoint embed(const IntrinsicVec& x) const {
        ManifoldPoint p;
        p.intrinsic = x;
        switch (kind_) {
            case ManifoldKind::Circle:
            case ManifoldKind::FlatTorus: {
                double R = factor_radius();
                for (int i = 0; i < d_; ++i) {
                    double a = p.intrinsic[i] / R;
                    p.ambient[2 * i] = R * std::cos(a);
                    p.ambient[2 * i + 1] = R * std::sin(a);
                }
                break;
            }
            case ManifoldKind::Sphere: {
                double th = x[0], ph = x[1], r = size_;
                p.ambient[0] = r * std::sin(th) * std::cos(ph);
                p.ambient[1] = r * std::sin(th) * std::sin(ph);
                p.ambient[2] = r * std::cos(th);
                break;
            }
        }
        return p;
    }

    ManifoldPoint point(std::initializer_list<double> coords) const {
        IntrinsicVec x{};
        int i = 0;
        for (double c : coords) {
            if (i >= d_) throw std::invalid_argument("point: too many coordinates");
            x[i++] = c;
        }
        if (i != d_) throw std::invalid_argument("point: wrong coordinate count");
        return embed(normalize_intrinsic(x));
    }

    ManifoldPoint point_from_ambient(const AmbientVec& a) const {
        IntrinsicVec x{};
        switch (kind_) {
            case ManifoldKind::Circle:
            case ManifoldKind::FlatTorus: {
                double R = factor_radius();
                for (int i = 0; i < d_; ++i)
                    x[i] = wrap_coord(R * std::atan2(a[2 * i + 1], a[2 * i]), size_);
                break;
            }
            case ManifoldKind::Sphere: {
                double r = size_;
                double z = std::clamp(a[2] / r, -1.0, 1.0);
                x[0] = std::acos(z);
                x[1] = wrap_coord(std::atan2(a[1], a[0]), 2.0 * kPi);
                break;
            }
        }
        return embed(x);
    }

    IntrinsicVec normalize_intrinsic(IntrinsicVec x) const {
        switch (kind_) {
            case ManifoldKind::Circle:
            case ManifoldKind::FlatTorus:
                for (int i = 0; i < d_; ++i) x[i] = wrap_coord(x[i], size_);
                break;
            case ManifoldKind::Sphere:
                // canonical chart: theta in [0,pi], phi in [0,2pi)
                x[1] = wrap_coord(x[1], 2.0 * kPi);
                break;
        }
        return x;
    }

    std::string to_string() const;

    bool operator==(const Manifold& o) const {
        return kind_ == o.kind_ && d_ == o.d_ && size_ == o.size_;
    }

private:
    Manifold(ManifoldKind k, int d, double s) : kind_(k), d_(d), size_(s) {}
    ManifoldKind kind_;
    int d_;
    double size_;
};

inline void require_same_manifold(const Manifold& a, const Manifold& b) {
    if (!(a == b)) throw std::invalid_argument("manifold mismatch");
}

inline double geodesic_distance(const Manifold& M, const ManifoldPoint& x,
                                const ManifoldPoint& y) {
    switch (M.kind()) {
        case ManifoldKind::Circle: {
            double d = std::fabs(wrap_diff(x.intrinsic[0], y.intrinsic[0], M.size()));
            return d;
        }
        case ManifoldKind::FlatTorus: {
            double s2 = 0;
            for (int i = 0; i < M.intrinsic_dim(); ++i) {
                double d = wrap_diff(x.intrinsic[i], y.intrinsic[i], M.size());
                s2 += d * d;
            }
            return std::sqrt(s2);
        }
        case ManifoldKind::Sphere: {
            double r = M.size();
            double dot = 0;
            for (int i = 0; i < 3; ++i) dot += x.ambient[i] * y.ambient[i];
            return r * std::acos(std::clamp(dot / (r * r), -1.0, 1.0));
        }
    }
    return 0;
}

inline double ambient_distance(const Manifold& M, const ManifoldPoint& x,
                               const ManifoldPoint& y) {
    double s2 = 0;
    for (int i = 0; i < M.ambient_dim(); ++i) {
        double d = x.ambient[i] - y.ambient[i];
        s2 += d * d;
    }
    return std::sqrt(s2);
}

/// Orthogonal projector onto T_xM, as a dense m x m matrix.
struct TangentProjector {
    int m = 0;
    std::array<double, kMaxAmbient * kMaxAmbient> a{};

    double& at(int i, int j) { return a[i * kMaxAmbient + j]; }
    double at(int i, int j) const { return a[i * kMaxAmbient + j]; }

    AmbientVec apply(const AmbientVec& v) const {
        AmbientVec out{};
        for (int i = 0; i < m; ++i) {
            double s = 0;
            for (int j = 0; j < m; ++j) s += at(i, j) * v[j];
            out[i] = s;
        }
        return out;
    }
    double trace() const {
        double t = 0;
        for (int i = 0; i < m; ++i) t += at(i, i);
        return t;
    }
};

inline TangentProjector tangent_projection(const Manifold& M, const ManifoldPoint& x) {
    TangentProjector P;
    P.m = M.ambient_dim();
    switch (M.kind()) {
        case ManifoldKind::Circle:
        case ManifoldKind::FlatTorus: {
            double R = M.factor_radius();
            for (int i = 0; i < M.intrinsic_dim(); ++i) {
                double a = x.intrinsic[i] / R;
                double t0 = -std::sin(a), t1 = std::cos(a);
                P.at(2 * i, 2 * i) = t0 * t0;
                P.at(2 * i, 2 * i + 1) = t0 * t1;
                P.at(2 * i + 1, 2 * i) = t0 * t1;
                P.at(2 * i + 1, 2 * i + 1) = t1 * t1;
            }
            break;
        }
        case ManifoldKind::Sphere: {
            double r = M.size();
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    P.at(i, j) = (i == j ? 1.0 : 0.0) - x.ambient[i] * x.ambient[j] / (r * r);
            break;
        }
    }
    return P;
}

/// Unit tangent of the i-th circle factor at x (circle/torus only).
inline void factor_tangent(const Manifold& M, const ManifoldPoint& x, int i,
                           double& t0, double& t1) {
    double a = x.intrinsic[i] / M.factor_radius();
    t0 = -std::sin(a);
    t1 = std::cos(a);
}

inline ManifoldPoint exp_map(const Manifold& M, const ManifoldPoint& x, const AmbientVec& v) {
    // tangency gate: Pv must reproduce v
    TangentProjector P = tangent_projection(M, x);
    AmbientVec pv = P.apply(v);
    double nv = 0, res = 0;
    for (int i = 0; i < M.ambient_dim(); ++i) {
        nv += v[i] * v[i];
        double r = pv[i] - v[i];
        res += r * r;
    }
    nv = std::sqrt(nv);
    if (std::sqrt(res) > 1e-10 * std::max(1.0, nv))
        throw std::invalid_argument("exp_map: v is not tangent at x");

    switch (M.kind()) {
        case ManifoldKind::Circle:
        case ManifoldKind::FlatTorus: {
            IntrinsicVec y = x.intrinsic;
            for (int i = 0; i < M.intrinsic_dim(); ++i) {
                double t0, t1;
                factor_tangent(M, x, i, t0, t1);
                double step = v[2 * i] * t0 + v[2 * i + 1] * t1;
                y[i] = wrap_coord(y[i] + step, M.size());
            }
            return M.embed(y);
        }
        case ManifoldKind::Sphere: {
            if (nv < 1e-300) return x;
            double r = M.size();
            double th = nv / r;
            AmbientVec a{};
            for (int i = 0; i < 3; ++i)
                a[i] = x.ambient[i] * std::cos(th) + (v[i] / nv) * r * std::sin(th);
            return M.point_from_ambient(a);
        }
    }
    return x;
}

/// Inverse of exp_map for y within the injectivity radius of x.
inline AmbientVec log_map(const Manifold& M, const ManifoldPoint& x, const ManifoldPoint& y) {
    AmbientVec v{};
    switch (M.kind()) {
        case ManifoldKind::Circle:
        case ManifoldKind::FlatTorus: {
            for (int i = 0; i < M.intrinsic_dim(); ++i) {
                double step = wrap_diff(y.intrinsic[i], x.intrinsic[i], M.size());
                double t0, t1;
                factor_tangent(M, x, i, t0, t1);
                v[2 * i] = step * t0;
                v[2 * i + 1] = step * t1;
            }
            return v;
        }
        case ManifoldKind::Sphere: {
            double r = M.size();
            double rho = geodesic_distance(M, x, y);
            if (rho < 1e-300) return v;
            double dot = 0;
            for (int i = 0; i < 3; ++i) dot += x.ambient[i] * y.ambient[i];
            AmbientVec w{};
            double nw = 0;
            for (int i = 0; i < 3; ++i) {
                w[i] = y.ambient[i] - (dot / (r * r)) * x.ambient[i];
                nw += w[i] * w[i];
            }
            nw = std::sqrt(nw);
            if (nw < 1e-300) throw std::invalid_argument("log_map: antipodal points");
            for (int i = 0; i < 3; ++i) v[i] = rho * w[i] / nw;
            return v;
        }
    }
    return v;
}

/// i.i.d. uniform draws w.r.t. the volume measure.
inline std::vector<ManifoldPoint> sample_volume(const Manifold& M, std::size_t n,
                                                std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_volume: n must be >= 1");
    Rng rng(seed);
    std::vector<ManifoldPoint> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
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
        out.push_back(M.embed(x));
    }
    return out;
}

/// Quadrature nodes + weights summing to total_volume. Torus/circle use the
/// periodic lattice (trapezoid weights are uniform and exact); the sphere uses
/// a latitude-longitude grid where each weight is the exact area of its cell,
/// so the weights telescope to 4 pi r^2.
struct QuadratureGrid {
    Manifold manifold = Manifold::circle(1.0);
    std::vector<ManifoldPoint> nodes;
    std::vector<double> weights;
    int resolution = 0;  // per-axis lattice resolution (tori), theta bands (sphere)

    std::size_t size() const { return nodes.size(); }

    bool is_lattice() const { return manifold.kind() != ManifoldKind::Sphere; }

    double mesh() const {
        if (is_lattice()) return manifold.size() / resolution;
        return kPi * manifold.size() / resolution;  // band height as a proxy
    }

    /// Covering radius of the node set (half cell diagonal for lattices).
    double covering_radius() const {
        if (is_lattice())
            return 0.5 * mesh() * std::sqrt(double(manifold.intrinsic_dim()));
        return mesh();
    }

    /// Flat lattice index of the cell containing x (lattice grids only).
    std::size_t lattice_cell(const ManifoldPoint& x) const {
        std::size_t idx = 0;
        int res = resolution;
        double s = manifold.size();
        for (int i = 0; i < manifold.intrinsic_dim(); ++i) {
            auto c = static_cast<long>(std::floor(x.intrinsic[i] / s * res + 0.5));
            c = ((c % res) + res) % res;
            idx = idx * res + static_cast<std::size_t>(c);
        }
        return idx;
    }
};

inline QuadratureGrid quadrature_grid(const Manifold& M, int resolution) {
    if (resolution < 2) throw std::invalid_argument("quadrature_grid: resolution must be >= 2");
    QuadratureGrid g;
    g.manifold = M;
    g.resolution = resolution;
    switch (M.kind()) {
        case ManifoldKind::Circle:
        case ManifoldKind::FlatTorus: {
            int d = M.intrinsic_dim();
            std::size_t n = 1;
            for (int i = 0; i < d; ++i) n *= resolution;
            double s = M.size();
            double w = std::pow(s / resolution, d);
            g.nodes.reserve(n);
            g.weights.assign(n, w);
            for (std::size_t id = 0; id < n; ++id) {
                IntrinsicVec x{};
                std::size_t rem = id;
                for (int i = d - 1; i >= 0; --i) {
                    x[i] = s * double(rem % resolution) / resolution;
                    rem /= resolution;
                }
                g.nodes.push_back(M.embed(x));
            }
            break;
        }
        case ManifoldKind::Sphere: {
            int nth = resolution, nph = 2 * resolution;
            double r = M.size();
            for (int j = 0; j < nth; ++j) {
                double th_lo = kPi * j / nth, th_hi = kPi * (j + 1) / nth;
                double th = 0.5 * (th_lo + th_hi);
                // exact band area split evenly over the longitudes
                double cell = (std::cos(th_lo) - std::cos(th_hi)) * r * r * 2.0 * kPi / nph;
                for (int k = 0; k < nph; ++k) {
                    IntrinsicVec x{};
                    x[0] = th;
                    x[1] = 2.0 * kPi * (k + 0.5) / nph;
                    g.nodes.push_back(M.embed(x));
                    g.weights.push_back(cell);
                }
            }
            break;
        }
    }
    return g;
}

inline Manifold Manifold::parse(std::string_view spec) {
    auto fail = [&] { throw std::invalid_argument("bad manifold spec: " + std::string(spec)); };
    auto colon = spec.find(':');
    std::string_view name = spec.substr(0, colon);
    double c = 0, r = 0, s = 0;
    int d = 0;
    if (colon != std::string_view::npos) {
        std::string_view rest = spec.substr(colon + 1);
        while (!rest.empty()) {
            auto comma = rest.find(',');
            std::string_view kv = rest.substr(0, comma);
            rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
            auto eq = kv.find('=');
            if (eq == std::string_view::npos) fail();
            std::string key(kv.substr(0, eq));
            double val = std::stod(std::string(kv.substr(eq + 1)));
            if (key == "c") c = val;
            else if (key == "r") r = val;
            else if (key == "s") s = val;
            else if (key == "d") d = int(val);
            else fail();
        }
    }
    if (name == "circle") return circle(c > 0 ? c : 1.0);
    if (name == "sphere") return sphere(r > 0 ? r : 1.0);
    if (name == "torus") return flat_torus(d > 0 ? d : 1, s > 0 ? s : 1.0);
    fail();
    return circle(1.0);
}

inline std::string Manifold::to_string() const {
    auto num = [](double v) {
        std::string s = std::to_string(v);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    switch (kind_) {
        case ManifoldKind::Circle: return "circle:c=" + num(size_);
        case ManifoldKind::Sphere: return "sphere:r=" + num(size_);
        case ManifoldKind::FlatTorus:
            return "torus:d=" + std::to_string(d_) + ",s=" + num(size_);
    }
    return {};
}

}  // namespace ergo
