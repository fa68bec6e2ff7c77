#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/diffusion.hpp"
#include "ergo/estimator.hpp"
#include "ergo/geometry.hpp"
#include "ergo/measure.hpp"

#include <json.hpp>

namespace ergo {

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Path dump: '#'-prefixed header of key=value lines, then one row of
/// intrinsic coordinates per step.
inline void write_path_csv(const DiffusionPath& path, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot open " + file);
    out << "# schema_version=" << kSchemaVersion << "\n";
    out << "# kind=path\n";
    out << "# manifold=" << path.manifold.to_string() << "\n";
    out << "# density=" << path.density_spec << "\n";
    out << "# generator=" << path.generator_spec << "\n";
    out << "# T=" << detail::fmt_g17(path.T) << "\n";
    out << "# dt=" << detail::fmt_g17(path.dt) << "\n";
    out << "# seed=" << path.seed << "\n";
    const int d = path.manifold.intrinsic_dim();
    for (std::size_t i = 0; i < path.points(); ++i) {
        for (int k = 0; k < d; ++k) {
            if (k) out << ',';
            out << detail::fmt_g17(path.coords[i * d + k]);
        }
        out << '\n';
    }
}

inline DiffusionPath read_path_csv(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file);
    DiffusionPath path;
    std::map<std::string, std::string> header;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto eq = line.find('=');
            if (eq != std::string::npos) {
                std::string key = line.substr(1, eq - 1);
                while (!key.empty() && key.front() == ' ') key.erase(key.begin());
                header[key] = line.substr(eq + 1);
            }
            continue;
        }
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) path.coords.push_back(std::stod(tok));
    }
    if (!header.count("manifold")) throw std::runtime_error(file + ": missing manifold header");
    path.manifold = Manifold::parse(header["manifold"]);
    if (header.count("T")) path.T = std::stod(header["T"]);
    if (header.count("dt")) path.dt = std::stod(header["dt"]);
    if (header.count("seed")) path.seed = std::stoull(header["seed"]);
    if (header.count("density")) path.density_spec = header["density"];
    if (header.count("generator")) path.generator_spec = header["generator"];
    return path;
}

/// Sample dump: same header shape, kind=samples, one point per row.
inline void write_samples_csv(const Manifold& M, const std::vector<ManifoldPoint>& pts,
                              const std::string& file) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot open " + file);
    out << "# schema_version=" << kSchemaVersion << "\n# kind=samples\n";
    out << "# manifold=" << M.to_string() << "\n";
    const int d = M.intrinsic_dim();
    for (const auto& p : pts) {
        for (int k = 0; k < d; ++k) {
            if (k) out << ',';
            out << detail::fmt_g17(p.intrinsic[k]);
        }
        out << '\n';
    }
}

inline DiscreteMeasure read_measure_csv(const std::string& file) {
    auto path = read_path_csv(file);  // same layout
    DiscreteMeasure mu;
    mu.manifold = path.manifold;
    for (std::size_t i = 0; i < path.points(); ++i) mu.support.push_back(path.point(i));
    mu.weights.assign(mu.support.size(), 1.0 / double(mu.support.size()));
    return mu;
}

inline void write_estimate_json(const SmoothedEstimate& est, const std::string& file) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["manifold"] = est.grid->manifold.to_string();
    j["grid_resolution"] = est.grid->resolution;
    j["kernel"] = est.kernel_spec;
    j["h"] = est.h;
    j["T"] = est.T;
    j["distance_mode"] = est.mode == DistanceMode::Geodesic ? "geodesic" : "ambient";
    j["values"] = est.values;
    j["positivity_ok"] = est.positivity_ok;
    j["certified_positive"] = est.certified_positive;
    j["fallback_node"] = est.fallback_node;
    j["mass"] = est.mass();
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot open " + file);
    out << j.dump(2) << '\n';
}

inline SmoothedEstimate read_estimate_json(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file);
    nlohmann::json j;
    in >> j;
    SmoothedEstimate est;
    Manifold M = Manifold::parse(j.at("manifold").get<std::string>());
    est.grid = std::make_shared<const QuadratureGrid>(
        quadrature_grid(M, j.at("grid_resolution").get<int>()));
    est.values = j.at("values").get<std::vector<double>>();
    est.positivity_ok = j.at("positivity_ok").get<bool>();
    est.certified_positive = j.value("certified_positive", false);
    est.fallback_node = j.value("fallback_node", std::size_t(0));
    est.h = j.at("h").get<double>();
    est.T = j.value("T", 0.0);
    est.kernel_spec = j.value("kernel", std::string());
    est.mode = j.value("distance_mode", std::string("ambient")) == "geodesic"
                   ? DistanceMode::Geodesic
                   : DistanceMode::Ambient;
    return est;
}

/// Flat key=value config file; '#' starts a comment.
inline std::map<std::string, std::string> read_config_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
                s.pop_back();
            return s;
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

}  // namespace ergo
