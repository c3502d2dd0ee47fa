#pragma once

// CSV / JSON artifacts. Floating point values are written with 17
// significant digits so they round-trip exactly.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavity/decouple.hpp"
#include "cavity/forward.hpp"
#include "cavity/geometry.hpp"
#include "cavity/locate.hpp"
#include "cavity/reconstruct.hpp"

namespace cavity::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

inline void write_json(const fs::path& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    return json::parse(in);
}

/// Header row plus numeric rows; non-numeric cells are kept as NaN.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw Error("no column " + name);
    }
    std::vector<double> values(const std::string& name) const {
        const std::size_t c = column(name);
        std::vector<double> v;
        v.reserve(rows.size());
        for (const auto& r : rows) v.push_back(r.at(c));
        return v;
    }
};

inline Table read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    Table t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    if (std::getline(in, line)) t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto& cell : split(line)) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                row.push_back(std::numeric_limits<double>::quiet_NaN());
            }
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline json to_json(const Vec2& p) { return json::array({p.x(), p.y()}); }

inline json to_json(std::span<const Vec2> pts) {
    json a = json::array();
    for (const auto& p : pts) a.push_back(to_json(p));
    return a;
}

/// t,x,y,nx,ny,w per node.
inline void write_curve_csv(const fs::path& path, const geometry::ParametricCurve& c) {
    auto out = open_out(path);
    out << "t,x,y,nx,ny,w\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto& x = c.points()[i];
        const auto& n = c.normals()[i];
        out << fmt(c.t()[i]) << ',' << fmt(x.x()) << ',' << fmt(x.y()) << ',' << fmt(n.x()) << ',' << fmt(n.y()) << ','
            << fmt(c.weights()[i]) << '\n';
    }
}

/// curve,node,re,im rows for a pair of vectors on Gamma1 (curve 1) and Gamma2 (curve 2).
inline void write_pair_csv(const fs::path& path, const Eigen::VectorXcd& v1, const Eigen::VectorXcd& v2) {
    auto out = open_out(path);
    out << "curve,node,re,im\n";
    auto rows = [&](int curve, const Eigen::VectorXcd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            out << curve << ',' << i << ',' << fmt(v(i).real()) << ',' << fmt(v(i).imag()) << '\n';
        }
    };
    rows(1, v1);
    rows(2, v2);
}

/// Curve CSVs, one CSV per source and a manifest. Returns the files written
/// relative to dir.
inline std::vector<std::string> write_measurements(const fs::path& dir, const forward::MeasurementSet& m, double k,
                                                   std::uint64_t seed, std::span<const Vec2> sources) {
    std::vector<std::string> files = {"gamma1.csv", "gamma2.csv"};
    write_curve_csv(dir / files[0], m.gamma1);
    write_curve_csv(dir / files[1], m.gamma2);
    json data = json::array();
    for (std::size_t j = 0; j < m.source_count(); ++j) {
        const std::string name = "measurement_" + std::to_string(j) + ".csv";
        write_pair_csv(dir / name, m.u1[j], m.u2[j]);
        data.push_back(name);
        files.push_back(name);
    }
    json manifest = {{"k", k},           {"delta", m.delta},        {"seed", seed},
                     {"gamma1", "gamma1.csv"}, {"gamma2", "gamma2.csv"}, {"sources", to_json(sources)},
                     {"data", data}};
    write_json(dir / "measurements.json", manifest);
    files.push_back("measurements.json");
    return files;
}

inline std::vector<std::string> write_density(const fs::path& dir, std::size_t j, const decouple::DensityPair& dp) {
    const std::string base = "density_" + std::to_string(j);
    write_pair_csv(dir / (base + ".csv"), dp.phi1, dp.phi2);
    write_json(dir / (base + ".json"), json{{"source", j},
                                           {"k", dp.k},
                                           {"r1", dp.aux->r1()},
                                           {"r2", dp.aux->r2()},
                                           {"alpha", dp.alpha},
                                           {"residual", dp.residual},
                                           {"target", dp.target},
                                           {"below_floor", dp.below_floor}});
    return {base + ".csv", base + ".json"};
}

/// ix,iy,x,y,value raster.
inline void write_indicator_csv(const fs::path& path, const locate::IndicatorField& f) {
    auto out = open_out(path);
    out << "ix,iy,x,y,value\n";
    for (std::size_t iy = 0; iy < f.grid.ny; ++iy) {
        for (std::size_t ix = 0; ix < f.grid.nx; ++ix) {
            const Vec2 p = f.grid.point(ix, iy);
            out << ix << ',' << iy << ',' << fmt(p.x()) << ',' << fmt(p.y()) << ',' << fmt(f.value(ix, iy)) << '\n';
        }
    }
}

/// Reconstruction summary plus the clamped curve at n equispaced angles
/// (theta,r,x,y).
inline std::vector<std::string> write_reconstruction(const fs::path& dir, const reconstruct::ReconstructionResult& res,
                                                     std::size_t n = 128) {
    const auto v = res.shape.to_vector();
    json j = {{"a0", res.shape.a0},
              {"a", res.shape.a},
              {"b", res.shape.b},
              {"coefficients", std::vector<double>(v.data(), v.data() + v.size())},
              {"bounds", {res.admissible.a, res.admissible.b}},
              {"curve_nodes", res.admissible.nodes},
              {"iterations", res.iterations},
              {"termination", reconstruct::to_string(res.termination)},
              {"final_cost", res.final_cost()},
              {"cost_history", res.cost_history}};
    if (res.relative_error) j["relative_error"] = *res.relative_error;
    write_json(dir / "reconstruction.json", j);
    auto out = open_out(dir / "reconstruction_curve.csv");
    out << "theta,r,x,y\n";
    for (std::size_t i = 0; i < n; ++i) {
        const double t = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
        const double r = res.radius(t);
        out << fmt(t) << ',' << fmt(r) << ',' << fmt(r * std::cos(t)) << ',' << fmt(r * std::sin(t)) << '\n';
    }
    return {"reconstruction.json", "reconstruction_curve.csv"};
}

/// theta,r samples of a radial function.
inline void write_radii_csv(const fs::path& path, std::span<const double> radii) {
    auto out = open_out(path);
    out << "theta,r\n";
    for (std::size_t i = 0; i < radii.size(); ++i) {
        out << fmt(kTwoPi * static_cast<double>(i) / static_cast<double>(radii.size())) << ',' << fmt(radii[i]) << '\n';
    }
}

}  // namespace cavity::io
