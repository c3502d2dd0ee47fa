#pragma once

// End-to-end experiment: forward data, noise, decoupling, source sampling
// and cavity reconstruction, driven by a JSON config.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cavity/decouple.hpp"
#include "cavity/forward.hpp"
#include "cavity/geometry.hpp"
#include "cavity/io.hpp"
#include "cavity/locate.hpp"
#include "cavity/reconstruct.hpp"
#include "cavity/types.hpp"

namespace cavity::pipeline {

using io::json;
namespace fs = std::filesystem;

/// Malformed or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure inside one pipeline stage.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

// ---- seeds ----------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Per-stage seed derived from the master seed and the stage name.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
    return splitmix64(master ^ fnv1a(stage));
}

// ---- config ---------------------------------------------------------------

struct CavitySpec {
    std::string type = "nleaf";  // nleaf | kite | circle | star | random
    int leaves = 5;
    double radius = 1.0;
    geometry::StarShape star = geometry::StarShape::circle(1.0);
    std::optional<std::uint64_t> seed;  // random shapes; derived from the master seed when absent
    std::optional<std::pair<double, double>> accept_band;
};

struct SourceSpec {
    std::string generator = "circle";  // list | circle | random
    std::vector<Vec2> points;
    int count = 5;
    double radius = 0.3;
    double phase = 0.0;
    double min_separation = 0.05;  // random sources only
};

struct ExperimentConfig {
    std::string name = "experiment";
    double k = 10.0;
    double delta = 0.1;
    double epsilon = 1e-16;
    forward::NoiseMode noise_mode = forward::NoiseMode::PerSample;
    CavitySpec cavity;
    std::size_t forward_nodes = 256;
    SourceSpec sources;
    double gamma1_radius = 0.5;
    double gamma2_radius = 0.7;
    std::size_t measurement_nodes = 128;
    double r1 = 0.4;
    double r2 = 1.5;
    std::size_t aux_nodes1 = 90;
    std::size_t aux_nodes2 = 160;
    decouple::DecoupleOptions decoupling;
    double gamma3_radius = 15.0;
    std::size_t gamma3_nodes = 256;
    locate::SamplingGrid grid;
    bool refine_peaks = false;
    std::optional<double> bound_a;  // default R1 + 0.01
    std::optional<double> bound_b;  // default R2 - 0.01
    std::size_t curve_nodes = 64;
    double init_radius = 1.0;
    reconstruct::LmOptions lm;
    std::string output_dir = "out";
    bool write_artifacts = true;
    std::uint64_t seed = 1;

    double lower_bound() const { return bound_a.value_or(r1 + 0.01); }
    double upper_bound() const { return bound_b.value_or(r2 - 0.01); }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <class T>
void get(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline Vec2 point(const json& p) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw ConfigError("points are [x, y] number pairs");
    }
    return {p[0].get<double>(), p[1].get<double>()};
}

inline std::pair<double, double> pair(const json& p, const char* what) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw ConfigError(std::string(what) + " must be a [lo, hi] pair");
    }
    return {p[0].get<double>(), p[1].get<double>()};
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    using detail::get;
    detail::check_keys(j, "config",
                       {"name", "wavenumber", "noise", "epsilon", "cavity", "forward_nodes", "sources", "measurement",
                        "auxiliary", "decoupling", "sampling", "reconstruction", "output_dir", "write_artifacts",
                        "seed"});
    ExperimentConfig c;
    get(j, "name", c.name);
    get(j, "wavenumber", c.k);
    get(j, "epsilon", c.epsilon);
    get(j, "forward_nodes", c.forward_nodes);
    get(j, "output_dir", c.output_dir);
    get(j, "write_artifacts", c.write_artifacts);
    get(j, "seed", c.seed);

    if (j.contains("noise")) {
        const auto& n = j["noise"];
        detail::check_keys(n, "noise", {"delta", "mode"});
        get(n, "delta", c.delta);
        std::string mode = "per_sample";
        get(n, "mode", mode);
        if (mode == "per_sample") c.noise_mode = forward::NoiseMode::PerSample;
        else if (mode == "per_vector") c.noise_mode = forward::NoiseMode::PerVector;
        else throw ConfigError("noise.mode must be per_sample or per_vector");
    }
    if (j.contains("cavity")) {
        const auto& cj = j["cavity"];
        detail::check_keys(cj, "cavity", {"type", "leaves", "radius", "a0", "a", "b", "seed", "accept_band"});
        auto& cs = c.cavity;
        get(cj, "type", cs.type);
        get(cj, "leaves", cs.leaves);
        get(cj, "radius", cs.radius);
        get(cj, "a0", cs.star.a0);
        if (cj.contains("a") || cj.contains("b")) {
            std::vector<double> a, b;
            get(cj, "a", a);
            get(cj, "b", b);
            if (a.size() > geometry::StarShape::kDegree || b.size() > geometry::StarShape::kDegree) {
                throw ConfigError("star coefficients have degree at most 8");
            }
            std::copy(a.begin(), a.end(), cs.star.a.begin());
            std::copy(b.begin(), b.end(), cs.star.b.begin());
        }
        if (cj.contains("seed")) cs.seed = cj["seed"].get<std::uint64_t>();
        if (cj.contains("accept_band")) cs.accept_band = detail::pair(cj["accept_band"], "cavity.accept_band");
    }
    if (j.contains("sources")) {
        const auto& sj = j["sources"];
        auto& ss = c.sources;
        if (sj.is_array()) {
            ss.generator = "list";
            for (const auto& p : sj) ss.points.push_back(detail::point(p));
        } else {
            detail::check_keys(sj, "sources", {"generator", "points", "count", "radius", "phase", "min_separation"});
            if (sj.contains("points") && !sj.contains("generator")) ss.generator = "list";
            get(sj, "generator", ss.generator);
            get(sj, "count", ss.count);
            get(sj, "radius", ss.radius);
            get(sj, "phase", ss.phase);
            get(sj, "min_separation", ss.min_separation);
            if (sj.contains("points")) {
                for (const auto& p : sj["points"]) ss.points.push_back(detail::point(p));
            }
        }
    }
    if (j.contains("measurement")) {
        const auto& m = j["measurement"];
        detail::check_keys(m, "measurement", {"radii", "nodes"});
        if (m.contains("radii")) std::tie(c.gamma1_radius, c.gamma2_radius) = detail::pair(m["radii"], "measurement.radii");
        get(m, "nodes", c.measurement_nodes);
    }
    if (j.contains("auxiliary")) {
        const auto& a = j["auxiliary"];
        detail::check_keys(a, "auxiliary", {"radii", "nodes"});
        if (a.contains("radii")) std::tie(c.r1, c.r2) = detail::pair(a["radii"], "auxiliary.radii");
        if (a.contains("nodes")) {
            const auto n = detail::pair(a["nodes"], "auxiliary.nodes");
            if (n.first < 1 || n.second < 1) throw ConfigError("auxiliary.nodes must be positive");
            c.aux_nodes1 = static_cast<std::size_t>(n.first);
            c.aux_nodes2 = static_cast<std::size_t>(n.second);
        }
    }
    if (j.contains("decoupling")) {
        const auto& d = j["decoupling"];
        detail::check_keys(d, "decoupling", {"rho", "log10_alpha_range", "iterations", "relative_tolerance"});
        get(d, "rho", c.decoupling.rho);
        if (d.contains("log10_alpha_range")) {
            std::tie(c.decoupling.log10_alpha_min, c.decoupling.log10_alpha_max) =
                detail::pair(d["log10_alpha_range"], "decoupling.log10_alpha_range");
        }
        get(d, "iterations", c.decoupling.iterations);
        get(d, "relative_tolerance", c.decoupling.relative_tolerance);
    }
    if (j.contains("sampling")) {
        const auto& s = j["sampling"];
        detail::check_keys(s, "sampling", {"gamma3_radius", "gamma3_nodes", "box", "points", "refine"});
        get(s, "gamma3_radius", c.gamma3_radius);
        get(s, "gamma3_nodes", c.gamma3_nodes);
        get(s, "refine", c.refine_peaks);
        if (s.contains("box")) {
            std::vector<double> box;
            get(s, "box", box);
            if (box.size() != 4) throw ConfigError("sampling.box is [x_lo, x_hi, y_lo, y_hi]");
            c.grid.x_lo = box[0];
            c.grid.x_hi = box[1];
            c.grid.y_lo = box[2];
            c.grid.y_hi = box[3];
        }
        if (s.contains("points")) {
            const auto n = detail::pair(s["points"], "sampling.points");
            if (n.first < 0 || n.second < 0) throw ConfigError("sampling.points must be nonnegative");
            c.grid.nx = static_cast<std::size_t>(n.first);
            c.grid.ny = static_cast<std::size_t>(n.second);
        }
    }
    if (j.contains("reconstruction")) {
        const auto& r = j["reconstruction"];
        detail::check_keys(r, "reconstruction",
                           {"bounds", "lower_bound", "upper_bound", "curve_nodes", "init_radius", "lambda0",
                            "max_iterations", "cost_tolerance", "step_tolerance", "fd_step"});
        if (r.contains("lower_bound") && !r["lower_bound"].is_null()) c.bound_a = r["lower_bound"].get<double>();
        if (r.contains("upper_bound") && !r["upper_bound"].is_null()) c.bound_b = r["upper_bound"].get<double>();
        get(r, "curve_nodes", c.curve_nodes);
        get(r, "init_radius", c.init_radius);
        get(r, "lambda0", c.lm.lambda0);
        get(r, "max_iterations", c.lm.max_iterations);
        get(r, "cost_tolerance", c.lm.cost_tolerance);
        get(r, "step_tolerance", c.lm.step_tolerance);
        get(r, "fd_step", c.lm.fd_step);
    }
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    try {
        return config_from_json(io::read_json(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

inline const char* to_string(forward::NoiseMode m) {
    return m == forward::NoiseMode::PerSample ? "per_sample" : "per_vector";
}

/// Fully resolved config, defaults included.
inline json to_json(const ExperimentConfig& c) {
    json cavity = {{"type", c.cavity.type}};
    if (c.cavity.type == "nleaf") cavity["leaves"] = c.cavity.leaves;
    if (c.cavity.type == "circle") cavity["radius"] = c.cavity.radius;
    if (c.cavity.type == "star") {
        cavity["a0"] = c.cavity.star.a0;
        cavity["a"] = c.cavity.star.a;
        cavity["b"] = c.cavity.star.b;
    }
    if (c.cavity.seed) cavity["seed"] = *c.cavity.seed;
    if (c.cavity.accept_band) cavity["accept_band"] = {c.cavity.accept_band->first, c.cavity.accept_band->second};
    json sources = {{"generator", c.sources.generator}};
    if (c.sources.generator == "list") {
        sources["points"] = io::to_json(c.sources.points);
    } else {
        sources["count"] = c.sources.count;
        sources["radius"] = c.sources.radius;
        if (c.sources.generator == "circle") sources["phase"] = c.sources.phase;
        if (c.sources.generator == "random") sources["min_separation"] = c.sources.min_separation;
    }
    return {{"name", c.name},
            {"wavenumber", c.k},
            {"noise", {{"delta", c.delta}, {"mode", to_string(c.noise_mode)}}},
            {"epsilon", c.epsilon},
            {"cavity", cavity},
            {"forward_nodes", c.forward_nodes},
            {"sources", sources},
            {"measurement", {{"radii", {c.gamma1_radius, c.gamma2_radius}}, {"nodes", c.measurement_nodes}}},
            {"auxiliary", {{"radii", {c.r1, c.r2}}, {"nodes", {c.aux_nodes1, c.aux_nodes2}}}},
            {"decoupling",
             {{"rho", c.decoupling.rho},
              {"log10_alpha_range", {c.decoupling.log10_alpha_min, c.decoupling.log10_alpha_max}},
              {"iterations", c.decoupling.iterations},
              {"relative_tolerance", c.decoupling.relative_tolerance}}},
            {"sampling",
             {{"gamma3_radius", c.gamma3_radius},
              {"gamma3_nodes", c.gamma3_nodes},
              {"box", {c.grid.x_lo, c.grid.x_hi, c.grid.y_lo, c.grid.y_hi}},
              {"points", {c.grid.nx, c.grid.ny}},
              {"refine", c.refine_peaks}}},
            {"reconstruction",
             {{"lower_bound", c.lower_bound()},
              {"upper_bound", c.upper_bound()},
              {"curve_nodes", c.curve_nodes},
              {"init_radius", c.init_radius},
              {"lambda0", c.lm.lambda0},
              {"max_iterations", c.lm.max_iterations},
              {"cost_tolerance", c.lm.cost_tolerance},
              {"step_tolerance", c.lm.step_tolerance},
              {"fd_step", c.lm.fd_step}}},
            {"output_dir", c.output_dir},
            {"write_artifacts", c.write_artifacts},
            {"seed", c.seed}};
}

// ---- scene construction ---------------------------------------------------

struct Cavity {
    geometry::ParametricCurve curve;
    std::vector<double> true_radii;  // at theta_i = 2 pi i / 128
    std::optional<geometry::RandomShapeSpec> random_spec;
};

inline std::uint64_t cavity_seed(const ExperimentConfig& c) {
    return c.cavity.seed.value_or(derive_seed(c.seed, "cavity"));
}

inline Cavity make_cavity(const ExperimentConfig& c) {
    const auto& s = c.cavity;
    const std::size_t n = c.forward_nodes;
    constexpr std::size_t kAngles = 128;
    if (s.type == "nleaf") {
        const int leaves = s.leaves;
        return {geometry::make_nleaf(leaves, n),
                geometry::sample_radial([leaves](double t) { return 1.0 + 0.2 * std::cos(leaves * t); }, kAngles),
                std::nullopt};
    }
    if (s.type == "kite") {
        auto curve = geometry::make_kite(n);
        auto radii = geometry::radial_samples_by_ray(curve.parameterization(), kAngles);
        return {std::move(curve), std::move(radii), std::nullopt};
    }
    if (s.type == "circle") {
        return {geometry::make_circle(Vec2::Zero(), s.radius, n), std::vector<double>(kAngles, s.radius), std::nullopt};
    }
    if (s.type == "star") {
        const auto star = s.star;
        return {geometry::make_star(star, n), geometry::sample_radial([star](double t) { return star.radius(t); }, kAngles),
                std::nullopt};
    }
    if (s.type == "random") {
        geometry::RandomShapeOptions opts;
        opts.accept_band = s.accept_band;
        const auto spec = geometry::draw_random_shape_spec(cavity_seed(c), opts);
        const geometry::RandomShape shape(spec);
        return {geometry::make_random_shape(spec, n),
                geometry::sample_radial([&shape](double t) { return shape.radius(t); }, kAngles), spec};
    }
    throw ConfigError("unknown cavity type '" + s.type + "'");
}

inline std::vector<Vec2> make_sources(const ExperimentConfig& c) {
    const auto& s = c.sources;
    if (s.generator == "list") return s.points;
    std::vector<Vec2> out;
    if (s.generator == "circle") {
        for (int i = 0; i < s.count; ++i) out.push_back(polar(s.radius, s.phase + kTwoPi * i / s.count));
        return out;
    }
    if (s.generator == "random") {
        // uniform in the disk |z| < radius with a minimum pairwise separation
        std::mt19937_64 rng(derive_seed(c.seed, "sources"));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        int attempts = 0;
        while (static_cast<int>(out.size()) < s.count) {
            if (++attempts > 1'000'000) throw ConfigError("cannot place random sources with the requested separation");
            const Vec2 z(s.radius * u(rng), s.radius * u(rng));
            if (z.norm() >= s.radius) continue;
            bool apart = true;
            for (const auto& p : out) apart = apart && (p - z).norm() >= s.min_separation;
            if (apart) out.push_back(z);
        }
        return out;
    }
    throw ConfigError("unknown source generator '" + s.generator + "'");
}

/// Every violated constraint, as a readable message. Empty means runnable.
inline std::vector<std::string> validate_config(const ExperimentConfig& c) {
    std::vector<std::string> v;
    auto need = [&v](bool ok, std::string msg) {
        if (!ok) v.push_back(std::move(msg));
    };
    need(c.k > 0.0, "wavenumber must be positive");
    need(c.delta >= 0.0 && c.delta < 1.0, "noise delta must lie in [0, 1)");
    need(c.epsilon >= 0.0, "epsilon must be nonnegative");
    need(c.forward_nodes >= 16 && c.forward_nodes % 2 == 0, "forward_nodes must be even and at least 16");
    need(c.measurement_nodes >= 8, "measurement nodes must be at least 8");
    need(c.aux_nodes1 >= 8 && c.aux_nodes2 >= 8, "auxiliary nodes must be at least 8");
    need(c.r1 > 0.0, "auxiliary radius R1 must be positive");
    need(c.r1 < c.gamma1_radius, "auxiliary B1 not inside Gamma1");
    need(c.gamma1_radius < c.gamma2_radius, "Gamma1 not inside Gamma2");
    need(c.gamma2_radius < c.r2, "Gamma2 not inside auxiliary B2");
    need(c.gamma3_radius > c.r2, "Gamma3 must lie outside B2");
    need(c.gamma3_nodes >= 8, "gamma3 nodes must be at least 8");
    need(c.decoupling.rho > 0.0, "decoupling rho must be positive");
    need(c.decoupling.log10_alpha_min < c.decoupling.log10_alpha_max, "decoupling alpha range is empty");
    need(c.decoupling.iterations > 0, "decoupling iterations must be positive");
    need(c.grid.nx >= 2 && c.grid.ny >= 2, "sampling grid needs at least 2 points per axis");
    need(c.grid.x_lo < c.grid.x_hi && c.grid.y_lo < c.grid.y_hi, "sampling box is empty");
    need(c.grid.max_radius() < c.gamma3_radius, "sampling grid reaches Gamma3");
    const double a = c.lower_bound(), b = c.upper_bound();
    need(a > c.r1 && b < c.r2 && a < b, "reconstruction bounds must satisfy R1 < a < b < R2");
    need(c.init_radius >= a && c.init_radius <= b, "initial radius outside the reconstruction bounds");
    need(c.curve_nodes >= 8, "reconstruction curve_nodes must be at least 8");
    need(c.lm.max_iterations > 0 && c.lm.fd_step > 0.0 && c.lm.lambda0 > 0.0, "optimizer settings must be positive");

    const auto& s = c.sources;
    if (s.generator == "list") {
        need(!s.points.empty(), "at least one source is required");
    } else if (s.generator == "circle" || s.generator == "random") {
        need(s.count > 0, "source count must be positive");
        need(s.radius >= 0.0, "source radius must be nonnegative");
    } else {
        v.push_back("unknown source generator '" + s.generator + "'");
    }
    if (v.empty() || s.generator == "list") {
        try {
            const auto z = make_sources(c);
            for (std::size_t i = 0; i < z.size(); ++i) {
                if (!(z[i].norm() < c.r1)) {
                    v.push_back("source " + std::to_string(i) + " (" + io::fmt(z[i].x()) + ", " + io::fmt(z[i].y()) +
                                ") not inside B1");
                }
                for (std::size_t j = 0; j < i; ++j) {
                    if ((z[i] - z[j]).norm() < 1e-12) v.push_back("sources " + std::to_string(j) + " and " + std::to_string(i) + " coincide");
                }
            }
        } catch (const Error& e) {
            v.push_back(e.what());
        }
    }

    const auto& cs = c.cavity;
    if (cs.type == "nleaf") need(cs.leaves >= 1, "n-leaf needs at least one leaf");
    if (cs.type == "circle") need(cs.radius > 0.0, "cavity radius must be positive");
    if (cs.type == "random" && cs.accept_band) {
        need(cs.accept_band->first < cs.accept_band->second, "cavity.accept_band is empty");
    }
    const bool known = cs.type == "nleaf" || cs.type == "kite" || cs.type == "circle" || cs.type == "star" || cs.type == "random";
    if (!known) v.push_back("unknown cavity type '" + cs.type + "'");
    if (v.empty()) {
        try {
            const auto cav = make_cavity(c);
            const auto [lo, hi] = std::minmax_element(cav.true_radii.begin(), cav.true_radii.end());
            need(*lo > c.gamma2_radius && cav.curve.min_radius() > c.gamma2_radius, "Gamma2 not inside the cavity");
            need(*hi < c.r2, "cavity not inside auxiliary B2");
        } catch (const Error& e) {
            v.push_back(std::string("cavity: ") + e.what());
        }
    }
    return v;
}

// ---- run -------------------------------------------------------------------

enum class Stage { Forward, Decouple, Locate, Reconstruct, All };

inline Stage parse_stage(const std::string& s) {
    if (s == "forward") return Stage::Forward;
    if (s == "decouple") return Stage::Decouple;
    if (s == "locate") return Stage::Locate;
    if (s == "reconstruct") return Stage::Reconstruct;
    if (s == "all" || s == "run") return Stage::All;
    throw ConfigError("unknown stage '" + s + "'");
}

struct SourceResult {
    Vec2 truth;
    std::optional<Vec2> recovered;
    std::optional<double> error;
    double alpha = 0.0;
    double residual = 0.0;
    double target = 0.0;
    bool below_floor = false;
};

struct RunReport {
    std::string name;
    std::uint64_t seed = 0;
    std::map<std::string, std::uint64_t> seeds;
    std::vector<std::string> stages;
    std::vector<SourceResult> sources;
    double grid_spacing = 0.0;
    std::optional<reconstruct::ReconstructionResult> reconstruction;
    std::vector<std::string> files;
    std::map<std::string, double> timings;  // seconds; kept out of to_json()

    std::optional<double> cavity_error() const {
        return reconstruction ? reconstruction->relative_error : std::nullopt;
    }

    /// Deterministic summary (no timings).
    json to_json() const {
        json src = json::array();
        for (const auto& s : sources) {
            json e = {{"true", io::to_json(s.truth)},
                      {"alpha", s.alpha},
                      {"residual", s.residual},
                      {"target", s.target},
                      {"below_floor", s.below_floor}};
            if (s.recovered) {
                e["recovered"] = io::to_json(*s.recovered);
                e["error"] = *s.error;
            }
            src.push_back(e);
        }
        json j = {{"name", name}, {"seed", seed}, {"seeds", seeds}, {"stages", stages}, {"sources", src}};
        if (grid_spacing > 0.0) j["grid_spacing"] = grid_spacing;
        if (reconstruction) {
            const auto& r = *reconstruction;
            j["cavity"] = {{"relative_error", r.relative_error.value_or(std::nan(""))},
                           {"termination", reconstruct::to_string(r.termination)},
                           {"iterations", r.iterations},
                           {"final_cost", r.final_cost()}};
        }
        j["files"] = files;
        return j;
    }
};

namespace detail {

class StageTimer {
public:
    StageTimer(RunReport& report, std::string name)
        : report_(report), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        report_.timings[name_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    RunReport& report_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

template <class F>
auto stage(RunReport& report, const std::string& name, F&& body) {
    StageTimer timer(report, name);
    try {
        auto result = body();
        report.stages.push_back(name);
        return result;
    } catch (const ConfigError&) {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e.what());
    }
}

}  // namespace detail

/// Runs the pipeline through the requested stage (Locate and Reconstruct are
/// independent; All runs both). Artifacts, report.json and timings.json go to
/// cfg.output_dir unless write_artifacts is off.
inline RunReport run_experiment(const ExperimentConfig& cfg, Stage last = Stage::All) {
    if (const auto v = validate_config(cfg); !v.empty()) {
        std::string msg = "invalid config:";
        for (const auto& s : v) msg += "\n  " + s;
        throw ConfigError(msg);
    }
    const fs::path out = cfg.output_dir;
    const bool write = cfg.write_artifacts;
    const auto t0 = std::chrono::steady_clock::now();

    RunReport report;
    report.name = cfg.name;
    report.seed = cfg.seed;
    report.seeds["noise"] = derive_seed(cfg.seed, "noise");
    if (cfg.cavity.type == "random") report.seeds["cavity"] = cavity_seed(cfg);
    if (cfg.sources.generator == "random") report.seeds["sources"] = derive_seed(cfg.seed, "sources");
    auto add_files = [&](const std::string& sub, const std::vector<std::string>& names) {
        for (const auto& n : names) report.files.push_back(sub.empty() ? n : sub + "/" + n);
    };
    auto finish = [&]() {
        report.timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (write) {
            report.files.push_back("report.json");
            io::write_json(out / "report.json", report.to_json());
            io::write_json(out / "timings.json", json(report.timings));
        }
        return report;
    };
    if (write) {
        io::write_json(out / "config.json", to_json(cfg));
        report.files.push_back("config.json");
    }

    const auto sources = make_sources(cfg);
    for (const auto& z : sources) report.sources.push_back({z, std::nullopt, std::nullopt, 0.0, 0.0, 0.0, false});

    // forward data and noise
    const auto data = detail::stage(report, "forward", [&] {
        const Cavity cav = make_cavity(cfg);
        const forward::ForwardSolver solver(cav.curve, cfg.k);
        const auto g1 = geometry::make_circle(Vec2::Zero(), cfg.gamma1_radius, cfg.measurement_nodes);
        const auto g2 = geometry::make_circle(Vec2::Zero(), cfg.gamma2_radius, cfg.measurement_nodes);
        auto clean = forward::simulate_measurements(solver, sources, g1, g2);
        auto noisy = cfg.delta > 0.0 ? forward::add_noise(clean, cfg.delta, report.seeds["noise"], cfg.noise_mode) : clean;
        if (write) {
            io::write_curve_csv(out / "cavity.csv", cav.curve);
            io::write_radii_csv(out / "truth_radii.csv", cav.true_radii);
            add_files("", {"cavity.csv", "truth_radii.csv"});
            if (cav.random_spec) {
                io::write_json(out / "random_shape.json",
                               json{{"seed", cav.random_spec->seed},
                                    {"n_knots", cav.random_spec->n_knots},
                                    {"knot_radii", cav.random_spec->knot_radii}});
                add_files("", {"random_shape.json"});
            }
            add_files("measurements", io::write_measurements(out / "measurements", noisy, cfg.k, report.seeds["noise"], sources));
        }
        return std::make_pair(std::move(noisy), cav.true_radii);
    });
    if (last == Stage::Forward) return finish();

    const auto densities = detail::stage(report, "decouple", [&] {
        const auto aux = std::make_shared<decouple::AuxiliaryPair>(cfg.r1, cfg.r2, cfg.aux_nodes1, cfg.aux_nodes2);
        const decouple::DiscreteOperator op(aux, data.first.gamma1, data.first.gamma2, cfg.k);
        auto dps = decouple::decouple(op, data.first, WaveParams{cfg.k, cfg.delta, cfg.epsilon}, cfg.decoupling);
        for (std::size_t j = 0; j < dps.size(); ++j) {
            auto& s = report.sources[j];
            s.alpha = dps[j].alpha;
            s.residual = dps[j].residual;
            s.target = dps[j].target;
            s.below_floor = dps[j].below_floor;
            if (write) add_files("densities", io::write_density(out / "densities", j, dps[j]));
        }
        return dps;
    });
    if (last == Stage::Decouple) return finish();

    if (last == Stage::Locate || last == Stage::All) {
        detail::stage(report, "locate", [&] {
            const auto gamma3 = locate::far_circle(cfg.gamma3_radius, cfg.gamma3_nodes);
            report.grid_spacing = std::max(cfg.grid.dx(), cfg.grid.dy());
            json argmax = json::array();
            for (std::size_t j = 0; j < densities.size(); ++j) {
                const auto f = locate::indicator_field(densities[j], cfg.grid, gamma3, cfg.k);
                const Vec2 p = cfg.refine_peaks ? locate::refine_peak(f) : f.argmax();
                auto& s = report.sources[j];
                s.recovered = p;
                s.error = (p - s.truth).norm();
                if (write) {
                    const std::string name = "indicator_" + std::to_string(j) + ".csv";
                    io::write_indicator_csv(out / "indicators" / name, f);
                    add_files("indicators", {name});
                    argmax.push_back({{"source", j},
                                      {"index", f.argmax_index},
                                      {"grid_point", io::to_json(f.argmax())},
                                      {"recovered", io::to_json(p)},
                                      {"value", f.values[f.argmax_index]}});
                }
            }
            if (write) {
                io::write_json(out / "indicators" / "argmax.json", argmax);
                add_files("indicators", {"argmax.json"});
            }
            return 0;
        });
    }

    if (last == Stage::Reconstruct || last == Stage::All) {
        report.reconstruction = detail::stage(report, "reconstruct", [&] {
            const reconstruct::AdmissibleClass cls{cfg.lower_bound(), cfg.upper_bound(), cfg.curve_nodes};
            auto res = reconstruct::reconstruct_cavity(densities, cls, geometry::StarShape::circle(cfg.init_radius),
                                                      data.second, cfg.lm);
            if (write) add_files("reconstruction", io::write_reconstruction(out / "reconstruction", res));
            return res;
        });
    }
    return finish();
}

}  // namespace cavity::pipeline
