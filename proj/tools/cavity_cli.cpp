// cavity_cli: run the co-inversion pipeline from a JSON config.
//
// Exit codes: 0 success, 2 invalid config or arguments, 3 numerical failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cavity/pipeline.hpp"
#include "cavity/specfun.hpp"

using namespace cavity;
namespace fs = std::filesystem;

namespace {

constexpr int kConfigInvalid = 2;
constexpr int kNumericalFailure = 3;

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::string stage = "all";
};

void add_run_flags(CLI::App* cmd, RunArgs& args, bool with_stage) {
    cmd->add_option("--config", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "master seed, overrides the config");
    cmd->add_option("--out", args.out, "output directory, overrides the config");
    if (with_stage) {
        cmd->add_option("--stage", args.stage, "last stage to run")
            ->check(CLI::IsMember({"forward", "decouple", "locate", "reconstruct", "all"}));
    }
}

void print_summary(const pipeline::RunReport& r, const std::string& out) {
    std::cout << r.name << ": stages";
    for (const auto& s : r.stages) std::cout << ' ' << s;
    std::cout << '\n';
    for (std::size_t j = 0; j < r.sources.size(); ++j) {
        const auto& s = r.sources[j];
        std::cout << "  source " << j << " (" << s.truth.x() << ", " << s.truth.y() << ")";
        if (s.recovered) {
            std::cout << " -> (" << s.recovered->x() << ", " << s.recovered->y() << ") error " << *s.error;
        }
        if (s.alpha > 0.0) std::cout << "  alpha " << s.alpha;
        std::cout << '\n';
    }
    if (r.reconstruction) {
        const auto& rec = *r.reconstruction;
        std::cout << "  cavity: " << reconstruct::to_string(rec.termination) << " after " << rec.iterations
                  << " iterations, cost " << rec.final_cost();
        if (rec.relative_error) std::cout << ", relative L2 error " << 100.0 * *rec.relative_error << "%";
        std::cout << '\n';
    }
    if (r.timings.count("total")) std::cout << "  total " << r.timings.at("total") << " s\n";
    if (!r.files.empty()) std::cout << "  artifacts in " << out << '\n';
}

int run(const RunArgs& args, pipeline::Stage stage) {
    auto cfg = pipeline::load_config(args.config);
    if (args.seed) cfg.seed = *args.seed;
    if (args.out) cfg.output_dir = *args.out;
    const auto report = pipeline::run_experiment(cfg, stage);
    print_summary(report, cfg.output_dir);
    return 0;
}

int random_shape(std::uint64_t seed, std::size_t nodes, const std::string& out, const std::vector<double>& band) {
    geometry::RandomShapeOptions opts;
    if (band.size() == 2) opts.accept_band = std::make_pair(band[0], band[1]);
    const auto spec = geometry::draw_random_shape_spec(seed, opts);
    const geometry::RandomShape shape(spec);
    const auto [lo, hi] = shape.radius_range();
    const fs::path dir = out;
    io::write_curve_csv(dir / "curve.csv", geometry::make_random_shape(spec, nodes));
    io::write_radii_csv(dir / "radii.csv", geometry::sample_radial([&](double t) { return shape.radius(t); }, 128));
    io::write_json(dir / "shape.json", io::json{{"seed", seed},
                                                {"n_knots", spec.n_knots},
                                                {"knot_radii", spec.knot_radii},
                                                {"min_radius", lo},
                                                {"max_radius", hi}});
    std::cout << "seed " << seed << ": " << spec.n_knots << " knots, radius in [" << lo << ", " << hi << "], written to "
              << out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simultaneous reconstruction of a sound-soft cavity and interior point sources"};
    app.require_subcommand(1);

    RunArgs args;
    struct Sub {
        const char* name;
        const char* help;
        pipeline::Stage stage;
    };
    const Sub subs[] = {
        {"forward", "simulate noisy measurements on Gamma1 and Gamma2", pipeline::Stage::Forward},
        {"decouple", "forward + split the data into incident and scattered parts", pipeline::Stage::Decouple},
        {"locate", "forward + decouple + locate the sources", pipeline::Stage::Locate},
        {"reconstruct", "forward + decouple + reconstruct the cavity", pipeline::Stage::Reconstruct},
    };
    std::vector<std::pair<CLI::App*, pipeline::Stage>> stage_cmds;
    for (const auto& s : subs) {
        auto* cmd = app.add_subcommand(s.name, s.help);
        add_run_flags(cmd, args, false);
        stage_cmds.emplace_back(cmd, s.stage);
    }
    auto* run_cmd = app.add_subcommand("run", "full pipeline");
    add_run_flags(run_cmd, args, true);

    std::uint64_t shape_seed = 1;
    std::size_t shape_nodes = 256;
    std::string shape_out = "random_shape";
    std::vector<double> band;
    auto* shape_cmd = app.add_subcommand("random-shape", "draw a random star-like cavity");
    shape_cmd->add_option("--seed", shape_seed, "shape seed");
    shape_cmd->add_option("--nodes", shape_nodes, "curve nodes")->check(CLI::PositiveNumber);
    shape_cmd->add_option("--out", shape_out, "output directory");
    shape_cmd->add_option("--band", band, "accept only radii within [lo, hi]")->expected(2);

    double n0_k = 10.0, n0_radius = 0.4;
    auto* n0_cmd = app.add_subcommand("n0", "source-count threshold for cavity uniqueness (Dirichlet eigenvalues of B_R below k^2, with multiplicity)");
    n0_cmd->add_option("--k", n0_k, "wavenumber")->required();
    n0_cmd->add_option("--radius", n0_radius, "disk radius")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigInvalid;
    }

    try {
        for (const auto& [cmd, stage] : stage_cmds) {
            if (cmd->parsed()) return run(args, stage);
        }
        if (run_cmd->parsed()) return run(args, pipeline::parse_stage(args.stage));
        if (shape_cmd->parsed()) return random_shape(shape_seed, shape_nodes, shape_out, band);
        if (n0_cmd->parsed()) {
            std::cout << specfun::count_n0(n0_k, n0_radius) << '\n';
            return 0;
        }
    } catch (const pipeline::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigInvalid;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumericalFailure;
    }
    return 0;
}
