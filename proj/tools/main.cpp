#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "rotstar/error.hpp"

namespace {

using rotstar::cli::Options;

void add_common(CLI::App* cmd, Options& opt) {
    cmd->add_option("--config", opt.config, "JSON configuration file");
    cmd->add_option("--out", opt.out, "output directory");
    cmd->add_option("--seed", opt.seed, "override the random seed");
    cmd->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rotstar: rotating-star calibration patterns, capture simulation and corner refinement"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");

    Options opt;
    auto* gen = app.add_subcommand("gen-pattern", "rasterise pattern frames");
    auto* ren = app.add_subcommand("render", "simulate captures of a posed board");
    auto* det = app.add_subcommand("detect", "detect and order corners in a rendered sequence");
    auto* ref = app.add_subcommand("refine", "refine detected corners");
    auto* swp = app.add_subcommand("sweep", "run the pose/noise stability sweep");
    auto* rep = app.add_subcommand("report", "write CSV and SVG from a saved sweep result");
    for (auto* cmd : {gen, ren, det, ref, swp, rep}) add_common(cmd, opt);
    det->add_option("--debug-dir", opt.debug_dir, "dump intermediate rasters and contours here");
    ref->add_option("--method", opt.method, "symmetry | forstner | saddle | phase");
    swp->add_flag("--full", opt.full, "use the complete sweep profile");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return rotstar::cli::kConfigError;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

    try {
        if (gen->parsed()) return rotstar::cli::gen_pattern(opt);
        if (ren->parsed()) return rotstar::cli::render(opt);
        if (det->parsed()) return rotstar::cli::detect(opt);
        if (ref->parsed()) return rotstar::cli::refine(opt);
        if (swp->parsed()) return rotstar::cli::sweep(opt);
        if (rep->parsed()) return rotstar::cli::report(opt);
    } catch (const rotstar::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return rotstar::cli::kConfigError;
    } catch (const rotstar::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return rotstar::cli::kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return rotstar::cli::kFailure;
    }
    return rotstar::cli::kFailure;
}
