#include "CLI11.hpp"
#include "beamlab/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"beamlab: Gaussian-beam parametrix laboratory for semiclassical dispersive estimates"};
    beamlab::runner::RunArgs args;
    std::uint64_t seed = 0;
    bool have_seed = false;
    app.add_option("subcommand", args.subcommand,
                   "one of: certify flow classify phase amplitude fbi-check kernel dispersion "
                   "strichartz compare evolve")
        ->required();
    app.add_option("--config", args.config_path, "experiment config (json)");
    app.add_option("--out", args.out_dir, "output directory")->capture_default_str();
    app.add_option("--workers", args.workers, "worker threads")->capture_default_str();
    auto* so = app.add_option("--seed-override", seed, "override the config seed");
    CLI11_PARSE(app, argc, argv);
    have_seed = so->count() > 0;
    if (have_seed) args.seed_override = seed;
    return beamlab::runner::run(args);
}
