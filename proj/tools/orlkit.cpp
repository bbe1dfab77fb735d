// Command-line front end: generate synthetic treatment-log benchmarks, train
// the offline-RL agent grid, evaluate with off-policy metrics, and run the
// built-in property suite. Exit codes: 0 success, 1 property/pipeline
// failure, 2 configuration error.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "orl/experiment.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    int workers = 0;
    std::string output_dir;
};

orl::ExperimentConfig resolve_config(const Overrides& o) {
    orl::ExperimentConfig cfg = o.config_path.empty()
                                    ? orl::ExperimentConfig{}
                                    : orl::load_experiment_config(o.config_path);
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (o.workers > 0) cfg.workers = o.workers;
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"offline-RL treatment-optimization toolkit"};
    app.require_subcommand(1);

    Overrides o;
    app.add_option("-c,--config", o.config_path, "JSON experiment config (defaults apply)");
    app.add_option("--seeds", o.seeds, "override the config's seed list");
    app.add_option("--workers", o.workers, "override the worker count");
    app.add_option("--out", o.output_dir, "override the output directory");
    bool inject_fault = false;

    auto* gen = app.add_subcommand("generate", "emit per-seed datasets, MDP, and manifests");
    auto* tr = app.add_subcommand("train", "train the agent grid and select by validation WIS");
    auto* ev = app.add_subcommand("evaluate", "compute report tables and charts");
    auto* ck = app.add_subcommand("check", "run the property suite");
    ck->add_flag("--inject-fault", inject_fault, "force one property to fail");
    auto* all = app.add_subcommand("all", "generate, train, evaluate, then check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const auto cfg = resolve_config(o);
        if (gen->parsed()) return orl::cmd_generate(cfg);
        if (tr->parsed()) return orl::cmd_train(cfg);
        if (ev->parsed()) return orl::cmd_evaluate(cfg);
        if (ck->parsed()) return orl::cmd_check(cfg, inject_fault);
        if (all->parsed()) return orl::cmd_all(cfg);
    } catch (const orl::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
