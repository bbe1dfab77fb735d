#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "orl/learners.hpp"
#include "orl/sampling.hpp"

namespace orl {

// Raised on malformed experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// One agent family in the sweep grid: an algorithm, its conservatism weight,
// and an optional resampling plan applied to the training split.
struct AgentSpec {
    std::string name;
    Algorithm algorithm = Algorithm::cql;
    double alpha = 1.0;
    std::optional<SamplingPlan> sampling;  // plan seed filled per run
};

struct ChronicBlock {
    int n_control_levels = 4;
    int n_risk_flags = 4;
    int n_actions = 13;
    double inertia_prob = 0.64;
    int horizon = 8;
    double gamma = 0.9;
};

struct CriticalBlock {
    int n_fluid_bins = 5;
    int n_vaso_bins = 5;
    double mode_prob = 0.271;
    int horizon = 12;
    double gamma = 0.99;
};

struct ExperimentConfig {
    std::string environment = "chronic-care";  // or "critical-care"
    ChronicBlock chronic;
    CriticalBlock critical;

    int n_episodes = 3000;
    std::vector<double> split = {0.6, 0.2, 0.2};
    std::vector<std::uint64_t> seeds = {1, 2, 3};

    // Agent grid.
    std::vector<double> cql_alphas = {1.0, 0.9, 0.8, 0.5, 0.1};
    std::vector<double> under_k = {0.4, 0.8, 1.2};
    std::vector<double> over_k = {0.4, 0.8};
    bool underover = true;
    bool include_ddqn = true;
    std::vector<std::vector<int>> architectures = {{256, 256}};

    // Training block.
    int n_gradient_steps = 3000;
    int batch_size = 64;
    double learning_rate = 1e-3;
    int target_sync_interval = 200;

    // Evaluation block.
    double softening_epsilon = 0.01;
    std::vector<double> behavior_reg_grid = {0.1, 1.0, 10.0, 100.0, 1000.0};

    std::string output_dir = "out";
    int workers = 1;

    void validate() const;
    std::vector<AgentSpec> agent_grid() const;
    double env_gamma() const;
};

// Parses a JSON config file; unknown keys are configuration errors.
ExperimentConfig load_experiment_config(const std::string& path);

// Pipeline stages behind the CLI subcommands. Return 0 on success, 1 on a
// property failure (cmd_check), and throw ConfigError for bad configuration.
int cmd_generate(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg);
int cmd_evaluate(const ExperimentConfig& cfg);
int cmd_check(const ExperimentConfig& cfg, bool inject_fault = false);
int cmd_all(const ExperimentConfig& cfg);

}  // namespace orl
