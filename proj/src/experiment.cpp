#include "orl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "orl/constraints.hpp"
#include "orl/dp.hpp"
#include "orl/envgen.hpp"
#include "orl/ope.hpp"
#include "orl/rng.hpp"

namespace orl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g9(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

std::string gshort(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", x);
    return buf;
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
    std::uint64_t h = 1469598103934665603ull ^ (base * 0x9e3779b97f4a7c15ull);
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ull;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return h;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

// ---------------------------------------------------------------------------
// Environment bundle shared by the pipeline stages
// ---------------------------------------------------------------------------

struct EnvBundle {
    MdpSpec mdp;
    Policy behavior;
    RewardFn realized_reward;
    StateTagger tagger;
    StateFeaturizer features;
    ConstraintRuleSet rules;  // empty for critical care
    std::function<bool(int)> out_of_control;
    std::vector<int> non_intensifying;
    bool is_critical = false;
    int n_fluid_bins = 0, n_vaso_bins = 0;
};

EnvBundle build_env(const ExperimentConfig& cfg) {
    EnvBundle env;
    if (cfg.environment == "chronic-care") {
        ChronicCareConfig c;
        c.n_control_levels = cfg.chronic.n_control_levels;
        c.n_risk_flags = cfg.chronic.n_risk_flags;
        c.n_actions = cfg.chronic.n_actions;
        c.inertia_prob = cfg.chronic.inertia_prob;
        c.horizon = cfg.chronic.horizon;
        c.gamma = cfg.chronic.gamma;
        auto built = build_chronic_care(c);
        env.mdp = std::move(built.mdp);
        env.behavior = std::move(built.behavior);
        env.realized_reward = built.realized_reward;
        env.tagger = built.tagger;
        env.features = built.features;
        env.rules = std::move(built.rules);
        env.out_of_control = built.out_of_control;
        env.non_intensifying = built.non_intensifying;
    } else if (cfg.environment == "critical-care") {
        CriticalCareConfig c;
        c.n_fluid_bins = cfg.critical.n_fluid_bins;
        c.n_vaso_bins = cfg.critical.n_vaso_bins;
        c.mode_prob = cfg.critical.mode_prob;
        c.horizon = cfg.critical.horizon;
        c.gamma = cfg.critical.gamma;
        auto built = build_critical_care(c);
        env.mdp = std::move(built.mdp);
        env.behavior = std::move(built.behavior);
        env.realized_reward = built.realized_reward;
        env.tagger = built.tagger;
        env.features = built.features;
        env.rules.n_actions = env.mdp.n_actions;
        env.is_critical = true;
        env.n_fluid_bins = c.n_fluid_bins;
        env.n_vaso_bins = c.n_vaso_bins;
    } else {
        throw ConfigError("unknown environment: " + cfg.environment);
    }
    return env;
}

std::vector<int> strata_key_positions(const TransitionDataset& ds) {
    if (ds.empty() || ds[0].strata.empty()) return {};
    std::vector<int> keys(ds[0].strata.size());
    std::iota(keys.begin(), keys.end(), 0);
    return keys;
}

fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
    return fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
}

// Minimal worker pool; jobs own their outputs, stdout is reduced afterwards.
void run_jobs(int workers, std::vector<std::function<void()>> jobs) {
    if (workers <= 1 || jobs.size() <= 1) {
        for (auto& job : jobs) job();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n = std::min<int>(workers, static_cast<int>(jobs.size()));
    for (int w = 0; w < n; ++w)
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= jobs.size()) return;
                jobs[i]();
            }
        });
    for (auto& t : pool) t.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (environment != "chronic-care" && environment != "critical-care")
        throw ConfigError("environment must be chronic-care or critical-care");
    if (n_episodes < 10) throw ConfigError("n_episodes too small");
    if (split.size() != 3) throw ConfigError("split must have three ratios");
    double s = 0.0;
    for (double r : split) {
        if (r <= 0.0) throw ConfigError("split ratios must be positive");
        s += r;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    if (seeds.empty()) throw ConfigError("seeds must be nonempty");
    for (double a : cql_alphas)
        if (a < 0.0) throw ConfigError("cql alphas must be nonnegative");
    for (double k : under_k)
        if (k <= 0.0) throw ConfigError("under K must be positive");
    for (double k : over_k)
        if (k <= 0.0) throw ConfigError("over K must be positive");
    if (architectures.empty()) throw ConfigError("need at least one architecture");
    if (n_gradient_steps < 1 || batch_size < 1) throw ConfigError("bad training block");
    if (!(softening_epsilon > 0.0 && softening_epsilon < 1.0))
        throw ConfigError("softening epsilon must lie in (0,1)");
    if (behavior_reg_grid.empty()) throw ConfigError("behavior_reg_grid must be nonempty");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (output_dir.empty()) throw ConfigError("output_dir must be set");
}

std::vector<AgentSpec> ExperimentConfig::agent_grid() const {
    std::vector<AgentSpec> grid;
    for (double a : cql_alphas)
        grid.push_back({"cql_a" + gshort(a), Algorithm::cql, a, std::nullopt});
    for (double k : under_k) {
        SamplingPlan plan;
        plan.mode = SamplingPlan::Mode::under;
        plan.k = k;
        grid.push_back({"cql_under_k" + gshort(k), Algorithm::cql, 1.0, plan});
    }
    for (double k : over_k) {
        SamplingPlan plan;
        plan.mode = SamplingPlan::Mode::over;
        plan.k = k;
        grid.push_back({"cql_over_k" + gshort(k), Algorithm::cql, 1.0, plan});
    }
    if (underover) {
        SamplingPlan plan;
        plan.mode = SamplingPlan::Mode::underover;
        grid.push_back({"cql_underover", Algorithm::cql, 1.0, plan});
    }
    if (include_ddqn) grid.push_back({"ddqn", Algorithm::ddqn, 0.0, std::nullopt});
    return grid;
}

double ExperimentConfig::env_gamma() const {
    return environment == "chronic-care" ? chronic.gamma : critical.gamma;
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + ctx);
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    ExperimentConfig cfg;
    try {
        check_keys(j, {"environment", "chronic", "critical", "n_episodes", "split", "seeds",
                       "agents", "train", "eval", "output_dir", "workers"},
                   "config root");
        cfg.environment = j.value("environment", cfg.environment);
        if (j.contains("chronic")) {
            const auto& c = j["chronic"];
            check_keys(c, {"n_control_levels", "n_risk_flags", "n_actions", "inertia_prob",
                           "horizon", "gamma"},
                       "chronic");
            cfg.chronic.n_control_levels = c.value("n_control_levels", cfg.chronic.n_control_levels);
            cfg.chronic.n_risk_flags = c.value("n_risk_flags", cfg.chronic.n_risk_flags);
            cfg.chronic.n_actions = c.value("n_actions", cfg.chronic.n_actions);
            cfg.chronic.inertia_prob = c.value("inertia_prob", cfg.chronic.inertia_prob);
            cfg.chronic.horizon = c.value("horizon", cfg.chronic.horizon);
            cfg.chronic.gamma = c.value("gamma", cfg.chronic.gamma);
        }
        if (j.contains("critical")) {
            const auto& c = j["critical"];
            check_keys(c, {"n_fluid_bins", "n_vaso_bins", "mode_prob", "horizon", "gamma"},
                       "critical");
            cfg.critical.n_fluid_bins = c.value("n_fluid_bins", cfg.critical.n_fluid_bins);
            cfg.critical.n_vaso_bins = c.value("n_vaso_bins", cfg.critical.n_vaso_bins);
            cfg.critical.mode_prob = c.value("mode_prob", cfg.critical.mode_prob);
            cfg.critical.horizon = c.value("horizon", cfg.critical.horizon);
            cfg.critical.gamma = c.value("gamma", cfg.critical.gamma);
        }
        cfg.n_episodes = j.value("n_episodes", cfg.n_episodes);
        if (j.contains("split")) cfg.split = j["split"].get<std::vector<double>>();
        if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        if (j.contains("agents")) {
            const auto& a = j["agents"];
            check_keys(a, {"cql_alphas", "under_k", "over_k", "underover", "include_ddqn",
                           "architectures"},
                       "agents");
            if (a.contains("cql_alphas")) cfg.cql_alphas = a["cql_alphas"].get<std::vector<double>>();
            if (a.contains("under_k")) cfg.under_k = a["under_k"].get<std::vector<double>>();
            if (a.contains("over_k")) cfg.over_k = a["over_k"].get<std::vector<double>>();
            cfg.underover = a.value("underover", cfg.underover);
            cfg.include_ddqn = a.value("include_ddqn", cfg.include_ddqn);
            if (a.contains("architectures"))
                cfg.architectures = a["architectures"].get<std::vector<std::vector<int>>>();
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            check_keys(t, {"n_gradient_steps", "batch_size", "learning_rate",
                           "target_sync_interval"},
                       "train");
            cfg.n_gradient_steps = t.value("n_gradient_steps", cfg.n_gradient_steps);
            cfg.batch_size = t.value("batch_size", cfg.batch_size);
            cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
            cfg.target_sync_interval = t.value("target_sync_interval", cfg.target_sync_interval);
        }
        if (j.contains("eval")) {
            const auto& e = j["eval"];
            check_keys(e, {"softening_epsilon", "behavior_reg_grid"}, "eval");
            cfg.softening_epsilon = e.value("softening_epsilon", cfg.softening_epsilon);
            if (e.contains("behavior_reg_grid"))
                cfg.behavior_reg_grid = e["behavior_reg_grid"].get<std::vector<double>>();
        }
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
        cfg.workers = j.value("workers", cfg.workers);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config type error: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

namespace {

struct SeedData {
    TransitionDataset train, valid, test;
};

SeedData load_seed_data(const ExperimentConfig& cfg, const EnvBundle& env, std::uint64_t seed) {
    const auto dir = seed_dir(cfg, seed);
    const int S = env.mdp.n_states, A = env.mdp.n_actions;
    return {load_dataset_file((dir / "train.tsv").string(), S, A),
            load_dataset_file((dir / "valid.tsv").string(), S, A),
            load_dataset_file((dir / "test.tsv").string(), S, A)};
}

}  // namespace

int cmd_generate(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto env = build_env(cfg);

    for (const auto seed : cfg.seeds) {
        const auto dir = seed_dir(cfg, seed);
        fs::create_directories(dir);
        save_mdp_file(env.mdp, (dir / "mdp.txt").string());

        const auto ds = rollout(env.mdp, env.behavior, cfg.n_episodes,
                                derive_seed(seed, "rollout"), env.realized_reward, env.tagger);
        const auto parts = split_by_episode(ds, cfg.split, derive_seed(seed, "split"));
        save_dataset_file(parts[0], (dir / "train.tsv").string());
        save_dataset_file(parts[1], (dir / "valid.tsv").string());
        save_dataset_file(parts[2], (dir / "test.tsv").string());

        // Manifest: config echo plus realized imbalance statistics.
        std::ostringstream m;
        m << "manifest v1\n";
        m << "environment\t" << cfg.environment << "\n";
        m << "seed\t" << seed << "\n";
        m << "n_states\t" << env.mdp.n_states << "\n";
        m << "n_actions\t" << env.mdp.n_actions << "\n";
        m << "n_episodes\t" << cfg.n_episodes << "\n";
        m << "records\t" << ds.size() << "\n";
        m << "split\t" << g9(cfg.split[0]) << "\t" << g9(cfg.split[1]) << "\t" << g9(cfg.split[2])
          << "\n";
        m << "split_episodes\t" << parts[0].n_episodes() << "\t" << parts[1].n_episodes() << "\t"
          << parts[2].n_episodes() << "\n";
        long most = 0, least = static_cast<long>(ds.size());
        int most_action = 0;
        for (int a = 0; a < env.mdp.n_actions; ++a) {
            const long c = ds.action_counts()[a];
            m << "action_count\t" << a << "\t" << c << "\t"
              << g9(static_cast<double>(c) / static_cast<double>(ds.size())) << "\n";
            if (c > most) {
                most = c;
                most_action = a;
            }
            if (c > 0) least = std::min(least, c);
        }
        m << "most_common_action\t" << most_action << "\n";
        m << "imbalance_ratio\t" << g9(static_cast<double>(most) / static_cast<double>(least))
          << "\n";
        write_text_file(dir / "manifest.txt", m.str());
        std::printf("generated seed %llu: %zu records -> %s\n",
                    static_cast<unsigned long long>(seed), ds.size(), dir.string().c_str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {

FittedBehavior fit_seed_behavior(const ExperimentConfig& cfg, const EnvBundle& env,
                                 const TransitionDataset& train, std::uint64_t seed) {
    static constexpr bool kWeighting[] = {false, true};
    return fit_behavior_model(train, env.features, cfg.behavior_reg_grid, kWeighting,
                              derive_seed(seed, "behavior-model"));
}

struct CellResult {
    std::string family;
    int arch_index = 0;
    double val_wis = 0.0;
    QFunction q;
    std::vector<TrainLogEntry> log;
};

std::string arch_name(const std::vector<int>& hidden) {
    if (hidden.empty()) return "linear";
    std::string out;
    for (std::size_t i = 0; i < hidden.size(); ++i)
        out += (i ? "x" : "") + std::to_string(hidden[i]);
    return out;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto env = build_env(cfg);
    const auto grid = cfg.agent_grid();

    for (const auto seed : cfg.seeds) {
        const auto dir = seed_dir(cfg, seed);
        if (!fs::exists(dir / "train.tsv"))
            throw std::runtime_error("missing datasets for seed " + std::to_string(seed) +
                                     "; run generate first");
        const auto data = load_seed_data(cfg, env, seed);
        const auto behavior_fit = fit_seed_behavior(cfg, env, data.train, seed);

        // Resampled training sets, one per sampling plan in the grid.
        std::map<std::string, TransitionDataset> train_sets;
        train_sets.emplace("", data.train);
        fs::create_directories(dir / "sampling");
        for (const auto& spec : grid) {
            if (!spec.sampling) continue;
            SamplingPlan plan = *spec.sampling;
            plan.strata_keys = strata_key_positions(data.train);
            plan.seed = derive_seed(seed, "resample|" + spec.name);
            auto [resampled, report] = resample(data.train, plan);
            std::ostringstream os;
            save_sampling_report(report, os);
            write_text_file(dir / "sampling" / (spec.name + ".tsv"), os.str());
            train_sets.emplace(spec.name, std::move(resampled));
        }

        // Train every (family, architecture) cell.
        std::vector<CellResult> results(grid.size() * cfg.architectures.size());
        std::vector<std::function<void()>> jobs;
        std::mutex log_mutex;
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            for (std::size_t ai = 0; ai < cfg.architectures.size(); ++ai) {
                jobs.push_back([&, gi, ai] {
                    const auto& spec = grid[gi];
                    const auto& train_set =
                        train_sets.at(spec.sampling ? spec.name : std::string{});
                    TrainConfig tc;
                    tc.algorithm = spec.algorithm;
                    tc.alpha = spec.alpha;
                    tc.gamma = cfg.env_gamma();
                    tc.batch_size = std::min<int>(cfg.batch_size,
                                                  static_cast<int>(train_set.size()));
                    tc.n_gradient_steps = cfg.n_gradient_steps;
                    tc.target_sync_interval = cfg.target_sync_interval;
                    tc.learning_rate = cfg.learning_rate;
                    tc.hidden = cfg.architectures[ai];
                    tc.seed = derive_seed(seed, spec.name + "|arch" + std::to_string(ai));

                    CellResult& cell = results[gi * cfg.architectures.size() + ai];
                    cell.family = spec.name;
                    cell.arch_index = static_cast<int>(ai);
                    try {
                        auto agent = train(train_set, tc);
                        const auto target =
                            soften(agent.greedy, cfg.softening_epsilon).to_stochastic();
                        cell.val_wis = wis(data.valid, target, behavior_fit.model, env.features,
                                           cfg.env_gamma())
                                           .wis;
                        cell.q = std::move(agent.q);
                        cell.log = std::move(agent.log);
                    } catch (const TrainingError& e) {
                        // A diverged cell loses model selection but must not
                        // kill the sweep.
                        std::lock_guard<std::mutex> hold(log_mutex);
                        std::printf("seed %llu %s arch %zu aborted: %s\n",
                                    static_cast<unsigned long long>(seed), spec.name.c_str(), ai,
                                    e.what());
                        cell.val_wis = -std::numeric_limits<double>::infinity();
                    }
                });
            }
        }
        run_jobs(cfg.workers, std::move(jobs));

        // Model selection: highest validation WIS per family.
        std::ostringstream sel;
        sel << "family\tarch\tval_wis\tselected\n";
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            std::size_t best = 0;
            for (std::size_t ai = 1; ai < cfg.architectures.size(); ++ai) {
                if (results[gi * cfg.architectures.size() + ai].val_wis >
                    results[gi * cfg.architectures.size() + best].val_wis)
                    best = ai;
            }
            const auto family_dir = dir / "agents" / grid[gi].name;
            fs::create_directories(family_dir);
            for (std::size_t ai = 0; ai < cfg.architectures.size(); ++ai) {
                const auto& cell = results[gi * cfg.architectures.size() + ai];
                sel << cell.family << "\t" << arch_name(cfg.architectures[ai]) << "\t"
                    << g9(cell.val_wis) << "\t" << (ai == best ? 1 : 0) << "\n";
                if (ai == best && std::isfinite(cell.val_wis)) {
                    cell.q.save_file((family_dir / "checkpoint.txt").string());
                    std::ostringstream lg;
                    save_train_log(cell.log, lg);
                    write_text_file(family_dir / "trainlog.tsv", lg.str());
                }
            }
        }
        write_text_file(dir / "selection.tsv", sel.str());
        std::printf("trained seed %llu: %zu families x %zu architectures\n",
                    static_cast<unsigned long long>(seed), grid.size(),
                    cfg.architectures.size());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

namespace {

struct MetricAccumulator {
    std::map<std::pair<std::string, std::string>, std::vector<double>> values;

    void add(const std::string& agent, const std::string& metric, double v) {
        values[{agent, metric}].push_back(v);
    }
    void add_optional(const std::string& agent, const std::string& metric,
                      const std::optional<double>& v) {
        if (v) add(agent, metric, *v);
    }
};

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

const char* const kPalette[] = {"#4c78a8", "#f58518", "#e45756", "#72b7b2", "#54a24b",
                                "#eeca3b", "#b279a2", "#ff9da6", "#9d755d", "#bab0ac",
                                "#2f4b7c", "#a05195", "#d45087", "#f95d6a"};

// Grouped bar chart of per-action shares, one color per series.
std::string svg_action_distribution(const std::vector<std::string>& series_names,
                                    const std::vector<std::vector<double>>& shares,
                                    int n_actions) {
    const int margin = 46, legend = 24 + 16 * static_cast<int>(series_names.size());
    const int plot_w = std::max(560, 30 * n_actions), plot_h = 260;
    const int width = plot_w + 2 * margin, height = plot_h + 2 * margin + legend;
    double peak = 0.0;
    for (const auto& row : shares)
        for (double v : row) peak = std::max(peak, v);
    if (peak <= 0.0) peak = 1.0;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << margin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
      << "Recommended-action distribution</text>\n";
    const double group_w = static_cast<double>(plot_w) / n_actions;
    const double bar_w = group_w * 0.9 / static_cast<double>(series_names.size());
    for (int a = 0; a < n_actions; ++a) {
        for (std::size_t k = 0; k < series_names.size(); ++k) {
            const double v = shares[k][a];
            const double h = v / peak * plot_h;
            const double x = margin + a * group_w + k * bar_w;
            const double y = margin + plot_h - h;
            char buf[200];
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" "
                          "fill=\"%s\"/>\n",
                          x, y, bar_w, h, kPalette[k % 14]);
            s << buf;
        }
        s << "<text x=\"" << (margin + a * group_w + group_w / 2) << "\" y=\""
          << (margin + plot_h + 16) << "\" font-family=\"sans-serif\" font-size=\"10\" "
          << "text-anchor=\"middle\">" << a << "</text>\n";
    }
    s << "<line x1=\"" << margin << "\" y1=\"" << (margin + plot_h) << "\" x2=\""
      << (margin + plot_w) << "\" y2=\"" << (margin + plot_h)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (std::size_t k = 0; k < series_names.size(); ++k) {
        const int y = margin + plot_h + 34 + static_cast<int>(k) * 16;
        s << "<rect x=\"" << margin << "\" y=\"" << (y - 10)
          << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[k % 14] << "\"/>\n";
        s << "<text x=\"" << (margin + 18) << "\" y=\"" << y
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << series_names[k] << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

// Dose-grid heatmap; cell opacity follows the recommendation frequency.
std::string svg_dose_heatmap(const std::string& title, const std::vector<double>& freq, int U,
                             int V) {
    const int margin = 56, cell = 44;
    const int width = margin * 2 + V * cell, height = margin * 2 + U * cell + 20;
    double peak = 0.0;
    for (double v : freq) peak = std::max(peak, v);
    if (peak <= 0.0) peak = 1.0;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << margin << "\" y=\"26\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
    for (int u = 0; u < U; ++u) {
        for (int v = 0; v < V; ++v) {
            const double f = freq[static_cast<std::size_t>(u) * V + v];
            char buf[260];
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"#c7522a\" "
                          "fill-opacity=\"%.4f\" stroke=\"#888\"/>\n",
                          margin + v * cell, margin + (U - 1 - u) * cell, cell, cell, f / peak);
            s << buf;
            std::snprintf(buf, sizeof(buf),
                          "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"10\" "
                          "text-anchor=\"middle\">%.3f</text>\n",
                          margin + v * cell + cell / 2, margin + (U - 1 - u) * cell + cell / 2 + 4,
                          f);
            s << buf;
        }
    }
    for (int v = 0; v < V; ++v)
        s << "<text x=\"" << (margin + v * cell + cell / 2) << "\" y=\"" << (margin + U * cell + 16)
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">v" << v
          << "</text>\n";
    for (int u = 0; u < U; ++u)
        s << "<text x=\"" << (margin - 10) << "\" y=\"" << (margin + (U - 1 - u) * cell + cell / 2)
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">u" << u
          << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

}  // namespace

int cmd_evaluate(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto env = build_env(cfg);
    const auto grid = cfg.agent_grid();
    const auto report_dir = fs::path(cfg.output_dir) / "report";
    fs::create_directories(report_dir);

    MetricAccumulator acc;
    std::map<std::pair<std::string, std::string>, std::vector<double>> csr_acc;
    std::map<std::string, std::vector<double>> action_share;  // series -> per-action mean share
    std::vector<std::string> missing;

    const auto vt_opt = value_iteration(env.mdp);
    const auto vt_copt = constrained_value_iteration(env.mdp);
    acc.add("oracle_optimum", "oracle_value_unconstrained", initial_value(env.mdp, vt_opt));
    acc.add("oracle_optimum", "oracle_value_constrained", initial_value(env.mdp, vt_copt));

    for (const auto seed : cfg.seeds) {
        const auto dir = seed_dir(cfg, seed);
        const auto data = load_seed_data(cfg, env, seed);
        const auto behavior_fit = fit_seed_behavior(cfg, env, data.train, seed);

        // Standard-of-care reference: the empirical behavior mode.
        const auto empirical = empirical_behavior_policy(data.train, 0.0);
        std::vector<int> soc_actions(env.mdp.n_states);
        for (int s = 0; s < env.mdp.n_states; ++s) soc_actions[s] = empirical.mode(s);
        const auto soc =
            Policy::make_deterministic(env.mdp.n_states, env.mdp.n_actions, soc_actions);

        struct Row {
            std::string name;
            Policy unconstrained;
            Policy constrained;
        };
        std::vector<Row> rows;
        rows.push_back({"soc", soc, soc});
        for (const auto& spec : grid) {
            const auto ckpt = dir / "agents" / spec.name / "checkpoint.txt";
            if (!fs::exists(ckpt)) {
                missing.push_back(ckpt.string());
                continue;
            }
            auto q = QFunction::load_file(ckpt.string(), env.mdp.n_states, env.mdp.n_actions);
            const auto unconstrained = greedy_policy(q);
            const auto constrained_pi =
                ConstrainedPolicyView(q, feasible_from_mdp(env.mdp)).to_policy();
            rows.push_back({spec.name, unconstrained, constrained_pi});
        }

        for (const auto& row : rows) {
            for (const bool constrained : {false, true}) {
                const auto& pi = constrained ? row.constrained : row.unconstrained;
                const std::string suffix = constrained ? "_constrained" : "_unconstrained";
                acc.add(row.name, "concordance" + suffix, model_concordance(data.test, pi, soc));
                const auto target = soften(pi, cfg.softening_epsilon).to_stochastic();
                acc.add(row.name, "wis" + suffix,
                        wis(data.test, target, behavior_fit.model, env.features, cfg.env_gamma())
                            .wis);
                if (env.out_of_control)
                    acc.add_optional(row.name, "appropriate_intensification" + suffix,
                                     appropriate_intensification(data.test, pi,
                                                                 env.out_of_control,
                                                                 env.non_intensifying));
                acc.add(row.name, "oracle_value" + suffix,
                        initial_value(env.mdp, policy_evaluation(env.mdp, pi)));
                for (const auto& rule : env.rules.rules) {
                    const auto rate = constraint_satisfaction_rate(data.test, pi, rule);
                    if (rate)
                        csr_acc[{row.name, rule.name + suffix}].push_back(*rate);
                }
            }
            // Action distribution over test records (unconstrained policy).
            auto& share = action_share[row.name];
            share.resize(env.mdp.n_actions, 0.0);
            std::vector<double> local(env.mdp.n_actions, 0.0);
            for (const auto& r : data.test.records()) local[row.unconstrained.mode(r.state)] += 1.0;
            for (int a = 0; a < env.mdp.n_actions; ++a)
                share[a] += local[a] / static_cast<double>(data.test.size()) /
                            static_cast<double>(cfg.seeds.size());
        }
        // Logged actions and the true stochastic behavior value, for context.
        auto& logged = action_share["logged"];
        logged.resize(env.mdp.n_actions, 0.0);
        for (const auto& r : data.test.records())
            logged[r.action] += 1.0 / static_cast<double>(data.test.size()) /
                                static_cast<double>(cfg.seeds.size());
        acc.add("behavior_stochastic", "oracle_value_unconstrained",
                initial_value(env.mdp, policy_evaluation(env.mdp, env.behavior)));
    }

    // Flat metric table: agent, metric, mean, std, n, notes.
    {
        std::ostringstream os;
        os << "agent\tmetric\tmean\tstd\tn_seeds\tnotes\n";
        for (const auto& [key, vals] : acc.values) {
            os << key.first << "\t" << key.second << "\t" << g9(mean_of(vals)) << "\t"
               << g9(std_of(vals)) << "\t" << vals.size() << "\t-\n";
        }
        write_text_file(report_dir / "metrics.tsv", os.str());
    }
    {
        std::ostringstream os;
        os << "agent\trule\tmean\tstd\tn_seeds\n";
        for (const auto& [key, vals] : csr_acc)
            os << key.first << "\t" << key.second << "\t" << g9(mean_of(vals)) << "\t"
               << g9(std_of(vals)) << "\t" << vals.size() << "\n";
        write_text_file(report_dir / "csr.tsv", os.str());
    }
    // Combined selection table across seeds.
    {
        std::ostringstream os;
        os << "seed\tfamily\tarch\tval_wis\tselected\n";
        for (const auto seed : cfg.seeds) {
            std::ifstream is(seed_dir(cfg, seed) / "selection.tsv");
            std::string line;
            std::getline(is, line);  // header
            while (std::getline(is, line))
                if (!line.empty()) os << seed << "\t" << line << "\n";
        }
        write_text_file(report_dir / "selection.tsv", os.str());
    }
    // Charts.
    {
        std::vector<std::string> names;
        std::vector<std::vector<double>> shares;
        for (const auto& [name, share] : action_share) {
            names.push_back(name);
            shares.push_back(share);
        }
        write_text_file(report_dir / "action_dist.svg",
                        svg_action_distribution(names, shares, env.mdp.n_actions));
        if (env.is_critical) {
            for (const auto& [name, share] : action_share)
                write_text_file(report_dir / ("heatmap_" + name + ".svg"),
                                svg_dose_heatmap(name, share, env.n_fluid_bins, env.n_vaso_bins));
        }
    }

    if (!missing.empty()) {
        std::printf("missing checkpoints (%zu):\n", missing.size());
        for (const auto& m : missing) std::printf("  %s\n", m.c_str());
        return 1;
    }
    std::printf("evaluation written to %s\n", report_dir.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

namespace {

struct PropertyResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

MdpSpec check_random_mdp(Rng& rng, int S, int A, double gamma, int horizon) {
    MdpSpec m = make_blank_mdp(S, A, gamma, horizon);
    m.r_lo = -1.0;
    m.r_hi = 1.0;
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            double total = 0.0;
            std::vector<double> row(S);
            for (int sn = 0; sn < S; ++sn) total += row[sn] = rng.uniform() + 1e-3;
            for (int sn = 0; sn < S; ++sn) m.p(s, a, sn) = row[sn] / total;
            m.r(s, a) = rng.uniform(-1.0, 1.0);
        }
        bool any = false;
        for (int a = 0; a < A; ++a) {
            const bool f = rng.uniform() < 0.6;
            m.feasible_mask[static_cast<std::size_t>(s) * A + a] = f;
            any = any || f;
        }
        if (!any) m.feasible_mask[static_cast<std::size_t>(s) * A + rng.uniform_int(A)] = 1;
    }
    double total = 0.0;
    for (int s = 0; s < S; ++s) total += m.initial_dist[s] = rng.uniform() + 1e-3;
    for (int s = 0; s < S; ++s) m.initial_dist[s] /= total;
    m.validate();
    return m;
}

PropertyResult property_bound(int instances) {
    Rng rng(2024);
    double min_slack = 1e300;
    for (int i = 0; i < instances; ++i) {
        const auto mdp = check_random_mdp(rng, 8, 3, rng.uniform(0.3, 0.95),
                                          3 + static_cast<int>(rng.uniform_int(10)));
        auto q = QFunction::make_tabular(8, 3);
        for (double& v : q.params()) v = rng.uniform(-1.0, 1.0);
        TrainedAgent agent{std::move(q), Policy{}, {}};
        agent.greedy = greedy_policy(agent.q);
        const auto report = check_property1(mdp, agent);
        min_slack = std::min(min_slack, report.slack);
        if (!report.holds)
            return {"optimality_gap_bound", false,
                    "violated at instance " + std::to_string(i) + ", slack " + g9(report.slack)};
    }
    return {"optimality_gap_bound", true,
            std::to_string(instances) + " instances, min slack " + g9(min_slack)};
}

PropertyResult property_gradients() {
    Rng rng(77);
    const auto mdp = check_random_mdp(rng, 6, 3, 0.9, 6);
    const auto ds = rollout(mdp, Policy::uniform(6, 3), 60, 5);
    std::vector<std::size_t> idx(48);
    for (auto& i : idx) i = rng.uniform_int(ds.size());
    const int hidden[] = {10, 6};
    auto q = QFunction::make_network(6, 3, hidden, 11);
    const auto q_tgt = QFunction::make_network(6, 3, hidden, 12);

    double worst = 0.0;
    const auto probe = [&](const std::vector<double>& grad,
                           const std::function<double(const QFunction&)>& loss) {
        Rng probe_rng(13);
        auto& params = q.params();
        for (int k = 0; k < 64; ++k) {
            const std::size_t i = probe_rng.uniform_int(params.size());
            const double saved = params[i];
            const double h = 1e-5;
            params[i] = saved + h;
            const double up = loss(q);
            params[i] = saved - h;
            const double down = loss(q);
            params[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
            worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
        }
    };

    const auto y_plain = bellman_target(q_tgt, ds, idx, 0.9);
    probe(td_loss_grad(q, y_plain, ds, idx).grad, [&](const QFunction& qq) {
        double total = 0.0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double d = qq.forward(ds[idx[i]].state)[ds[idx[i]].action] - y_plain[i];
            total += 0.5 * d * d;
        }
        return total / static_cast<double>(idx.size());
    });
    const auto y_ddqn = ddqn_target(q, q_tgt, ds, idx, 0.9);
    probe(td_loss_grad(q, y_ddqn, ds, idx).grad, [&](const QFunction& qq) {
        double total = 0.0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double d = qq.forward(ds[idx[i]].state)[ds[idx[i]].action] - y_ddqn[i];
            total += 0.5 * d * d;
        }
        return total / static_cast<double>(idx.size());
    });
    probe(cql_loss_grad(q, y_plain, ds, idx, 0.8).grad, [&](const QFunction& qq) {
        double gap = 0.0, bell = 0.0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto row = qq.forward(ds[idx[i]].state);
            const double mx = *std::max_element(row.begin(), row.end());
            double z = 0.0;
            for (double v : row) z += std::exp(v - mx);
            gap += mx + std::log(z) - row[ds[idx[i]].action];
            const double d = row[ds[idx[i]].action] - y_plain[i];
            bell += 0.5 * d * d;
        }
        return (0.8 * gap + bell) / static_cast<double>(idx.size());
    });

    return {"analytic_gradients", worst < 1e-4, "max relative error " + g9(worst)};
}

PropertyResult property_sampling(const ExperimentConfig& cfg) {
    auto env = build_env(cfg);
    const auto ds = rollout(env.mdp, env.behavior, 2500, 99, env.realized_reward, env.tagger);
    for (const auto mode : {SamplingPlan::Mode::under, SamplingPlan::Mode::over,
                            SamplingPlan::Mode::underover}) {
        SamplingPlan plan;
        plan.mode = mode;
        plan.k = 0.8;
        plan.strata_keys = strata_key_positions(ds);
        plan.seed = 7;
        const auto [out, rep] = resample(ds, plan);
        const auto report = verify_transition_preservation(ds, out, 0.0, 50, 3.0);
        if (!report.ok())
            return {"sampling_preservation", false,
                    sampling_mode_name(mode) + ": " +
                        std::to_string(report.violations.size()) + " of " +
                        std::to_string(report.pairs_checked) + " pairs out of tolerance"};
    }
    return {"sampling_preservation", true, "3 modes within 3x binomial standard error"};
}

PropertyResult property_wis_norm(const ExperimentConfig& cfg) {
    auto env = build_env(cfg);
    const auto ds = rollout(env.mdp, env.behavior, 400, 55, env.realized_reward, env.tagger);
    const auto greedy = value_iteration_inf(env.mdp).greedy_policy();
    const auto target = soften(greedy, cfg.softening_epsilon).to_stochastic();
    const auto report = wis(ds, target, env.behavior, cfg.env_gamma());
    double norm = 0.0;
    for (const auto& ep : report.episodes) norm += ep.norm_weight;
    const double err = std::abs(norm - static_cast<double>(report.n_episodes));
    return {"wis_self_normalization", err < 1e-9 * static_cast<double>(report.n_episodes),
            "sum of normalized weights off by " + g9(err)};
}

PropertyResult property_constrained_view(const ExperimentConfig& cfg) {
    auto env = build_env(cfg);
    Rng rng(31);
    const auto ds = rollout(env.mdp, env.behavior, 200, 77, env.realized_reward, env.tagger);
    for (int trial = 0; trial < 10; ++trial) {
        auto q = QFunction::make_tabular(env.mdp.n_states, env.mdp.n_actions);
        for (double& v : q.params()) v = rng.uniform(-1.0, 1.0);
        const ConstrainedPolicyView view(q, feasible_from_mdp(env.mdp));
        const auto pi = view.to_policy();
        for (const auto& rule : env.rules.rules) {
            const auto rate = constraint_satisfaction_rate(ds, pi, rule);
            if (rate && *rate != 1.0)
                return {"constrained_execution", false, "constrained view violated " + rule.name};
        }
        int disagreements = 0, infeasible = 0;
        for (int s = 0; s < env.mdp.n_states; ++s) {
            const int u = view.unconstrained_action(s);
            if (pi.action_table[s] != u) ++disagreements;
            if (!env.mdp.feasible(s, u)) ++infeasible;
        }
        if (disagreements != infeasible)
            return {"constrained_execution", false, "coincidence count mismatch"};
    }
    return {"constrained_execution", true, "CSR 1.0 and coincidence counts equal on 10 agents"};
}

PropertyResult property_determinism(const ExperimentConfig& cfg) {
    auto env = build_env(cfg);
    const auto a = rollout(env.mdp, env.behavior, 50, 3, env.realized_reward, env.tagger);
    const auto b = rollout(env.mdp, env.behavior, 50, 3, env.realized_reward, env.tagger);
    if (!(a.records() == b.records())) return {"determinism", false, "rollout mismatch"};

    SamplingPlan plan;
    plan.mode = SamplingPlan::Mode::underover;
    plan.strata_keys = strata_key_positions(a);
    plan.seed = 5;
    if (!(resample(a, plan).first.records() == resample(b, plan).first.records()))
        return {"determinism", false, "resample mismatch"};

    TrainConfig tc;
    tc.algorithm = Algorithm::cql;
    tc.alpha = 1.0;
    tc.gamma = cfg.env_gamma();
    tc.tabular = true;
    tc.batch_size = 32;
    tc.n_gradient_steps = 200;
    tc.learning_rate = 0.05;
    tc.seed = 9;
    if (!(train(a, tc).q.params() == train(b, tc).q.params()))
        return {"determinism", false, "training mismatch"};
    return {"determinism", true, "rollout, resample, and training bit-identical"};
}

}  // namespace

int cmd_check(const ExperimentConfig& cfg, bool inject_fault) {
    cfg.validate();
    std::vector<PropertyResult> results;
    results.push_back(property_bound(100));
    results.push_back(property_gradients());
    results.push_back(property_sampling(cfg));
    results.push_back(property_wis_norm(cfg));
    results.push_back(property_constrained_view(cfg));
    results.push_back(property_determinism(cfg));
    if (inject_fault)
        results.push_back({"fault_injection", false, "forced failure for exit-code testing"});

    bool all_passed = true;
    for (const auto& r : results) {
        std::printf("[%s] %s (%s)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
        all_passed = all_passed && r.passed;
    }
    std::printf("%zu properties, %s\n", results.size(), all_passed ? "all passed" : "FAILURES");
    return all_passed ? 0 : 1;
}

int cmd_all(const ExperimentConfig& cfg) {
    if (int rc = cmd_generate(cfg)) return rc;
    if (int rc = cmd_train(cfg)) return rc;
    if (int rc = cmd_evaluate(cfg)) return rc;
    return cmd_check(cfg);
}

}  // namespace orl
