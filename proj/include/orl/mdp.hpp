#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace orl {

constexpr double kProbTol = 1e-9;

// Finite MDP with a hard per-state feasible-action mask and declared reward
// bounds. Ground truth for generators, exact solvers, and bound checks.
struct MdpSpec {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> transition;     // [s][a][s'], rows sum to 1
    std::vector<double> reward;         // [s][a], expected immediate reward
    double gamma = 0.99;                // discount, in [0,1)
    int horizon = 1;                    // episode length cap T
    std::vector<double> initial_dist;   // over states, sums to 1
    std::vector<std::uint8_t> terminal_mask;   // per state
    std::vector<std::uint8_t> feasible_mask;   // [s][a], >=1 true per state
    double r_lo = 0.0;                  // declared reward bounds
    double r_hi = 0.0;

    double p(int s, int a, int sn) const {
        return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + sn];
    }
    double& p(int s, int a, int sn) {
        return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + sn];
    }
    std::span<const double> next_dist(int s, int a) const {
        return {transition.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
                static_cast<std::size_t>(n_states)};
    }
    double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
    double& r(int s, int a) { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
    bool feasible(int s, int a) const {
        return feasible_mask[static_cast<std::size_t>(s) * n_actions + a] != 0;
    }
    bool terminal(int s) const { return terminal_mask[s] != 0; }

    // Throws std::invalid_argument on any structural violation: non-stochastic
    // rows, empty feasible sets, rewards outside [r_lo, r_hi], bad gamma.
    void validate() const;
};

// Sized-but-empty spec with uniform initial distribution, all-true feasible
// mask, zero rewards, and no transitions filled in.
MdpSpec make_blank_mdp(int n_states, int n_actions, double gamma, int horizon);

struct Policy {
    enum class Kind { deterministic, stochastic };
    Kind kind = Kind::deterministic;
    int n_states = 0;
    int n_actions = 0;
    std::vector<int> action_table;   // deterministic: action per state
    std::vector<double> prob_table;  // stochastic: [s][a]

    static Policy make_deterministic(int n_states, int n_actions, std::vector<int> actions);
    static Policy make_stochastic(int n_states, int n_actions, std::vector<double> probs);
    static Policy uniform(int n_states, int n_actions);

    double prob(int s, int a) const {
        if (kind == Kind::deterministic) return action_table[s] == a ? 1.0 : 0.0;
        return prob_table[static_cast<std::size_t>(s) * n_actions + a];
    }
    std::span<const double> row(int s) const {
        return {prob_table.data() + static_cast<std::size_t>(s) * n_actions,
                static_cast<std::size_t>(n_actions)};
    }
    // Most likely action, lowest id on ties; the action itself if deterministic.
    int mode(int s) const;
    bool deterministic() const { return kind == Kind::deterministic; }

    void validate() const;
};

// Text round-trip for MdpSpec: nested key/value document with explicit tensor
// shapes, doubles at full precision.
void save_mdp(const MdpSpec& mdp, std::ostream& os);
void save_mdp_file(const MdpSpec& mdp, const std::string& path);
MdpSpec load_mdp(std::istream& is);
MdpSpec load_mdp_file(const std::string& path);

}  // namespace orl
