#pragma once

#include <vector>

#include "orl/mdp.hpp"

namespace orl {

// Exact finite-horizon values from backward induction. Time index t runs
// 0..T-1 for q and 0..T for v, with v at T identically zero (the terminal
// convention); terminal states hold zero value at every t.
struct ValueTable {
    int n_states = 0;
    int n_actions = 0;
    int horizon = 0;
    std::vector<double> v;  // [(T+1)][s]
    std::vector<double> q;  // [T][s][a]

    double value(int s, int t) const { return v[static_cast<std::size_t>(t) * n_states + s]; }
    double qvalue(int s, int a, int t) const {
        return q[(static_cast<std::size_t>(t) * n_states + s) * n_actions + a];
    }
    // Greedy action at time t, lowest action id on ties.
    int greedy_action(int s, int t = 0) const;
    Policy greedy_policy(int t = 0) const;
};

// Stationary values from iterating the Bellman operator to a sup-norm
// residual; the infinite-horizon companion used by bound checks.
struct StationaryValues {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> v;  // [s]
    std::vector<double> q;  // [s][a]
    int iterations = 0;
    double residual = 0.0;

    double qvalue(int s, int a) const {
        return q[static_cast<std::size_t>(s) * n_actions + a];
    }
    int greedy_action(int s) const;
    Policy greedy_policy() const;
};

// Optimal Q*/V* for the finite-horizon discounted objective.
ValueTable value_iteration(const MdpSpec& mdp);

// Optimal values with the per-step max restricted to the feasible mask.
ValueTable constrained_value_iteration(const MdpSpec& mdp);

// Exact V^pi (and state-action values under pi) by backward induction.
ValueTable policy_evaluation(const MdpSpec& mdp, const Policy& policy);

// Expected value of the initial state distribution at t=0.
double initial_value(const MdpSpec& mdp, const ValueTable& vt);

// Infinite-horizon companions (fixed-point iteration to `tol` sup-norm).
StationaryValues value_iteration_inf(const MdpSpec& mdp, bool constrained = false,
                                     double tol = 1e-10, int max_iterations = 1000000);
StationaryValues policy_evaluation_inf(const MdpSpec& mdp, const Policy& policy,
                                       double tol = 1e-10, int max_iterations = 1000000);

// ValueTable export in the record text format: state, action, t, q per line.
void save_value_table(const ValueTable& vt, std::ostream& os);

}  // namespace orl
