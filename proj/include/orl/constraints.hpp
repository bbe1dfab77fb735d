#pragma once

#include <functional>

#include "orl/dp.hpp"
#include "orl/envgen.hpp"
#include "orl/learners.hpp"
#include "orl/mdp.hpp"

namespace orl {

// State-dependent feasibility predicate.
using FeasibleFn = std::function<bool(int state, int action)>;

FeasibleFn feasible_from_mdp(const MdpSpec& mdp);
FeasibleFn feasible_from_rules(const ConstraintRuleSet& rules);

// Execution-time constraint enforcement: the feasible action with the highest
// learned Q value. Coincides with the unconstrained greedy action whenever
// that action is feasible.
class ConstrainedPolicyView {
public:
    ConstrainedPolicyView(const QFunction& q, FeasibleFn feasible);

    int action(int state) const;
    int unconstrained_action(int state) const;
    Policy to_policy() const;
    int n_states() const { return q_->n_states(); }
    int n_actions() const { return q_->n_actions(); }

private:
    const QFunction* q_;
    FeasibleFn feasible_;
};

ConstrainedPolicyView constrain(const TrainedAgent& agent, FeasibleFn feasible);

// Exact probability that a trajectory under `policy` ever selects an
// infeasible action within the horizon, by forward propagation of the state
// distribution with an absorbing violation flag.
double violation_probability(const MdpSpec& mdp, const Policy& policy);

// Numerical check of the published optimality-gap bound for constrained
// execution: lhs <= (r_hi-r_lo)/(1-gamma) * sum_t Pr[violation] + gap, all
// terms computed by exact dynamic programming.
struct BoundReport {
    double lhs = 0.0;                // E[V^{pi_c*}] - E[V^{pi_RL,c}]
    double violation_prob = 0.0;     // Pr[any infeasible action under pi_RL]
    double unconstrained_gap = 0.0;  // E[V^{pi*}] - E[V^{pi_RL}]
    double rhs = 0.0;
    double slack = 0.0;              // rhs - lhs
    bool holds = false;              // slack >= -1e-9
};

BoundReport check_property1(const MdpSpec& mdp, const TrainedAgent& agent);

void save_bound_report(const BoundReport& report, std::ostream& os);

}  // namespace orl
