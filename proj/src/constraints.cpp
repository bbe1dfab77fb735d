#include "orl/constraints.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace orl {

FeasibleFn feasible_from_mdp(const MdpSpec& mdp) {
    const int A = mdp.n_actions;
    const auto mask = mdp.feasible_mask;
    return [mask, A](int s, int a) {
        return mask[static_cast<std::size_t>(s) * A + a] != 0;
    };
}

FeasibleFn feasible_from_rules(const ConstraintRuleSet& rules) {
    return [rules](int s, int a) { return rules.allows(s, a); };
}

ConstrainedPolicyView::ConstrainedPolicyView(const QFunction& q, FeasibleFn feasible)
    : q_(&q), feasible_(std::move(feasible)) {}

int ConstrainedPolicyView::action(int state) const {
    const auto row = q_->forward(state);
    int best = -1;
    for (int a = 0; a < q_->n_actions(); ++a) {
        if (!feasible_(state, a)) continue;
        if (best < 0 || row[a] > row[best]) best = a;
    }
    if (best < 0)
        throw std::invalid_argument("ConstrainedPolicyView: empty feasible set at state " +
                                    std::to_string(state));
    return best;
}

int ConstrainedPolicyView::unconstrained_action(int state) const {
    const auto row = q_->forward(state);
    int best = 0;
    for (int a = 1; a < q_->n_actions(); ++a)
        if (row[a] > row[best]) best = a;
    return best;
}

Policy ConstrainedPolicyView::to_policy() const {
    std::vector<int> actions(q_->n_states());
    for (int s = 0; s < q_->n_states(); ++s) actions[s] = action(s);
    return Policy::make_deterministic(q_->n_states(), q_->n_actions(), std::move(actions));
}

ConstrainedPolicyView constrain(const TrainedAgent& agent, FeasibleFn feasible) {
    return ConstrainedPolicyView(agent.q, std::move(feasible));
}

double violation_probability(const MdpSpec& mdp, const Policy& policy) {
    if (policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions)
        throw std::invalid_argument("violation_probability: policy shape mismatch");
    const int S = mdp.n_states, A = mdp.n_actions;
    std::vector<double> mass = mdp.initial_dist;
    std::vector<double> next(S, 0.0);
    double violated = 0.0;

    for (int t = 0; t < mdp.horizon; ++t) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < S; ++s) {
            const double d = mass[s];
            if (d == 0.0) continue;
            if (mdp.terminal(s)) {
                next[s] += d;  // episode over; parked safely
                continue;
            }
            for (int a = 0; a < A; ++a) {
                const double pa = policy.prob(s, a);
                if (pa == 0.0) continue;
                if (!mdp.feasible(s, a)) {
                    violated += d * pa;  // absorbed into the violation flag
                    continue;
                }
                const auto dist = mdp.next_dist(s, a);
                for (int sn = 0; sn < S; ++sn) next[sn] += d * pa * dist[sn];
            }
        }
        mass.swap(next);
    }
    return violated;
}

BoundReport check_property1(const MdpSpec& mdp, const TrainedAgent& agent) {
    if (!(mdp.gamma < 1.0))
        throw std::invalid_argument("check_property1: needs gamma < 1");
    const Policy pi_rl = agent.greedy;
    const Policy pi_rl_c = constrain(agent, feasible_from_mdp(mdp)).to_policy();

    const double v_opt = initial_value(mdp, value_iteration(mdp));
    const double v_copt = initial_value(mdp, constrained_value_iteration(mdp));
    const double v_rl = initial_value(mdp, policy_evaluation(mdp, pi_rl));
    const double v_rl_c = initial_value(mdp, policy_evaluation(mdp, pi_rl_c));

    BoundReport report;
    report.lhs = v_copt - v_rl_c;
    report.unconstrained_gap = v_opt - v_rl;
    report.violation_prob = violation_probability(mdp, pi_rl);
    // Published form: the per-step constant is summed over t = 0..T.
    report.rhs = (mdp.r_hi - mdp.r_lo) / (1.0 - mdp.gamma) * (mdp.horizon + 1) *
                     report.violation_prob +
                 report.unconstrained_gap;
    report.slack = report.rhs - report.lhs;
    report.holds = report.slack >= -1e-9;
    return report;
}

void save_bound_report(const BoundReport& report, std::ostream& os) {
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "lhs\t%.9g\nviolation_prob\t%.9g\nunconstrained_gap\t%.9g\nrhs\t%.9g\n"
                  "slack\t%.9g\nholds\t%d\n",
                  report.lhs, report.violation_prob, report.unconstrained_gap, report.rhs,
                  report.slack, report.holds ? 1 : 0);
    os << buf;
}

}  // namespace orl
