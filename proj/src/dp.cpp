#include "orl/dp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace orl {

namespace {

// Shared backward-induction core. `select` reduces a q-row to the state value.
template <typename Select>
ValueTable backward_induction(const MdpSpec& mdp, Select select) {
    const int S = mdp.n_states, A = mdp.n_actions, T = mdp.horizon;
    ValueTable vt;
    vt.n_states = S;
    vt.n_actions = A;
    vt.horizon = T;
    vt.v.assign(static_cast<std::size_t>(T + 1) * S, 0.0);
    vt.q.assign(static_cast<std::size_t>(T) * S * A, 0.0);

    for (int t = T - 1; t >= 0; --t) {
        const double* v_next = vt.v.data() + static_cast<std::size_t>(t + 1) * S;
        double* v_now = vt.v.data() + static_cast<std::size_t>(t) * S;
        double* q_now = vt.q.data() + static_cast<std::size_t>(t) * S * A;
        for (int s = 0; s < S; ++s) {
            if (mdp.terminal(s)) continue;  // zero value, zero q
            double* q_row = q_now + static_cast<std::size_t>(s) * A;
            for (int a = 0; a < A; ++a) {
                double exp_next = 0.0;
                const auto dist = mdp.next_dist(s, a);
                for (int sn = 0; sn < S; ++sn) exp_next += dist[sn] * v_next[sn];
                q_row[a] = mdp.r(s, a) + mdp.gamma * exp_next;
            }
            v_now[s] = select(s, q_row);
        }
    }
    return vt;
}

double max_over(const double* q_row, int n) {
    double best = q_row[0];
    for (int a = 1; a < n; ++a) best = std::max(best, q_row[a]);
    return best;
}

}  // namespace

int ValueTable::greedy_action(int s, int t) const {
    int best = 0;
    double best_q = qvalue(s, 0, t);
    for (int a = 1; a < n_actions; ++a) {
        if (qvalue(s, a, t) > best_q) {
            best_q = qvalue(s, a, t);
            best = a;
        }
    }
    return best;
}

Policy ValueTable::greedy_policy(int t) const {
    std::vector<int> actions(n_states);
    for (int s = 0; s < n_states; ++s) actions[s] = greedy_action(s, t);
    return Policy::make_deterministic(n_states, n_actions, std::move(actions));
}

int StationaryValues::greedy_action(int s) const {
    int best = 0;
    double best_q = qvalue(s, 0);
    for (int a = 1; a < n_actions; ++a) {
        if (qvalue(s, a) > best_q) {
            best_q = qvalue(s, a);
            best = a;
        }
    }
    return best;
}

Policy StationaryValues::greedy_policy() const {
    std::vector<int> actions(n_states);
    for (int s = 0; s < n_states; ++s) actions[s] = greedy_action(s);
    return Policy::make_deterministic(n_states, n_actions, std::move(actions));
}

ValueTable value_iteration(const MdpSpec& mdp) {
    return backward_induction(mdp, [&](int /*s*/, const double* q_row) {
        return max_over(q_row, mdp.n_actions);
    });
}

ValueTable constrained_value_iteration(const MdpSpec& mdp) {
    return backward_induction(mdp, [&](int s, const double* q_row) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < mdp.n_actions; ++a)
            if (mdp.feasible(s, a)) best = std::max(best, q_row[a]);
        if (!std::isfinite(best))
            throw std::invalid_argument("constrained_value_iteration: empty feasible set");
        return best;
    });
}

ValueTable policy_evaluation(const MdpSpec& mdp, const Policy& policy) {
    if (policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions)
        throw std::invalid_argument("policy_evaluation: policy shape does not match MDP");
    return backward_induction(mdp, [&](int s, const double* q_row) {
        double v = 0.0;
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double pa = policy.prob(s, a);
            if (pa != 0.0) v += pa * q_row[a];
        }
        return v;
    });
}

double initial_value(const MdpSpec& mdp, const ValueTable& vt) {
    double v = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) v += mdp.initial_dist[s] * vt.value(s, 0);
    return v;
}

namespace {

template <typename Select>
StationaryValues fixed_point(const MdpSpec& mdp, double tol, int max_iterations, Select select) {
    const int S = mdp.n_states, A = mdp.n_actions;
    StationaryValues sv;
    sv.n_states = S;
    sv.n_actions = A;
    sv.v.assign(S, 0.0);
    sv.q.assign(static_cast<std::size_t>(S) * A, 0.0);
    std::vector<double> v_new(S, 0.0);

    for (int it = 0; it < max_iterations; ++it) {
        double residual = 0.0;
        for (int s = 0; s < S; ++s) {
            if (mdp.terminal(s)) {
                v_new[s] = 0.0;
                continue;
            }
            double* q_row = sv.q.data() + static_cast<std::size_t>(s) * A;
            for (int a = 0; a < A; ++a) {
                double exp_next = 0.0;
                const auto dist = mdp.next_dist(s, a);
                for (int sn = 0; sn < S; ++sn) exp_next += dist[sn] * sv.v[sn];
                q_row[a] = mdp.r(s, a) + mdp.gamma * exp_next;
            }
            v_new[s] = select(s, q_row);
            residual = std::max(residual, std::abs(v_new[s] - sv.v[s]));
        }
        sv.v = v_new;
        sv.iterations = it + 1;
        sv.residual = residual;
        if (residual < tol) break;
    }
    return sv;
}

}  // namespace

StationaryValues value_iteration_inf(const MdpSpec& mdp, bool constrained, double tol,
                                     int max_iterations) {
    if (!constrained) {
        return fixed_point(mdp, tol, max_iterations, [&](int /*s*/, const double* q_row) {
            return max_over(q_row, mdp.n_actions);
        });
    }
    return fixed_point(mdp, tol, max_iterations, [&](int s, const double* q_row) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < mdp.n_actions; ++a)
            if (mdp.feasible(s, a)) best = std::max(best, q_row[a]);
        return best;
    });
}

StationaryValues policy_evaluation_inf(const MdpSpec& mdp, const Policy& policy, double tol,
                                       int max_iterations) {
    return fixed_point(mdp, tol, max_iterations, [&](int s, const double* q_row) {
        double v = 0.0;
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double pa = policy.prob(s, a);
            if (pa != 0.0) v += pa * q_row[a];
        }
        return v;
    });
}

void save_value_table(const ValueTable& vt, std::ostream& os) {
    os << "state\taction\tt\tq\n";
    char buf[40];
    for (int t = 0; t < vt.horizon; ++t)
        for (int s = 0; s < vt.n_states; ++s)
            for (int a = 0; a < vt.n_actions; ++a) {
                std::snprintf(buf, sizeof(buf), "%.9g", vt.qvalue(s, a, t));
                os << s << '\t' << a << '\t' << t << '\t' << buf << '\n';
            }
}

}  // namespace orl
