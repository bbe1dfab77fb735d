#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "orl/constraints.hpp"

using namespace orl;

namespace {

// Agent wrapper around a fixed tabular Q.
TrainedAgent agent_of(QFunction q) {
    TrainedAgent agent{std::move(q), Policy{}, {}};
    agent.greedy = greedy_policy(agent.q);
    return agent;
}

QFunction random_q(Rng& rng, int S, int A) {
    auto q = QFunction::make_tabular(S, A);
    for (double& v : q.params()) v = rng.uniform(-1.0, 1.0);
    return q;
}

// Monte-Carlo estimate of the violation probability, with its own simulator.
test::McEstimate mc_violation(const MdpSpec& mdp, const Policy& pi, long episodes,
                              std::uint64_t seed) {
    Rng rng(seed);
    double sum = 0.0;
    for (long e = 0; e < episodes; ++e) {
        int s = rng.categorical(mdp.initial_dist);
        bool violated = false;
        for (int t = 0; t < mdp.horizon && !violated; ++t) {
            if (mdp.terminal(s)) break;
            const int a = pi.deterministic() ? pi.action_table[s] : rng.categorical(pi.row(s));
            if (!mdp.feasible(s, a)) {
                violated = true;
                break;
            }
            s = rng.categorical(mdp.next_dist(s, a));
        }
        sum += violated ? 1.0 : 0.0;
    }
    test::McEstimate est;
    est.mean = sum / double(episodes);
    est.std_err = std::sqrt(est.mean * (1.0 - est.mean) / double(episodes));
    return est;
}

}  // namespace

TEST_SUITE("constraints") {

TEST_CASE("constrained view picks the best feasible action") {
    auto q = QFunction::make_tabular(1, 3);
    q.params() = {0.5, 1.0, 0.2};

    SUBCASE("argmax already feasible") {
        ConstrainedPolicyView view(q, [](int, int a) { return a == 0 || a == 1; });
        CHECK(view.action(0) == 1);
        CHECK(view.action(0) == view.unconstrained_action(0));
    }
    SUBCASE("argmax masked out") {
        ConstrainedPolicyView view(q, [](int, int a) { return a == 0 || a == 2; });
        CHECK(view.action(0) == 0);
    }
    SUBCASE("all feasible: identical to the unconstrained agent everywhere") {
        Rng rng(3);
        auto big = random_q(rng, 6, 4);
        const auto agent = agent_of(big);
        const auto view = constrain(agent, [](int, int) { return true; });
        for (int s = 0; s < 6; ++s) CHECK(view.action(s) == agent.greedy.action_table[s]);
    }
    SUBCASE("empty feasible set is rejected") {
        ConstrainedPolicyView view(q, [](int, int) { return false; });
        CHECK_THROWS_AS(view.action(0), std::invalid_argument);
    }
}

TEST_CASE("coincidence property: disagreements equal infeasible argmaxes") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto mdp = test::random_mdp(rng, 8, 4, 0.9, 5, -1.0, 1.0, true);
        const auto agent = agent_of(random_q(rng, 8, 4));
        const auto view = constrain(agent, feasible_from_mdp(mdp));
        int disagreements = 0, infeasible_argmax = 0;
        for (int s = 0; s < 8; ++s) {
            const int u = agent.greedy.action_table[s];
            if (view.action(s) != u) ++disagreements;
            if (!mdp.feasible(s, u)) ++infeasible_argmax;
        }
        CHECK(disagreements == infeasible_argmax);
    }
}

TEST_CASE("violation probability") {
    SUBCASE("always-feasible policy scores zero") {
        Rng rng(9);
        const auto mdp = test::random_mdp(rng, 5, 3, 0.9, 6, -1.0, 1.0, false);
        const auto pi = test::random_stochastic_policy(rng, 5, 3);
        CHECK(violation_probability(mdp, pi) == 0.0);
    }
    SUBCASE("infeasible action at a certain initial state scores one") {
        MdpSpec m = make_blank_mdp(2, 2, 0.9, 3);
        for (int s = 0; s < 2; ++s)
            for (int a = 0; a < 2; ++a) m.p(s, a, s) = 1.0;
        m.initial_dist = {1.0, 0.0};
        m.feasible_mask = {0, 1, 1, 1};  // action 0 forbidden at state 0
        m.validate();
        const auto pi = Policy::make_deterministic(2, 2, {0, 0});
        CHECK(violation_probability(m, pi) == 1.0);
    }
    SUBCASE("matches a Monte-Carlo estimate within 3 standard errors") {
        Rng rng(11);
        const auto mdp = test::random_mdp(rng, 10, 3, 0.9, 6, -1.0, 1.0, true);
        const auto pi = test::random_stochastic_policy(rng, 10, 3);
        const double exact = violation_probability(mdp, pi);
        const auto mc = mc_violation(mdp, pi, 100000, 13);
        CHECK(std::abs(mc.mean - exact) < 3.0 * mc.std_err + 1e-9);
    }
}

TEST_CASE("property-1 bound report") {
    Rng rng(15);
    SUBCASE("greedy on exact Q* with free masks has zero gaps") {
        // Action-independent transitions make the myopic argmax optimal at
        // every step, so a stationary agent can hold the exact optimum.
        auto mdp = test::random_mdp(rng, 6, 3, 0.9, 5, -1.0, 1.0, false);
        for (int s = 0; s < 6; ++s)
            for (int a = 1; a < 3; ++a)
                for (int sn = 0; sn < 6; ++sn) mdp.p(s, a, sn) = mdp.p(s, 0, sn);
        mdp.validate();
        auto q = QFunction::make_tabular(6, 3);
        for (int s = 0; s < 6; ++s)
            for (int a = 0; a < 3; ++a)
                q.params()[static_cast<std::size_t>(s) * 3 + a] = mdp.r(s, a);
        const auto report = check_property1(mdp, agent_of(std::move(q)));
        CHECK(report.violation_prob == 0.0);
        CHECK(std::abs(report.lhs) < 1e-9);
        CHECK(report.rhs >= 0.0);
        CHECK(report.holds);
    }
    SUBCASE("an always-feasible agent collapses the rhs to the unconstrained gap") {
        const auto mdp = test::random_mdp(rng, 6, 3, 0.9, 5, -1.0, 1.0, false);
        const auto report = check_property1(mdp, agent_of(random_q(rng, 6, 3)));
        CHECK(report.violation_prob == 0.0);
        CHECK(report.rhs == doctest::Approx(report.unconstrained_gap).epsilon(1e-12));
        CHECK(report.holds);
    }
    SUBCASE("holds on random instances with random masks") {
        for (int trial = 0; trial < 30; ++trial) {
            const auto mdp = test::random_mdp(rng, 8, 3, rng.uniform(0.3, 0.95),
                                              3 + int(rng.uniform_int(8)), -1.0, 1.0, true);
            const auto report = check_property1(mdp, agent_of(random_q(rng, 8, 3)));
            CHECK(report.holds);
            CHECK(report.slack >= -1e-9);
        }
    }
}

}  // TEST_SUITE
