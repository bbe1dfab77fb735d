#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "orl/dp.hpp"

using namespace orl;

TEST_SUITE("dp-oracle") {

TEST_CASE("geometric series on the one-state chain") {
    MdpSpec m = make_blank_mdp(1, 1, 0.5, 30);
    m.p(0, 0, 0) = 1.0;
    m.r(0, 0) = 1.0;
    m.r_hi = 1.0;
    m.validate();
    const auto vt = value_iteration(m);
    CHECK(std::abs(vt.qvalue(0, 0, 0) - 2.0) < 1e-8);  // 1/(1-gamma), truncation ~1e-9

    const auto inf = value_iteration_inf(m);
    CHECK(std::abs(inf.qvalue(0, 0) - 2.0) < 1e-8);
}

TEST_CASE("optimal values match exhaustive policy enumeration") {
    Rng rng(5);
    const auto m = test::random_mdp(rng, 2, 2, 0.8, 3, -1.0, 1.0, false);
    const auto vt = value_iteration(m);
    const auto oracle = test::enumerate_optimal_values(m, false);
    for (int s = 0; s < 2; ++s) CHECK(vt.value(s, 0) == doctest::Approx(oracle[s]).epsilon(1e-12));
}

TEST_CASE("zero reward gives zero values everywhere") {
    Rng rng(6);
    auto m = test::random_mdp(rng, 4, 3, 0.9, 8, -1.0, 1.0, false);
    std::fill(m.reward.begin(), m.reward.end(), 0.0);
    const auto vt = value_iteration(m);
    for (double q : vt.q) CHECK(q == doctest::Approx(0.0));
}

TEST_CASE("constrained value iteration") {
    Rng rng(8);
    SUBCASE("all-true mask reproduces the unconstrained solution") {
        const auto m = test::random_mdp(rng, 5, 3, 0.9, 6, -1.0, 1.0, false);
        const auto a = value_iteration(m);
        const auto b = constrained_value_iteration(m);
        CHECK(a.v == b.v);
        CHECK(a.q == b.q);
    }
    SUBCASE("masking out the argmax strictly lowers the value there") {
        auto m = test::random_mdp(rng, 3, 3, 0.9, 5, 0.0, 1.0, false);
        const auto vt = value_iteration(m);
        const int s = 0;
        const int best = vt.greedy_action(s, 0);
        // Forbid the optimal action at s only; with distinct random rewards the
        // restricted max is strictly smaller at t=0.
        m.feasible_mask[static_cast<std::size_t>(s) * 3 + best] = 0;
        const auto cvt = constrained_value_iteration(m);
        CHECK(cvt.value(s, 0) < vt.value(s, 0));
    }
    SUBCASE("matches exhaustive enumeration of feasible policies") {
        const auto m = test::random_mdp(rng, 4, 2, 0.85, 3, -1.0, 1.0, true);
        const auto cvt = constrained_value_iteration(m);
        const auto oracle = test::enumerate_optimal_values(m, true);
        for (int s = 0; s < 4; ++s)
            CHECK(cvt.value(s, 0) == doctest::Approx(oracle[s]).epsilon(1e-12));
    }
    SUBCASE("never exceeds the unconstrained optimum pointwise") {
        for (int trial = 0; trial < 20; ++trial) {
            const auto m = test::random_mdp(rng, 6, 3, 0.9, 7, -1.0, 1.0, true);
            const auto vt = value_iteration(m);
            const auto cvt = constrained_value_iteration(m);
            for (int s = 0; s < 6; ++s) CHECK(cvt.value(s, 0) <= vt.value(s, 0) + 1e-12);
        }
    }
}

TEST_CASE("policy evaluation") {
    Rng rng(11);
    SUBCASE("greedy policy from value iteration evaluates back to V*") {
        const auto m = test::random_mdp(rng, 5, 3, 0.9, 6, -1.0, 1.0, false);
        // Finite horizon: the greedy policy is time-dependent, so evaluate it
        // with an independent recursion over the per-step greedy actions.
        const auto vt = value_iteration(m);
        std::vector<double> v_next(5, 0.0), v(5, 0.0);
        for (int t = m.horizon - 1; t >= 0; --t) {
            for (int s = 0; s < 5; ++s) {
                const int a = vt.greedy_action(s, t);
                double nxt = 0.0;
                for (int sn = 0; sn < 5; ++sn) nxt += m.p(s, a, sn) * v_next[sn];
                v[s] = m.r(s, a) + m.gamma * nxt;
            }
            v_next = v;
        }
        for (int s = 0; s < 5; ++s) CHECK(std::abs(v[s] - vt.value(s, 0)) < 1e-9);

        // Stationary companion: greedy of the fixed point evaluates to V*.
        const auto inf = value_iteration_inf(m);
        const auto pe = policy_evaluation_inf(m, inf.greedy_policy());
        for (int s = 0; s < 5; ++s) CHECK(pe.v[s] == doctest::Approx(inf.v[s]).epsilon(1e-8));
    }
    SUBCASE("one-policy MDP: evaluation equals optimization") {
        MdpSpec m = make_blank_mdp(1, 1, 0.5, 12);
        m.p(0, 0, 0) = 1.0;
        m.r(0, 0) = 1.0;
        m.r_hi = 1.0;
        m.validate();
        const auto vi = value_iteration(m);
        const auto pe = policy_evaluation(m, Policy::uniform(1, 1));
        CHECK(pe.value(0, 0) == doctest::Approx(vi.value(0, 0)).epsilon(1e-12));
    }
    SUBCASE("matches the independent recursion oracle") {
        const auto m = test::random_mdp(rng, 5, 3, 0.9, 6, -1.0, 1.0, false);
        const auto pi = test::random_stochastic_policy(rng, 5, 3);
        const auto pe = policy_evaluation(m, pi);
        const auto oracle = test::exact_policy_values(m, pi);
        for (int s = 0; s < 5; ++s) CHECK(pe.value(s, 0) == doctest::Approx(oracle[s]).epsilon(1e-12));
    }
    SUBCASE("matches a Monte-Carlo rollout mean within 3 standard errors") {
        const auto m = test::random_mdp(rng, 2, 2, 0.9, 5, -1.0, 1.0, false);
        const auto pi = test::random_stochastic_policy(rng, 2, 2);
        const double exact = initial_value(m, policy_evaluation(m, pi));
        const auto mc = test::mc_policy_value(m, pi, 1000000, 77);
        CHECK(std::abs(mc.mean - exact) < 3.0 * mc.std_err);
    }
}

TEST_CASE("uniform reward shift moves every policy value by the geometric sum") {
    Rng rng(13);
    const auto m = test::random_mdp(rng, 4, 3, 0.8, 6, -1.0, 1.0, false);
    const auto pi = test::random_stochastic_policy(rng, 4, 3);
    const double c = 0.37;
    auto shifted = m;
    for (double& r : shifted.reward) r += c;
    shifted.r_lo += c;
    shifted.r_hi += c;
    const double factor = (1.0 - std::pow(m.gamma, m.horizon)) / (1.0 - m.gamma);
    const auto base = policy_evaluation(m, pi);
    const auto moved = policy_evaluation(shifted, pi);
    for (int s = 0; s < 4; ++s)
        CHECK(moved.value(s, 0) == doctest::Approx(base.value(s, 0) + c * factor).epsilon(1e-12));
}

TEST_CASE("greedy argmax is invariant under positive affine reward maps") {
    Rng rng(17);
    const auto m = test::random_mdp(rng, 5, 4, 0.85, 6, -1.0, 1.0, false);
    auto scaled = m;
    for (double& r : scaled.reward) r = 2.5 * r + 0.7;
    scaled.r_lo = 2.5 * m.r_lo + 0.7;
    scaled.r_hi = 2.5 * m.r_hi + 0.7;
    const auto a = value_iteration(m);
    const auto b = value_iteration(scaled);
    for (int t = 0; t < m.horizon; ++t)
        for (int s = 0; s < 5; ++s) CHECK(a.greedy_action(s, t) == b.greedy_action(s, t));
}

TEST_CASE("terminal states hold zero value at every step") {
    MdpSpec m = make_blank_mdp(2, 1, 0.9, 4);
    m.terminal_mask[1] = 1;
    m.p(0, 0, 1) = 1.0;
    m.p(1, 0, 1) = 1.0;
    m.r(0, 0) = 1.0;
    m.r(1, 0) = 1.0;  // must never be collected
    m.r_hi = 1.0;
    m.initial_dist = {1.0, 0.0};
    m.validate();
    const auto vt = value_iteration(m);
    CHECK(vt.value(1, 0) == 0.0);
    CHECK(vt.value(0, 0) == doctest::Approx(1.0));  // one step, then absorbed
    CHECK(initial_value(m, vt) == doctest::Approx(1.0));
}

}  // TEST_SUITE
