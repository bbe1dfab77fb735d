#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "orl/dataset.hpp"
#include "orl/mdp.hpp"

using namespace orl;

namespace {

TransitionRecord rec(int ep, int t, int s, int a, double r, int sn, bool done,
                     std::vector<std::string> strata = {}) {
    TransitionRecord out;
    out.episode_id = ep;
    out.t = t;
    out.state = s;
    out.action = a;
    out.reward = r;
    out.next_state = sn;
    out.done = done;
    out.strata = std::move(strata);
    return out;
}

}  // namespace

TEST_SUITE("core-mdp") {

TEST_CASE("empirical_behavior_policy: count ratios") {
    std::vector<TransitionRecord> rs;
    for (int i = 0; i < 3; ++i) rs.push_back(rec(0, i, 0, 0, 0.0, 0, false));
    rs.push_back(rec(0, 3, 0, 1, 0.0, 0, true));
    const auto ds = TransitionDataset::transitions(1, 2, rs);

    auto pi = empirical_behavior_policy(ds, 0.0);
    CHECK(pi.prob(0, 0) == doctest::Approx(0.75));
    CHECK(pi.prob(0, 1) == doctest::Approx(0.25));

    // Add-one smoothing with A = 2: (3+1)/(4+2).
    auto smoothed = empirical_behavior_policy(ds, 1.0);
    CHECK(smoothed.prob(0, 0) == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("empirical_behavior_policy: single record and unvisited states") {
    const auto ds =
        TransitionDataset::transitions(2, 2, {rec(0, 0, 0, 1, 0.0, 0, true)});
    auto pi = empirical_behavior_policy(ds, 0.0);
    CHECK(pi.prob(0, 1) == doctest::Approx(1.0));
    CHECK(pi.prob(1, 0) == doctest::Approx(0.5));  // never visited: uniform
    CHECK(pi.prob(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("empirical_transition_freq: observed rows and absent flags") {
    std::vector<TransitionRecord> rs;
    rs.push_back(rec(0, 0, 0, 0, 0.0, 1, false));
    rs.push_back(rec(0, 1, 0, 0, 0.0, 1, false));
    rs.push_back(rec(0, 2, 0, 0, 0.0, 0, false));
    rs.push_back(rec(0, 3, 0, 0, 0.0, 0, true));
    const auto ds = TransitionDataset::transitions(2, 2, rs);
    const auto freq = empirical_transition_freq(ds);
    CHECK(freq.row(0, 0)[0] == doctest::Approx(0.5));
    CHECK(freq.row(0, 0)[1] == doctest::Approx(0.5));
    CHECK(freq.is_observed(0, 0));
    CHECK_FALSE(freq.is_observed(0, 1));
    CHECK_FALSE(freq.is_observed(1, 0));

    const auto single = empirical_transition_freq(
        TransitionDataset::transitions(2, 1, {rec(0, 0, 0, 0, 0, 1, true)}));
    CHECK(single.row(0, 0)[0] == doctest::Approx(0.0));
    CHECK(single.row(0, 0)[1] == doctest::Approx(1.0));
}

TEST_CASE("empirical_transition_freq converges on rollout data") {
    Rng rng(7);
    const auto mdp = test::random_mdp(rng, 3, 2, 0.9, 10, 0.0, 1.0, false);
    const auto ds = rollout(mdp, Policy::uniform(3, 2), 1000, 11);  // 10k records
    REQUIRE(ds.size() == 10000);
    const auto freq = empirical_transition_freq(ds);
    double worst = 0.0;
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a) {
            REQUIRE(freq.is_observed(s, a));
            for (int sn = 0; sn < 3; ++sn)
                worst = std::max(worst, std::abs(freq.row(s, a)[sn] - mdp.p(s, a, sn)));
        }
    CHECK(worst < 0.05);  // ~4 binomial standard errors at these counts
}

TEST_CASE("rollout: horizon, terminals, determinism") {
    // Single state, single action, T=3.
    MdpSpec tiny = make_blank_mdp(1, 1, 0.9, 3);
    tiny.p(0, 0, 0) = 1.0;
    tiny.r(0, 0) = 1.0;
    tiny.r_hi = 1.0;
    tiny.validate();
    const auto ds = rollout(tiny, Policy::make_deterministic(1, 1, {0}), 1, 5);
    REQUIRE(ds.size() == 3);
    CHECK(ds[0].state == 0);
    CHECK(ds[2].done);
    CHECK_FALSE(ds[0].done);

    // Terminal reached at t=1 ends the episode with done on the last record.
    MdpSpec term = make_blank_mdp(3, 1, 0.9, 5);
    term.terminal_mask[2] = 1;
    term.p(0, 0, 1) = 1.0;
    term.p(1, 0, 2) = 1.0;
    term.p(2, 0, 2) = 1.0;
    term.initial_dist = {1.0, 0.0, 0.0};
    term.validate();
    const auto ds2 = rollout(term, Policy::make_deterministic(3, 1, {0, 0, 0}), 1, 5);
    REQUIRE(ds2.size() == 2);
    CHECK(ds2[1].done);
    CHECK_FALSE(ds2[0].done);

    Rng rng(3);
    const auto mdp = test::random_mdp(rng, 4, 3, 0.9, 6, -1.0, 1.0, false);
    const auto a = rollout(mdp, Policy::uniform(4, 3), 50, 42);
    const auto b = rollout(mdp, Policy::uniform(4, 3), 50, 42);
    CHECK(a.records() == b.records());
}

TEST_CASE("rollout rejects an out-of-range policy") {
    MdpSpec tiny = make_blank_mdp(1, 1, 0.9, 3);
    tiny.p(0, 0, 0) = 1.0;
    tiny.validate();
    CHECK_THROWS_AS(rollout(tiny, Policy::make_deterministic(1, 2, {1}), 1, 1),
                    std::invalid_argument);
}

TEST_CASE("dataset round-trips through the record text format") {
    Rng rng(9);
    const auto mdp = test::random_mdp(rng, 5, 3, 0.9, 7, -2.0, 2.0, false);
    const auto tagger = [](int s) {
        return std::vector<std::string>{"band:" + std::to_string(s % 2)};
    };
    // Integer-valued rewards so 9 significant digits are lossless.
    const auto reward_fn = [](int s, int a, int) { return double(s - a); };
    const auto ds = rollout(mdp, Policy::uniform(5, 3), 40, 13, reward_fn, tagger);

    std::stringstream buf;
    save_dataset(ds, buf);
    const auto back = load_dataset(buf, 5, 3);
    CHECK(back.is_episodic());
    CHECK(back.records() == ds.records());
    CHECK(back.action_counts() == ds.action_counts());
}

TEST_CASE("episodic validation rejects malformed structure") {
    // Missing done on the last record.
    CHECK_THROWS_AS(TransitionDataset::episodic(2, 2, {rec(0, 0, 0, 0, 0, 1, false)}),
                    std::invalid_argument);
    // Non-consecutive time index.
    CHECK_THROWS_AS(TransitionDataset::episodic(
                        2, 2, {rec(0, 0, 0, 0, 0, 1, false), rec(0, 2, 1, 0, 0, 1, true)}),
                    std::invalid_argument);
    // done in the middle.
    CHECK_THROWS_AS(TransitionDataset::episodic(
                        2, 2, {rec(0, 0, 0, 0, 0, 1, true), rec(0, 1, 1, 0, 0, 1, true)}),
                    std::invalid_argument);
    // Interleaved episodes.
    CHECK_THROWS_AS(TransitionDataset::episodic(2, 2,
                                                {rec(0, 0, 0, 0, 0, 1, true),
                                                 rec(1, 0, 0, 0, 0, 1, false),
                                                 rec(0, 0, 0, 0, 0, 1, true)}),
                    std::invalid_argument);
}

TEST_CASE("split_by_episode is a partition with the requested shares") {
    Rng rng(21);
    const auto mdp = test::random_mdp(rng, 4, 2, 0.9, 5, 0.0, 1.0, false);
    const auto ds = rollout(mdp, Policy::uniform(4, 2), 100, 3);
    const double ratios[] = {0.6, 0.2, 0.2};
    const auto parts = split_by_episode(ds, ratios, 17);
    REQUIRE(parts.size() == 3);
    CHECK(parts[0].n_episodes() == 60);
    CHECK(parts[1].n_episodes() == 20);
    CHECK(parts[2].n_episodes() == 20);
    CHECK(parts[0].size() + parts[1].size() + parts[2].size() == ds.size());

    // Same seed, same assignment.
    const auto again = split_by_episode(ds, ratios, 17);
    CHECK(again[0].records() == parts[0].records());
}

TEST_CASE("MdpSpec round-trips and validates") {
    Rng rng(31);
    auto mdp = test::random_mdp(rng, 4, 3, 0.85, 9, -1.5, 2.5, true);
    std::stringstream buf;
    save_mdp(mdp, buf);
    const auto back = load_mdp(buf);
    CHECK(back.transition == mdp.transition);
    CHECK(back.reward == mdp.reward);
    CHECK(back.initial_dist == mdp.initial_dist);
    CHECK(back.feasible_mask == mdp.feasible_mask);
    CHECK(back.gamma == mdp.gamma);

    auto broken = mdp;
    broken.transition[0] += 0.5;
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
    auto empty_feasible = mdp;
    for (int a = 0; a < 3; ++a) empty_feasible.feasible_mask[a] = 0;
    CHECK_THROWS_AS(empty_feasible.validate(), std::invalid_argument);
}

TEST_CASE("Policy validation and mode") {
    CHECK_THROWS_AS(Policy::make_deterministic(2, 2, {0, 2}), std::invalid_argument);
    CHECK_THROWS_AS(Policy::make_stochastic(1, 2, {0.7, 0.2}), std::invalid_argument);
    const auto pi = Policy::make_stochastic(1, 3, {0.2, 0.5, 0.3});
    CHECK(pi.mode(0) == 1);
}

}  // TEST_SUITE
