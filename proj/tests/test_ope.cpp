#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "orl/constraints.hpp"
#include "orl/dp.hpp"
#include "orl/ope.hpp"

using namespace orl;

namespace {

TransitionRecord rec(int ep, int t, int s, int a, double r, int sn, bool done) {
    TransitionRecord out;
    out.episode_id = ep;
    out.t = t;
    out.state = s;
    out.action = a;
    out.reward = r;
    out.next_state = sn;
    out.done = done;
    return out;
}

}  // namespace

TEST_SUITE("ope-metrics") {

TEST_CASE("behavior model: separable actions are learned to near-certainty") {
    // Action is a deterministic function of a single binary feature.
    std::vector<TransitionRecord> rs;
    for (int i = 0; i < 120; ++i) {
        const int s = i % 2;
        rs.push_back(rec(i, 0, s, s, 0.0, s, true));
    }
    const auto ds = TransitionDataset::episodic(2, 2, rs);
    StateFeaturizer feat;
    feat.dim = 1;
    feat.fill = [](int s, double* out) { out[0] = static_cast<double>(s); };

    const double grid[] = {0.1, 1.0, 10.0, 100.0, 1000.0};
    const bool flags[] = {false, true};
    const auto fit = fit_behavior_model(ds, feat, grid, flags, 3);

    CHECK(fit.report.candidates.size() == 10);
    CHECK_FALSE(fit.report.degenerate);
    const auto& best = fit.report.candidates[fit.report.winner];
    CHECK(best.accuracy == doctest::Approx(1.0));
    CHECK(best.brier < 0.05);
    CHECK(best.auc > 0.99);

    const auto p0 = fit.model.predict(std::vector<double>{0.0});
    CHECK(p0[0] + p0[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p0[0] > 0.9);
}

TEST_CASE("behavior model: uniform labels land at chance-level Brier") {
    // Labels uniform over 4 actions, independent of the binary feature.
    std::vector<TransitionRecord> rs;
    for (int i = 0; i < 400; ++i) rs.push_back(rec(i, 0, i % 2, (i / 2) % 4, 0.0, 0, true));
    const auto ds = TransitionDataset::episodic(2, 4, rs);
    StateFeaturizer feat;
    feat.dim = 1;
    feat.fill = [](int s, double* out) { out[0] = static_cast<double>(s); };

    const double grid[] = {0.1, 1.0};
    const bool flags[] = {false};
    const auto fit = fit_behavior_model(ds, feat, grid, flags, 7);

    // Best achievable multiclass Brier for uniform labels over 4 classes is
    // 3/4; the winner's predictions should sit near [0.25 x 4].
    const auto& best = fit.report.candidates[fit.report.winner];
    CHECK(std::abs(best.brier - 0.75) < 0.05);
    for (double p : fit.model.predict(std::vector<double>{1.0}))
        CHECK(std::abs(p - 0.25) < 0.05);
}

TEST_CASE("behavior model: degenerate single-action data is flagged") {
    std::vector<TransitionRecord> rs;
    for (int i = 0; i < 40; ++i) rs.push_back(rec(i, 0, 0, 1, 0.0, 0, true));
    const auto ds = TransitionDataset::episodic(1, 3, rs);
    const double grid[] = {1.0};
    const bool flags[] = {false};
    const auto fit = fit_behavior_model(ds, one_hot_featurizer(1), grid, flags, 3);
    CHECK(fit.report.degenerate);
    CHECK(fit.model.predict(std::vector<double>{1.0})[1] > 0.9);
}

TEST_CASE("soften") {
    SUBCASE("splits epsilon uniformly over the non-optimal actions") {
        const auto base = Policy::make_deterministic(1, 3, {1});
        const auto soft = soften(base, 0.01);
        CHECK(soft.prob(0, 0) == doctest::Approx(0.005));
        CHECK(soft.prob(0, 1) == doctest::Approx(0.99));
        CHECK(soft.prob(0, 2) == doctest::Approx(0.005));
        const auto pi = soft.to_stochastic();
        pi.validate();
        CHECK(pi.mode(0) == 1);
    }
    SUBCASE("rows sum to one for arbitrary shapes") {
        Rng rng(5);
        for (int trial = 0; trial < 10; ++trial) {
            const int A = 2 + int(rng.uniform_int(8));
            const int S = 1 + int(rng.uniform_int(5));
            std::vector<int> actions(S);
            for (auto& a : actions) a = int(rng.uniform_int(A));
            const double eps = rng.uniform(1e-4, 0.9);
            const auto soft = soften(Policy::make_deterministic(S, A, actions), eps);
            soft.to_stochastic().validate();  // row sums checked inside
        }
    }
    SUBCASE("mode is preserved whenever epsilon < (A-1)/A") {
        const auto base = Policy::make_deterministic(2, 4, {3, 0});
        const auto soft = soften(base, 0.74);  // just under 3/4
        const auto pi = soft.to_stochastic();
        CHECK(pi.mode(0) == 3);
        CHECK(pi.mode(1) == 0);
    }
    SUBCASE("rejects degenerate inputs") {
        CHECK_THROWS_AS(soften(Policy::make_deterministic(1, 1, {0}), 0.01),
                        std::invalid_argument);
        CHECK_THROWS_AS(soften(Policy::make_deterministic(1, 2, {0}), 0.0),
                        std::invalid_argument);
        CHECK_THROWS_AS(soften(Policy::make_deterministic(1, 2, {0}), 1.0),
                        std::invalid_argument);
        CHECK_THROWS_AS(soften(Policy::uniform(1, 2), 0.5), std::invalid_argument);
    }
}

TEST_CASE("wis: identical policies reduce to the empirical mean return") {
    Rng rng(9);
    const auto mdp = test::random_mdp(rng, 4, 3, 0.9, 5, -1.0, 1.0, false);
    const auto pi = test::random_stochastic_policy(rng, 4, 3);
    const auto ds = rollout(mdp, pi, 300, 11);

    const auto report = wis(ds, pi, pi, 0.9);
    double mean_return = 0.0;
    for (const auto& [id, range] : ds.episode_index()) {
        double g = 0.0, d = 1.0;
        for (std::size_t i = range.first; i < range.second; ++i) {
            g += d * ds[i].reward;
            d *= 0.9;
        }
        mean_return += g;
    }
    mean_return /= double(ds.n_episodes());
    CHECK(report.wis == doctest::Approx(mean_return).epsilon(1e-12));
    CHECK(report.ess == doctest::Approx(double(ds.n_episodes())));
}

TEST_CASE("wis: two-episode worked example") {
    // Returns {1, 0} with full-trajectory ratios {2, 0.5} at gamma = 1:
    // w_T = 1.25, V = {1.6, 0}, WIS = 0.8.
    const auto ds = TransitionDataset::episodic(
        2, 2, {rec(0, 0, 0, 0, 1.0, 0, true), rec(1, 0, 1, 0, 0.0, 1, true)});
    const auto pi_eval = Policy::make_stochastic(2, 2, {1.0, 0.0, 0.25, 0.75});
    const auto pi_b = Policy::make_stochastic(2, 2, {0.5, 0.5, 0.5, 0.5});
    const auto report = wis(ds, pi_eval, pi_b, 1.0);
    CHECK(report.w_t == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(report.episodes[0].v == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(report.episodes[1].v == doctest::Approx(0.0));
    CHECK(report.wis == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("wis: self-normalization identity and clamp accounting") {
    Rng rng(13);
    const auto mdp = test::random_mdp(rng, 5, 3, 0.9, 6, -1.0, 1.0, false);
    const auto behavior = test::random_stochastic_policy(rng, 5, 3);
    const auto ds = rollout(mdp, behavior, 400, 5);
    const auto target = soften(value_iteration_inf(mdp).greedy_policy(), 0.05).to_stochastic();

    const auto report = wis(ds, target, behavior, 0.9);
    double norm_sum = 0.0;
    for (const auto& ep : report.episodes) norm_sum += ep.norm_weight;
    CHECK(norm_sum == doctest::Approx(double(report.n_episodes)).epsilon(1e-9));
    CHECK(report.clamped == 0);

    // A behavior model that assigns ~zero mass to logged actions gets clamped.
    const auto starved = wis(
        ds, target, [](int, int) { return 1e-12; }, 0.9);
    CHECK(starved.clamped == static_cast<long>(ds.size()));
}

TEST_CASE("wis: all-zero ratios are an explicit error") {
    const auto ds = TransitionDataset::episodic(1, 2, {rec(0, 0, 0, 0, 1.0, 0, true)});
    const auto pi_eval = Policy::make_stochastic(1, 2, {0.0, 1.0});
    const auto pi_b = Policy::uniform(1, 2);
    CHECK_THROWS_AS(wis(ds, pi_eval, pi_b, 1.0), std::runtime_error);
}

TEST_CASE("wis converges to the exact value of the softened policy") {
    // Behavior keeps every action's probability moderate so trajectory
    // ratios stay tame; tolerances shrink with the episode count.
    Rng rng(17);
    const auto mdp = test::random_mdp(rng, 5, 3, 0.9, 6, 0.0, 1.0, false);
    const auto greedy = value_iteration_inf(mdp).greedy_policy();
    const auto soft = soften(greedy, 0.05);
    const auto target = soft.to_stochastic();

    // Behavior: half the mass on the greedy action, the rest uniform.
    std::vector<double> probs(5 * 3, 0.0);
    for (int s = 0; s < 5; ++s)
        for (int a = 0; a < 3; ++a)
            probs[static_cast<std::size_t>(s) * 3 + a] =
                (a == greedy.action_table[s] ? 0.5 : 0.0) + 0.5 / 3.0;
    const auto behavior = Policy::make_stochastic(5, 3, probs);

    const double exact = initial_value(mdp, policy_evaluation(mdp, target));
    const double tolerances[] = {0.60, 0.35, 0.20};
    const int sizes[] = {200, 800, 3200};
    for (int i = 0; i < 3; ++i) {
        const auto ds = rollout(mdp, behavior, sizes[i], 100 + i);
        const auto report = wis(ds, target, behavior, 0.9);
        CHECK(std::abs(report.wis - exact) < tolerances[i]);
    }
}

TEST_CASE("wis accepts a fitted behavior model in place of the true policy") {
    Rng rng(19);
    const auto mdp = test::random_mdp(rng, 4, 3, 0.9, 5, 0.0, 1.0, false);
    const auto behavior = test::random_stochastic_policy(rng, 4, 3);
    const auto ds = rollout(mdp, behavior, 500, 21);
    const auto target = soften(value_iteration_inf(mdp).greedy_policy(), 0.05).to_stochastic();

    const double grid[] = {10.0, 1000.0};
    const bool flags[] = {false};
    const auto fit = fit_behavior_model(ds, one_hot_featurizer(4), grid, flags, 5);
    const auto via_model = wis(ds, target, fit.model, one_hot_featurizer(4), 0.9);
    const auto via_truth = wis(ds, target, behavior, 0.9);
    // One-hot features make the classifier consistent for the true policy.
    CHECK(std::abs(via_model.wis - via_truth.wis) < 0.25);
}

TEST_CASE("model concordance") {
    const auto ds = TransitionDataset::episodic(
        2, 2,
        {rec(0, 0, 0, 0, 0.0, 1, false), rec(0, 1, 1, 0, 0.0, 0, true),
         rec(1, 0, 0, 1, 0.0, 1, false), rec(1, 1, 1, 1, 0.0, 0, true)});
    const auto a = Policy::make_deterministic(2, 2, {0, 1});
    CHECK(model_concordance(ds, a, a) == doctest::Approx(1.0));
    const auto b = Policy::make_deterministic(2, 2, {1, 0});
    CHECK(model_concordance(ds, a, b) == doctest::Approx(0.0));
    const auto c = Policy::make_deterministic(2, 2, {0, 0});  // agrees on state 0 only
    CHECK(model_concordance(ds, a, c) == doctest::Approx(0.5));
}

TEST_CASE("appropriate intensification") {
    std::vector<TransitionRecord> rs;
    for (int i = 0; i < 10; ++i) rs.push_back(rec(i, 0, i % 2, 0, 0.0, 0, true));
    const auto ds = TransitionDataset::episodic(2, 3, rs);
    const auto out_of_control = [](int s) { return s == 1; };
    const std::vector<int> non_intensifying = {0, 2};

    const auto never = appropriate_intensification(
        ds, Policy::make_deterministic(2, 3, {0, 0}), out_of_control, non_intensifying);
    CHECK(never.value() == doctest::Approx(0.0));
    const auto always = appropriate_intensification(
        ds, Policy::make_deterministic(2, 3, {1, 1}), out_of_control, non_intensifying);
    CHECK(always.value() == doctest::Approx(1.0));

    const auto none = appropriate_intensification(
        ds, Policy::make_deterministic(2, 3, {0, 0}), [](int) { return false; },
        non_intensifying);
    CHECK_FALSE(none.has_value());
}

TEST_CASE("constraint satisfaction rate") {
    std::vector<TransitionRecord> rs;
    for (int i = 0; i < 8; ++i) rs.push_back(rec(i, 0, i % 2, 0, 0.0, 0, true));
    const auto ds = TransitionDataset::episodic(2, 3, rs);
    ConstraintRule rule{"no-a2-at-s1", [](int s) { return s == 1; }, {2}};

    CHECK(constraint_satisfaction_rate(ds, Policy::make_deterministic(2, 3, {2, 2}), rule)
              .value() == doctest::Approx(0.0));
    CHECK(constraint_satisfaction_rate(ds, Policy::make_deterministic(2, 3, {2, 0}), rule)
              .value() == doctest::Approx(1.0));

    ConstraintRule never{"never", [](int) { return false; }, {0}};
    CHECK_FALSE(constraint_satisfaction_rate(ds, Policy::make_deterministic(2, 3, {0, 0}), never)
                    .has_value());

    // A constrained view satisfies every rule it was built from.
    auto q = QFunction::make_tabular(2, 3);
    q.params() = {0.1, 0.2, 0.9, 0.1, 0.2, 0.9};  // argmax would be a2
    ConstraintRuleSet rules;
    rules.n_actions = 3;
    rules.rules.push_back(rule);
    const ConstrainedPolicyView view(q, feasible_from_rules(rules));
    CHECK(constraint_satisfaction_rate(ds, view.to_policy(), rule).value() ==
          doctest::Approx(1.0));
}

}  // TEST_SUITE
