#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "orl/dataset.hpp"
#include "orl/envgen.hpp"
#include "orl/mdp.hpp"

namespace orl {

// Multinomial logistic classifier over state features, the stand-in for the
// unknown behavior policy when computing importance ratios.
class BehaviorModel {
public:
    BehaviorModel() = default;
    BehaviorModel(int n_actions, int feature_dim);

    // Softmax action distribution for a feature vector; rows sum to 1.
    std::vector<double> predict(std::span<const double> features) const;
    double prob(std::span<const double> features, int action) const;

    int n_actions() const { return n_actions_; }
    int feature_dim() const { return feature_dim_; }
    bool fitted() const { return fitted_; }
    double reg_c() const { return reg_c_; }
    bool class_weighted() const { return class_weighted_; }

    // Full-batch cross-entropy gradient descent with L2 strength 1/reg_c
    // (intercepts unregularized); class weighting rebalances sample weights
    // inversely to action frequency.
    void fit(std::span<const double> features, std::span<const int> labels, std::size_t n,
             double reg_c, bool class_weighted, int iterations = 400, double lr = 0.1);

private:
    int n_actions_ = 0;
    int feature_dim_ = 0;
    std::vector<double> weights_;  // [A][F]
    std::vector<double> bias_;     // [A]
    double reg_c_ = 1.0;
    bool class_weighted_ = false;
    bool fitted_ = false;
};

struct BehaviorCandidate {
    double reg_c = 0.0;
    bool class_weighted = false;
    double brier = 0.0;     // held-out multiclass Brier score
    double auc = 0.0;       // held-out macro one-vs-rest AUC
    double accuracy = 0.0;  // held-out top-1
};

struct BehaviorFitReport {
    std::vector<BehaviorCandidate> candidates;
    int winner = -1;        // lowest Brier
    bool degenerate = false;  // single-action dataset
    std::size_t n_fit = 0;
    std::size_t n_heldout = 0;
};

struct FittedBehavior {
    BehaviorModel model;
    BehaviorFitReport report;
};

// Fits the reg_c x weighting grid, holds out a quarter of the episodes, and
// keeps the candidate with the lowest held-out Brier score.
FittedBehavior fit_behavior_model(const TransitionDataset& ds, const StateFeaturizer& features,
                                  std::span<const double> reg_grid,
                                  std::span<const bool> weighting_options,
                                  std::uint64_t seed = 1);

// Deterministic policy spread into a stochastic one: 1-epsilon on the base
// action, epsilon split uniformly over the others.
struct SoftenedPolicy {
    Policy base;
    double epsilon = 0.0;

    Policy to_stochastic() const;
    double prob(int s, int a) const;
};

SoftenedPolicy soften(const Policy& policy, double epsilon);

// ---------------------------------------------------------------------------
// Weighted importance sampling
// ---------------------------------------------------------------------------

struct WisEpisode {
    int episode_id = 0;
    double rho = 0.0;          // full-trajectory likelihood ratio
    double norm_weight = 0.0;  // rho / w_T
    double ret = 0.0;          // discounted return
    double v = 0.0;            // norm_weight * ret
};

struct WisReport {
    double wis = 0.0;
    double w_t = 0.0;  // mean trajectory ratio, the self-normalization term
    double ess = 0.0;  // (sum rho)^2 / sum rho^2
    long clamped = 0;  // behavior probabilities lifted to the floor
    std::size_t n_episodes = 0;
    std::vector<WisEpisode> episodes;
};

using BehaviorProbFn = std::function<double(int state, int action)>;

// Self-normalized importance-sampling estimate of pi_eval's expected return
// from logged episodes. Behavior probabilities are clamped below at `floor`
// (clamps counted); an all-zero ratio vector is an error.
WisReport wis(const TransitionDataset& eval_ds, const Policy& pi_eval,
              const BehaviorProbFn& pi_behavior, double gamma, double floor = 1e-6);
WisReport wis(const TransitionDataset& eval_ds, const Policy& pi_eval,
              const Policy& pi_behavior, double gamma, double floor = 1e-6);
WisReport wis(const TransitionDataset& eval_ds, const Policy& pi_eval,
              const BehaviorModel& pi_behavior, const StateFeaturizer& features, double gamma,
              double floor = 1e-6);

// ---------------------------------------------------------------------------
// Practice-alignment metrics
// ---------------------------------------------------------------------------

// Fraction of logged records where the two policies pick the same action
// (stochastic policies compared by mode).
double model_concordance(const TransitionDataset& ds, const Policy& pi_a, const Policy& pi_b);

// Among records whose state satisfies `out_of_control`, the fraction where
// the policy's action intensifies treatment (is outside non_intensifying).
// Empty when no record qualifies.
std::optional<double> appropriate_intensification(const TransitionDataset& ds,
                                                  const Policy& policy,
                                                  const std::function<bool(int)>& out_of_control,
                                                  std::span<const int> non_intensifying);

// Among records where the rule applies, the fraction where the policy's
// action is not forbidden by it. Empty when the rule never fires.
std::optional<double> constraint_satisfaction_rate(const TransitionDataset& ds,
                                                   const Policy& policy,
                                                   const ConstraintRule& rule);

}  // namespace orl
