#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "orl/dataset.hpp"
#include "orl/mdp.hpp"

namespace orl {

// Fixed-length real feature vector per state, the seam between dense state
// ids and models that want features (behavior classifiers, networks).
struct StateFeaturizer {
    int dim = 0;
    std::function<void(int state, double* out)> fill;

    std::vector<double> operator()(int state) const {
        std::vector<double> v(dim, 0.0);
        fill(state, v.data());
        return v;
    }
};

StateFeaturizer one_hot_featurizer(int n_states);

// A hard execution rule: in states where `applies` holds, the listed actions
// are off limits.
struct ConstraintRule {
    std::string name;
    std::function<bool(int state)> applies;
    std::vector<int> forbidden;
};

struct ConstraintRuleSet {
    int n_actions = 0;
    std::vector<ConstraintRule> rules;

    bool allows(int state, int action) const;
};

// Intersection of all rule-wise feasible sets at `state` (ascending ids).
std::vector<int> feasible_set(const ConstraintRuleSet& rules, int state);

// ---------------------------------------------------------------------------
// Chronic-care environment
// ---------------------------------------------------------------------------
//
// States enumerate (control level, risk-flag combination, transient event).
// Control level 0 means the lab value is at target; higher is worse. Risk
// flags are static per episode and drive the constraint rules. The transient
// event marks a hypo or complication that realized during the last interval,
// so next-state-dependent rewards are recoverable from records.
struct ChronicCareConfig {
    int n_control_levels = 4;
    int n_risk_flags = 4;
    int n_actions = 13;  // maintain, increase, decrease, then start-drug options
    double inertia_prob = 0.64;
    double w_target = 1.0;
    double w_hypo = 2.0;
    double w_compl = 4.0;
    double gamma = 0.9;
    int horizon = 8;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ChronicCareEnv {
    ChronicCareConfig cfg;
    MdpSpec mdp;
    Policy behavior;
    ConstraintRuleSet rules;
    RewardFn realized_reward;  // reward drawn from the realized next state
    StateTagger tagger;        // strata: risk-flag combo and control band
    StateFeaturizer features;

    // State coding (event: 0 none, 1 hypo, 2 complication).
    int state_of(int control, int flags, int event) const;
    int control_level(int state) const;
    int risk_flags(int state) const;
    int event(int state) const;

    // Inputs for the intensification metric: states above target, and the
    // action ids that do not intensify treatment (maintain, decrease).
    std::function<bool(int state)> out_of_control;
    std::vector<int> non_intensifying;
};

ChronicCareEnv build_chronic_care(const ChronicCareConfig& cfg);

// ---------------------------------------------------------------------------
// Critical-care environment
// ---------------------------------------------------------------------------
//
// Latent severity chain with absorbing survival/death states. Actions are
// (fluid bin, vasopressor bin) dose pairs; matched dosing drives severity
// down toward survival, heavy mismatch drives it up toward death. Reward is
// +1 into survival, -1 into death, 0 elsewhere.
struct CriticalCareConfig {
    int n_fluid_bins = 5;
    int n_vaso_bins = 5;
    double mode_prob = 0.271;  // behavior mass at the lowest dose pair
    double gamma = 0.99;
    int horizon = 12;
    std::uint64_t seed = 1;

    void validate() const;
};

struct CriticalCareEnv {
    CriticalCareConfig cfg;
    MdpSpec mdp;
    Policy behavior;
    RewardFn realized_reward;
    StateTagger tagger;
    StateFeaturizer features;

    int n_severity_levels = 0;
    int survival_state = 0;
    int death_state = 0;
    int action_of(int fluid_bin, int vaso_bin) const;
    int fluid_bin(int action) const;
    int vaso_bin(int action) const;
};

CriticalCareEnv build_critical_care(const CriticalCareConfig& cfg);

}  // namespace orl
