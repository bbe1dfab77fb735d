#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "orl/dataset.hpp"

namespace orl {

// Resampling pass over a transition log, correcting action imbalance without
// touching next-state conditionals. Targets are expressed through K times the
// mean per-action count sigma; under+oversampling equalizes everything at
// sigma and ignores K.
struct SamplingPlan {
    enum class Mode { under, over, underover };
    Mode mode = Mode::underover;
    double k = 1.0;               // unused for underover
    std::vector<int> strata_keys; // positions into each record's strata tuple
    std::uint64_t seed = 1;
    bool replacement = true;      // without-replacement requires target <= source

    void validate() const;
};

std::string sampling_mode_name(SamplingPlan::Mode m);

struct ActionSamplingStats {
    int action = 0;
    long source_count = 0;
    long target_count = 0;    // equals source_count for untouched actions
    long realized_count = 0;
    double w = 0.0;           // realized proportion / source proportion
};

struct SamplingReport {
    SamplingPlan::Mode mode = SamplingPlan::Mode::underover;
    double k = 0.0;
    double sigma = 0.0;  // mean transitions per action present in the source
    std::vector<ActionSamplingStats> per_action;  // actions with source > 0
    double min_w = 0.0;  // over actions with realized > 0
    double max_w = 0.0;
};

// Draws the plan's per-action targets with stratified allocation (largest
// remainder across strata, uniform within), leaving at-threshold actions
// untouched. Deterministic given the seed. The result is a transition bag:
// episode ids survive only as provenance.
std::pair<TransitionDataset, SamplingReport> resample(const TransitionDataset& ds,
                                                      const SamplingPlan& plan);

// Per-(s,a) total-variation check that resampling preserved next-state
// conditionals. Pairs need at least min_count records on both sides; a pair
// violates when tv > tol + se_multiplier * se, with se the binomial standard
// error of the comparison.
struct PairPreservation {
    int state = 0;
    int action = 0;
    long n_src = 0;
    long n_dst = 0;
    double tv = 0.0;
    double se = 0.0;
};

struct PreservationReport {
    long pairs_checked = 0;
    double max_tv = 0.0;
    std::vector<PairPreservation> rows;
    std::vector<PairPreservation> violations;
    bool ok() const { return violations.empty(); }
};

PreservationReport verify_transition_preservation(const TransitionDataset& src,
                                                  const TransitionDataset& dst, double tol,
                                                  long min_count = 50,
                                                  double se_multiplier = 0.0);

// Marginal per-action proportion ratio dst/src; actions absent from the
// source are excluded.
struct ActionShift {
    int action = 0;
    double w = 0.0;
};
std::vector<ActionShift> action_conditional_shift(const TransitionDataset& src,
                                                  const TransitionDataset& dst);

// Report table in the record text format plus a min/max summary line.
void save_sampling_report(const SamplingReport& report, std::ostream& os);

}  // namespace orl
