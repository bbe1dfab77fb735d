#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "orl/mdp.hpp"

namespace orl {

// One logged transition. Strata tags are free-form categorical labels used by
// stratified resampling; the generator that emitted the record owns their
// meaning.
struct TransitionRecord {
    int episode_id = 0;
    int t = 0;
    int state = 0;
    int action = 0;
    double reward = 0.0;
    int next_state = 0;
    bool done = false;
    std::vector<std::string> strata;

    bool operator==(const TransitionRecord&) const = default;
};

// Immutable log of transitions. Episodic datasets carry a validated episode
// index (t consecutive from 0, done exactly on the final record); resampled
// bags keep episode_id only as provenance and expose no episode index.
class TransitionDataset {
public:
    // Validates episode structure; throws std::invalid_argument on violation.
    static TransitionDataset episodic(int n_states, int n_actions,
                                      std::vector<TransitionRecord> records);
    // Bag of independent one-step transitions; no episode structure implied.
    static TransitionDataset transitions(int n_states, int n_actions,
                                         std::vector<TransitionRecord> records);

    const std::vector<TransitionRecord>& records() const { return records_; }
    const TransitionRecord& operator[](std::size_t i) const { return records_[i]; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    bool is_episodic() const { return episodic_; }

    const std::vector<long>& action_counts() const { return action_counts_; }
    // episode_id -> [first, last) record range; empty for transition bags.
    const std::map<int, std::pair<std::size_t, std::size_t>>& episode_index() const {
        return episode_index_;
    }
    std::size_t n_episodes() const { return episode_index_.size(); }

private:
    TransitionDataset() = default;

    int n_states_ = 0;
    int n_actions_ = 0;
    bool episodic_ = false;
    std::vector<TransitionRecord> records_;
    std::map<int, std::pair<std::size_t, std::size_t>> episode_index_;
    std::vector<long> action_counts_;
};

// Empirical behavior policy with additive smoothing:
// pi(a|s) = (count(s,a)+smoothing) / (count(s)+smoothing*A).
// States never visited get the uniform distribution.
Policy empirical_behavior_policy(const TransitionDataset& ds, double smoothing);

// Empirical next-state frequencies. Unobserved (s,a) pairs are flagged absent
// (observed=false, row left all-zero) rather than fabricated.
struct EmpiricalTransitions {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> freq;            // [s][a][s']
    std::vector<std::uint8_t> observed;  // [s][a]
    std::vector<long> pair_counts;       // [s][a]

    bool is_observed(int s, int a) const {
        return observed[static_cast<std::size_t>(s) * n_actions + a] != 0;
    }
    std::span<const double> row(int s, int a) const {
        return {freq.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
                static_cast<std::size_t>(n_states)};
    }
    long count(int s, int a) const {
        return pair_counts[static_cast<std::size_t>(s) * n_actions + a];
    }
};

EmpiricalTransitions empirical_transition_freq(const TransitionDataset& ds);

// Optional per-record decorations applied by environment generators: realized
// next-state-dependent rewards and strata tags.
using RewardFn = std::function<double(int s, int a, int next_s)>;
using StateTagger = std::function<std::vector<std::string>(int s)>;

// Simulates n_episodes episodes of `policy` on `mdp`. Each episode ends at a
// terminal state or at the horizon; the final record has done=true either way.
// Bit-reproducible for a fixed seed. `reward_fn` overrides the expected reward
// in MdpSpec with a realized draw-dependent value when supplied.
TransitionDataset rollout(const MdpSpec& mdp, const Policy& policy, int n_episodes,
                          std::uint64_t seed, const RewardFn& reward_fn = nullptr,
                          const StateTagger& tagger = nullptr);

// Splits an episodic dataset by episode into parts with the given ratios
// (ratios must sum to 1). Episode assignment is a seeded shuffle; each part
// preserves the original record order.
std::vector<TransitionDataset> split_by_episode(const TransitionDataset& ds,
                                                std::span<const double> ratios,
                                                std::uint64_t seed);

// Record text format: one header line naming the fields, then one
// tab-separated line per transition; rewards carry 9 significant digits and
// strata tags are semicolon-joined ("-" when empty).
void save_dataset(const TransitionDataset& ds, std::ostream& os);
void save_dataset_file(const TransitionDataset& ds, const std::string& path);
// Dimensions are inferred from the records when not supplied. Episode
// structure is auto-detected: files that validate as episodic load episodic.
TransitionDataset load_dataset(std::istream& is, int n_states = -1, int n_actions = -1);
TransitionDataset load_dataset_file(const std::string& path, int n_states = -1,
                                    int n_actions = -1);

}  // namespace orl
