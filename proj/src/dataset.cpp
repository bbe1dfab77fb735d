#include "orl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "orl/rng.hpp"

namespace orl {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::vector<long> count_actions(int n_actions, const std::vector<TransitionRecord>& records) {
    std::vector<long> counts(n_actions, 0);
    for (const auto& r : records) {
        if (r.action < 0 || r.action >= n_actions) fail("record action id out of range");
        if (r.state < 0 || r.state >= 0x7fffffff) fail("record state id out of range");
        ++counts[r.action];
    }
    return counts;
}

std::map<int, std::pair<std::size_t, std::size_t>> build_episode_index(
    const std::vector<TransitionRecord>& records) {
    std::map<int, std::pair<std::size_t, std::size_t>> index;
    std::size_t i = 0;
    while (i < records.size()) {
        const int ep = records[i].episode_id;
        if (index.count(ep)) fail("episode records are not contiguous (episode " +
                                  std::to_string(ep) + ")");
        std::size_t j = i;
        while (j < records.size() && records[j].episode_id == ep) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (records[k].t != static_cast<int>(k - i))
                fail("episode time indices are not consecutive from 0");
            const bool last = (k + 1 == j);
            if (records[k].done != last)
                fail("done flag must be set exactly on the final record of an episode");
        }
        index.emplace(ep, std::make_pair(i, j));
        i = j;
    }
    return index;
}

}  // namespace

TransitionDataset TransitionDataset::episodic(int n_states, int n_actions,
                                              std::vector<TransitionRecord> records) {
    TransitionDataset ds;
    ds.n_states_ = n_states;
    ds.n_actions_ = n_actions;
    ds.episodic_ = true;
    ds.episode_index_ = build_episode_index(records);
    ds.action_counts_ = count_actions(n_actions, records);
    ds.records_ = std::move(records);
    return ds;
}

TransitionDataset TransitionDataset::transitions(int n_states, int n_actions,
                                                 std::vector<TransitionRecord> records) {
    TransitionDataset ds;
    ds.n_states_ = n_states;
    ds.n_actions_ = n_actions;
    ds.episodic_ = false;
    ds.action_counts_ = count_actions(n_actions, records);
    ds.records_ = std::move(records);
    return ds;
}

Policy empirical_behavior_policy(const TransitionDataset& ds, double smoothing) {
    if (ds.empty()) fail("empirical_behavior_policy: empty dataset");
    const int S = ds.n_states(), A = ds.n_actions();
    std::vector<double> counts(static_cast<std::size_t>(S) * A, 0.0);
    std::vector<double> visits(S, 0.0);
    for (const auto& r : ds.records()) {
        counts[static_cast<std::size_t>(r.state) * A + r.action] += 1.0;
        visits[r.state] += 1.0;
    }
    std::vector<double> probs(static_cast<std::size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s) {
        const double denom = visits[s] + smoothing * A;
        for (int a = 0; a < A; ++a) {
            const std::size_t i = static_cast<std::size_t>(s) * A + a;
            probs[i] = denom > 0.0 ? (counts[i] + smoothing) / denom : 1.0 / A;
        }
    }
    return Policy::make_stochastic(S, A, std::move(probs));
}

EmpiricalTransitions empirical_transition_freq(const TransitionDataset& ds) {
    if (ds.empty()) fail("empirical_transition_freq: empty dataset");
    const int S = ds.n_states(), A = ds.n_actions();
    EmpiricalTransitions out;
    out.n_states = S;
    out.n_actions = A;
    out.freq.assign(static_cast<std::size_t>(S) * A * S, 0.0);
    out.observed.assign(static_cast<std::size_t>(S) * A, 0);
    out.pair_counts.assign(static_cast<std::size_t>(S) * A, 0);
    for (const auto& r : ds.records()) {
        const std::size_t pair = static_cast<std::size_t>(r.state) * A + r.action;
        out.freq[pair * S + r.next_state] += 1.0;
        out.observed[pair] = 1;
        ++out.pair_counts[pair];
    }
    for (std::size_t pair = 0; pair < out.observed.size(); ++pair) {
        if (!out.observed[pair]) continue;
        const double n = static_cast<double>(out.pair_counts[pair]);
        for (int sn = 0; sn < S; ++sn) out.freq[pair * S + sn] /= n;
    }
    return out;
}

TransitionDataset rollout(const MdpSpec& mdp, const Policy& policy, int n_episodes,
                          std::uint64_t seed, const RewardFn& reward_fn,
                          const StateTagger& tagger) {
    if (policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions)
        fail("rollout: policy shape does not match MDP");
    policy.validate();
    Rng rng(seed);
    std::vector<TransitionRecord> records;
    records.reserve(static_cast<std::size_t>(n_episodes) * mdp.horizon);

    for (int ep = 0; ep < n_episodes; ++ep) {
        int s = rng.categorical(mdp.initial_dist);
        const std::size_t ep_begin = records.size();
        for (int t = 0; t < mdp.horizon; ++t) {
            int a;
            if (policy.deterministic()) {
                a = policy.action_table[s];
            } else {
                a = rng.categorical(policy.row(s));
            }
            int sn = rng.categorical(mdp.next_dist(s, a));
            TransitionRecord rec;
            rec.episode_id = ep;
            rec.t = t;
            rec.state = s;
            rec.action = a;
            rec.next_state = sn;
            rec.reward = reward_fn ? reward_fn(s, a, sn) : mdp.r(s, a);
            rec.done = false;
            if (tagger) rec.strata = tagger(s);
            records.push_back(std::move(rec));
            s = sn;
            if (mdp.terminal(s)) break;
        }
        if (records.size() > ep_begin) records.back().done = true;
    }
    return TransitionDataset::episodic(mdp.n_states, mdp.n_actions, std::move(records));
}

std::vector<TransitionDataset> split_by_episode(const TransitionDataset& ds,
                                                std::span<const double> ratios,
                                                std::uint64_t seed) {
    if (!ds.is_episodic()) fail("split_by_episode: dataset has no episode structure");
    double rsum = std::accumulate(ratios.begin(), ratios.end(), 0.0);
    if (std::abs(rsum - 1.0) > 1e-9) fail("split_by_episode: ratios must sum to 1");

    std::vector<int> episode_ids;
    episode_ids.reserve(ds.n_episodes());
    for (const auto& [id, range] : ds.episode_index()) episode_ids.push_back(id);
    Rng rng(seed);
    rng.shuffle(episode_ids);

    const std::size_t n = episode_ids.size();
    std::vector<int> part_of_episode_pos(n, static_cast<int>(ratios.size()) - 1);
    std::size_t start = 0;
    for (std::size_t p = 0; p + 1 < ratios.size(); ++p) {
        std::size_t take = static_cast<std::size_t>(std::llround(ratios[p] * double(n)));
        take = std::min(take, n - start);
        for (std::size_t i = start; i < start + take; ++i) part_of_episode_pos[i] = int(p);
        start += take;
    }
    std::map<int, int> part_of;  // episode id -> part
    for (std::size_t i = 0; i < n; ++i) part_of[episode_ids[i]] = part_of_episode_pos[i];

    std::vector<std::vector<TransitionRecord>> buckets(ratios.size());
    for (const auto& [id, range] : ds.episode_index()) {
        auto& bucket = buckets[part_of[id]];
        for (std::size_t i = range.first; i < range.second; ++i)
            bucket.push_back(ds.records()[i]);
    }
    std::vector<TransitionDataset> parts;
    parts.reserve(ratios.size());
    for (auto& b : buckets)
        parts.push_back(TransitionDataset::episodic(ds.n_states(), ds.n_actions(), std::move(b)));
    return parts;
}

// ---------------------------------------------------------------------------
// Record text format
// ---------------------------------------------------------------------------

namespace {

std::string join_strata(const std::vector<std::string>& tags) {
    if (tags.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (i) out += ';';
        out += tags[i];
    }
    return out;
}

std::vector<std::string> split_strata(const std::string& field) {
    if (field == "-" || field.empty()) return {};
    std::vector<std::string> tags;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = field.find(';', pos);
        if (next == std::string::npos) {
            tags.push_back(field.substr(pos));
            break;
        }
        tags.push_back(field.substr(pos, next - pos));
        pos = next + 1;
    }
    return tags;
}

}  // namespace

void save_dataset(const TransitionDataset& ds, std::ostream& os) {
    os << "episode_id\tt\tstate\taction\treward\tnext_state\tdone\tstrata\n";
    char buf[40];
    for (const auto& r : ds.records()) {
        std::snprintf(buf, sizeof(buf), "%.9g", r.reward);
        os << r.episode_id << '\t' << r.t << '\t' << r.state << '\t' << r.action << '\t' << buf
           << '\t' << r.next_state << '\t' << (r.done ? 1 : 0) << '\t' << join_strata(r.strata)
           << '\n';
    }
}

void save_dataset_file(const TransitionDataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) fail("cannot open for writing: " + path);
    save_dataset(ds, os);
}

TransitionDataset load_dataset(std::istream& is, int n_states, int n_actions) {
    std::string header;
    if (!std::getline(is, header)) fail("load_dataset: missing header");
    if (header.rfind("episode_id", 0) != 0) fail("load_dataset: unrecognized header");

    std::vector<TransitionRecord> records;
    std::string line;
    int max_state = -1, max_action = -1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        TransitionRecord r;
        int done_flag;
        std::string strata_field;
        if (!(ls >> r.episode_id >> r.t >> r.state >> r.action >> r.reward >> r.next_state >>
              done_flag >> strata_field))
            fail("load_dataset: malformed record line");
        r.done = done_flag != 0;
        r.strata = split_strata(strata_field);
        max_state = std::max({max_state, r.state, r.next_state});
        max_action = std::max(max_action, r.action);
        records.push_back(std::move(r));
    }
    if (n_states < 0) n_states = max_state + 1;
    if (n_actions < 0) n_actions = max_action + 1;
    try {
        return TransitionDataset::episodic(n_states, n_actions, records);
    } catch (const std::invalid_argument&) {
        return TransitionDataset::transitions(n_states, n_actions, std::move(records));
    }
}

TransitionDataset load_dataset_file(const std::string& path, int n_states, int n_actions) {
    std::ifstream is(path);
    if (!is) fail("cannot open for reading: " + path);
    return load_dataset(is, n_states, n_actions);
}

}  // namespace orl
