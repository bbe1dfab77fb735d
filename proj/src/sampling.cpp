#include "orl/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

#include "orl/rng.hpp"

namespace orl {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::vector<std::string> stratum_key(const TransitionRecord& rec,
                                     const std::vector<int>& keys) {
    std::vector<std::string> key;
    key.reserve(keys.size());
    for (int k : keys) {
        if (k < 0 || static_cast<std::size_t>(k) >= rec.strata.size())
            fail("SamplingPlan: strata key " + std::to_string(k) +
                 " is absent from the dataset's strata tuple");
        key.push_back(rec.strata[k]);
    }
    return key;
}

// Largest-remainder allocation of `target` draws proportional to sizes.
std::vector<long> allocate_proportional(const std::vector<long>& sizes, long target) {
    long total = 0;
    for (long s : sizes) total += s;
    std::vector<long> alloc(sizes.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    long assigned = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        const double quota = static_cast<double>(sizes[i]) * target / total;
        alloc[i] = static_cast<long>(std::floor(quota));
        assigned += alloc[i];
        remainders.push_back({quota - std::floor(quota), i});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (long r = target - assigned, i = 0; r > 0; --r, ++i) ++alloc[remainders[i].second];
    return alloc;
}

}  // namespace

void SamplingPlan::validate() const {
    if (mode != Mode::underover && !(k > 0.0)) fail("SamplingPlan: K must be positive");
    for (int k_pos : strata_keys)
        if (k_pos < 0) fail("SamplingPlan: negative strata key");
}

std::string sampling_mode_name(SamplingPlan::Mode m) {
    switch (m) {
        case SamplingPlan::Mode::under: return "under";
        case SamplingPlan::Mode::over: return "over";
        case SamplingPlan::Mode::underover: return "underover";
    }
    return "?";
}

std::pair<TransitionDataset, SamplingReport> resample(const TransitionDataset& ds,
                                                      const SamplingPlan& plan) {
    if (ds.empty()) fail("resample: empty dataset");
    plan.validate();

    const int A = ds.n_actions();
    const auto& counts = ds.action_counts();
    int present = 0;
    for (int a = 0; a < A; ++a)
        if (counts[a] > 0) ++present;
    const double sigma = static_cast<double>(ds.size()) / present;

    SamplingReport report;
    report.mode = plan.mode;
    report.k = plan.k;
    report.sigma = sigma;

    // Record indices per action, in dataset order.
    std::vector<std::vector<std::size_t>> by_action(A);
    for (std::size_t i = 0; i < ds.size(); ++i) by_action[ds[i].action].push_back(i);

    const long under_over_target = static_cast<long>(std::floor(sigma));
    const long k_target = static_cast<long>(std::floor(plan.k * sigma));

    Rng rng(plan.seed);
    std::vector<TransitionRecord> out;
    std::vector<ActionSamplingStats> stats;

    for (int a = 0; a < A; ++a) {
        const long n = counts[a];
        if (n == 0) continue;  // nothing to draw from
        long target;
        switch (plan.mode) {
            case SamplingPlan::Mode::under: target = n > k_target ? k_target : n; break;
            case SamplingPlan::Mode::over: target = n < k_target ? k_target : n; break;
            case SamplingPlan::Mode::underover: target = under_over_target; break;
            default: target = n;
        }

        ActionSamplingStats st;
        st.action = a;
        st.source_count = n;
        st.target_count = target;

        if (target == n && plan.mode != SamplingPlan::Mode::underover) {
            // Untouched: keep the action's records as they stand.
            for (std::size_t idx : by_action[a]) out.push_back(ds[idx]);
            st.realized_count = n;
        } else {
            if (!plan.replacement && target > n)
                fail("resample: without-replacement draw larger than the source");
            // Group by stratum key (ordered, hence deterministic).
            std::map<std::vector<std::string>, std::vector<std::size_t>> strata;
            for (std::size_t idx : by_action[a])
                strata[stratum_key(ds[idx], plan.strata_keys)].push_back(idx);
            std::vector<long> sizes;
            sizes.reserve(strata.size());
            for (const auto& [key, members] : strata)
                sizes.push_back(static_cast<long>(members.size()));
            const auto alloc = allocate_proportional(sizes, target);

            std::size_t g = 0;
            for (const auto& [key, members] : strata) {
                const long want = alloc[g++];
                if (plan.replacement) {
                    for (long d = 0; d < want; ++d)
                        out.push_back(ds[members[rng.uniform_int(members.size())]]);
                } else {
                    // Partial Fisher-Yates selection.
                    std::vector<std::size_t> pool = members;
                    for (long d = 0; d < want; ++d) {
                        const std::size_t j = d + rng.uniform_int(pool.size() - d);
                        std::swap(pool[d], pool[j]);
                        out.push_back(ds[pool[d]]);
                    }
                }
            }
            st.realized_count = target;
        }
        stats.push_back(st);
    }

    const double n_out = static_cast<double>(out.size());
    const double n_src = static_cast<double>(ds.size());
    report.min_w = 0.0;
    report.max_w = 0.0;
    bool first = true;
    for (auto& st : stats) {
        if (st.realized_count > 0) {
            st.w = (st.realized_count / n_out) / (st.source_count / n_src);
            if (first || st.w < report.min_w) report.min_w = st.w;
            if (first || st.w > report.max_w) report.max_w = st.w;
            first = false;
        }
    }
    report.per_action = std::move(stats);

    return {TransitionDataset::transitions(ds.n_states(), A, std::move(out)),
            std::move(report)};
}

PreservationReport verify_transition_preservation(const TransitionDataset& src,
                                                  const TransitionDataset& dst, double tol,
                                                  long min_count, double se_multiplier) {
    const auto f_src = empirical_transition_freq(src);
    const auto f_dst = empirical_transition_freq(dst);
    if (f_src.n_states != f_dst.n_states || f_src.n_actions != f_dst.n_actions)
        fail("verify_transition_preservation: dimension mismatch");

    PreservationReport report;
    for (int s = 0; s < f_src.n_states; ++s) {
        for (int a = 0; a < f_src.n_actions; ++a) {
            if (!f_src.is_observed(s, a) || !f_dst.is_observed(s, a)) continue;
            const long n1 = f_src.count(s, a), n2 = f_dst.count(s, a);
            if (n1 < min_count || n2 < min_count) continue;
            const auto p = f_src.row(s, a);
            const auto q = f_dst.row(s, a);
            double tv = 0.0, se = 0.0;
            for (int sn = 0; sn < f_src.n_states; ++sn) {
                tv += std::abs(p[sn] - q[sn]);
                se += std::sqrt(std::max(0.0, p[sn] * (1.0 - p[sn])));
            }
            tv *= 0.5;
            se *= 0.5 * std::sqrt(1.0 / n1 + 1.0 / n2);
            PairPreservation row{s, a, n1, n2, tv, se};
            report.rows.push_back(row);
            ++report.pairs_checked;
            report.max_tv = std::max(report.max_tv, tv);
            if (tv > tol + se_multiplier * se + 1e-12) report.violations.push_back(row);
        }
    }
    return report;
}

std::vector<ActionShift> action_conditional_shift(const TransitionDataset& src,
                                                  const TransitionDataset& dst) {
    if (src.empty() || dst.empty()) fail("action_conditional_shift: empty dataset");
    if (src.n_actions() != dst.n_actions())
        fail("action_conditional_shift: action-space mismatch");
    std::vector<ActionShift> out;
    const double n_src = static_cast<double>(src.size());
    const double n_dst = static_cast<double>(dst.size());
    for (int a = 0; a < src.n_actions(); ++a) {
        const long cs = src.action_counts()[a];
        if (cs == 0) continue;
        const long cd = dst.action_counts()[a];
        out.push_back({a, (cd / n_dst) / (cs / n_src)});
    }
    return out;
}

void save_sampling_report(const SamplingReport& report, std::ostream& os) {
    char buf[160];
    os << "mode\t" << sampling_mode_name(report.mode) << "\n";
    std::snprintf(buf, sizeof(buf), "k\t%.9g\nsigma\t%.9g\n", report.k, report.sigma);
    os << buf;
    os << "action\tsource\ttarget\trealized\tw\n";
    for (const auto& st : report.per_action) {
        std::snprintf(buf, sizeof(buf), "%d\t%ld\t%ld\t%ld\t%.9g\n", st.action, st.source_count,
                      st.target_count, st.realized_count, st.w);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "summary\tmin_w\t%.9g\tmax_w\t%.9g\n", report.min_w,
                  report.max_w);
    os << buf;
}

}  // namespace orl
