#include "orl/ope.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "orl/rng.hpp"

namespace orl {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

BehaviorModel::BehaviorModel(int n_actions, int feature_dim)
    : n_actions_(n_actions),
      feature_dim_(feature_dim),
      weights_(static_cast<std::size_t>(n_actions) * feature_dim, 0.0),
      bias_(n_actions, 0.0) {}

std::vector<double> BehaviorModel::predict(std::span<const double> features) const {
    if (features.size() != static_cast<std::size_t>(feature_dim_))
        fail("BehaviorModel: feature dimension mismatch");
    std::vector<double> logits(bias_.begin(), bias_.end());
    for (int a = 0; a < n_actions_; ++a) {
        const double* w = weights_.data() + static_cast<std::size_t>(a) * feature_dim_;
        for (int f = 0; f < feature_dim_; ++f) logits[a] += w[f] * features[f];
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) z += l = std::exp(l - mx);
    for (double& l : logits) l /= z;
    return logits;
}

double BehaviorModel::prob(std::span<const double> features, int action) const {
    return predict(features)[action];
}

void BehaviorModel::fit(std::span<const double> features, std::span<const int> labels,
                        std::size_t n, double reg_c, bool class_weighted, int iterations,
                        double lr) {
    if (n == 0) fail("BehaviorModel::fit: empty training set");
    if (features.size() != n * static_cast<std::size_t>(feature_dim_))
        fail("BehaviorModel::fit: feature matrix shape mismatch");
    reg_c_ = reg_c;
    class_weighted_ = class_weighted;

    std::vector<double> sample_weight(n, 1.0);
    if (class_weighted) {
        std::vector<long> counts(n_actions_, 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[labels[i]];
        int present = 0;
        for (long c : counts)
            if (c > 0) ++present;
        for (std::size_t i = 0; i < n; ++i)
            sample_weight[i] = static_cast<double>(n) / (present * counts[labels[i]]);
    }
    const double weight_sum = std::accumulate(sample_weight.begin(), sample_weight.end(), 0.0);

    // Flat parameter vector [weights | bias] driven by Adam.
    std::vector<double> params(weights_.size() + bias_.size(), 0.0);
    std::vector<double> grad(params.size());
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    std::vector<double> logits(n_actions_);
    for (int it = 1; it <= iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = features.data() + i * feature_dim_;
            for (int a = 0; a < n_actions_; ++a) {
                double l = params[weights_.size() + a];
                const double* w = params.data() + static_cast<std::size_t>(a) * feature_dim_;
                for (int f = 0; f < feature_dim_; ++f) l += w[f] * x[f];
                logits[a] = l;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& l : logits) z += l = std::exp(l - mx);
            for (double& l : logits) l /= z;

            const double sw = sample_weight[i] / weight_sum;
            for (int a = 0; a < n_actions_; ++a) {
                const double d = sw * (logits[a] - (a == labels[i] ? 1.0 : 0.0));
                double* gw = grad.data() + static_cast<std::size_t>(a) * feature_dim_;
                for (int f = 0; f < feature_dim_; ++f) gw[f] += d * x[f];
                grad[weights_.size() + a] += d;
            }
        }
        // L2 on weights only, strength 1/(reg_c * weight_sum).
        const double reg = 1.0 / (reg_c * weight_sum);
        for (std::size_t i = 0; i < weights_.size(); ++i) grad[i] += reg * params[i];

        const double bc1 = 1.0 - std::pow(beta1, it);
        const double bc2 = 1.0 - std::pow(beta2, it);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
    std::copy(params.begin(), params.begin() + weights_.size(), weights_.begin());
    std::copy(params.begin() + weights_.size(), params.end(), bias_.begin());
    fitted_ = true;
}

namespace {

struct EvalSplit {
    std::vector<double> fit_features, heldout_features;
    std::vector<int> fit_labels, heldout_labels;
    std::size_t n_fit = 0, n_heldout = 0;
};

EvalSplit split_for_selection(const TransitionDataset& ds, const StateFeaturizer& features,
                              std::uint64_t seed) {
    EvalSplit out;
    const int F = features.dim;
    std::vector<std::size_t> heldout_records;

    if (ds.is_episodic() && ds.n_episodes() >= 4) {
        std::vector<int> ids;
        for (const auto& [id, range] : ds.episode_index()) ids.push_back(id);
        Rng rng(seed);
        rng.shuffle(ids);
        const std::size_t n_held = ids.size() / 4;
        std::vector<int> held_ids(ids.begin(), ids.begin() + n_held);
        std::sort(held_ids.begin(), held_ids.end());
        for (const auto& [id, range] : ds.episode_index()) {
            if (!std::binary_search(held_ids.begin(), held_ids.end(), id)) continue;
            for (std::size_t i = range.first; i < range.second; ++i)
                heldout_records.push_back(i);
        }
    } else {
        // Transition bags: hold out every fourth record (seeded offset).
        Rng rng(seed);
        const std::size_t offset = rng.uniform_int(4);
        for (std::size_t i = offset; i < ds.size(); i += 4) heldout_records.push_back(i);
    }

    std::vector<bool> is_held(ds.size(), false);
    for (std::size_t i : heldout_records) is_held[i] = true;
    std::vector<double> buf(F);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        features.fill(ds[i].state, buf.data());
        auto& fvec = is_held[i] ? out.heldout_features : out.fit_features;
        auto& lvec = is_held[i] ? out.heldout_labels : out.fit_labels;
        fvec.insert(fvec.end(), buf.begin(), buf.end());
        lvec.push_back(ds[i].action);
    }
    out.n_fit = out.fit_labels.size();
    out.n_heldout = out.heldout_labels.size();
    return out;
}

double brier_score(const BehaviorModel& model, const std::vector<double>& features,
                   const std::vector<int>& labels, int feature_dim) {
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto p = model.predict(
            {features.data() + i * feature_dim, static_cast<std::size_t>(feature_dim)});
        for (int a = 0; a < model.n_actions(); ++a) {
            const double y = a == labels[i] ? 1.0 : 0.0;
            total += (p[a] - y) * (p[a] - y);
        }
    }
    return total / static_cast<double>(labels.size());
}

// Macro one-vs-rest AUC with midrank tie handling.
double macro_auc(const BehaviorModel& model, const std::vector<double>& features,
                 const std::vector<int>& labels, int feature_dim) {
    const std::size_t n = labels.size();
    std::vector<double> probs(n * model.n_actions());
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = model.predict(
            {features.data() + i * feature_dim, static_cast<std::size_t>(feature_dim)});
        std::copy(p.begin(), p.end(), probs.begin() + i * model.n_actions());
    }
    double auc_sum = 0.0;
    int classes = 0;
    std::vector<std::pair<double, int>> scored(n);
    for (int a = 0; a < model.n_actions(); ++a) {
        long pos = 0;
        for (std::size_t i = 0; i < n; ++i) pos += labels[i] == a ? 1 : 0;
        const long neg = static_cast<long>(n) - pos;
        if (pos == 0 || neg == 0) continue;
        for (std::size_t i = 0; i < n; ++i)
            scored[i] = {probs[i * model.n_actions() + a], labels[i] == a ? 1 : 0};
        std::sort(scored.begin(), scored.end(),
                  [](const auto& x, const auto& y) { return x.first < y.first; });
        double rank_sum = 0.0;
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && scored[j].first == scored[i].first) ++j;
            const double midrank = 0.5 * (double(i + 1) + double(j));  // 1-based
            for (std::size_t k = i; k < j; ++k)
                if (scored[k].second) rank_sum += midrank;
            i = j;
        }
        auc_sum += (rank_sum - 0.5 * pos * (pos + 1)) / (double(pos) * double(neg));
        ++classes;
    }
    return classes > 0 ? auc_sum / classes : 0.0;
}

}  // namespace

FittedBehavior fit_behavior_model(const TransitionDataset& ds, const StateFeaturizer& features,
                                  std::span<const double> reg_grid,
                                  std::span<const bool> weighting_options, std::uint64_t seed) {
    if (ds.empty()) fail("fit_behavior_model: empty dataset");
    if (reg_grid.empty()) fail("fit_behavior_model: empty regularization grid");
    if (weighting_options.empty()) fail("fit_behavior_model: empty weighting options");

    const auto split = split_for_selection(ds, features, seed);
    FittedBehavior out;
    out.report.n_fit = split.n_fit;
    out.report.n_heldout = split.n_heldout;

    {
        std::vector<bool> seen(ds.n_actions(), false);
        int distinct = 0;
        for (const auto& r : ds.records())
            if (!seen[r.action]) {
                seen[r.action] = true;
                ++distinct;
            }
        out.report.degenerate = distinct < 2;
    }

    double best_brier = 0.0;
    for (double c : reg_grid) {
        for (bool weighted : weighting_options) {
            BehaviorModel model(ds.n_actions(), features.dim);
            model.fit(split.fit_features, split.fit_labels, split.n_fit, c, weighted);
            BehaviorCandidate cand;
            cand.reg_c = c;
            cand.class_weighted = weighted;
            cand.brier = brier_score(model, split.heldout_features, split.heldout_labels,
                                     features.dim);
            cand.auc = macro_auc(model, split.heldout_features, split.heldout_labels,
                                 features.dim);
            long correct = 0;
            for (std::size_t i = 0; i < split.n_heldout; ++i) {
                const auto p = model.predict({split.heldout_features.data() + i * features.dim,
                                              static_cast<std::size_t>(features.dim)});
                const int pick = static_cast<int>(
                    std::max_element(p.begin(), p.end()) - p.begin());
                correct += pick == split.heldout_labels[i] ? 1 : 0;
            }
            cand.accuracy = static_cast<double>(correct) / double(split.n_heldout);
            out.report.candidates.push_back(cand);
            if (out.report.winner < 0 || cand.brier < best_brier) {
                best_brier = cand.brier;
                out.report.winner = static_cast<int>(out.report.candidates.size()) - 1;
                out.model = model;
            }
        }
    }
    return out;
}

SoftenedPolicy soften(const Policy& policy, double epsilon) {
    if (!policy.deterministic()) fail("soften: base policy must be deterministic");
    if (policy.n_actions < 2) fail("soften: need at least two actions");
    if (!(epsilon > 0.0 && epsilon < 1.0)) fail("soften: epsilon must lie in (0,1)");
    return SoftenedPolicy{policy, epsilon};
}

Policy SoftenedPolicy::to_stochastic() const {
    const int S = base.n_states, A = base.n_actions;
    std::vector<double> probs(static_cast<std::size_t>(S) * A, epsilon / (A - 1));
    for (int s = 0; s < S; ++s)
        probs[static_cast<std::size_t>(s) * A + base.action_table[s]] = 1.0 - epsilon;
    return Policy::make_stochastic(S, A, std::move(probs));
}

double SoftenedPolicy::prob(int s, int a) const {
    return base.action_table[s] == a ? 1.0 - epsilon : epsilon / (base.n_actions - 1);
}

WisReport wis(const TransitionDataset& eval_ds, const Policy& pi_eval,
              const BehaviorProbFn& pi_behavior, double gamma, double floor) {
    if (!eval_ds.is_episodic()) fail("wis: dataset has no episode structure");
    if (eval_ds.empty()) fail("wis: empty dataset");

    WisReport report;
    report.n_episodes = eval_ds.n_episodes();
    double rho_sum = 0.0, rho_sq_sum = 0.0;
    for (const auto& [id, range] : eval_ds.episode_index()) {
        WisEpisode ep;
        ep.episode_id = id;
        ep.rho = 1.0;
        double discount = 1.0;
        for (std::size_t i = range.first; i < range.second; ++i) {
            const auto& rec = eval_ds[i];
            double pb = pi_behavior(rec.state, rec.action);
            if (pb < floor) {
                pb = floor;
                ++report.clamped;
            }
            ep.rho *= pi_eval.prob(rec.state, rec.action) / pb;
            ep.ret += discount * rec.reward;
            discount *= gamma;
        }
        rho_sum += ep.rho;
        rho_sq_sum += ep.rho * ep.rho;
        report.episodes.push_back(ep);
    }
    if (rho_sum <= 0.0)
        throw std::runtime_error("wis: every trajectory ratio is zero; estimate undefined");

    report.w_t = rho_sum / static_cast<double>(report.n_episodes);
    report.ess = rho_sum * rho_sum / rho_sq_sum;
    double total = 0.0;
    for (auto& ep : report.episodes) {
        ep.norm_weight = ep.rho / report.w_t;
        ep.v = ep.norm_weight * ep.ret;
        total += ep.v;
    }
    report.wis = total / static_cast<double>(report.n_episodes);
    return report;
}

WisReport wis(const TransitionDataset& eval_ds, const Policy& pi_eval, const Policy& pi_behavior,
              double gamma, double floor) {
    return wis(
        eval_ds, pi_eval,
        [&pi_behavior](int s, int a) { return pi_behavior.prob(s, a); }, gamma, floor);
}

WisReport wis(const TransitionDataset& eval_ds, const Policy& pi_eval,
              const BehaviorModel& pi_behavior, const StateFeaturizer& features, double gamma,
              double floor) {
    // Cache rows per distinct state; states are dense ids.
    std::vector<std::vector<double>> cache(eval_ds.n_states());
    std::vector<double> buf(features.dim);
    return wis(
        eval_ds, pi_eval,
        [&](int s, int a) {
            auto& row = cache[s];
            if (row.empty()) {
                features.fill(s, buf.data());
                row = pi_behavior.predict(buf);
            }
            return row[a];
        },
        gamma, floor);
}

double model_concordance(const TransitionDataset& ds, const Policy& pi_a, const Policy& pi_b) {
    if (ds.empty()) fail("model_concordance: empty dataset");
    long agree = 0;
    for (const auto& r : ds.records())
        agree += pi_a.mode(r.state) == pi_b.mode(r.state) ? 1 : 0;
    return static_cast<double>(agree) / static_cast<double>(ds.size());
}

std::optional<double> appropriate_intensification(const TransitionDataset& ds,
                                                  const Policy& policy,
                                                  const std::function<bool(int)>& out_of_control,
                                                  std::span<const int> non_intensifying) {
    long qualifying = 0, intensified = 0;
    for (const auto& r : ds.records()) {
        if (!out_of_control(r.state)) continue;
        ++qualifying;
        const int a = policy.mode(r.state);
        if (std::find(non_intensifying.begin(), non_intensifying.end(), a) ==
            non_intensifying.end())
            ++intensified;
    }
    if (qualifying == 0) return std::nullopt;
    return static_cast<double>(intensified) / static_cast<double>(qualifying);
}

std::optional<double> constraint_satisfaction_rate(const TransitionDataset& ds,
                                                   const Policy& policy,
                                                   const ConstraintRule& rule) {
    long applicable = 0, satisfied = 0;
    for (const auto& r : ds.records()) {
        if (!rule.applies(r.state)) continue;
        ++applicable;
        const int a = policy.mode(r.state);
        if (std::find(rule.forbidden.begin(), rule.forbidden.end(), a) == rule.forbidden.end())
            ++satisfied;
    }
    if (applicable == 0) return std::nullopt;
    return static_cast<double>(satisfied) / static_cast<double>(applicable);
}

}  // namespace orl
