#include "orl/envgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace orl {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

StateFeaturizer one_hot_featurizer(int n_states) {
    StateFeaturizer f;
    f.dim = n_states;
    f.fill = [n_states](int s, double* out) {
        std::fill(out, out + n_states, 0.0);
        out[s] = 1.0;
    };
    return f;
}

bool ConstraintRuleSet::allows(int state, int action) const {
    for (const auto& rule : rules) {
        if (!rule.applies(state)) continue;
        if (std::find(rule.forbidden.begin(), rule.forbidden.end(), action) !=
            rule.forbidden.end())
            return false;
    }
    return true;
}

std::vector<int> feasible_set(const ConstraintRuleSet& rules, int state) {
    std::vector<int> out;
    for (int a = 0; a < rules.n_actions; ++a)
        if (rules.allows(state, a)) out.push_back(a);
    return out;
}

// ---------------------------------------------------------------------------
// Chronic care
// ---------------------------------------------------------------------------

void ChronicCareConfig::validate() const {
    if (n_control_levels < 2) fail("ChronicCareConfig: need at least 2 control levels");
    if (n_risk_flags < 0 || n_risk_flags > 8) fail("ChronicCareConfig: n_risk_flags out of range");
    if (n_actions < 4)
        fail("ChronicCareConfig: need maintain/increase/decrease plus at least one start-drug");
    if (n_risk_flags > n_actions - 3)
        fail("ChronicCareConfig: more risk flags than distinct start-drug actions");
    if (!(inertia_prob >= 0.0 && inertia_prob <= 1.0))
        fail("ChronicCareConfig: inertia_prob must lie in [0,1]");
    if (w_target <= 0.0 || w_hypo <= 0.0 || w_compl <= 0.0)
        fail("ChronicCareConfig: reward weights must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("ChronicCareConfig: gamma must lie in [0,1)");
    if (horizon < 1) fail("ChronicCareConfig: horizon must be positive");
}

namespace {

// Treatment intensity along the dosing axis: maintain 0, increase +1,
// decrease -1, start-drug options from 1.0 up to 1.9.
double action_intensity(int a) {
    if (a == 0) return 0.0;
    if (a == 1) return 1.0;
    if (a == 2) return -1.0;
    return 1.0 + 0.1 * (a - 3);
}

struct ChronicDynamics {
    double p_improve(double x) const { return logistic(-2.0 + 1.6 * x); }
    double p_worsen(double x) const { return logistic(-2.0 - 1.6 * x); }
    double p_hypo(int control, double x) const {
        return logistic(-3.2 + 1.1 * x - 0.9 * control);
    }
    double p_compl(int control) const { return logistic(-3.5 + 0.55 * control); }
};

// Default rule j forbids start-drug action 3 + ((j+2) mod n_drugs) when risk
// flag j is set; distinct per flag, and never one of maintain/increase/
// decrease, so feasible sets stay nonempty.
int default_forbidden_action(int flag, int n_actions) {
    const int n_drugs = n_actions - 3;
    return 3 + (flag + 2) % n_drugs;
}

}  // namespace

int ChronicCareEnv::state_of(int control, int flags, int event) const {
    return (control * (1 << cfg.n_risk_flags) + flags) * 3 + event;
}
int ChronicCareEnv::control_level(int state) const { return state / (3 * (1 << cfg.n_risk_flags)); }
int ChronicCareEnv::risk_flags(int state) const { return (state / 3) % (1 << cfg.n_risk_flags); }
int ChronicCareEnv::event(int state) const { return state % 3; }

ChronicCareEnv build_chronic_care(const ChronicCareConfig& cfg) {
    cfg.validate();
    const int C = cfg.n_control_levels;
    const int F = cfg.n_risk_flags;
    const int A = cfg.n_actions;
    const int n_combos = 1 << F;
    const int S = C * n_combos * 3;
    const ChronicDynamics dyn;

    ChronicCareEnv env;
    env.cfg = cfg;
    env.mdp = make_blank_mdp(S, A, cfg.gamma, cfg.horizon);
    env.mdp.r_lo = -cfg.w_compl;
    env.mdp.r_hi = cfg.w_target;

    // Constraint rules: one per risk flag.
    env.rules.n_actions = A;
    const int combos = n_combos;
    for (int j = 0; j < F; ++j) {
        ConstraintRule rule;
        rule.name = "flag" + std::to_string(j) + "_no_drug" +
                    std::to_string(default_forbidden_action(j, A) - 3);
        const int bit = 1 << j;
        rule.applies = [bit, combos](int s) { return ((s / 3) % combos) & bit; };
        rule.forbidden = {default_forbidden_action(j, A)};
        env.rules.rules.push_back(std::move(rule));
    }

    // Transitions, feasible mask, expected rewards.
    for (int c = 0; c < C; ++c) {
        for (int fl = 0; fl < n_combos; ++fl) {
            for (int e = 0; e < 3; ++e) {
                const int s = env.state_of(c, fl, e);
                for (int a = 0; a < A; ++a) {
                    const double x = action_intensity(a);
                    double p_up = dyn.p_improve(x);    // control level decreases
                    double p_down = dyn.p_worsen(x);   // control level increases
                    const int c_better = std::max(0, c - 1);
                    const int c_worse = std::min(C - 1, c + 1);
                    const double pc = dyn.p_compl(c);
                    const double ph = (1.0 - pc) * dyn.p_hypo(c, x);
                    const double pe[3] = {1.0 - pc - ph, ph, pc};

                    double p_ctl[3] = {p_up, 1.0 - p_up - p_down, p_down};
                    const int c_next[3] = {c_better, c, c_worse};
                    for (int k = 0; k < 3; ++k)
                        for (int en = 0; en < 3; ++en)
                            env.mdp.p(s, a, env.state_of(c_next[k], fl, en)) +=
                                p_ctl[k] * pe[en];

                    const double p_in_control =
                        (c_better == 0 ? p_ctl[0] : 0.0) + (c == 0 ? p_ctl[1] : 0.0);
                    env.mdp.r(s, a) =
                        cfg.w_target * p_in_control - cfg.w_hypo * ph - cfg.w_compl * pc;

                    env.mdp.feasible_mask[static_cast<std::size_t>(s) * A + a] =
                        env.rules.allows(s, a) ? 1 : 0;
                }
                if (feasible_set(env.rules, s).empty())
                    fail("build_chronic_care: constraint rules empty the feasible set");
            }
        }
    }

    // Initial distribution: event-free states, mildly decaying over control
    // levels, each risk flag an independent 25% draw.
    {
        std::vector<double> cw(C);
        double csum = 0.0;
        for (int c = 0; c < C; ++c) csum += cw[c] = (c <= 1 ? 1.0 : std::pow(0.8, c - 1));
        std::fill(env.mdp.initial_dist.begin(), env.mdp.initial_dist.end(), 0.0);
        for (int c = 0; c < C; ++c)
            for (int fl = 0; fl < n_combos; ++fl) {
                double pf = 1.0;
                for (int j = 0; j < F; ++j) pf *= (fl >> j) & 1 ? 0.25 : 0.75;
                env.mdp.initial_dist[env.state_of(c, fl, 0)] = cw[c] / csum * pf;
            }
    }

    // Behavior policy: inertia mass on maintain in every state, the rest on a
    // fixed template (increase-heavy, geometrically decaying start-drugs).
    // In flagged states the forbidden drug keeps a small residual mass and
    // the excess moves to increase, so maintain's share is exact by
    // construction and each rule is satisfied well above 98%.
    {
        const int n_drugs = A - 3;
        std::vector<double> tmpl(A, 0.0);
        tmpl[1] = 0.40;
        tmpl[2] = 0.22;
        double gsum = 0.0;
        for (int j = 0; j < n_drugs; ++j) gsum += std::pow(0.55, j);
        for (int j = 0; j < n_drugs; ++j) tmpl[3 + j] = 0.38 * std::pow(0.55, j) / gsum;

        std::vector<double> probs(static_cast<std::size_t>(S) * A, 0.0);
        const double rest = 1.0 - cfg.inertia_prob;
        for (int s = 0; s < S; ++s) {
            std::vector<double> row(A, 0.0);
            row[0] = cfg.inertia_prob;
            for (int a = 1; a < A; ++a) row[a] = rest * tmpl[a];
            for (const auto& rule : env.rules.rules) {
                if (!rule.applies(s)) continue;
                for (int bad : rule.forbidden) {
                    const double moved = row[bad] * 0.75;
                    row[bad] -= moved;
                    row[1] += moved;
                }
            }
            for (int a = 0; a < A; ++a) probs[static_cast<std::size_t>(s) * A + a] = row[a];
        }
        env.behavior = Policy::make_stochastic(S, A, std::move(probs));
    }

    env.mdp.validate();

    const int risk_bits = F;
    const auto state_control = [n_combos](int s) { return s / (3 * n_combos); };
    const auto state_flags = [n_combos](int s) { return (s / 3) % n_combos; };
    const auto state_event = [](int s) { return s % 3; };

    env.realized_reward = [state_control, state_event, cfg](int, int, int sn) {
        double r = 0.0;
        if (state_control(sn) == 0) r += cfg.w_target;
        if (state_event(sn) == 1) r -= cfg.w_hypo;
        if (state_event(sn) == 2) r -= cfg.w_compl;
        return r;
    };
    env.tagger = [state_control, state_flags](int s) {
        return std::vector<std::string>{"fl:" + std::to_string(state_flags(s)),
                                        "ctl:" + std::to_string(state_control(s))};
    };
    env.features.dim = 1 + F + 2;
    env.features.fill = [state_control, state_flags, state_event, risk_bits, C](int s,
                                                                                double* out) {
        out[0] = static_cast<double>(state_control(s)) / (C - 1);
        const int fl = state_flags(s);
        for (int j = 0; j < risk_bits; ++j) out[1 + j] = (fl >> j) & 1 ? 1.0 : 0.0;
        out[1 + risk_bits] = state_event(s) == 1 ? 1.0 : 0.0;
        out[2 + risk_bits] = state_event(s) == 2 ? 1.0 : 0.0;
    };
    env.out_of_control = [state_control](int s) { return state_control(s) > 0; };
    env.non_intensifying = {0, 2};
    return env;
}

// ---------------------------------------------------------------------------
// Critical care
// ---------------------------------------------------------------------------

void CriticalCareConfig::validate() const {
    if (n_fluid_bins < 2 || n_vaso_bins < 2) fail("CriticalCareConfig: need at least 2 dose bins");
    if (!(mode_prob > 0.0 && mode_prob < 1.0))
        fail("CriticalCareConfig: mode_prob must lie in (0,1)");
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("CriticalCareConfig: gamma must lie in [0,1)");
    if (horizon < 1) fail("CriticalCareConfig: horizon must be positive");
}

namespace {

constexpr int kSeverityLevels = 6;

// Geometric decay rate over dose distance, fixed so the lowest dose pair
// carries exactly mode_prob: (sum_u rho^u)(sum_v rho^v) = 1/mode_prob.
double solve_dose_decay(int n_fluid, int n_vaso, double mode_prob) {
    auto mass = [&](double rho) {
        double su = 0.0, sv = 0.0;
        for (int u = 0; u < n_fluid; ++u) su += std::pow(rho, u);
        for (int v = 0; v < n_vaso; ++v) sv += std::pow(rho, v);
        return su * sv;
    };
    const double target = 1.0 / mode_prob;
    double lo = 0.0, hi = 1.0;
    if (mass(1.0) < target) fail("CriticalCareConfig: mode_prob too small for the dose grid");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mass(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

int CriticalCareEnv::action_of(int fluid, int vaso) const { return fluid * cfg.n_vaso_bins + vaso; }
int CriticalCareEnv::fluid_bin(int action) const { return action / cfg.n_vaso_bins; }
int CriticalCareEnv::vaso_bin(int action) const { return action % cfg.n_vaso_bins; }

CriticalCareEnv build_critical_care(const CriticalCareConfig& cfg) {
    cfg.validate();
    const int L = kSeverityLevels;
    const int A = cfg.n_fluid_bins * cfg.n_vaso_bins;
    const int S = L + 2;

    CriticalCareEnv env;
    env.cfg = cfg;
    env.n_severity_levels = L;
    env.survival_state = L;
    env.death_state = L + 1;
    env.mdp = make_blank_mdp(S, A, cfg.gamma, cfg.horizon);
    env.mdp.r_lo = -1.0;
    env.mdp.r_hi = 1.0;
    env.mdp.terminal_mask[env.survival_state] = 1;
    env.mdp.terminal_mask[env.death_state] = 1;

    const double max_dose = 0.5 * ((cfg.n_fluid_bins - 1) + (cfg.n_vaso_bins - 1));
    for (int sev = 0; sev < L; ++sev) {
        const double need = max_dose * sev / (L - 1);
        for (int a = 0; a < A; ++a) {
            const double dose = 0.5 * (env.fluid_bin(a) + env.vaso_bin(a));
            const double m = dose - need;
            double p_imp = 0.55 * std::exp(-0.35 * (m - 0.4) * (m - 0.4));
            double p_wor = 0.10 + 0.38 * logistic(1.3 * (std::abs(m) - 1.6));
            const int up = sev == 0 ? env.survival_state : sev - 1;
            const int down = sev == L - 1 ? env.death_state : sev + 1;
            env.mdp.p(sev, a, up) = p_imp;
            env.mdp.p(sev, a, down) = p_wor;
            env.mdp.p(sev, a, sev) = 1.0 - p_imp - p_wor;
            env.mdp.r(sev, a) = (up == env.survival_state ? p_imp : 0.0) -
                                (down == env.death_state ? p_wor : 0.0);
        }
    }
    // Absorbing terminals.
    for (int a = 0; a < A; ++a) {
        env.mdp.p(env.survival_state, a, env.survival_state) = 1.0;
        env.mdp.p(env.death_state, a, env.death_state) = 1.0;
    }

    std::fill(env.mdp.initial_dist.begin(), env.mdp.initial_dist.end(), 0.0);
    const double init[kSeverityLevels] = {0.10, 0.22, 0.26, 0.22, 0.14, 0.06};
    for (int sev = 0; sev < L; ++sev) env.mdp.initial_dist[sev] = init[sev];

    // State-independent behavior: geometric decay over total dose distance
    // from the lowest pair, normalized so that pair carries mode_prob.
    {
        const double rho = solve_dose_decay(cfg.n_fluid_bins, cfg.n_vaso_bins, cfg.mode_prob);
        std::vector<double> row(A, 0.0);
        double z = 0.0;
        for (int a = 0; a < A; ++a)
            z += row[a] = std::pow(rho, env.fluid_bin(a) + env.vaso_bin(a));
        std::vector<double> probs(static_cast<std::size_t>(S) * A, 0.0);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                probs[static_cast<std::size_t>(s) * A + a] = row[a] / z;
        env.behavior = Policy::make_stochastic(S, A, std::move(probs));
    }

    env.mdp.validate();

    const int surv = env.survival_state, death = env.death_state;
    env.realized_reward = [surv, death](int, int, int sn) {
        if (sn == surv) return 1.0;
        if (sn == death) return -1.0;
        return 0.0;
    };
    env.tagger = [surv, death](int s) {
        if (s == surv) return std::vector<std::string>{"sev:surv"};
        if (s == death) return std::vector<std::string>{"sev:death"};
        return std::vector<std::string>{"sev:" + std::to_string(s)};
    };
    env.features.dim = 3;
    env.features.fill = [surv, death, L](int s, double* out) {
        out[0] = s < L ? static_cast<double>(s) / (L - 1) : 0.0;
        out[1] = s == surv ? 1.0 : 0.0;
        out[2] = s == death ? 1.0 : 0.0;
    };
    return env;
}

}  // namespace orl
