#include "orl/mdp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace orl {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string fmt_full(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

void MdpSpec::validate() const {
    if (n_states <= 0 || n_actions <= 0) fail("MdpSpec: empty state or action space");
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("MdpSpec: gamma must lie in [0,1)");
    if (horizon <= 0) fail("MdpSpec: horizon must be positive");
    const auto S = static_cast<std::size_t>(n_states);
    const auto A = static_cast<std::size_t>(n_actions);
    if (transition.size() != S * A * S) fail("MdpSpec: transition tensor shape mismatch");
    if (reward.size() != S * A) fail("MdpSpec: reward tensor shape mismatch");
    if (initial_dist.size() != S) fail("MdpSpec: initial_dist shape mismatch");
    if (terminal_mask.size() != S) fail("MdpSpec: terminal_mask shape mismatch");
    if (feasible_mask.size() != S * A) fail("MdpSpec: feasible_mask shape mismatch");
    if (!(r_lo <= r_hi)) fail("MdpSpec: r_lo > r_hi");

    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            double sum = 0.0;
            for (int sn = 0; sn < n_states; ++sn) {
                double v = p(s, a, sn);
                if (v < -kProbTol || !std::isfinite(v))
                    fail("MdpSpec: negative or non-finite transition probability");
                sum += v;
            }
            if (std::abs(sum - 1.0) > kProbTol)
                fail("MdpSpec: transition row does not sum to 1 at (s=" + std::to_string(s) +
                     ",a=" + std::to_string(a) + ")");
            double rv = r(s, a);
            if (!std::isfinite(rv) || rv < r_lo - kProbTol || rv > r_hi + kProbTol)
                fail("MdpSpec: reward outside declared [r_lo, r_hi]");
        }
        bool any = false;
        for (int a = 0; a < n_actions; ++a) any = any || feasible(s, a);
        if (!any) fail("MdpSpec: empty feasible set at state " + std::to_string(s));
    }
    double isum = 0.0;
    for (double v : initial_dist) {
        if (v < -kProbTol || !std::isfinite(v)) fail("MdpSpec: bad initial_dist entry");
        isum += v;
    }
    if (std::abs(isum - 1.0) > kProbTol) fail("MdpSpec: initial_dist does not sum to 1");
}

MdpSpec make_blank_mdp(int n_states, int n_actions, double gamma, int horizon) {
    MdpSpec m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.gamma = gamma;
    m.horizon = horizon;
    const auto S = static_cast<std::size_t>(n_states);
    const auto A = static_cast<std::size_t>(n_actions);
    m.transition.assign(S * A * S, 0.0);
    m.reward.assign(S * A, 0.0);
    m.initial_dist.assign(S, 1.0 / n_states);
    m.terminal_mask.assign(S, 0);
    m.feasible_mask.assign(S * A, 1);
    return m;
}

Policy Policy::make_deterministic(int n_states, int n_actions, std::vector<int> actions) {
    Policy p;
    p.kind = Kind::deterministic;
    p.n_states = n_states;
    p.n_actions = n_actions;
    p.action_table = std::move(actions);
    p.validate();
    return p;
}

Policy Policy::make_stochastic(int n_states, int n_actions, std::vector<double> probs) {
    Policy p;
    p.kind = Kind::stochastic;
    p.n_states = n_states;
    p.n_actions = n_actions;
    p.prob_table = std::move(probs);
    p.validate();
    return p;
}

Policy Policy::uniform(int n_states, int n_actions) {
    return make_stochastic(n_states, n_actions,
                           std::vector<double>(static_cast<std::size_t>(n_states) * n_actions,
                                               1.0 / n_actions));
}

int Policy::mode(int s) const {
    if (kind == Kind::deterministic) return action_table[s];
    int best = 0;
    double best_p = prob(s, 0);
    for (int a = 1; a < n_actions; ++a) {
        if (prob(s, a) > best_p) {
            best_p = prob(s, a);
            best = a;
        }
    }
    return best;
}

void Policy::validate() const {
    if (n_states <= 0 || n_actions <= 0) fail("Policy: empty state or action space");
    if (kind == Kind::deterministic) {
        if (action_table.size() != static_cast<std::size_t>(n_states))
            fail("Policy: action table shape mismatch");
        for (int a : action_table)
            if (a < 0 || a >= n_actions) fail("Policy: action id out of range");
    } else {
        if (prob_table.size() != static_cast<std::size_t>(n_states) * n_actions)
            fail("Policy: probability table shape mismatch");
        for (int s = 0; s < n_states; ++s) {
            double sum = 0.0;
            for (int a = 0; a < n_actions; ++a) {
                double v = prob(s, a);
                if (v < -kProbTol || !std::isfinite(v)) fail("Policy: bad probability entry");
                sum += v;
            }
            if (std::abs(sum - 1.0) > kProbTol)
                fail("Policy: row does not sum to 1 at state " + std::to_string(s));
        }
    }
}

// ---------------------------------------------------------------------------
// MdpSpec text format
// ---------------------------------------------------------------------------

void save_mdp(const MdpSpec& mdp, std::ostream& os) {
    os << "mdp_spec v1\n";
    os << "n_states " << mdp.n_states << "\n";
    os << "n_actions " << mdp.n_actions << "\n";
    os << "gamma " << fmt_full(mdp.gamma) << "\n";
    os << "horizon " << mdp.horizon << "\n";
    os << "r_lo " << fmt_full(mdp.r_lo) << "\n";
    os << "r_hi " << fmt_full(mdp.r_hi) << "\n";

    os << "transition " << mdp.n_states << " " << mdp.n_actions << " " << mdp.n_states << "\n";
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            for (int sn = 0; sn < mdp.n_states; ++sn)
                os << (sn ? " " : "") << fmt_full(mdp.p(s, a, sn));
            os << "\n";
        }
    os << "reward " << mdp.n_states << " " << mdp.n_actions << "\n";
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) os << (a ? " " : "") << fmt_full(mdp.r(s, a));
        os << "\n";
    }
    os << "initial_dist " << mdp.n_states << "\n";
    for (int s = 0; s < mdp.n_states; ++s) os << (s ? " " : "") << fmt_full(mdp.initial_dist[s]);
    os << "\n";
    os << "terminal_mask " << mdp.n_states << "\n";
    for (int s = 0; s < mdp.n_states; ++s) os << (s ? " " : "") << int(mdp.terminal_mask[s]);
    os << "\n";
    os << "feasible_mask " << mdp.n_states << " " << mdp.n_actions << "\n";
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a)
            os << (a ? " " : "")
               << int(mdp.feasible_mask[static_cast<std::size_t>(s) * mdp.n_actions + a]);
        os << "\n";
    }
}

void save_mdp_file(const MdpSpec& mdp, const std::string& path) {
    std::ofstream os(path);
    if (!os) fail("cannot open for writing: " + path);
    save_mdp(mdp, os);
}

MdpSpec load_mdp(std::istream& is) {
    std::string tag, version;
    is >> tag >> version;
    if (tag != "mdp_spec" || version != "v1") fail("load_mdp: unrecognized header");
    MdpSpec m;
    std::string key;
    auto expect_key = [&](const char* want) {
        is >> key;
        if (key != want) fail(std::string("load_mdp: expected key '") + want + "', got '" + key + "'");
    };
    expect_key("n_states");
    is >> m.n_states;
    expect_key("n_actions");
    is >> m.n_actions;
    expect_key("gamma");
    is >> m.gamma;
    expect_key("horizon");
    is >> m.horizon;
    expect_key("r_lo");
    is >> m.r_lo;
    expect_key("r_hi");
    is >> m.r_hi;

    int d0, d1, d2;
    expect_key("transition");
    is >> d0 >> d1 >> d2;
    if (d0 != m.n_states || d1 != m.n_actions || d2 != m.n_states)
        fail("load_mdp: transition shape mismatch");
    m.transition.resize(static_cast<std::size_t>(d0) * d1 * d2);
    for (double& v : m.transition) is >> v;

    expect_key("reward");
    is >> d0 >> d1;
    if (d0 != m.n_states || d1 != m.n_actions) fail("load_mdp: reward shape mismatch");
    m.reward.resize(static_cast<std::size_t>(d0) * d1);
    for (double& v : m.reward) is >> v;

    expect_key("initial_dist");
    is >> d0;
    if (d0 != m.n_states) fail("load_mdp: initial_dist shape mismatch");
    m.initial_dist.resize(d0);
    for (double& v : m.initial_dist) is >> v;

    expect_key("terminal_mask");
    is >> d0;
    if (d0 != m.n_states) fail("load_mdp: terminal_mask shape mismatch");
    m.terminal_mask.resize(d0);
    for (auto& v : m.terminal_mask) {
        int x;
        is >> x;
        v = static_cast<std::uint8_t>(x);
    }

    expect_key("feasible_mask");
    is >> d0 >> d1;
    if (d0 != m.n_states || d1 != m.n_actions) fail("load_mdp: feasible_mask shape mismatch");
    m.feasible_mask.resize(static_cast<std::size_t>(d0) * d1);
    for (auto& v : m.feasible_mask) {
        int x;
        is >> x;
        v = static_cast<std::uint8_t>(x);
    }
    if (!is) fail("load_mdp: truncated document");
    m.validate();
    return m;
}

MdpSpec load_mdp_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("cannot open for reading: " + path);
    return load_mdp(is);
}

}  // namespace orl
