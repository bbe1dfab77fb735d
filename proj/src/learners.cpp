#include "orl/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "orl/rng.hpp"

namespace orl {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

double row_max(const double* row, int n) {
    double best = row[0];
    for (int a = 1; a < n; ++a) best = std::max(best, row[a]);
    return best;
}

int row_argmax(const double* row, int n) {
    int best = 0;
    for (int a = 1; a < n; ++a)
        if (row[a] > row[best]) best = a;
    return best;
}

std::vector<int> next_states_of(const TransitionDataset& ds,
                                std::span<const std::size_t> batch) {
    std::vector<int> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = ds[batch[i]].next_state;
    return out;
}

std::vector<int> states_of(const TransitionDataset& ds, std::span<const std::size_t> batch) {
    std::vector<int> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = ds[batch[i]].state;
    return out;
}

}  // namespace

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::qlearning: return "qlearning";
        case Algorithm::ddqn: return "ddqn";
        case Algorithm::cql: return "cql";
    }
    return "?";
}

void TrainConfig::validate(std::size_t dataset_size) const {
    if (alpha < 0.0) fail("TrainConfig: alpha must be nonnegative");
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("TrainConfig: gamma must lie in [0,1)");
    if (target_sync_interval < 1) fail("TrainConfig: target_sync_interval must be >= 1");
    if (batch_size < 1 || static_cast<std::size_t>(batch_size) > dataset_size)
        fail("TrainConfig: batch_size must lie in [1, dataset size]");
    if (n_gradient_steps < 1) fail("TrainConfig: n_gradient_steps must be positive");
    if (!(learning_rate > 0.0)) fail("TrainConfig: learning rate must be positive");
}

TrainingError::TrainingError(long step_, double total_, double gap_, double bellman_)
    : std::runtime_error("non-finite loss at step " + std::to_string(step_) +
                         " (total=" + std::to_string(total_) + ", gap=" + std::to_string(gap_) +
                         ", bellman=" + std::to_string(bellman_) + ")"),
      step(step_),
      total(total_),
      gap(gap_),
      bellman(bellman_) {}

std::vector<double> bellman_target(const QFunction& q_target, const TransitionDataset& ds,
                                   std::span<const std::size_t> batch, double gamma) {
    const auto next_states = next_states_of(ds, batch);
    const auto cache = q_target.forward_batch(next_states);
    const int A = q_target.n_actions();
    std::vector<double> y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& rec = ds[batch[i]];
        y[i] = rec.reward;
        if (!rec.done) y[i] += gamma * row_max(cache.outputs.data() + i * A, A);
    }
    return y;
}

std::vector<double> ddqn_target(const QFunction& q_master, const QFunction& q_target,
                                const TransitionDataset& ds, std::span<const std::size_t> batch,
                                double gamma) {
    const auto next_states = next_states_of(ds, batch);
    const auto master = q_master.forward_batch(next_states);
    const auto target = q_target.forward_batch(next_states);
    const int A = q_target.n_actions();
    std::vector<double> y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& rec = ds[batch[i]];
        y[i] = rec.reward;
        if (!rec.done) {
            const int pick = row_argmax(master.outputs.data() + i * A, A);
            y[i] += gamma * target.outputs[i * A + pick];
        }
    }
    return y;
}

namespace {

// Shared loss/gradient core; grad output is optional.
CqlLoss cql_core(const QFunction& q, std::span<const double> targets,
                 const TransitionDataset& ds, std::span<const std::size_t> batch, double alpha,
                 std::vector<double>* grad_out) {
    const int A = q.n_actions();
    const std::size_t B = batch.size();
    const auto states = states_of(ds, batch);
    const auto cache = q.forward_batch(states);

    CqlLoss loss;
    std::vector<double> dout;
    if (grad_out) dout.assign(B * A, 0.0);
    std::vector<double> softmax(A);

    for (std::size_t i = 0; i < B; ++i) {
        const auto& rec = ds[batch[i]];
        const double* row = cache.outputs.data() + i * A;
        const double pred = row[rec.action];
        const double diff = pred - targets[i];
        loss.bellman += 0.5 * diff * diff;

        if (alpha != 0.0) {
            const double mx = row_max(row, A);
            double z = 0.0;
            for (int a = 0; a < A; ++a) z += std::exp(row[a] - mx);
            loss.gap += mx + std::log(z) - pred;
            if (grad_out)
                for (int a = 0; a < A; ++a) softmax[a] = std::exp(row[a] - mx) / z;
        }
        if (grad_out) {
            double* drow = dout.data() + i * A;
            drow[rec.action] += diff / double(B);
            if (alpha != 0.0) {
                for (int a = 0; a < A; ++a) drow[a] += alpha / double(B) * softmax[a];
                drow[rec.action] -= alpha / double(B);
            }
        }
    }
    loss.bellman /= double(B);
    loss.gap /= double(B);
    loss.total = alpha * loss.gap + loss.bellman;
    if (grad_out) *grad_out = q.backward(cache, dout);
    return loss;
}

}  // namespace

CqlLoss cql_loss(const QFunction& q, const QFunction& q_target, const TransitionDataset& ds,
                 std::span<const std::size_t> batch, double alpha, double gamma) {
    if (alpha < 0.0) fail("cql_loss: alpha must be nonnegative");
    const auto y = bellman_target(q_target, ds, batch, gamma);
    return cql_core(q, y, ds, batch, alpha, nullptr);
}

LossGrad td_loss_grad(const QFunction& q, std::span<const double> targets,
                      const TransitionDataset& ds, std::span<const std::size_t> batch) {
    LossGrad out;
    out.loss = cql_core(q, targets, ds, batch, 0.0, &out.grad);
    return out;
}

LossGrad cql_loss_grad(const QFunction& q, std::span<const double> targets,
                       const TransitionDataset& ds, std::span<const std::size_t> batch,
                       double alpha) {
    if (alpha < 0.0) fail("cql_loss_grad: alpha must be nonnegative");
    LossGrad out;
    out.loss = cql_core(q, targets, ds, batch, alpha, &out.grad);
    return out;
}

TrainedAgent train(const TransitionDataset& ds, const TrainConfig& cfg) {
    if (ds.empty()) fail("train: empty dataset");
    cfg.validate(ds.size());

    QFunction q = cfg.tabular
                      ? QFunction::make_tabular(ds.n_states(), ds.n_actions())
                      : QFunction::make_network(ds.n_states(), ds.n_actions(), cfg.hidden,
                                                cfg.seed, cfg.features);
    QFunction q_tgt = q;
    const bool uses_target = cfg.algorithm != Algorithm::qlearning;

    OptimizerState opt;
    opt.method = cfg.optimizer.value_or(cfg.tabular ? OptimizerState::Method::sgd
                                                    : OptimizerState::Method::adam);
    opt.learning_rate = cfg.learning_rate;
    opt.clip_norm = cfg.clip_norm;

    Rng batch_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> batch(cfg.batch_size);
    std::vector<TrainLogEntry> log;

    for (long step = 0; step < cfg.n_gradient_steps; ++step) {
        bool synced = false;
        if (uses_target && step % cfg.target_sync_interval == 0) {
            q_tgt.params() = q.params();
            synced = true;
        }
        for (auto& b : batch) b = batch_rng.uniform_int(ds.size());

        LossGrad lg;
        switch (cfg.algorithm) {
            case Algorithm::qlearning: {
                const auto y = bellman_target(q, ds, batch, cfg.gamma);
                lg = td_loss_grad(q, y, ds, batch);
                break;
            }
            case Algorithm::ddqn: {
                const auto y = ddqn_target(q, q_tgt, ds, batch, cfg.gamma);
                lg = td_loss_grad(q, y, ds, batch);
                break;
            }
            case Algorithm::cql: {
                const auto y = bellman_target(q_tgt, ds, batch, cfg.gamma);
                lg = cql_loss_grad(q, y, ds, batch, cfg.alpha);
                break;
            }
        }
        if (!std::isfinite(lg.loss.total))
            throw TrainingError(step, lg.loss.total, lg.loss.gap, lg.loss.bellman);
        bool grad_finite = true;
        for (double g : lg.grad)
            if (!std::isfinite(g)) {
                grad_finite = false;
                break;
            }
        if (!grad_finite) throw TrainingError(step, lg.loss.total, lg.loss.gap, lg.loss.bellman);

        opt.step(q.params(), lg.grad);
        if (!q.params_finite())
            throw TrainingError(step, lg.loss.total, lg.loss.gap, lg.loss.bellman);

        if (step % cfg.log_interval == 0 || step + 1 == cfg.n_gradient_steps)
            log.push_back({step, lg.loss.total, lg.loss.gap, lg.loss.bellman, synced});
    }

    TrainedAgent agent{std::move(q), Policy{}, std::move(log)};
    agent.greedy = greedy_policy(agent.q);
    return agent;
}

void save_train_log(const std::vector<TrainLogEntry>& log, std::ostream& os) {
    os << "step\ttotal\tgap\tbellman\ttarget_synced\n";
    char buf[128];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof(buf), "%ld\t%.9g\t%.9g\t%.9g\t%d\n", e.step, e.total, e.gap,
                      e.bellman, e.target_synced ? 1 : 0);
        os << buf;
    }
}

}  // namespace orl
