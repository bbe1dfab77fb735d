#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "orl/dataset.hpp"
#include "orl/qfunc.hpp"

namespace orl {

enum class Algorithm { qlearning, ddqn, cql };

std::string algorithm_name(Algorithm a);

struct TrainConfig {
    Algorithm algorithm = Algorithm::cql;
    double alpha = 1.0;  // CQL conservatism weight
    double gamma = 0.99;
    int batch_size = 64;
    int n_gradient_steps = 3000;
    int target_sync_interval = 200;  // tau
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;

    // Architecture: a plain table, or a feed-forward net with these hidden
    // sizes (2x256 default, 3x512 the larger alternative).
    bool tabular = false;
    std::vector<int> hidden = {256, 256};
    StateFeaturizer features;  // optional network input encoding

    // Optimizer plumbing; unset resolves to SGD for tabular runs, Adam for
    // networks.
    std::optional<OptimizerState::Method> optimizer;
    double clip_norm = 0.0;
    int log_interval = 100;

    void validate(std::size_t dataset_size) const;
};

struct TrainLogEntry {
    long step = 0;
    double total = 0.0;
    double gap = 0.0;
    double bellman = 0.0;
    bool target_synced = false;
};

struct TrainedAgent {
    QFunction q;
    Policy greedy;  // argmax of q, lowest action id on ties
    std::vector<TrainLogEntry> log;
};

// Raised when a loss or parameter turns non-finite mid-training.
class TrainingError : public std::runtime_error {
public:
    TrainingError(long step, double total, double gap, double bellman);
    long step;
    double total, gap, bellman;
};

// y = r + gamma * (1-done) * max_a' Q_target(s', a').
std::vector<double> bellman_target(const QFunction& q_target, const TransitionDataset& ds,
                                   std::span<const std::size_t> batch, double gamma);

// y = r + gamma * (1-done) * Q_target(s', argmax_a' Q_master(s', a')).
std::vector<double> ddqn_target(const QFunction& q_master, const QFunction& q_target,
                                const TransitionDataset& ds, std::span<const std::size_t> batch,
                                double gamma);

struct CqlLoss {
    double total = 0.0;
    double gap = 0.0;      // mean_b [logsumexp_a Q(s,a) - Q(s, a_data)]
    double bellman = 0.0;  // 0.5 * mean_b (Q(s, a_data) - y)^2
};

// CQL objective with the entropy-regularized inner maximum in closed form:
// total = alpha * gap + bellman, targets from bellman_target over q_target.
// alpha = 0 reduces exactly to the Q-learning loss.
CqlLoss cql_loss(const QFunction& q, const QFunction& q_target, const TransitionDataset& ds,
                 std::span<const std::size_t> batch, double alpha, double gamma);

// Loss plus exact parameter gradient (targets held constant).
struct LossGrad {
    CqlLoss loss;
    std::vector<double> grad;
};
LossGrad td_loss_grad(const QFunction& q, std::span<const double> targets,
                      const TransitionDataset& ds, std::span<const std::size_t> batch);
LossGrad cql_loss_grad(const QFunction& q, std::span<const double> targets,
                       const TransitionDataset& ds, std::span<const std::size_t> batch,
                       double alpha);

// Offline training loop: uniform minibatches with replacement from ds, target
// network synced every tau steps (ddqn, cql), deterministic given the seed.
// Touches nothing but the dataset and config.
TrainedAgent train(const TransitionDataset& ds, const TrainConfig& cfg);

// Training log in the record text format.
void save_train_log(const std::vector<TrainLogEntry>& log, std::ostream& os);

}  // namespace orl
