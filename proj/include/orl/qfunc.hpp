#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "orl/envgen.hpp"
#include "orl/mdp.hpp"

namespace orl {

// State-action value function: a plain table, or a small feed-forward network
// (rectifier hidden layers, identity output, one output per action) with
// hand-written analytic gradients. Network inputs default to one-hot state
// encodings but accept any fixed-length featurizer.
class QFunction {
public:
    enum class Kind { tabular, network };

    QFunction() = default;  // empty shell; assign from a factory before use

    static QFunction make_tabular(int n_states, int n_actions, double init_value = 0.0);
    static QFunction make_network(int n_states, int n_actions, std::span<const int> hidden,
                                  std::uint64_t seed, StateFeaturizer features = {});

    Kind kind() const { return kind_; }
    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    const std::vector<int>& layer_dims() const { return dims_; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    // Q(state, .) as a row of length n_actions.
    std::vector<double> forward(int state) const;
    double value(int state, int action) const;

    // Batched forward pass retaining activations for backward().
    struct ForwardCache {
        std::vector<int> states;
        std::vector<double> outputs;      // [batch][n_actions]
        std::vector<double> activations;  // network: post-ReLU + input features
    };
    ForwardCache forward_batch(std::span<const int> states) const;

    // Exact gradient of the scalar batch loss given dLoss/dOutput rows; the
    // returned vector matches params() element for element.
    std::vector<double> backward(const ForwardCache& cache,
                                 std::span<const double> output_grads) const;

    bool params_finite() const;

    // Versioned text checkpoint; load rejects shape mismatches against the
    // stored layout and against expected dims when supplied (-1 skips).
    void save(std::ostream& os) const;
    void save_file(const std::string& path) const;
    static QFunction load(std::istream& is, int expect_states = -1, int expect_actions = -1,
                          StateFeaturizer features = {});
    static QFunction load_file(const std::string& path, int expect_states = -1,
                               int expect_actions = -1, StateFeaturizer features = {});

private:
    std::size_t weight_offset(int layer) const;
    std::size_t bias_offset(int layer) const;

    Kind kind_ = Kind::tabular;
    int n_states_ = 0;
    int n_actions_ = 0;
    std::vector<int> dims_;  // network: {input, hidden..., n_actions}
    std::vector<double> params_;
    StateFeaturizer features_;  // network input encoding
    bool one_hot_ = true;
};

// Greedy policy over all states, argmax with lowest action id on ties.
Policy greedy_policy(const QFunction& q);

// Adaptive-moment (or plain SGD) parameter update with optional global-norm
// gradient clipping. Deterministic given inputs.
struct OptimizerState {
    enum class Method { sgd, adam };
    Method method = Method::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 0.0;  // 0 disables clipping
    long step_count = 0;
    std::vector<double> m;  // first-moment accumulator
    std::vector<double> v;  // second-moment accumulator

    void validate() const;
    void step(std::vector<double>& params, std::span<const double> grad);
};

}  // namespace orl
