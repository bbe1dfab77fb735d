#include "orl/qfunc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "orl/rng.hpp"

namespace orl {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string fmt_full(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

QFunction QFunction::make_tabular(int n_states, int n_actions, double init_value) {
    if (n_states <= 0 || n_actions <= 0) fail("QFunction: empty state or action space");
    QFunction q;
    q.kind_ = Kind::tabular;
    q.n_states_ = n_states;
    q.n_actions_ = n_actions;
    q.params_.assign(static_cast<std::size_t>(n_states) * n_actions, init_value);
    return q;
}

QFunction QFunction::make_network(int n_states, int n_actions, std::span<const int> hidden,
                                  std::uint64_t seed, StateFeaturizer features) {
    if (n_states <= 0 || n_actions <= 0) fail("QFunction: empty state or action space");
    QFunction q;
    q.kind_ = Kind::network;
    q.n_states_ = n_states;
    q.n_actions_ = n_actions;
    if (features.fill) {
        q.features_ = std::move(features);
        q.one_hot_ = false;
    } else {
        q.features_ = one_hot_featurizer(n_states);
        q.one_hot_ = true;
    }
    q.dims_.push_back(q.features_.dim);
    for (int h : hidden) {
        if (h <= 0) fail("QFunction: hidden layer size must be positive");
        q.dims_.push_back(h);
    }
    q.dims_.push_back(n_actions);

    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < q.dims_.size(); ++l)
        total += static_cast<std::size_t>(q.dims_[l]) * q.dims_[l + 1] + q.dims_[l + 1];
    q.params_.resize(total);

    // Uniform fan-in init, biases zero; fixed by seed.
    Rng rng(seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < q.dims_.size(); ++l) {
        const int fan_in = q.dims_[l];
        const int fan_out = q.dims_[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < fan_in * fan_out; ++i) q.params_[off++] = rng.uniform(-bound, bound);
        for (int j = 0; j < fan_out; ++j) q.params_[off++] = 0.0;
    }
    return q;
}

std::size_t QFunction::weight_offset(int layer) const {
    std::size_t off = 0;
    for (int l = 0; l < layer; ++l)
        off += static_cast<std::size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
    return off;
}

std::size_t QFunction::bias_offset(int layer) const {
    return weight_offset(layer) + static_cast<std::size_t>(dims_[layer]) * dims_[layer + 1];
}

double QFunction::value(int state, int action) const {
    if (kind_ == Kind::tabular)
        return params_[static_cast<std::size_t>(state) * n_actions_ + action];
    return forward(state)[action];
}

std::vector<double> QFunction::forward(int state) const {
    if (kind_ == Kind::tabular) {
        const double* row = params_.data() + static_cast<std::size_t>(state) * n_actions_;
        return {row, row + n_actions_};
    }
    const int one[1] = {state};
    auto cache = forward_batch(one);
    return {cache.outputs.begin(), cache.outputs.end()};
}

QFunction::ForwardCache QFunction::forward_batch(std::span<const int> states) const {
    ForwardCache cache;
    cache.states.assign(states.begin(), states.end());
    const std::size_t B = states.size();
    cache.outputs.assign(B * n_actions_, 0.0);

    if (kind_ == Kind::tabular) {
        for (std::size_t b = 0; b < B; ++b) {
            const double* row = params_.data() + static_cast<std::size_t>(states[b]) * n_actions_;
            std::copy(row, row + n_actions_, cache.outputs.data() + b * n_actions_);
        }
        return cache;
    }

    // Activation storage per sample: input features then each hidden layer.
    std::size_t act_width = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) act_width += dims_[l];
    cache.activations.assign(B * act_width, 0.0);

    const int n_layers = static_cast<int>(dims_.size()) - 1;
    for (std::size_t b = 0; b < B; ++b) {
        double* act = cache.activations.data() + b * act_width;
        features_.fill(states[b], act);
        std::size_t in_off = 0;
        for (int l = 0; l < n_layers; ++l) {
            const int din = dims_[l], dout = dims_[l + 1];
            const double* W = params_.data() + weight_offset(l);
            const double* bias = params_.data() + bias_offset(l);
            const bool last = l == n_layers - 1;
            double* out = last ? cache.outputs.data() + b * n_actions_ : act + in_off + din;
            const double* in = act + in_off;
            std::copy(bias, bias + dout, out);
            if (l == 0 && one_hot_) {
                const double* w_row = W + static_cast<std::size_t>(states[b]) * dout;
                for (int j = 0; j < dout; ++j) out[j] += w_row[j];
            } else {
                for (int i = 0; i < din; ++i) {
                    const double x = in[i];
                    if (x == 0.0) continue;
                    const double* w_row = W + static_cast<std::size_t>(i) * dout;
                    for (int j = 0; j < dout; ++j) out[j] += x * w_row[j];
                }
            }
            if (!last)
                for (int j = 0; j < dout; ++j) out[j] = std::max(0.0, out[j]);
            in_off += din;
        }
    }
    return cache;
}

std::vector<double> QFunction::backward(const ForwardCache& cache,
                                        std::span<const double> output_grads) const {
    const std::size_t B = cache.states.size();
    if (output_grads.size() != B * static_cast<std::size_t>(n_actions_))
        fail("backward: output gradient shape mismatch");
    std::vector<double> grad(params_.size(), 0.0);

    if (kind_ == Kind::tabular) {
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t row = static_cast<std::size_t>(cache.states[b]) * n_actions_;
            for (int a = 0; a < n_actions_; ++a) grad[row + a] += output_grads[b * n_actions_ + a];
        }
        return grad;
    }

    std::size_t act_width = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) act_width += dims_[l];
    const int n_layers = static_cast<int>(dims_.size()) - 1;

    std::vector<double> delta, delta_prev;
    for (std::size_t b = 0; b < B; ++b) {
        const double* act = cache.activations.data() + b * act_width;
        delta.assign(output_grads.begin() + b * n_actions_,
                     output_grads.begin() + (b + 1) * n_actions_);
        for (int l = n_layers - 1; l >= 0; --l) {
            const int din = dims_[l], dout = dims_[l + 1];
            std::size_t in_off = 0;
            for (int k = 0; k < l; ++k) in_off += dims_[k];
            const double* in = act + in_off;
            double* gW = grad.data() + weight_offset(l);
            double* gb = grad.data() + bias_offset(l);
            for (int j = 0; j < dout; ++j) gb[j] += delta[j];
            if (l == 0 && one_hot_) {
                double* g_row = gW + static_cast<std::size_t>(cache.states[b]) * dout;
                for (int j = 0; j < dout; ++j) g_row[j] += delta[j];
            } else {
                for (int i = 0; i < din; ++i) {
                    const double x = in[i];
                    if (x == 0.0) continue;
                    double* g_row = gW + static_cast<std::size_t>(i) * dout;
                    for (int j = 0; j < dout; ++j) g_row[j] += x * delta[j];
                }
            }
            if (l > 0) {
                delta_prev.assign(din, 0.0);
                const double* W = params_.data() + weight_offset(l);
                for (int i = 0; i < din; ++i) {
                    if (in[i] <= 0.0) continue;  // ReLU gate
                    const double* w_row = W + static_cast<std::size_t>(i) * dout;
                    double acc = 0.0;
                    for (int j = 0; j < dout; ++j) acc += w_row[j] * delta[j];
                    delta_prev[i] = acc;
                }
                delta.swap(delta_prev);
            }
        }
    }
    return grad;
}

bool QFunction::params_finite() const {
    for (double p : params_)
        if (!std::isfinite(p)) return false;
    return true;
}

Policy greedy_policy(const QFunction& q) {
    std::vector<int> actions(q.n_states());
    for (int s = 0; s < q.n_states(); ++s) {
        const auto row = q.forward(s);
        int best = 0;
        for (int a = 1; a < q.n_actions(); ++a)
            if (row[a] > row[best]) best = a;
        actions[s] = best;
    }
    return Policy::make_deterministic(q.n_states(), q.n_actions(), std::move(actions));
}

void QFunction::save(std::ostream& os) const {
    os << "qfunc v1\n";
    os << "kind " << (kind_ == Kind::tabular ? "tabular" : "network") << "\n";
    os << "n_states " << n_states_ << "\n";
    os << "n_actions " << n_actions_ << "\n";
    if (kind_ == Kind::network) {
        os << "layers " << dims_.size();
        for (int d : dims_) os << " " << d;
        os << "\n";
    }
    os << "params " << params_.size() << "\n";
    for (std::size_t i = 0; i < params_.size(); ++i)
        os << fmt_full(params_[i]) << ((i + 1) % 8 == 0 ? '\n' : ' ');
    if (params_.size() % 8 != 0) os << "\n";
}

void QFunction::save_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) fail("cannot open for writing: " + path);
    save(os);
}

QFunction QFunction::load(std::istream& is, int expect_states, int expect_actions,
                          StateFeaturizer features) {
    std::string tag, version;
    is >> tag >> version;
    if (tag != "qfunc" || version != "v1") fail("QFunction::load: unrecognized header");
    std::string key, kind_str;
    is >> key >> kind_str;
    if (key != "kind") fail("QFunction::load: expected kind");
    int n_states, n_actions;
    is >> key >> n_states;
    if (key != "n_states") fail("QFunction::load: expected n_states");
    is >> key >> n_actions;
    if (key != "n_actions") fail("QFunction::load: expected n_actions");
    if (expect_states >= 0 && n_states != expect_states)
        fail("QFunction::load: state-space shape mismatch");
    if (expect_actions >= 0 && n_actions != expect_actions)
        fail("QFunction::load: action-space shape mismatch");

    QFunction q;
    q.n_states_ = n_states;
    q.n_actions_ = n_actions;
    if (kind_str == "tabular") {
        q.kind_ = Kind::tabular;
    } else if (kind_str == "network") {
        q.kind_ = Kind::network;
        std::size_t n_dims;
        is >> key >> n_dims;
        if (key != "layers") fail("QFunction::load: expected layers");
        q.dims_.resize(n_dims);
        for (auto& d : q.dims_) is >> d;
        if (q.dims_.empty() || q.dims_.back() != n_actions)
            fail("QFunction::load: output layer does not match n_actions");
        if (features.fill) {
            q.features_ = std::move(features);
            q.one_hot_ = false;
        } else {
            q.features_ = one_hot_featurizer(n_states);
            q.one_hot_ = true;
        }
        if (q.features_.dim != q.dims_.front())
            fail("QFunction::load: input layer does not match feature dimension");
    } else {
        fail("QFunction::load: unknown kind " + kind_str);
    }

    std::size_t n_params;
    is >> key >> n_params;
    if (key != "params") fail("QFunction::load: expected params");
    std::size_t expected = 0;
    if (q.kind_ == Kind::tabular) {
        expected = static_cast<std::size_t>(n_states) * n_actions;
    } else {
        for (std::size_t l = 0; l + 1 < q.dims_.size(); ++l)
            expected += static_cast<std::size_t>(q.dims_[l]) * q.dims_[l + 1] + q.dims_[l + 1];
    }
    if (n_params != expected) fail("QFunction::load: parameter count does not match layout");
    q.params_.resize(n_params);
    for (auto& p : q.params_) is >> p;
    if (!is) fail("QFunction::load: truncated checkpoint");
    return q;
}

QFunction QFunction::load_file(const std::string& path, int expect_states, int expect_actions,
                               StateFeaturizer features) {
    std::ifstream is(path);
    if (!is) fail("cannot open for reading: " + path);
    return load(is, expect_states, expect_actions, std::move(features));
}

void OptimizerState::validate() const {
    if (!(learning_rate > 0.0)) fail("OptimizerState: learning rate must be positive");
}

void OptimizerState::step(std::vector<double>& params, std::span<const double> grad) {
    validate();
    if (grad.size() != params.size()) fail("OptimizerState: gradient shape mismatch");
    if (m.empty()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
    } else if (m.size() != params.size()) {
        fail("OptimizerState: accumulator shape mismatch");
    }

    double scale = 1.0;
    if (clip_norm > 0.0) {
        double norm_sq = 0.0;
        for (double g : grad) norm_sq += g * g;
        const double norm = std::sqrt(norm_sq);
        if (norm > clip_norm) scale = clip_norm / norm;
    }

    ++step_count;
    if (method == Method::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i] -= learning_rate * scale * grad[i];
        return;
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = scale * grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        params[i] -= learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + epsilon);
    }
}

}  // namespace orl
