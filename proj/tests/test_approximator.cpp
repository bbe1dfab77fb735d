#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "orl/qfunc.hpp"

using namespace orl;

TEST_SUITE("approximator") {

TEST_CASE("forward basics") {
    SUBCASE("zeroed network emits zeros") {
        const int hidden[] = {8, 8};
        auto q = QFunction::make_network(4, 3, hidden, 1);
        std::fill(q.params().begin(), q.params().end(), 0.0);
        for (int s = 0; s < 4; ++s)
            for (double v : q.forward(s)) CHECK(v == 0.0);
    }
    SUBCASE("tabular returns its row") {
        auto q = QFunction::make_tabular(2, 2);
        q.params() = {1.0, 2.0, 3.0, 4.0};
        CHECK(q.forward(0) == std::vector<double>{1.0, 2.0});
        CHECK(q.forward(1) == std::vector<double>{3.0, 4.0});
    }
    SUBCASE("single linear layer on one-hot input selects a weight row") {
        auto q = QFunction::make_network(3, 3, {}, 1);  // no hidden layer
        // Weight layout is (input x output); bias zeroed.
        auto& p = q.params();
        std::fill(p.begin(), p.end(), 0.0);
        for (int i = 0; i < 3; ++i) p[static_cast<std::size_t>(i) * 3 + i] = 1.0;
        const auto out = q.forward(1);
        CHECK(out == std::vector<double>{0.0, 1.0, 0.0});
    }
    SUBCASE("custom featurizer replaces the one-hot path") {
        StateFeaturizer feat;
        feat.dim = 2;
        feat.fill = [](int s, double* out) {
            out[0] = s;
            out[1] = 1.0;
        };
        auto q = QFunction::make_network(4, 2, {}, 1, feat);
        auto& p = q.params();  // [W(2x2) | b(2)]
        p = {1.0, 0.0, 0.0, 1.0, 0.5, -0.5};
        const auto out = q.forward(3);
        CHECK(out[0] == doctest::Approx(3.0 + 0.5));
        CHECK(out[1] == doctest::Approx(1.0 - 0.5));
    }
}

TEST_CASE("backward: tabular quadratic gradient") {
    auto q = QFunction::make_tabular(2, 2);
    q.params() = {1.0, 2.0, 3.0, 4.0};
    const double y = 0.5;
    const int states[] = {1};
    const auto cache = q.forward_batch(states);
    // d/dQ of (Q(s1,a0) - y)^2 is 2(Q - y) at that entry.
    std::vector<double> dout = {2.0 * (3.0 - y), 0.0};
    const auto grad = q.backward(cache, dout);
    CHECK(grad == std::vector<double>{0.0, 0.0, 5.0, 0.0});
}

TEST_CASE("backward: zero output gradient gives zero parameter gradient") {
    const int hidden[] = {16};
    auto q = QFunction::make_network(5, 4, hidden, 3);
    const int states[] = {0, 2, 4};
    const auto cache = q.forward_batch(states);
    const std::vector<double> dout(3 * 4, 0.0);
    for (double g : q.backward(cache, dout)) CHECK(g == 0.0);
}

TEST_CASE("backward matches central finite differences") {
    const int hidden[] = {12, 7};
    auto q = QFunction::make_network(6, 3, hidden, 17);
    const std::vector<int> states = {0, 3, 5, 1, 2};
    const std::vector<double> targets = {0.3, -1.2, 0.7, 2.0, -0.4};
    const std::vector<int> actions = {0, 2, 1, 1, 0};

    // Scalar loss: mean squared error against fixed targets.
    const auto loss = [&](const QFunction& qq) {
        double total = 0.0;
        for (std::size_t i = 0; i < states.size(); ++i) {
            const double d = qq.forward(states[i])[actions[i]] - targets[i];
            total += 0.5 * d * d;
        }
        return total / double(states.size());
    };
    const auto cache = q.forward_batch(states);
    std::vector<double> dout(states.size() * 3, 0.0);
    for (std::size_t i = 0; i < states.size(); ++i) {
        const double d = cache.outputs[i * 3 + actions[i]] - targets[i];
        dout[i * 3 + actions[i]] = d / double(states.size());
    }
    const auto grad = q.backward(cache, dout);
    CHECK(test::max_gradient_rel_error(q, loss, grad, 64, 99) < 1e-4);
}

TEST_CASE("optimizer step") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        std::vector<double> params = {1.0, -2.0};
        const std::vector<double> grad = {0.0, 0.0};
        OptimizerState opt;
        opt.learning_rate = 0.1;
        opt.step(params, grad);
        CHECK(params == std::vector<double>{1.0, -2.0});
    }
    SUBCASE("one step moves against the gradient sign") {
        std::vector<double> params = {0.0, 0.0};
        const std::vector<double> grad = {3.0, -0.5};
        OptimizerState opt;
        opt.learning_rate = 0.05;
        opt.step(params, grad);
        CHECK(params[0] < 0.0);
        CHECK(params[1] > 0.0);
    }
    SUBCASE("200 steps tame a 2-parameter convex quadratic") {
        // f(w) = (w0-3)^2 + (w1+1)^2, minimized at (3,-1).
        std::vector<double> params = {0.0, 0.0};
        OptimizerState opt;
        opt.learning_rate = 0.12;
        const auto f = [&] {
            return (params[0] - 3.0) * (params[0] - 3.0) + (params[1] + 1.0) * (params[1] + 1.0);
        };
        const double initial = f();
        for (int i = 0; i < 200; ++i) {
            const std::vector<double> grad = {2.0 * (params[0] - 3.0), 2.0 * (params[1] + 1.0)};
            opt.step(params, grad);
        }
        CHECK(f() < 1e-4 * initial);
    }
    SUBCASE("gradient clipping caps the global norm") {
        std::vector<double> params = {0.0};
        const std::vector<double> grad = {100.0};
        OptimizerState opt;
        opt.method = OptimizerState::Method::sgd;
        opt.learning_rate = 1.0;
        opt.clip_norm = 1.0;
        opt.step(params, grad);
        CHECK(params[0] == doctest::Approx(-1.0));
    }
    SUBCASE("invalid learning rate is rejected") {
        std::vector<double> params = {0.0};
        OptimizerState opt;
        opt.learning_rate = 0.0;
        CHECK_THROWS_AS(opt.step(params, params), std::invalid_argument);
    }
}

TEST_CASE("seeded init is deterministic, distinct seeds differ") {
    const int hidden[] = {32, 32};
    const auto a = QFunction::make_network(10, 4, hidden, 123);
    const auto b = QFunction::make_network(10, 4, hidden, 123);
    const auto c = QFunction::make_network(10, 4, hidden, 124);
    CHECK(a.params() == b.params());
    CHECK(a.params() != c.params());
}

TEST_CASE("checkpoints round-trip and reject shape mismatches") {
    const int hidden[] = {6};
    auto q = QFunction::make_network(5, 3, hidden, 7);
    std::stringstream buf;
    q.save(buf);
    const auto back = QFunction::load(buf, 5, 3);
    CHECK(back.params() == q.params());
    CHECK(back.layer_dims() == q.layer_dims());

    std::stringstream buf2;
    q.save(buf2);
    CHECK_THROWS_AS(QFunction::load(buf2, 6, 3), std::invalid_argument);

    // Truncated parameter payload.
    std::stringstream buf3;
    q.save(buf3);
    std::string text = buf3.str();
    text.resize(text.size() / 2);
    std::stringstream buf4(text);
    CHECK_THROWS_AS(QFunction::load(buf4, 5, 3), std::invalid_argument);

    auto tab = QFunction::make_tabular(3, 2, 0.5);
    std::stringstream buf5;
    tab.save(buf5);
    const auto tab2 = QFunction::load(buf5);
    CHECK(tab2.params() == tab.params());
    CHECK(tab2.kind() == QFunction::Kind::tabular);
}

TEST_CASE("greedy policy breaks ties toward the lowest action id") {
    auto q = QFunction::make_tabular(2, 3);
    q.params() = {1.0, 1.0, 0.0, 0.0, 2.0, 2.0};
    const auto pi = greedy_policy(q);
    CHECK(pi.action_table[0] == 0);
    CHECK(pi.action_table[1] == 1);
}

}  // TEST_SUITE
