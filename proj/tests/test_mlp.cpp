#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "qflow/mlp.hpp"

using namespace qflow;

namespace {

// central finite differences over every parameter (independent oracle)
std::vector<double> fd_gradient(nn::Mlp net, const std::vector<double>& x, int action,
                                double target, double delta, double h = 1e-5) {
    auto loss_at = [&](const std::vector<double>& flat) {
        nn::unflatten(net, flat);
        const auto q = net.forward(x);
        return nn::huber(q[static_cast<std::size_t>(action)] - target, delta);
    };
    std::vector<double> flat = nn::flatten(net);
    std::vector<double> grad(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double orig = flat[i];
        flat[i] = orig + h;
        const double up = loss_at(flat);
        flat[i] = orig - h;
        const double down = loss_at(flat);
        flat[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    nn::unflatten(net, flat);
    return grad;
}

std::vector<double> flatten_grad(const nn::Grad& g) {
    std::vector<double> flat;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        flat.insert(flat.end(), g.w[l].begin(), g.w[l].end());
        flat.insert(flat.end(), g.b[l].begin(), g.b[l].end());
    }
    return flat;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(1e-12, std::sqrt(den));
}

// smallest |pre-activation| across hidden units; finite differences are only
// trustworthy away from the rectifier kinks
double kink_margin(const nn::Mlp& net, const std::vector<double>& x) {
    double margin = std::numeric_limits<double>::infinity();
    std::vector<double> act = x;
    for (int l = 0; l + 1 < net.n_layers(); ++l) {
        const int in = net.sizes[static_cast<std::size_t>(l)];
        const int out = net.sizes[static_cast<std::size_t>(l) + 1];
        std::vector<double> z(static_cast<std::size_t>(out));
        for (int i = 0; i < out; ++i) {
            double s = net.b[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
            for (int j = 0; j < in; ++j)
                s += net.w[static_cast<std::size_t>(l)][static_cast<std::size_t>(i * in + j)] *
                     act[static_cast<std::size_t>(j)];
            margin = std::min(margin, std::abs(s));
            z[static_cast<std::size_t>(i)] = std::max(0.0, s);
        }
        act = std::move(z);
    }
    return margin;
}

}  // namespace

TEST_CASE("huber values") {
    CHECK(nn::huber(0.0) == 0.0);
    CHECK(nn::huber(0.5) == doctest::Approx(0.125));
    CHECK(nn::huber(2.0, 1.0) == doctest::Approx(1.5));
    CHECK(nn::huber(-2.0, 1.0) == doctest::Approx(1.5));
    CHECK(nn::huber_grad(0.5) == doctest::Approx(0.5));
    CHECK(nn::huber_grad(3.0) == doctest::Approx(1.0));
    CHECK(nn::huber_grad(-3.0) == doctest::Approx(-1.0));
}

TEST_CASE("forward: zero weights give zero output; hand-computed 2-2-1 net") {
    auto net = nn::Mlp::create({4, 3, 2}, 1);
    for (auto& wl : net.w)
        for (auto& w : wl) w = 0.0;
    const std::vector<double> x{0.3, -0.2, 0.9, 0.5};
    for (double q : net.forward(x)) CHECK(q == 0.0);

    // 2-2-1 with known weights: h = relu(Wx + b), y = Vh + c
    auto tiny = nn::Mlp::create({2, 2, 1}, 2);
    tiny.w[0] = {1.0, -1.0,   // h1 = relu(x1 - x2 + 0.5)
                 2.0, 0.5};   // h2 = relu(2 x1 + 0.5 x2 - 1)
    tiny.b[0] = {0.5, -1.0};
    tiny.w[1] = {3.0, -2.0};  // y = 3 h1 - 2 h2 + 0.25
    tiny.b[1] = {0.25};
    const std::vector<double> in{0.4, 0.1};
    const double h1 = std::max(0.0, 0.4 - 0.1 + 0.5);     // 0.8
    const double h2 = std::max(0.0, 0.8 + 0.05 - 1.0);    // 0 (clipped)
    const double expect = 3.0 * h1 - 2.0 * h2 + 0.25;     // 2.65
    CHECK(tiny.forward(in)[0] == doctest::Approx(expect));

    CHECK_THROWS_AS(tiny.forward(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("q-head width follows the action count: C(6,2) = 15") {
    const auto net = nn::Mlp::create({18, 64, 32, 15}, 3);
    std::vector<double> x(18, 0.5);
    CHECK(net.forward(x).size() == 15);
}

TEST_CASE("gradient at the loss minimum is zero") {
    auto net = nn::Mlp::create({5, 8, 3}, 4);
    const std::vector<double> x{0.1, 0.9, 0.4, 0.2, 0.7};
    const double target = net.forward(x)[1];
    auto grad = nn::Grad::zeros_like(net);
    const double loss = nn::mlp_gradient(net, x, 1, target, 1.0, grad);
    CHECK(loss == 0.0);
    for (double g : flatten_grad(grad)) CHECK(g == 0.0);
}

TEST_CASE("saturated error caps the output gradient at delta") {
    auto net = nn::Mlp::create({3, 4, 2}, 5);
    const std::vector<double> x{0.2, 0.8, 0.5};
    const double q = net.forward(x)[0];
    auto grad = nn::Grad::zeros_like(net);
    nn::mlp_gradient(net, x, 0, q - 10.0, 1.0, grad);  // error +10, far past delta
    // output-layer bias gradient for the chosen unit equals huber'(e) = delta
    CHECK(grad.b.back()[0] == doctest::Approx(1.0));
    auto grad2 = nn::Grad::zeros_like(net);
    nn::mlp_gradient(net, x, 0, q + 10.0, 1.0, grad2);
    CHECK(grad2.b.back()[0] == doctest::Approx(-1.0));
}

TEST_CASE("backprop matches central finite differences on 20+ random nets") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<int>> shapes = {
        {2, 3, 2},  {3, 5, 4},  {4, 4, 4, 3}, {5, 8, 2},    {2, 2, 2, 2}, {6, 10, 5},
        {3, 7, 7, 2}, {4, 6, 3}, {8, 12, 4},  {2, 9, 3, 2}, {5, 5, 5},    {7, 8, 6, 3},
        {3, 3, 2},  {4, 10, 10, 2}, {6, 6, 4}, {2, 4, 8, 2}, {9, 7, 3},   {4, 5, 6, 7},
        {10, 16, 8}, {18, 64, 32, 15},  // the production shape
    };
    int checked = 0;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        auto net = nn::Mlp::create(shapes[i], 1000 + i);
        std::vector<double> x(static_cast<std::size_t>(net.input_dim()));
        double err = 0.0;
        // sample inputs clear of the rectifier and Huber kinks so the
        // finite-difference probe stays one-sided
        do {
            for (auto& v : x) v = u(rng);
            err = 0.4 * u(rng);
        } while (kink_margin(net, x) < 1e-3 || std::abs(std::abs(err) - 1.0) < 1e-3);
        const int action = static_cast<int>(rng() % static_cast<std::uint64_t>(net.output_dim()));
        const double target = net.forward(x)[static_cast<std::size_t>(action)] + err;

        auto grad = nn::Grad::zeros_like(net);
        nn::mlp_gradient(net, x, action, target, 1.0, grad);
        const auto fd = fd_gradient(net, x, action, target, 1.0);
        CHECK(rel_error(flatten_grad(grad), fd) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    auto net = nn::Mlp::create({3, 4, 2}, 9);
    const auto before = nn::flatten(net);
    auto state = nn::AdamState::zeros_like(net);
    nn::adam_step(net, nn::Grad::zeros_like(net), state, {});
    CHECK(nn::flatten(net) == before);
}

TEST_CASE("adam: constant gradient drives steps toward lr * sign(g)") {
    // single weight, track the step size under a constant gradient
    auto net = nn::Mlp::create({1, 1}, 10);
    net.w[0] = {0.0};
    net.b[0] = {0.0};
    auto state = nn::AdamState::zeros_like(net);
    nn::AdamConfig cfg;
    auto grad = nn::Grad::zeros_like(net);
    grad.w[0][0] = 0.37;  // constant positive gradient
    double prev = net.w[0][0];
    double step = 0.0;
    for (int t = 0; t < 2000; ++t) {
        nn::adam_step(net, grad, state, cfg);
        step = prev - net.w[0][0];
        prev = net.w[0][0];
    }
    CHECK(step == doctest::Approx(cfg.lr).epsilon(0.01));

    grad.w[0][0] = -5.0;
    for (int t = 0; t < 4000; ++t) {
        nn::adam_step(net, grad, state, cfg);
        step = prev - net.w[0][0];
        prev = net.w[0][0];
    }
    CHECK(step == doctest::Approx(-cfg.lr).epsilon(0.01));
}

TEST_CASE("identical runs produce identical parameters") {
    auto run = [] {
        auto net = nn::Mlp::create({4, 8, 3}, 2024);
        auto state = nn::AdamState::zeros_like(net);
        std::mt19937_64 rng(55);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int t = 0; t < 200; ++t) {
            std::vector<double> x(4);
            for (auto& v : x) v = u(rng);
            auto grad = nn::Grad::zeros_like(net);
            nn::mlp_gradient(net, x, static_cast<int>(rng() % 3), u(rng), 1.0, grad);
            nn::adam_step(net, grad, state, {});
        }
        return nn::flatten(net);
    };
    CHECK(run() == run());
}
