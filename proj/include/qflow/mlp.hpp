#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qflow/rng.hpp"

// Small fully-connected net with rectifier hidden layers and identity output,
// exact reverse-mode gradients of a Huber head, and Adam. Everything is
// double precision; the inner products run through qflow::kernels.

namespace qflow::nn {

double huber(double e, double delta = 1.0);
double huber_grad(double e, double delta = 1.0);

struct Mlp {
    std::vector<int> sizes;                // [in, hidden..., out]
    std::vector<std::vector<double>> w;    // per layer, out x in, row-major
    std::vector<std::vector<double>> b;    // per layer, out

    static Mlp create(std::vector<int> sizes, std::uint64_t seed);

    int input_dim() const { return sizes.front(); }
    int output_dim() const { return sizes.back(); }
    int n_layers() const { return static_cast<int>(w.size()); }
    std::size_t n_params() const;

    std::vector<double> forward(std::span<const double> x) const;
    int argmax(std::span<const double> x) const;  // lowest index wins ties
};

struct Grad {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;

    static Grad zeros_like(const Mlp& net);
    void accumulate(const Grad& other, double scale = 1.0);
    void scale(double s);
};

// Huber(Q(x)[action] - target); returns the loss and writes the exact
// gradient for every parameter into `out`.
double mlp_gradient(const Mlp& net, std::span<const double> x, int action, double target,
                    double delta, Grad& out);

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
    long t = 0;

    static AdamState zeros_like(const Mlp& net);
};

void adam_step(Mlp& net, const Grad& grad, AdamState& state, const AdamConfig& cfg);

// flat parameter views, used by checkpointing and tests
std::vector<double> flatten(const Mlp& net);
void unflatten(Mlp& net, std::span<const double> flat);

}  // namespace qflow::nn
