#include "qflow/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "qflow/kernels.hpp"

namespace qflow::nn {

double huber(double e, double delta) {
    const double a = std::abs(e);
    if (a <= delta) return 0.5 * e * e;
    return delta * (a - 0.5 * delta);
}

double huber_grad(double e, double delta) {
    if (e > delta) return delta;
    if (e < -delta) return -delta;
    return e;
}

Mlp Mlp::create(std::vector<int> sizes, std::uint64_t seed) {
    if (sizes.size() < 2) throw std::invalid_argument("mlp: need at least input and output sizes");
    for (int s : sizes)
        if (s < 1) throw std::invalid_argument("mlp: layer sizes must be positive");
    Mlp net;
    net.sizes = std::move(sizes);
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
        const int in = net.sizes[l];
        const int out = net.sizes[l + 1];
        // uniform fan-in scaling
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        std::vector<double> wl(static_cast<std::size_t>(in) * static_cast<std::size_t>(out));
        for (auto& x : wl) x = u(rng);
        net.w.push_back(std::move(wl));
        net.b.emplace_back(static_cast<std::size_t>(out), 0.0);
    }
    return net;
}

std::size_t Mlp::n_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < w.size(); ++l) n += w[l].size() + b[l].size();
    return n;
}

namespace {

// activations[0] = input, activations[l+1] = post-activation of layer l
void forward_pass(const Mlp& net, std::span<const double> x,
                  std::vector<std::vector<double>>& acts) {
    if (static_cast<int>(x.size()) != net.input_dim())
        throw std::invalid_argument("mlp: input dimension mismatch");
    acts.assign(1, std::vector<double>(x.begin(), x.end()));
    for (int l = 0; l < net.n_layers(); ++l) {
        const int in = net.sizes[static_cast<std::size_t>(l)];
        const int out = net.sizes[static_cast<std::size_t>(l) + 1];
        std::vector<double> z(static_cast<std::size_t>(out));
        const double* prev = acts.back().data();
        const double* wl = net.w[static_cast<std::size_t>(l)].data();
        for (int i = 0; i < out; ++i)
            z[static_cast<std::size_t>(i)] =
                kernels::dot(wl + static_cast<std::size_t>(i) * static_cast<std::size_t>(in), prev,
                             static_cast<std::size_t>(in)) +
                net.b[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
        if (l + 1 < net.n_layers())
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
        acts.push_back(std::move(z));
    }
}

}  // namespace

std::vector<double> Mlp::forward(std::span<const double> x) const {
    std::vector<std::vector<double>> acts;
    forward_pass(*this, x, acts);
    return acts.back();
}

int Mlp::argmax(std::span<const double> x) const {
    const auto q = forward(x);
    int best = 0;
    for (int i = 1; i < static_cast<int>(q.size()); ++i)
        if (q[static_cast<std::size_t>(i)] > q[static_cast<std::size_t>(best)]) best = i;
    return best;
}

Grad Grad::zeros_like(const Mlp& net) {
    Grad g;
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        g.w.emplace_back(net.w[l].size(), 0.0);
        g.b.emplace_back(net.b[l].size(), 0.0);
    }
    return g;
}

void Grad::accumulate(const Grad& other, double s) {
    for (std::size_t l = 0; l < w.size(); ++l) {
        kernels::axpy(s, other.w[l].data(), w[l].data(), w[l].size());
        kernels::axpy(s, other.b[l].data(), b[l].data(), b[l].size());
    }
}

void Grad::scale(double s) {
    for (std::size_t l = 0; l < w.size(); ++l) {
        for (auto& x : w[l]) x *= s;
        for (auto& x : b[l]) x *= s;
    }
}

double mlp_gradient(const Mlp& net, std::span<const double> x, int action, double target,
                    double delta, Grad& out) {
    if (action < 0 || action >= net.output_dim())
        throw std::invalid_argument("mlp_gradient: action out of range");
    std::vector<std::vector<double>> acts;
    forward_pass(net, x, acts);
    const double q = acts.back()[static_cast<std::size_t>(action)];
    const double err = q - target;
    const double loss = huber(err, delta);

    // delta_l = dLoss/dz_l, starting from the output layer where only the
    // chosen action's unit carries gradient
    std::vector<double> dz(acts.back().size(), 0.0);
    dz[static_cast<std::size_t>(action)] = huber_grad(err, delta);

    for (int l = net.n_layers() - 1; l >= 0; --l) {
        const int in = net.sizes[static_cast<std::size_t>(l)];
        const int out_n = net.sizes[static_cast<std::size_t>(l) + 1];
        const auto& a_in = acts[static_cast<std::size_t>(l)];
        auto& gw = out.w[static_cast<std::size_t>(l)];
        auto& gb = out.b[static_cast<std::size_t>(l)];
        for (int i = 0; i < out_n; ++i) {
            const double d = dz[static_cast<std::size_t>(i)];
            if (d != 0.0)
                kernels::axpy(d, a_in.data(),
                              gw.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(in),
                              static_cast<std::size_t>(in));
            gb[static_cast<std::size_t>(i)] += d;
        }
        if (l == 0) break;
        std::vector<double> dprev(static_cast<std::size_t>(in), 0.0);
        const double* wl = net.w[static_cast<std::size_t>(l)].data();
        for (int i = 0; i < out_n; ++i) {
            const double d = dz[static_cast<std::size_t>(i)];
            if (d != 0.0)
                kernels::axpy(d, wl + static_cast<std::size_t>(i) * static_cast<std::size_t>(in),
                              dprev.data(), static_cast<std::size_t>(in));
        }
        // through the rectifier of layer l-1
        const auto& a_prev = acts[static_cast<std::size_t>(l)];
        for (int j = 0; j < in; ++j)
            if (a_prev[static_cast<std::size_t>(j)] <= 0.0) dprev[static_cast<std::size_t>(j)] = 0.0;
        dz = std::move(dprev);
    }
    return loss;
}

AdamState AdamState::zeros_like(const Mlp& net) {
    AdamState s;
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        s.m_w.emplace_back(net.w[l].size(), 0.0);
        s.v_w.emplace_back(net.w[l].size(), 0.0);
        s.m_b.emplace_back(net.b[l].size(), 0.0);
        s.v_b.emplace_back(net.b[l].size(), 0.0);
    }
    return s;
}

namespace {
void adam_update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                 std::vector<double>& v, const AdamConfig& cfg, double bc1, double bc2) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}
}  // namespace

void adam_step(Mlp& net, const Grad& grad, AdamState& state, const AdamConfig& cfg) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        adam_update(net.w[l], grad.w[l], state.m_w[l], state.v_w[l], cfg, bc1, bc2);
        adam_update(net.b[l], grad.b[l], state.m_b[l], state.v_b[l], cfg, bc1, bc2);
    }
}

std::vector<double> flatten(const Mlp& net) {
    std::vector<double> flat;
    flat.reserve(net.n_params());
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        flat.insert(flat.end(), net.w[l].begin(), net.w[l].end());
        flat.insert(flat.end(), net.b[l].begin(), net.b[l].end());
    }
    return flat;
}

void unflatten(Mlp& net, std::span<const double> flat) {
    if (flat.size() != net.n_params()) throw std::invalid_argument("unflatten: size mismatch");
    std::size_t off = 0;
    for (std::size_t l = 0; l < net.w.size(); ++l) {
        std::copy(flat.begin() + off, flat.begin() + off + net.w[l].size(), net.w[l].begin());
        off += net.w[l].size();
        std::copy(flat.begin() + off, flat.begin() + off + net.b[l].size(), net.b[l].begin());
        off += net.b[l].size();
    }
}

}  // namespace qflow::nn
