#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "qflow/mdp.hpp"
#include "qflow/rng.hpp"

// Empirical per-client transition kernels, the frequent-state reduction of
// the joint state space, Monte Carlo synthesis of the joint kernel through
// the per-client product form, and tabular value iteration.

namespace qflow::model {

struct ClientTuple {
    std::uint16_t s = 0;
    std::uint8_t a = 0;  // 1 = high priority
    std::uint16_t s2 = 0;
};

struct TraceLog {
    std::vector<ClientTuple> client_tuples;
    // joint states as observed, one label per client slot
    std::vector<std::vector<std::uint16_t>> system_states;
};

class ClientKernel {
  public:
    using Row = std::vector<std::pair<std::uint16_t, double>>;  // sorted by label

    static ClientKernel fit(const TraceLog& traces);

    const Row& row(int label, int a) const;
    bool seen(int label, int a) const;

    // E[qoe_mid(s') | s, a]
    double expected_qoe(int label, int a) const;
    double expected_value(int label, int a, std::span<const double> v) const;
    int sample_next(int label, int a, Rng& rng) const;

  private:
    std::vector<Row> rows_;       // 945*2, row(l,a) at 2*l+a; unseen -> self-loop
    std::vector<bool> observed_;  // whether the row came from data

    friend ClientKernel kernel_from_rows(std::vector<Row> rows, std::vector<bool> observed);
};

ClientKernel kernel_from_rows(std::vector<ClientKernel::Row> rows, std::vector<bool> observed);

struct FrequentStateSet {
    std::vector<std::vector<std::uint16_t>> states;  // K distinct joint states
    std::vector<double> coords;                      // K x (3*slots) normalized, row-major
    int slots = 0;

    int size() const { return static_cast<int>(states.size()); }
    // nearest state by L2 over bin-normalized coordinates; ties -> lowest index
    int project(std::span<const std::uint16_t> state) const;
};

std::vector<double> normalized_coords(std::span<const std::uint16_t> state);

FrequentStateSet top_states(const std::vector<std::vector<std::uint16_t>>& states, int k);
FrequentStateSet make_state_set(std::vector<std::vector<std::uint16_t>> states);

struct SystemKernel {
    int n_states = 0;
    int n_actions = 0;
    // transitions[s*n_actions + a]: sparse pmf over 0..n_states-1, sorted by index
    std::vector<std::vector<std::pair<int, double>>> transitions;
    std::vector<double> expected_reward;  // R(s,a), same indexing

    const std::vector<std::pair<int, double>>& row(int s, int a) const {
        return transitions[static_cast<std::size_t>(s) * static_cast<std::size_t>(n_actions) +
                           static_cast<std::size_t>(a)];
    }
    double reward_at(int s, int a) const {
        return expected_reward[static_cast<std::size_t>(s) * static_cast<std::size_t>(n_actions) +
                               static_cast<std::size_t>(a)];
    }
};

// `canonicalize` sorts each sampled next state before projection; use it when
// sp holds sorted (client-order-free) states.
SystemKernel synthesize_system_kernel(const ClientKernel& kernel, const FrequentStateSet& sp,
                                      const std::vector<std::vector<int>>& actions,
                                      int samples_per, std::uint64_t seed, int threads = 0,
                                      bool canonicalize = false);

struct ValueSolution {
    std::vector<double> v;
    std::vector<int> policy;
    double residual = 0.0;
    bool converged = false;
    long iterations = 0;
    std::vector<double> residual_history;
};

ValueSolution value_iteration(const SystemKernel& sys, double gamma, double tol = 1e-6,
                              long max_iter = 100000);

}  // namespace qflow::model
