#pragma once

#include <span>
#include <vector>

#include "qflow/model_based.hpp"
#include "qflow/rng.hpp"

// Comparison policies: round robin, greedy buffer, reward greedy, random.
// Each returns the client ids promoted to high priority. Ties break toward
// the lowest client id so runs are reproducible.

namespace qflow::policy {

struct ClientView {
    int id = 0;
    double buffer = 0.0;
    int stalls = 0;
    double qoe = 5.0;
};

std::vector<int> round_robin(std::span<const int> ids, long dp_index, int n_hi);
std::vector<int> greedy_buffer(std::span<const ClientView> clients, int n_hi);
std::vector<int> reward_greedy(std::span<const ClientView> clients,
                               const model::ClientKernel& kernel, int n_hi);
std::vector<int> random_policy(std::span<const int> ids, Rng& rng, int n_hi);

}  // namespace qflow::policy
