#include "qflow/policies.hpp"

#include <algorithm>
#include <stdexcept>

#include "qflow/mdp.hpp"

namespace qflow::policy {

namespace {
void require_enough(std::size_t n, int n_hi) {
    if (static_cast<int>(n) < n_hi) throw std::invalid_argument("policy: fewer clients than n_hi");
}
}  // namespace

std::vector<int> round_robin(std::span<const int> ids, long dp_index, int n_hi) {
    require_enough(ids.size(), n_hi);
    if (dp_index < 0) throw std::invalid_argument("round_robin: dp_index must be >= 0");
    if (n_hi == 0) return {};
    std::vector<int> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    const long n = static_cast<long>(sorted.size());
    const long start = (dp_index * n_hi) % n;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n_hi));
    for (int i = 0; i < n_hi; ++i) out.push_back(sorted[static_cast<std::size_t>((start + i) % n)]);
    return out;
}

std::vector<int> greedy_buffer(std::span<const ClientView> clients, int n_hi) {
    require_enough(clients.size(), n_hi);
    std::vector<const ClientView*> order;
    order.reserve(clients.size());
    for (const auto& c : clients) order.push_back(&c);
    std::sort(order.begin(), order.end(), [](const ClientView* a, const ClientView* b) {
        if (a->buffer != b->buffer) return a->buffer < b->buffer;
        return a->id < b->id;
    });
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n_hi));
    for (int i = 0; i < n_hi; ++i) out.push_back(order[static_cast<std::size_t>(i)]->id);
    return out;
}

std::vector<int> reward_greedy(std::span<const ClientView> clients,
                               const model::ClientKernel& kernel, int n_hi) {
    require_enough(clients.size(), n_hi);
    // per-client gain of high over low priority; picking the n_hi largest
    // maximizes the summed one-step expected QoE
    struct Scored {
        int id;
        double gain;
    };
    std::vector<Scored> scored;
    scored.reserve(clients.size());
    for (const auto& c : clients) {
        const int label = mdp::encode(mdp::discretize(c.buffer, c.stalls, c.qoe));
        scored.push_back({c.id, kernel.expected_qoe(label, 1) - kernel.expected_qoe(label, 0)});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.gain != b.gain) return a.gain > b.gain;
        return a.id < b.id;
    });
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n_hi));
    for (int i = 0; i < n_hi; ++i) out.push_back(scored[static_cast<std::size_t>(i)].id);
    return out;
}

std::vector<int> random_policy(std::span<const int> ids, Rng& rng, int n_hi) {
    require_enough(ids.size(), n_hi);
    std::vector<int> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    const auto actions = mdp::enumerate_actions(static_cast<int>(sorted.size()), n_hi);
    std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
    const auto& slots = actions[pick(rng)];
    std::vector<int> out;
    out.reserve(slots.size());
    for (int s : slots) out.push_back(sorted[static_cast<std::size_t>(s)]);
    return out;
}

}  // namespace qflow::policy
