#include "qflow/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qflow::mdp {

ClientStateDisc discretize(double buffer, int stalls, double qoe) {
    if (std::isnan(buffer) || std::isnan(qoe)) throw std::invalid_argument("discretize: NaN input");
    ClientStateDisc s;
    s.buffer_bin = static_cast<int>(std::lround(std::clamp(buffer, 0.0, 20.0)));
    s.qoe_bin = std::clamp(static_cast<int>(std::floor((qoe - 1.0) / 0.5)), 0, kQoeBins - 1);
    s.stall_bin = std::clamp(stalls, 0, kStallBins - 1);
    return s;
}

int encode(const ClientStateDisc& s) {
    if (s.buffer_bin < 0 || s.buffer_bin >= kBufferBins || s.qoe_bin < 0 ||
        s.qoe_bin >= kQoeBins || s.stall_bin < 0 || s.stall_bin >= kStallBins)
        throw std::invalid_argument("encode: bin out of range");
    return s.buffer_bin * (kQoeBins * kStallBins) + s.qoe_bin * kStallBins + s.stall_bin;
}

ClientStateDisc decode(int label) {
    if (label < 0 || label >= kNumLabels) throw std::invalid_argument("decode: label out of range");
    ClientStateDisc s;
    s.stall_bin = label % kStallBins;
    s.qoe_bin = (label / kStallBins) % kQoeBins;
    s.buffer_bin = label / (kQoeBins * kStallBins);
    return s;
}

double qoe_bin_midpoint(int qoe_bin) {
    if (qoe_bin < 0 || qoe_bin >= kQoeBins) throw std::invalid_argument("qoe_bin out of range");
    return std::min(5.0, 1.25 + 0.5 * qoe_bin);
}

SystemState pad_state(SystemState state, int capacity) {
    if (static_cast<int>(state.clients.size()) > capacity)
        throw std::invalid_argument("pad_state: state exceeds capacity");
    state.clients.resize(static_cast<std::size_t>(capacity), kPaddingState);
    return state;
}

std::vector<std::vector<int>> enumerate_actions(int n_clients, int n_hi) {
    if (n_hi > n_clients || n_hi < 0 || n_clients < 0)
        throw std::invalid_argument("enumerate_actions: n_hi must be <= n_clients");
    std::vector<std::vector<int>> out;
    std::vector<int> pick(static_cast<std::size_t>(n_hi));
    for (int i = 0; i < n_hi; ++i) pick[static_cast<std::size_t>(i)] = i;
    if (n_hi == 0) {
        out.push_back({});
        return out;
    }
    for (;;) {
        out.push_back(pick);
        int i = n_hi - 1;
        while (i >= 0 && pick[static_cast<std::size_t>(i)] == n_clients - n_hi + i) --i;
        if (i < 0) break;
        ++pick[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n_hi; ++j)
            pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
    }
    return out;
}

double reward(std::span<const double> qoes) {
    if (qoes.empty()) throw std::invalid_argument("reward: empty state");
    double sum = 0.0;
    for (double q : qoes) sum += q;
    return sum / static_cast<double>(qoes.size());
}

double reward(const SystemState& state) {
    if (state.clients.empty()) throw std::invalid_argument("reward: empty state");
    double sum = 0.0;
    for (const auto& c : state.clients) sum += qoe_bin_midpoint(c.qoe_bin);
    return sum / static_cast<double>(state.clients.size());
}

}  // namespace qflow::mdp
