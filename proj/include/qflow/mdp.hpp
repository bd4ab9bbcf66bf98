#pragma once

#include <cstdint>
#include <span>
#include <vector>

// State/action vocabulary: the 21x9x5 client discretization and its label
// encoding, joint states with padding, action enumeration, and the
// average-QoE reward.

namespace qflow::mdp {

inline constexpr int kBufferBins = 21;  // buffer seconds 0..20
inline constexpr int kQoeBins = 9;      // QoE [1,5] in half-unit bins
inline constexpr int kStallBins = 5;    // stall counts {0,1,2,3,>=4}
inline constexpr int kNumLabels = kBufferBins * kQoeBins * kStallBins;  // 945

struct ClientStateDisc {
    int buffer_bin = 0;
    int qoe_bin = 0;
    int stall_bin = 0;

    bool operator==(const ClientStateDisc&) const = default;
};

// Continuous per-client observation as reported by the environment.
struct ClientObs {
    double buffer = 0.0;
    int stalls = 0;
    double qoe = 5.0;
};

ClientStateDisc discretize(double buffer, int stalls, double qoe);
inline ClientStateDisc discretize(const ClientObs& o) { return discretize(o.buffer, o.stalls, o.qoe); }

int encode(const ClientStateDisc& s);
ClientStateDisc decode(int label);

// Midpoint reconstruction of a QoE bin, top bin clamped to the ceiling.
double qoe_bin_midpoint(int qoe_bin);

struct SystemState {
    std::vector<ClientStateDisc> clients;

    bool operator==(const SystemState&) const = default;
};

// Absent slots read as well-served clients: full buffer, no stalls, top QoE.
inline constexpr ClientStateDisc kPaddingState{20, 8, 0};

SystemState pad_state(SystemState state, int capacity);

// All C(n_clients, n_hi) subsets of {0..n_clients-1}, lexicographic.
std::vector<std::vector<int>> enumerate_actions(int n_clients, int n_hi);

// Average QoE of the active clients (padding slots excluded by the caller).
double reward(std::span<const double> qoes);
double reward(const SystemState& state);

struct RewardConfig {
    double gamma = 0.9999;
};

}  // namespace qflow::mdp
