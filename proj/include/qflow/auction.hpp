#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qflow/model_based.hpp"
#include "qflow/rng.hpp"
#include "qflow/sim.hpp"

// (N+1)th-price auction for the high-priority slots, the mean-field win
// probability and payment under an assumed population bid distribution, the
// per-client bid MDP, and the population fixed point.

namespace qflow::auction {

struct BidSet {
    std::vector<double> grid;  // sorted, distinct

    static BidSet linspace(double lo = 0.0, double hi = 5.0, int points = 51);
    int size() const { return static_cast<int>(grid.size()); }
    void validate() const;
};

struct BidDistribution {
    std::vector<double> pmf;  // over BidSet grid points

    void validate(const BidSet& bids) const;
    static BidDistribution uniform(const BidSet& bids);
    static BidDistribution point_mass(const BidSet& bids, int index);
};

// Exact probability that bidding `b` lands in the top n_slots against
// m_opponents IID draws from rho, ties broken uniformly.
double p_win(double b, const BidSet& bids, const BidDistribution& rho, int m_opponents,
             int n_slots);

struct PaymentEstimate {
    double value = 0.0;      // E[(n_slots+1)th highest bid | win]
    double std_error = 0.0;  // 0 when exact
    bool exact = true;
};

// Exact by multiset enumeration over rho's support when feasible, otherwise
// Monte Carlo over `mc_draws` opponent profiles. Throws std::domain_error
// when p_win(b) == 0.
PaymentEstimate expected_payment(double b, const BidSet& bids, const BidDistribution& rho,
                                 int m_opponents, int n_slots, Rng& rng, long mc_draws = 100000,
                                 long exact_limit = 2000000);

struct MfgSolution {
    std::vector<double> v;      // 945 client values
    std::vector<double> bid;    // 945 bids from the grid
    std::vector<double> delta;  // value gap of winning vs losing, per label
    double residual = 0.0;
    bool converged = false;
    long iterations = 0;
    std::vector<double> residual_history;
};

struct BidMdpConfig {
    double gamma = 0.95;
    double tol = 1e-9;
    long max_iter = 100000;
    long mc_draws = 100000;
    long exact_limit = 2000000;
    std::uint64_t seed = 1;
};

MfgSolution solve_bid_mdp(const model::ClientKernel& kernel, const BidSet& bids,
                          const BidDistribution& rho, int m_opponents, int n_slots,
                          const BidMdpConfig& cfg);

struct AuctionResult {
    std::vector<int> winners;
    double price = 0.0;  // (n_slots+1)th highest bid; 0 reserve when under-demanded
};

AuctionResult run_auction(const std::vector<std::pair<int, double>>& bids, int n_slots, Rng& rng);

struct FixedPointConfig {
    double damping = 0.3;
    int outer_iters = 30;
    long burn_in_dps = 300;   // DPs whose bids feed the empirical pmf
    long warmup_dps = 100;    // cold-start DPs discarded before collecting
    double l1_tol = 1e-3;
    // grid snapping can leave the damped iteration orbiting instead of
    // settling; when it has not converged, return the average of the last
    // half of the empirical pmfs instead of the final iterate
    bool tail_average = true;
    BidMdpConfig mdp;
    std::uint64_t seed = 1;
};

struct FixedPointResult {
    BidDistribution rho;
    MfgSolution solution;
    std::vector<double> l1_trace;
    bool converged = false;
};

// Iterate: best-respond to rho, simulate the population bidding b*(s), damp
// the empirical bid pmf back into rho.
FixedPointResult mfg_fixed_point(const model::ClientKernel& kernel, const BidSet& bids,
                                 const BidDistribution& rho0, const sim::SimConfig& env_cfg,
                                 const FixedPointConfig& cfg);

}  // namespace qflow::auction
