#include "qflow/auction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qflow/mdp.hpp"

namespace qflow::auction {

namespace {
constexpr double kBidEps = 1e-12;
}

BidSet BidSet::linspace(double lo, double hi, int points) {
    if (points < 2 || !(hi > lo)) throw std::invalid_argument("bidset: need >= 2 increasing points");
    BidSet b;
    b.grid.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
        b.grid.push_back(lo + (hi - lo) * static_cast<double>(i) / (points - 1));
    return b;
}

void BidSet::validate() const {
    if (grid.size() < 2) throw std::invalid_argument("bidset: need >= 2 points");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("bidset: not strictly increasing");
}

void BidDistribution::validate(const BidSet& bids) const {
    if (pmf.size() != bids.grid.size()) throw std::invalid_argument("rho: size mismatch with bid set");
    double sum = 0.0;
    for (double p : pmf) {
        if (p < 0.0 || !std::isfinite(p)) throw std::invalid_argument("rho: invalid mass");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("rho: does not sum to 1");
}

BidDistribution BidDistribution::uniform(const BidSet& bids) {
    BidDistribution d;
    d.pmf.assign(bids.grid.size(), 1.0 / static_cast<double>(bids.grid.size()));
    return d;
}

BidDistribution BidDistribution::point_mass(const BidSet& bids, int index) {
    BidDistribution d;
    d.pmf.assign(bids.grid.size(), 0.0);
    d.pmf.at(static_cast<std::size_t>(index)) = 1.0;
    return d;
}

namespace {

struct SplitMass {
    double above = 0.0;
    double equal = 0.0;
    double below = 0.0;
};

SplitMass split_mass(double b, const BidSet& bids, const BidDistribution& rho) {
    SplitMass s;
    for (std::size_t i = 0; i < bids.grid.size(); ++i) {
        const double g = bids.grid[i];
        if (g > b + kBidEps)
            s.above += rho.pmf[i];
        else if (g >= b - kBidEps)
            s.equal += rho.pmf[i];
        else
            s.below += rho.pmf[i];
    }
    return s;
}

double win_chance(int h_above, int e_equal, int n_slots) {
    if (h_above >= n_slots) return 0.0;
    const double c = static_cast<double>(n_slots - h_above) / static_cast<double>(e_equal + 1);
    return std::min(1.0, c);
}

double pow_count(double p, int k) {
    if (k == 0) return 1.0;
    if (p == 0.0) return 0.0;
    return std::pow(p, k);
}

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

double multinomial(int m, int h, int e) {
    const int r = m - h - e;
    return std::exp(log_factorial(m) - log_factorial(h) - log_factorial(e) - log_factorial(r));
}

}  // namespace

double p_win(double b, const BidSet& bids, const BidDistribution& rho, int m_opponents,
             int n_slots) {
    bids.validate();
    rho.validate(bids);
    if (m_opponents < 0 || n_slots < 1) throw std::invalid_argument("p_win: bad m or n");
    if (b < bids.grid.front() - kBidEps || b > bids.grid.back() + kBidEps)
        throw std::invalid_argument("p_win: bid outside the bid set range");
    const SplitMass s = split_mass(b, bids, rho);
    double total = 0.0;
    for (int h = 0; h <= m_opponents; ++h) {
        const double chance_cap = win_chance(h, 0, n_slots);
        if (chance_cap == 0.0 && h >= n_slots) break;  // larger h only worse
        for (int e = 0; e + h <= m_opponents; ++e) {
            const double w = win_chance(h, e, n_slots);
            if (w == 0.0) continue;
            const double prob = multinomial(m_opponents, h, e) * pow_count(s.above, h) *
                                pow_count(s.equal, e) * pow_count(s.below, m_opponents - h - e);
            total += prob * w;
        }
    }
    return std::min(1.0, total);
}

namespace {

// (n+1)th highest of own bid merged into the opponents' sorted-descending bids
double merged_price(double b, std::span<const double> desc, int n_slots) {
    const int m = static_cast<int>(desc.size());
    // position of b in the merged descending order
    int pos = 0;
    while (pos < m && desc[static_cast<std::size_t>(pos)] > b) ++pos;
    // merged[k] for k < pos is desc[k]; merged[pos] = b; beyond shifts by one
    const int k = n_slots;  // 0-based index of the (n+1)th highest
    if (k < pos) return desc[static_cast<std::size_t>(k)];
    if (k == pos) return b;
    return desc[static_cast<std::size_t>(k - 1)];
}

struct PayAccum {
    double win_mass = 0.0;
    double pay_mass = 0.0;   // E[win * pay]
    double pay2_mass = 0.0;  // E[win * pay^2], for the MC standard error
};

void enumerate_profiles(const std::vector<double>& support, const std::vector<double>& probs,
                        int m_total, std::size_t idx, int remaining, double prob_acc,
                        std::vector<int>& counts, double b, int n_slots, PayAccum& acc) {
    if (idx + 1 == support.size()) {
        counts[idx] = remaining;
        double log_coef = log_factorial(m_total);
        for (int c : counts) log_coef -= log_factorial(c);
        const double p = prob_acc * std::exp(log_coef) * pow_count(probs[idx], remaining);
        if (p > 0.0) {
            // expand sorted-descending opponent bids
            std::vector<double> desc;
            desc.reserve(static_cast<std::size_t>(m_total));
            for (std::size_t i = support.size(); i-- > 0;)
                for (int c = 0; c < counts[i]; ++c) desc.push_back(support[i]);
            int h = 0, e = 0;
            for (double d : desc) {
                if (d > b + kBidEps) ++h;
                else if (d >= b - kBidEps) ++e;
            }
            const double w = win_chance(h, e, n_slots);
            if (w > 0.0) {
                const double pay = merged_price(b, desc, n_slots);
                acc.win_mass += p * w;
                acc.pay_mass += p * w * pay;
            }
        }
        counts[idx] = 0;
        return;
    }
    for (int c = 0; c <= remaining; ++c) {
        counts[idx] = c;
        enumerate_profiles(support, probs, m_total, idx + 1, remaining - c,
                           prob_acc * pow_count(probs[idx], c), counts, b, n_slots, acc);
    }
    counts[idx] = 0;
}

long multiset_count(long s, long m) {
    // C(s+m-1, m), saturating
    long double acc = 1.0L;
    for (long i = 1; i <= m; ++i) acc = acc * static_cast<long double>(s + i - 1) / i;
    return acc > 4e18L ? std::numeric_limits<long>::max() : static_cast<long>(acc);
}

}  // namespace

PaymentEstimate expected_payment(double b, const BidSet& bids, const BidDistribution& rho,
                                 int m_opponents, int n_slots, Rng& rng, long mc_draws,
                                 long exact_limit) {
    const double p = p_win(b, bids, rho, m_opponents, n_slots);
    if (p <= 0.0) throw std::domain_error("expected_payment: p_win is zero at this bid");

    if (m_opponents + 1 <= n_slots) return {0.0, 0.0, true};  // under-demand reserve

    std::vector<double> support, probs;
    for (std::size_t i = 0; i < bids.grid.size(); ++i)
        if (rho.pmf[i] > 0.0) {
            support.push_back(bids.grid[i]);
            probs.push_back(rho.pmf[i]);
        }

    if (support.size() == 1) {
        // everyone else bids the same value c; the (n+1)th highest is c
        const double c = support.front();
        return {c, 0.0, true};
    }

    if (multiset_count(static_cast<long>(support.size()), m_opponents) <= exact_limit) {
        PayAccum acc;
        std::vector<int> counts(support.size(), 0);
        enumerate_profiles(support, probs, m_opponents, 0, m_opponents, 1.0, counts, b, n_slots, acc);
        return {acc.pay_mass / acc.win_mass, 0.0, true};
    }

    // Monte Carlo over opponent profiles
    std::discrete_distribution<int> draw(probs.begin(), probs.end());
    PayAccum acc;
    std::vector<double> desc(static_cast<std::size_t>(m_opponents));
    for (long it = 0; it < mc_draws; ++it) {
        for (auto& d : desc) d = support[static_cast<std::size_t>(draw(rng))];
        std::sort(desc.begin(), desc.end(), std::greater<>());
        int h = 0, e = 0;
        for (double d : desc) {
            if (d > b + kBidEps) ++h;
            else if (d >= b - kBidEps) ++e;
        }
        const double w = win_chance(h, e, n_slots);
        if (w > 0.0) {
            const double pay = merged_price(b, desc, n_slots);
            acc.win_mass += w;
            acc.pay_mass += w * pay;
            acc.pay2_mass += w * pay * pay;
        }
    }
    if (acc.win_mass <= 0.0) {
        // p_win is positive but far below 1/mc_draws; the conditional payment
        // is bounded by the bid itself and its weighted contribution is ~0
        return {b, b, false};
    }
    const double mean = acc.pay_mass / acc.win_mass;
    // delta-method error of the ratio estimator, conservative
    const double var = std::max(0.0, acc.pay2_mass / acc.win_mass - mean * mean);
    const double se = std::sqrt(var / acc.win_mass);
    return {mean, se, false};
}

MfgSolution solve_bid_mdp(const model::ClientKernel& kernel, const BidSet& bids,
                          const BidDistribution& rho, int m_opponents, int n_slots,
                          const BidMdpConfig& cfg) {
    bids.validate();
    rho.validate(bids);
    if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) throw std::invalid_argument("bid mdp: gamma in (0,1)");

    const int nb = bids.size();
    std::vector<double> pwin(static_cast<std::size_t>(nb));
    std::vector<double> pay_term(static_cast<std::size_t>(nb));  // p_win * E[pay | win]
    Rng rng(cfg.seed);
    for (int i = 0; i < nb; ++i) {
        const double p = p_win(bids.grid[static_cast<std::size_t>(i)], bids, rho, m_opponents, n_slots);
        pwin[static_cast<std::size_t>(i)] = p;
        if (p > 0.0) {
            const auto pe = expected_payment(bids.grid[static_cast<std::size_t>(i)], bids, rho,
                                             m_opponents, n_slots, rng, cfg.mc_draws, cfg.exact_limit);
            pay_term[static_cast<std::size_t>(i)] = p * pe.value;
        }
    }

    // one-step expected QoE per (label, action)
    std::vector<double> r_hi(mdp::kNumLabels), r_lo(mdp::kNumLabels);
    for (int s = 0; s < mdp::kNumLabels; ++s) {
        r_hi[static_cast<std::size_t>(s)] = kernel.expected_qoe(s, 1);
        r_lo[static_cast<std::size_t>(s)] = kernel.expected_qoe(s, 0);
    }

    MfgSolution sol;
    sol.v.assign(mdp::kNumLabels, 0.0);
    sol.bid.assign(mdp::kNumLabels, bids.grid.front());
    sol.delta.assign(mdp::kNumLabels, 0.0);
    std::vector<double> next(mdp::kNumLabels, 0.0);
    std::vector<int> bid_idx(mdp::kNumLabels, 0);

    for (long it = 0; it < cfg.max_iter; ++it) {
        double resid = 0.0;
        for (int s = 0; s < mdp::kNumLabels; ++s) {
            const double win_cont =
                r_hi[static_cast<std::size_t>(s)] + cfg.gamma * kernel.expected_value(s, 1, sol.v);
            const double lose_cont =
                r_lo[static_cast<std::size_t>(s)] + cfg.gamma * kernel.expected_value(s, 0, sol.v);
            const double gap = win_cont - lose_cont;
            double best = -std::numeric_limits<double>::infinity();
            int best_i = 0;
            for (int i = 0; i < nb; ++i) {
                const double val = pwin[static_cast<std::size_t>(i)] * gap -
                                   pay_term[static_cast<std::size_t>(i)] + lose_cont;
                if (val > best + 1e-15) {  // strictly better; ties keep the lowest bid
                    best = val;
                    best_i = i;
                }
            }
            next[static_cast<std::size_t>(s)] = best;
            bid_idx[static_cast<std::size_t>(s)] = best_i;
            sol.delta[static_cast<std::size_t>(s)] = gap;
            resid = std::max(resid, std::abs(best - sol.v[static_cast<std::size_t>(s)]));
        }
        sol.v.swap(next);
        sol.residual = resid;
        sol.residual_history.push_back(resid);
        sol.iterations = it + 1;
        if (resid < cfg.tol) {
            sol.converged = true;
            break;
        }
    }
    for (int s = 0; s < mdp::kNumLabels; ++s)
        sol.bid[static_cast<std::size_t>(s)] = bids.grid[static_cast<std::size_t>(bid_idx[static_cast<std::size_t>(s)])];
    return sol;
}

AuctionResult run_auction(const std::vector<std::pair<int, double>>& bids, int n_slots, Rng& rng) {
    if (bids.empty()) throw std::invalid_argument("run_auction: no bids");
    if (n_slots < 1) throw std::invalid_argument("run_auction: n_slots must be >= 1");

    AuctionResult result;
    if (static_cast<int>(bids.size()) <= n_slots) {
        for (const auto& [id, _] : bids) result.winners.push_back(id);
        result.price = 0.0;  // under-demand: everyone admitted at the reserve
        return result;
    }

    struct Entry {
        int id;
        double bid;
        double tiebreak;
    };
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Entry> entries;
    entries.reserve(bids.size());
    for (const auto& [id, bid] : bids) entries.push_back({id, bid, u(rng)});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.bid != b.bid) return a.bid > b.bid;
        return a.tiebreak < b.tiebreak;
    });
    for (int i = 0; i < n_slots; ++i) result.winners.push_back(entries[static_cast<std::size_t>(i)].id);
    result.price = entries[static_cast<std::size_t>(n_slots)].bid;
    return result;
}

FixedPointResult mfg_fixed_point(const model::ClientKernel& kernel, const BidSet& bids,
                                 const BidDistribution& rho0, const sim::SimConfig& env_cfg,
                                 const FixedPointConfig& cfg) {
    bids.validate();
    rho0.validate(bids);
    if (!(cfg.damping >= 0.0 && cfg.damping <= 1.0))
        throw std::invalid_argument("fixed point: damping in [0,1]");

    FixedPointResult out;
    out.rho = rho0;
    std::vector<std::vector<double>> iterates;  // empirical pmfs, for tail averaging

    auto nearest_grid = [&](double b) {
        const auto it = std::lower_bound(bids.grid.begin(), bids.grid.end(), b);
        if (it == bids.grid.begin()) return 0;
        if (it == bids.grid.end()) return bids.size() - 1;
        const int hi = static_cast<int>(it - bids.grid.begin());
        return (*it - b < b - *(it - 1)) ? hi : hi - 1;
    };

    const int n_slots = env_cfg.bins.front().n_hi;

    for (int iter = 0; iter < cfg.outer_iters; ++iter) {
        BidMdpConfig mdp_cfg = cfg.mdp;
        mdp_cfg.seed = derive_seed(cfg.seed, 0xB1D, static_cast<std::uint64_t>(iter));
        out.solution = solve_bid_mdp(kernel, bids, out.rho, env_cfg.n_clients - 1, n_slots, mdp_cfg);

        // population burn-in under the best-response bids
        sim::Simulation env(env_cfg, derive_seed(cfg.seed, 0x51B, static_cast<std::uint64_t>(iter)));
        Rng auction_rng(derive_seed(cfg.seed, 0xA0C, static_cast<std::uint64_t>(iter)));
        std::vector<double> hist(bids.grid.size(), 0.0);
        double total = 0.0;
        for (long dp = 0; dp < cfg.warmup_dps + cfg.burn_in_dps; ++dp) {
            const bool collecting = dp >= cfg.warmup_dps;  // skip cold-start transients
            const auto obs = env.observe();
            sim::Action act;
            for (int b = 0; b < static_cast<int>(env.config().bins.size()); ++b) {
                std::vector<std::pair<int, double>> client_bids;
                for (int id : env.client_ids_in_bin(b)) {
                    const int label = mdp::encode(mdp::discretize(obs[static_cast<std::size_t>(id)]));
                    const double bid = out.solution.bid[static_cast<std::size_t>(label)];
                    client_bids.emplace_back(id, bid);
                    if (collecting) {
                        hist[static_cast<std::size_t>(nearest_grid(bid))] += 1.0;
                        total += 1.0;
                    }
                }
                const int want = std::min<int>(env.config().bins[static_cast<std::size_t>(b)].n_hi,
                                               static_cast<int>(client_bids.size()));
                auto res = run_auction(client_bids, want, auction_rng);
                act.hi.push_back(std::move(res.winners));
            }
            env.step_dp(act);
        }

        BidDistribution rho_new;
        rho_new.pmf.resize(hist.size());
        for (std::size_t i = 0; i < hist.size(); ++i) rho_new.pmf[i] = hist[i] / total;
        iterates.push_back(rho_new.pmf);

        double l1 = 0.0;
        for (std::size_t i = 0; i < hist.size(); ++i) l1 += std::abs(rho_new.pmf[i] - out.rho.pmf[i]);
        out.l1_trace.push_back(l1);

        for (std::size_t i = 0; i < hist.size(); ++i)
            out.rho.pmf[i] = (1.0 - cfg.damping) * out.rho.pmf[i] + cfg.damping * rho_new.pmf[i];
        // renormalize drift
        double sum = 0.0;
        for (double p : out.rho.pmf) sum += p;
        for (auto& p : out.rho.pmf) p /= sum;

        if (l1 < cfg.l1_tol) {
            out.converged = true;
            break;
        }
    }
    if (!out.converged && cfg.tail_average && cfg.damping > 0.0 && iterates.size() >= 2) {
        std::vector<double> mean(bids.grid.size(), 0.0);
        const std::size_t from = iterates.size() / 2;
        for (std::size_t it = from; it < iterates.size(); ++it)
            for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += iterates[it][i];
        double sum = 0.0;
        for (double x : mean) sum += x;
        for (auto& x : mean) x /= sum;
        out.rho.pmf = std::move(mean);
    }
    // the loop updates rho after solving, so re-solve once at the final rho;
    // the returned pair is then mutually consistent
    BidMdpConfig mdp_cfg = cfg.mdp;
    mdp_cfg.seed = derive_seed(cfg.seed, 0xB1D, 0xFFFFu);
    out.solution = solve_bid_mdp(kernel, bids, out.rho, env_cfg.n_clients - 1, n_slots, mdp_cfg);
    return out;
}

}  // namespace qflow::auction
