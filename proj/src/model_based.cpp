#include "qflow/model_based.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <thread>

#include "qflow/kernels.hpp"

namespace qflow::model {

ClientKernel ClientKernel::fit(const TraceLog& traces) {
    if (traces.client_tuples.empty()) throw std::invalid_argument("fit: empty traces");
    std::vector<std::map<std::uint16_t, long>> counts(static_cast<std::size_t>(mdp::kNumLabels) * 2);
    for (const auto& t : traces.client_tuples) {
        if (t.s >= mdp::kNumLabels || t.s2 >= mdp::kNumLabels || t.a > 1)
            throw std::invalid_argument("fit: tuple out of range");
        ++counts[static_cast<std::size_t>(t.s) * 2 + t.a][t.s2];
    }
    std::vector<Row> rows(counts.size());
    std::vector<bool> observed(counts.size(), false);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto& c = counts[i];
        if (c.empty()) {
            // unseen (s,a): conservative self-loop
            rows[i] = {{static_cast<std::uint16_t>(i / 2), 1.0}};
            continue;
        }
        observed[i] = true;
        long total = 0;
        for (const auto& [_, n] : c) total += n;
        rows[i].reserve(c.size());
        for (const auto& [label, n] : c)
            rows[i].emplace_back(label, static_cast<double>(n) / static_cast<double>(total));
    }
    return kernel_from_rows(std::move(rows), std::move(observed));
}

ClientKernel kernel_from_rows(std::vector<ClientKernel::Row> rows, std::vector<bool> observed) {
    if (rows.size() != static_cast<std::size_t>(mdp::kNumLabels) * 2)
        throw std::invalid_argument("kernel: need 945*2 rows");
    ClientKernel k;
    k.rows_ = std::move(rows);
    k.observed_ = std::move(observed);
    if (k.observed_.empty()) k.observed_.assign(k.rows_.size(), true);
    return k;
}

const ClientKernel::Row& ClientKernel::row(int label, int a) const {
    return rows_.at(static_cast<std::size_t>(label) * 2 + static_cast<std::size_t>(a));
}

bool ClientKernel::seen(int label, int a) const {
    return observed_.at(static_cast<std::size_t>(label) * 2 + static_cast<std::size_t>(a));
}

double ClientKernel::expected_qoe(int label, int a) const {
    double acc = 0.0;
    for (const auto& [s2, p] : row(label, a))
        acc += p * mdp::qoe_bin_midpoint(mdp::decode(s2).qoe_bin);
    return acc;
}

double ClientKernel::expected_value(int label, int a, std::span<const double> v) const {
    double acc = 0.0;
    for (const auto& [s2, p] : row(label, a)) acc += p * v[s2];
    return acc;
}

int ClientKernel::sample_next(int label, int a, Rng& rng) const {
    const Row& r = row(label, a);
    if (r.size() == 1) return r[0].first;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = u(rng);
    for (const auto& [s2, p] : r) {
        x -= p;
        if (x <= 0.0) return s2;
    }
    return r.back().first;
}

std::vector<double> normalized_coords(std::span<const std::uint16_t> state) {
    std::vector<double> out;
    out.reserve(state.size() * 3);
    for (std::uint16_t label : state) {
        const auto d = mdp::decode(label);
        out.push_back(d.buffer_bin / 20.0);
        out.push_back(d.qoe_bin / 8.0);
        out.push_back(d.stall_bin / 4.0);
    }
    return out;
}

FrequentStateSet make_state_set(std::vector<std::vector<std::uint16_t>> states) {
    FrequentStateSet sp;
    if (states.empty()) throw std::invalid_argument("state set: empty");
    sp.slots = static_cast<int>(states.front().size());
    for (const auto& s : states)
        if (static_cast<int>(s.size()) != sp.slots)
            throw std::invalid_argument("state set: ragged states");
    sp.states = std::move(states);
    sp.coords.reserve(sp.states.size() * static_cast<std::size_t>(3 * sp.slots));
    for (const auto& s : sp.states) {
        const auto c = normalized_coords(s);
        sp.coords.insert(sp.coords.end(), c.begin(), c.end());
    }
    return sp;
}

FrequentStateSet top_states(const std::vector<std::vector<std::uint16_t>>& states, int k) {
    if (k < 1) throw std::invalid_argument("top_states: K must be >= 1");
    std::map<std::vector<std::uint16_t>, long> freq;
    for (const auto& s : states) ++freq[s];
    if (static_cast<std::size_t>(k) > freq.size())
        throw std::invalid_argument("top_states: K exceeds distinct states");
    std::vector<std::pair<const std::vector<std::uint16_t>*, long>> order;
    order.reserve(freq.size());
    for (const auto& [s, n] : freq) order.emplace_back(&s, n);
    // map iteration is already lexicographic, so stable sort keeps that for ties
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::vector<std::uint16_t>> top;
    top.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) top.push_back(*order[static_cast<std::size_t>(i)].first);
    return make_state_set(std::move(top));
}

int FrequentStateSet::project(std::span<const std::uint16_t> state) const {
    if (states.empty()) throw std::logic_error("project: empty state set");
    const auto q = normalized_coords(state);
    const std::size_t dim = q.size();
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < states.size(); ++i) {
        const double d = kernels::l2sq(q.data(), coords.data() + i * dim, dim);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

SystemKernel synthesize_system_kernel(const ClientKernel& kernel, const FrequentStateSet& sp,
                                      const std::vector<std::vector<int>>& actions,
                                      int samples_per, std::uint64_t seed, int threads,
                                      bool canonicalize) {
    if (samples_per < 1) throw std::invalid_argument("synthesize: samples_per must be >= 1");
    const int K = sp.size();
    const int A = static_cast<int>(actions.size());
    SystemKernel sys;
    sys.n_states = K;
    sys.n_actions = A;
    sys.transitions.resize(static_cast<std::size_t>(K) * static_cast<std::size_t>(A));
    sys.expected_reward.assign(static_cast<std::size_t>(K) * static_cast<std::size_t>(A), 0.0);

    auto work = [&](int s_begin, int s_end) {
        std::vector<std::uint16_t> next(static_cast<std::size_t>(sp.slots));
        for (int s = s_begin; s < s_end; ++s) {
            for (int a = 0; a < A; ++a) {
                // independent stream per (s,a): deterministic under any thread count
                Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(a)));
                std::vector<bool> in_hi(static_cast<std::size_t>(sp.slots), false);
                for (int slot : actions[static_cast<std::size_t>(a)])
                    in_hi[static_cast<std::size_t>(slot)] = true;
                std::map<int, long> counts;
                double reward_acc = 0.0;
                const auto& cur = sp.states[static_cast<std::size_t>(s)];
                for (int n = 0; n < samples_per; ++n) {
                    for (int c = 0; c < sp.slots; ++c)
                        next[static_cast<std::size_t>(c)] = static_cast<std::uint16_t>(
                            kernel.sample_next(cur[static_cast<std::size_t>(c)],
                                               in_hi[static_cast<std::size_t>(c)] ? 1 : 0, rng));
                    if (canonicalize) std::sort(next.begin(), next.end());
                    const int proj = sp.project(next);
                    ++counts[proj];
                    mdp::SystemState st;
                    for (std::uint16_t l : sp.states[static_cast<std::size_t>(proj)])
                        st.clients.push_back(mdp::decode(l));
                    reward_acc += mdp::reward(st);
                }
                auto& row = sys.transitions[static_cast<std::size_t>(s) * static_cast<std::size_t>(A) +
                                            static_cast<std::size_t>(a)];
                row.reserve(counts.size());
                for (const auto& [idx, n] : counts)
                    row.emplace_back(idx, static_cast<double>(n) / static_cast<double>(samples_per));
                sys.expected_reward[static_cast<std::size_t>(s) * static_cast<std::size_t>(A) +
                                    static_cast<std::size_t>(a)] = reward_acc / samples_per;
            }
        }
    };

    int n_threads = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::clamp(n_threads, 1, K);
    if (n_threads == 1) {
        work(0, K);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (K + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const int lo = t * chunk;
            const int hi = std::min(K, lo + chunk);
            if (lo < hi) pool.emplace_back(work, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return sys;
}

ValueSolution value_iteration(const SystemKernel& sys, double gamma, double tol, long max_iter) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("value_iteration: gamma in (0,1)");
    const int K = sys.n_states;
    const int A = sys.n_actions;
    ValueSolution sol;
    sol.v.assign(static_cast<std::size_t>(K), 0.0);
    sol.policy.assign(static_cast<std::size_t>(K), 0);
    std::vector<double> next(static_cast<std::size_t>(K), 0.0);

    for (long it = 0; it < max_iter; ++it) {
        double resid = 0.0;
        for (int s = 0; s < K; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            int best_a = 0;
            for (int a = 0; a < A; ++a) {
                double q = sys.reward_at(s, a);
                double ev = 0.0;
                for (const auto& [s2, p] : sys.row(s, a)) ev += p * sol.v[static_cast<std::size_t>(s2)];
                q += gamma * ev;
                if (q > best) {
                    best = q;
                    best_a = a;
                }
            }
            next[static_cast<std::size_t>(s)] = best;
            sol.policy[static_cast<std::size_t>(s)] = best_a;
            resid = std::max(resid, std::abs(best - sol.v[static_cast<std::size_t>(s)]));
        }
        sol.v.swap(next);
        sol.residual = resid;
        sol.residual_history.push_back(resid);
        sol.iterations = it + 1;
        if (resid < tol) {
            sol.converged = true;
            break;
        }
    }
    return sol;
}

}  // namespace qflow::model
