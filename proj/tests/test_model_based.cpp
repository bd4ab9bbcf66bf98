#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "qflow/model_based.hpp"

using namespace qflow;

namespace {

// dense K-state MDP in SystemKernel form
model::SystemKernel dense_mdp(const std::vector<std::vector<std::vector<double>>>& p,
                              const std::vector<std::vector<double>>& r) {
    model::SystemKernel sys;
    sys.n_states = static_cast<int>(p.size());
    sys.n_actions = static_cast<int>(p.front().size());
    sys.transitions.resize(static_cast<std::size_t>(sys.n_states) * sys.n_actions);
    sys.expected_reward.resize(static_cast<std::size_t>(sys.n_states) * sys.n_actions);
    for (int s = 0; s < sys.n_states; ++s)
        for (int a = 0; a < sys.n_actions; ++a) {
            auto& row = sys.transitions[static_cast<std::size_t>(s) * sys.n_actions + a];
            for (int s2 = 0; s2 < sys.n_states; ++s2)
                if (p[s][a][s2] > 0.0) row.emplace_back(s2, p[s][a][s2]);
            sys.expected_reward[static_cast<std::size_t>(s) * sys.n_actions + a] = r[s][a];
        }
    return sys;
}

// solve V = R_pi + gamma P_pi V by Gaussian elimination (independent oracle)
std::vector<double> evaluate_policy(const std::vector<std::vector<std::vector<double>>>& p,
                                    const std::vector<std::vector<double>>& r,
                                    const std::vector<int>& pi, double gamma) {
    const int n = static_cast<int>(p.size());
    std::vector<std::vector<double>> m(n, std::vector<double>(n + 1, 0.0));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) m[i][j] = (i == j ? 1.0 : 0.0) - gamma * p[i][pi[i]][j];
        m[i][n] = r[i][pi[i]];
    }
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int row = col + 1; row < n; ++row)
            if (std::abs(m[row][col]) > std::abs(m[pivot][col])) pivot = row;
        std::swap(m[col], m[pivot]);
        for (int row = 0; row < n; ++row) {
            if (row == col) continue;
            const double f = m[row][col] / m[col][col];
            for (int j = col; j <= n; ++j) m[row][j] -= f * m[col][j];
        }
    }
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = m[i][n] / m[i][i];
    return v;
}

}  // namespace

TEST_CASE("kernel fit counts empirical frequencies with a self-loop fallback") {
    model::TraceLog log;
    log.client_tuples = {{7, 1, 9}, {7, 1, 9}, {7, 1, 3}};
    const auto k = model::ClientKernel::fit(log);

    const auto& row = k.row(7, 1);
    REQUIRE(row.size() == 2);
    CHECK(row[0].first == 3);
    CHECK(row[0].second == doctest::Approx(1.0 / 3.0));
    CHECK(row[1].first == 9);
    CHECK(row[1].second == doctest::Approx(2.0 / 3.0));
    CHECK(k.seen(7, 1));

    const auto& fallback = k.row(100, 0);
    REQUIRE(fallback.size() == 1);
    CHECK(fallback[0].first == 100);
    CHECK(fallback[0].second == 1.0);
    CHECK_FALSE(k.seen(100, 0));

    for (int s = 0; s < mdp::kNumLabels; ++s)
        for (int a = 0; a < 2; ++a) {
            double sum = 0.0;
            for (const auto& [_, p] : k.row(s, a)) sum += p;
            REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-9));
        }

    CHECK_THROWS_AS(model::ClientKernel::fit(model::TraceLog{}), std::invalid_argument);
}

TEST_CASE("top_states keeps the K most frequent with deterministic ties") {
    std::vector<std::vector<std::uint16_t>> states;
    const std::vector<std::uint16_t> A{1, 2}, B{3, 4}, C{5, 6};
    for (int i = 0; i < 5; ++i) states.push_back(A);
    for (int i = 0; i < 3; ++i) states.push_back(B);
    states.push_back(C);

    const auto top2 = model::top_states(states, 2);
    REQUIRE(top2.size() == 2);
    CHECK(top2.states[0] == A);
    CHECK(top2.states[1] == B);

    const auto all = model::top_states(states, 3);
    CHECK(all.size() == 3);

    // ties resolve lexicographically, so repeated builds agree
    std::vector<std::vector<std::uint16_t>> tied{{9, 9}, {1, 1}, {5, 5}};
    const auto t1 = model::top_states(tied, 2);
    const auto t2 = model::top_states(tied, 2);
    CHECK(t1.states == t2.states);
    CHECK(t1.states[0] == std::vector<std::uint16_t>{1, 1});

    CHECK_THROWS_AS(model::top_states(states, 0), std::invalid_argument);
    CHECK_THROWS_AS(model::top_states(states, 4), std::invalid_argument);
}

TEST_CASE("projection: members map to themselves, queries match a brute-force scan") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> label(0, mdp::kNumLabels - 1);
    std::vector<std::vector<std::uint16_t>> states;
    for (int i = 0; i < 40; ++i)
        states.push_back({static_cast<std::uint16_t>(label(rng)), static_cast<std::uint16_t>(label(rng)),
                          static_cast<std::uint16_t>(label(rng))});
    std::sort(states.begin(), states.end());
    states.erase(std::unique(states.begin(), states.end()), states.end());
    const auto sp = model::make_state_set(states);

    for (int i = 0; i < sp.size(); ++i) CHECK(sp.project(sp.states[static_cast<std::size_t>(i)]) == i);

    for (int trial = 0; trial < 200; ++trial) {
        const std::vector<std::uint16_t> q{static_cast<std::uint16_t>(label(rng)),
                                           static_cast<std::uint16_t>(label(rng)),
                                           static_cast<std::uint16_t>(label(rng))};
        const auto qc = model::normalized_coords(q);
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < sp.size(); ++i) {
            const auto sc = model::normalized_coords(sp.states[static_cast<std::size_t>(i)]);
            double d = 0.0;
            for (std::size_t j = 0; j < sc.size(); ++j) d += (qc[j] - sc[j]) * (qc[j] - sc[j]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        CHECK(sp.project(q) == best);
    }
}

TEST_CASE("synthesis: deterministic kernel gives point-mass rows") {
    // every label steps deterministically to (label+1) % 945 under hi, stays under lo
    std::vector<model::ClientKernel::Row> rows(static_cast<std::size_t>(mdp::kNumLabels) * 2);
    for (int s = 0; s < mdp::kNumLabels; ++s) {
        rows[static_cast<std::size_t>(s) * 2 + 0] = {{static_cast<std::uint16_t>(s), 1.0}};
        rows[static_cast<std::size_t>(s) * 2 + 1] = {
            {static_cast<std::uint16_t>((s + 1) % mdp::kNumLabels), 1.0}};
    }
    const auto kernel = model::kernel_from_rows(std::move(rows), {});

    std::vector<std::vector<std::uint16_t>> states{{10, 20}, {11, 20}, {10, 21}, {11, 21}};
    const auto sp = model::make_state_set(states);
    const auto actions = mdp::enumerate_actions(2, 1);
    const auto sys = model::synthesize_system_kernel(kernel, sp, actions, 50, 7);
    for (int s = 0; s < sys.n_states; ++s)
        for (int a = 0; a < sys.n_actions; ++a) {
            const auto& row = sys.row(s, a);
            REQUIRE(row.size() == 1);
            CHECK(row[0].second == doctest::Approx(1.0));
        }
    // determinism across thread counts
    const auto sys1 = model::synthesize_system_kernel(kernel, sp, actions, 50, 7, 1);
    const auto sys2 = model::synthesize_system_kernel(kernel, sp, actions, 50, 7, 2);
    for (int s = 0; s < sys.n_states; ++s)
        for (int a = 0; a < sys.n_actions; ++a) CHECK(sys1.row(s, a) == sys2.row(s, a));
}

TEST_CASE("1-client synthesis over the whole space reproduces the client kernel within 3 sigma") {
    std::mt19937_64 rng(23);
    std::vector<model::ClientKernel::Row> rows(static_cast<std::size_t>(mdp::kNumLabels) * 2);
    std::uniform_int_distribution<int> label(0, mdp::kNumLabels - 1);
    for (int s = 0; s < mdp::kNumLabels; ++s)
        for (int a = 0; a < 2; ++a) {
            // two-outcome rows with random probabilities
            const int x = label(rng);
            int y = label(rng);
            if (y == x) y = (y + 1) % mdp::kNumLabels;
            std::uniform_real_distribution<double> u(0.1, 0.9);
            const double p = u(rng);
            auto& row = rows[static_cast<std::size_t>(s) * 2 + static_cast<std::size_t>(a)];
            row = {{static_cast<std::uint16_t>(std::min(x, y)), x < y ? p : 1.0 - p},
                   {static_cast<std::uint16_t>(std::max(x, y)), x < y ? 1.0 - p : p}};
        }
    const auto kernel = model::kernel_from_rows(std::move(rows), {});

    std::vector<std::vector<std::uint16_t>> all;
    for (int s = 0; s < mdp::kNumLabels; ++s) all.push_back({static_cast<std::uint16_t>(s)});
    const auto sp = model::make_state_set(all);
    const auto actions = mdp::enumerate_actions(1, 1);  // single action: the one client in hi
    const int samples = 100;
    const auto sys = model::synthesize_system_kernel(kernel, sp, actions, samples, 99);

    for (int s = 0; s < mdp::kNumLabels; s += 13) {
        std::map<int, double> got;
        double sum = 0.0;
        for (const auto& [s2, p] : sys.row(s, 0)) {
            got[s2] = p;
            sum += p;
        }
        REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-9));
        for (const auto& [s2, p_true] : kernel.row(s, 1)) {
            const double sigma = std::sqrt(p_true * (1.0 - p_true) / samples);
            CHECK(std::abs(got[s2] - p_true) <= 3.0 * sigma + 1e-12);
        }
    }
}

TEST_CASE("value iteration: single self-loop state gives R/(1-gamma)") {
    const auto sys = dense_mdp({{{{1.0}}}}, {{1.0}});
    const auto sol = model::value_iteration(sys, 0.9, 1e-9);
    CHECK(sol.converged);
    CHECK(sol.v[0] == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("value iteration: deterministic two-state swap solves the linear system") {
    // V1 = 0 + 0.5 V2, V2 = 1 + 0.5 V1 -> V1 = 2/3, V2 = 4/3
    const auto sys = dense_mdp({{{{0.0, 1.0}}}, {{{1.0, 0.0}}}}, {{0.0}, {1.0}});
    const auto sol = model::value_iteration(sys, 0.5, 1e-12);
    CHECK(sol.v[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(sol.v[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("value iteration matches exhaustive policy enumeration on random MDPs") {
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int S = 6, A = 3;
    const double gamma = 0.9;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<std::vector<double>>> p(
            S, std::vector<std::vector<double>>(A, std::vector<double>(S)));
        std::vector<std::vector<double>> r(S, std::vector<double>(A));
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                double sum = 0.0;
                for (int s2 = 0; s2 < S; ++s2) {
                    p[s][a][s2] = -std::log(u(rng) + 1e-12);
                    sum += p[s][a][s2];
                }
                for (int s2 = 0; s2 < S; ++s2) p[s][a][s2] /= sum;
                r[s][a] = 5.0 * u(rng);
            }
        const auto sys = dense_mdp(p, r);
        const auto sol = model::value_iteration(sys, gamma, 1e-10, 2000);
        REQUIRE(sol.converged);

        // oracle: evaluate all A^S stationary policies by linear solve
        std::vector<double> best(S, -1e18);
        std::vector<int> pi(S, 0);
        const long total = static_cast<long>(std::pow(A, S));
        for (long code = 0; code < total; ++code) {
            long c = code;
            for (int s = 0; s < S; ++s) {
                pi[static_cast<std::size_t>(s)] = static_cast<int>(c % A);
                c /= A;
            }
            const auto v = evaluate_policy(p, r, pi, gamma);
            for (int s = 0; s < S; ++s) best[static_cast<std::size_t>(s)] = std::max(best[static_cast<std::size_t>(s)], v[static_cast<std::size_t>(s)]);
        }
        for (int s = 0; s < S; ++s)
            CHECK(sol.v[static_cast<std::size_t>(s)] == doctest::Approx(best[static_cast<std::size_t>(s)]).epsilon(1e-6));

        // contraction of successive residuals
        for (std::size_t i = 1; i < sol.residual_history.size(); ++i)
            if (sol.residual_history[i - 1] > 1e-12)
                CHECK(sol.residual_history[i] <=
                      gamma * sol.residual_history[i - 1] + 1e-9);
    }
}

TEST_CASE("greedy policy from converged values has a small Bellman residual everywhere") {
    std::mt19937_64 rng(5150);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int S = 8, A = 3;
    std::vector<std::vector<std::vector<double>>> p(
        S, std::vector<std::vector<double>>(A, std::vector<double>(S)));
    std::vector<std::vector<double>> r(S, std::vector<double>(A));
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            double sum = 0.0;
            for (int s2 = 0; s2 < S; ++s2) sum += p[s][a][s2] = u(rng);
            for (int s2 = 0; s2 < S; ++s2) p[s][a][s2] /= sum;
            r[s][a] = u(rng);
        }
    const auto sys = dense_mdp(p, r);
    const double gamma = 0.85;
    const auto sol = model::value_iteration(sys, gamma, 1e-10, 5000);
    REQUIRE(sol.converged);
    for (int s = 0; s < S; ++s) {
        double best = -1e18;
        for (int a = 0; a < A; ++a) {
            double q = r[s][a];
            for (int s2 = 0; s2 < S; ++s2) q += gamma * p[s][a][s2] * sol.v[static_cast<std::size_t>(s2)];
            best = std::max(best, q);
        }
        double q_pi = r[s][sol.policy[static_cast<std::size_t>(s)]];
        for (int s2 = 0; s2 < S; ++s2)
            q_pi += gamma * p[s][sol.policy[static_cast<std::size_t>(s)]][s2] * sol.v[static_cast<std::size_t>(s2)];
        CHECK(std::abs(best - q_pi) <= 1e-9);
        CHECK(std::abs(best - sol.v[static_cast<std::size_t>(s)]) <= 1e-8);
    }
}
