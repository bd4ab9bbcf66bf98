#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "qflow/mdp.hpp"
#include "qflow/policies.hpp"

using namespace qflow;

namespace {

// toy kernel with chosen per-label expected next QoE for each action; rows
// are point masses on states whose qoe bin midpoint equals the target
model::ClientKernel kernel_with_gains(const std::map<int, std::pair<double, double>>& eq) {
    std::vector<model::ClientKernel::Row> rows(static_cast<std::size_t>(mdp::kNumLabels) * 2);
    for (int s = 0; s < mdp::kNumLabels; ++s)
        for (int a = 0; a < 2; ++a)
            rows[static_cast<std::size_t>(s) * 2 + static_cast<std::size_t>(a)] = {
                {static_cast<std::uint16_t>(s), 1.0}};
    for (const auto& [label, lohi] : eq) {
        auto to_label = [&](double qoe_mid) {
            const int qbin = static_cast<int>(std::lround((qoe_mid - 1.25) / 0.5));
            return mdp::encode({0, std::clamp(qbin, 0, 8), 0});
        };
        rows[static_cast<std::size_t>(label) * 2 + 0] = {
            {static_cast<std::uint16_t>(to_label(lohi.first)), 1.0}};
        rows[static_cast<std::size_t>(label) * 2 + 1] = {
            {static_cast<std::uint16_t>(to_label(lohi.second)), 1.0}};
    }
    return model::kernel_from_rows(std::move(rows), {});
}

std::set<int> as_set(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("round robin rotates in id order") {
    const std::vector<int> six{0, 1, 2, 3, 4, 5};
    CHECK(policy::round_robin(six, 0, 2) == std::vector<int>{0, 1});
    CHECK(policy::round_robin(six, 1, 2) == std::vector<int>{2, 3});
    CHECK(policy::round_robin(six, 2, 2) == std::vector<int>{4, 5});
    CHECK(policy::round_robin(six, 3, 2) == std::vector<int>{0, 1});

    const std::vector<int> two{0, 1};
    for (long t = 0; t < 5; ++t) CHECK(as_set(policy::round_robin(two, t, 2)) == std::set<int>{0, 1});

    const std::vector<int> five{0, 1, 2, 3, 4};
    CHECK(policy::round_robin(five, 2, 2) == std::vector<int>{4, 0});  // wraparound

    CHECK_THROWS_AS(policy::round_robin(two, 0, 3), std::invalid_argument);
}

TEST_CASE("round robin serves everyone within ceil(n/n_hi) periods") {
    for (int n : {4, 5, 6, 7}) {
        std::vector<int> ids(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
        const int window = (n + 1) / 2;
        for (long start = 0; start < 12; ++start) {
            std::set<int> seen;
            for (long t = start; t < start + window; ++t)
                for (int id : policy::round_robin(ids, t, 2)) seen.insert(id);
            CHECK(static_cast<int>(seen.size()) == n);
        }
    }
}

TEST_CASE("greedy buffer picks the lowest buffers, ties by id") {
    std::vector<policy::ClientView> clients;
    const double buffers[] = {3, 9, 1, 7, 5, 2};
    for (int i = 0; i < 6; ++i) clients.push_back({i, buffers[i], 0, 5.0});
    CHECK(as_set(policy::greedy_buffer(clients, 2)) == std::set<int>{2, 5});

    std::vector<policy::ClientView> equal;
    for (int i = 0; i < 6; ++i) equal.push_back({i, 4.0, 0, 5.0});
    CHECK(policy::greedy_buffer(equal, 2) == std::vector<int>{0, 1});

    std::vector<policy::ClientView> zeros{{0, 0.0, 0, 5.0}, {1, 0.0, 0, 5.0}, {2, 10.0, 0, 5.0}};
    CHECK(policy::greedy_buffer(zeros, 2) == std::vector<int>{0, 1});
}

TEST_CASE("reward greedy: zero gain everywhere falls back to id order") {
    const auto kernel = kernel_with_gains({});
    std::vector<policy::ClientView> clients;
    for (int i = 0; i < 6; ++i) clients.push_back({i, 10.0, 0, 3.0});
    CHECK(policy::reward_greedy(clients, kernel, 2) == std::vector<int>{0, 1});
}

TEST_CASE("reward greedy picks the largest hi-lo gains") {
    // clients sit at distinct labels with engineered (lo, hi) expected QoE;
    // midpoints quantize to 0.5 steps so gains are exactly representable
    std::vector<policy::ClientView> clients{
        {0, 0.0, 0, 1.0},  // label (0,0,0)
        {1, 1.0, 0, 1.0},  // label (1,0,0)
        {2, 2.0, 0, 1.0},  // label (2,0,0)
    };
    std::map<int, std::pair<double, double>> gains;
    gains[mdp::encode({0, 0, 0})] = {2.25, 2.75};  // gain 0.5
    gains[mdp::encode({1, 0, 0})] = {2.25, 2.25};  // gain 0
    gains[mdp::encode({2, 0, 0})] = {1.25, 2.25};  // gain 1.0
    const auto kernel = kernel_with_gains(gains);
    CHECK(as_set(policy::reward_greedy(clients, kernel, 1)) == std::set<int>{2});
    CHECK(as_set(policy::reward_greedy(clients, kernel, 2)) == std::set<int>{0, 2});
}

TEST_CASE("reward greedy equals brute-force action maximization") {
    std::mt19937_64 rng(314);
    std::uniform_int_distribution<int> label_pick(0, mdp::kNumLabels - 1);
    std::uniform_int_distribution<int> mid_pick(0, 7);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 4 + static_cast<int>(rng() % 3);  // 4..6 clients
        std::map<int, std::pair<double, double>> gains;
        std::vector<policy::ClientView> clients;
        std::set<int> labels;
        while (static_cast<int>(labels.size()) < n) labels.insert(label_pick(rng));
        int id = 0;
        for (int label : labels) {
            const auto d = mdp::decode(label);
            gains[label] = {1.25 + 0.5 * mid_pick(rng), 1.25 + 0.5 * mid_pick(rng)};
            clients.push_back({id++, static_cast<double>(d.buffer_bin), d.stall_bin,
                               std::min(5.0, 1.0 + 0.5 * d.qoe_bin + 0.2)});
        }
        const auto kernel = kernel_with_gains(gains);
        const int n_hi = 2;
        const auto picked = as_set(policy::reward_greedy(clients, kernel, n_hi));

        // oracle: enumerate every action, maximize the summed expected QoE
        double best = -1.0;
        for (const auto& slots : mdp::enumerate_actions(n, n_hi)) {
            std::set<int> hi(slots.begin(), slots.end());
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                const int label = mdp::encode(
                    mdp::discretize(clients[static_cast<std::size_t>(i)].buffer,
                                    clients[static_cast<std::size_t>(i)].stalls,
                                    clients[static_cast<std::size_t>(i)].qoe));
                total += kernel.expected_qoe(label, hi.count(i) ? 1 : 0);
            }
            best = std::max(best, total);
        }
        double picked_total = 0.0;
        for (int i = 0; i < n; ++i) {
            const int label = mdp::encode(mdp::discretize(clients[static_cast<std::size_t>(i)].buffer,
                                                          clients[static_cast<std::size_t>(i)].stalls,
                                                          clients[static_cast<std::size_t>(i)].qoe));
            picked_total += kernel.expected_qoe(label, picked.count(i) ? 1 : 0);
        }
        CHECK(picked_total == doctest::Approx(best));
    }
}

TEST_CASE("random policy is reproducible and covers the single-action case") {
    const std::vector<int> two{0, 1};
    Rng rng(5);
    CHECK(as_set(policy::random_policy(two, rng, 2)) == std::set<int>{0, 1});

    Rng r1(99), r2(99);
    const std::vector<int> six{0, 1, 2, 3, 4, 5};
    for (int i = 0; i < 50; ++i)
        CHECK(policy::random_policy(six, r1, 2) == policy::random_policy(six, r2, 2));
}

TEST_CASE("random policy is uniform over the 15 actions (3 sigma per cell)") {
    const std::vector<int> six{0, 1, 2, 3, 4, 5};
    Rng rng(2718);
    std::map<std::set<int>, long> counts;
    const long n = 100000;
    for (long i = 0; i < n; ++i) ++counts[as_set(policy::random_policy(six, rng, 2))];
    REQUIRE(counts.size() == 15);
    const double p = 1.0 / 15.0;
    const double sigma = std::sqrt(n * p * (1.0 - p));
    for (const auto& [_, c] : counts) CHECK(std::abs(c - n * p) <= 3.0 * sigma);
}

TEST_CASE("all policies return exactly n_hi distinct existing clients") {
    std::vector<policy::ClientView> clients;
    std::vector<int> ids;
    for (int i = 0; i < 6; ++i) {
        clients.push_back({i, static_cast<double>(i * 2 % 7), i % 3, 1.0 + (i % 5)});
        ids.push_back(i);
    }
    const auto kernel = kernel_with_gains({});
    Rng rng(8);
    for (int n_hi : {1, 2, 3}) {
        for (const auto& sel :
             {policy::round_robin(ids, 7, n_hi), policy::greedy_buffer(clients, n_hi),
              policy::reward_greedy(clients, kernel, n_hi), policy::random_policy(ids, rng, n_hi)}) {
            CHECK(static_cast<int>(as_set(sel).size()) == n_hi);
            for (int id : sel) CHECK(std::find(ids.begin(), ids.end(), id) != ids.end());
        }
    }
}
