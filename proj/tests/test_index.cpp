#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "qflow/index_policy.hpp"
#include "qflow/mdp.hpp"

using namespace qflow;

TEST_CASE("build_index: minimal cluster at 0, the rest ranked ascending") {
    const std::vector<double> v{1.0, 1.0, 1.0, 2.0, 3.0};
    const auto t = indexing::build_index(v);
    CHECK(t.index == std::vector<int>{0, 0, 0, 1, 2});

    const std::vector<double> flat(10, 4.2);
    CHECK(indexing::build_index(flat).max_index() == 0);

    // ties above the minimum break toward the lower label
    const std::vector<double> tied{0.0, 2.0, 2.0, 1.0};
    CHECK(indexing::build_index(tied).index == std::vector<int>{0, 2, 3, 1});
}

TEST_CASE("build_index is invariant under strictly increasing transforms") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::vector<double> v(200);
    for (auto& x : v) x = u(rng);
    const auto base = indexing::build_index(v);
    std::vector<double> mapped(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) mapped[i] = 3.0 * std::exp(0.5 * v[i]) + 7.0;
    CHECK(indexing::build_index(mapped).index == base.index);

    // deterministic and idempotent
    CHECK(indexing::build_index(v).index == base.index);
}

TEST_CASE("non-minimal indices are distinct and consecutive from 1") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(945);
    for (auto& x : v) x = (u(rng) < 0.6) ? 0.0 : u(rng);
    const auto t = indexing::build_index(v);
    std::set<int> nonzero;
    for (int i : t.index)
        if (i > 0) nonzero.insert(i);
    REQUIRE(!nonzero.empty());
    CHECK(*nonzero.begin() == 1);
    CHECK(*nonzero.rbegin() == static_cast<int>(nonzero.size()));
    // higher value -> higher index
    for (std::size_t a = 0; a < v.size(); ++a)
        for (std::size_t b = a + 1; b < v.size(); b += 97)
            if (v[a] > v[b] + 1e-9 && t.index[b] > 0) CHECK(t.index[a] > t.index[b]);
}

namespace {
indexing::IndexTable table_for_clients(const std::vector<std::pair<int, int>>& label_index) {
    indexing::IndexTable t;
    t.index.assign(mdp::kNumLabels, 0);
    for (auto [label, idx] : label_index) t.index[static_cast<std::size_t>(label)] = idx;
    return t;
}
}  // namespace

TEST_CASE("index policy picks the highest indices, ties by buffer then id") {
    // three clients at distinct labels with engineered indices 5, 0, 3
    std::vector<policy::ClientView> clients{
        {0, 0.0, 0, 1.0}, {1, 1.0, 0, 1.0}, {2, 2.0, 0, 1.0}};
    const auto t = table_for_clients({{mdp::encode({0, 0, 0}), 5},
                                      {mdp::encode({1, 0, 0}), 0},
                                      {mdp::encode({2, 0, 0}), 3}});
    CHECK(indexing::index_policy(clients, t, 1) == std::vector<int>{0});
    const auto two = indexing::index_policy(clients, t, 2);
    CHECK(std::set<int>(two.begin(), two.end()) == std::set<int>{0, 2});

    // all in index-0 states: lowest buffers win
    indexing::IndexTable zeros;
    zeros.index.assign(mdp::kNumLabels, 0);
    std::vector<policy::ClientView> buffered{
        {0, 9.0, 0, 3.0}, {1, 2.0, 0, 3.0}, {2, 5.5, 0, 3.0}, {3, 2.0, 0, 3.0}};
    CHECK(indexing::index_policy(buffered, zeros, 2) == std::vector<int>{1, 3});

    CHECK_THROWS_AS(indexing::index_policy(clients, t, 4), std::invalid_argument);
}

TEST_CASE("fewer active clients choose as if padded to capacity") {
    // padding slots sit at the well-served state: give it index 0 like the
    // table built from bids would, and give live states positive indices
    std::mt19937_64 rng(8);
    std::vector<double> bids(mdp::kNumLabels, 0.0);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    for (int s = 0; s < mdp::kNumLabels; ++s)
        if (s != mdp::encode(mdp::kPaddingState)) bids[static_cast<std::size_t>(s)] = u(rng);
    const auto t = indexing::build_index(bids);

    std::vector<policy::ClientView> four{
        {0, 3.0, 1, 2.2}, {1, 7.0, 0, 4.1}, {2, 1.0, 2, 1.7}, {3, 12.0, 0, 4.9}};
    const auto direct = indexing::index_policy(four, t, 2);

    auto padded = four;
    padded.push_back({4, 20.0, 0, 5.0});
    padded.push_back({5, 20.0, 0, 5.0});
    const auto with_padding = indexing::index_policy(padded, t, 2);
    CHECK(direct == with_padding);
}

TEST_CASE("rank consistency: identical, reversed, and random tables") {
    std::vector<double> v(200);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i < 80) ? 0.0 : u(rng) + 0.1;
    const auto a = indexing::build_index(v);
    CHECK(indexing::rank_consistency(a, a, 100) == doctest::Approx(1.0));

    // reversed ranks over the shared states
    indexing::IndexTable rev = a;
    const int top = a.max_index();
    for (auto& idx : rev.index)
        if (idx > 0) idx = top + 1 - idx;
    CHECK(indexing::rank_consistency(a, rev, 100) == doctest::Approx(-1.0));

    // random permutations have low |rho| with high probability (frozen seed)
    indexing::IndexTable perm = a;
    std::vector<int> nonzero_positions;
    for (std::size_t i = 0; i < perm.index.size(); ++i)
        if (perm.index[i] > 0) nonzero_positions.push_back(static_cast<int>(i));
    std::vector<int> values;
    for (int p : nonzero_positions) values.push_back(perm.index[static_cast<std::size_t>(p)]);
    double max_abs = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(values.begin(), values.end(), rng);
        for (std::size_t i = 0; i < nonzero_positions.size(); ++i)
            perm.index[static_cast<std::size_t>(nonzero_positions[i])] = values[i];
        max_abs = std::max(max_abs, std::abs(indexing::rank_consistency(a, perm, 100)));
    }
    CHECK(max_abs < 0.3);

    indexing::IndexTable tiny;
    tiny.index = {0, 0, 1};
    CHECK_THROWS_AS(indexing::rank_consistency(tiny, tiny, 10), std::invalid_argument);
}
