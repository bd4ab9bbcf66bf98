#pragma once

#include <span>
#include <vector>

#include "qflow/policies.hpp"

// Value-rank index over the 945 client labels: the minimal-value cluster
// shares rank 0, every other state gets a distinct ascending rank. The index
// policy promotes the clients whose labels rank highest.

namespace qflow::indexing {

struct IndexTable {
    std::vector<int> index;  // per label, 0 = minimal-value cluster

    int max_index() const;
};

IndexTable build_index(std::span<const double> values, double min_epsilon = 1e-9);

std::vector<int> index_policy(std::span<const policy::ClientView> clients,
                              const IndexTable& table, int n_hi);

// Spearman rank correlation over the states non-minimal in `a`, restricted
// to the top_k highest-ranked of them; ties get average ranks.
double rank_consistency(const IndexTable& a, const IndexTable& b, int top_k);

}  // namespace qflow::indexing
