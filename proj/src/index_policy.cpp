#include "qflow/index_policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qflow/mdp.hpp"

namespace qflow::indexing {

int IndexTable::max_index() const {
    int m = 0;
    for (int i : index) m = std::max(m, i);
    return m;
}

IndexTable build_index(std::span<const double> values, double min_epsilon) {
    if (values.empty()) throw std::invalid_argument("build_index: empty values");
    for (double v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("build_index: non-finite value");
    const double vmin = *std::min_element(values.begin(), values.end());

    IndexTable table;
    table.index.assign(values.size(), 0);
    std::vector<int> order;
    for (std::size_t s = 0; s < values.size(); ++s)
        if (values[s] > vmin + min_epsilon) order.push_back(static_cast<int>(s));
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (values[static_cast<std::size_t>(a)] != values[static_cast<std::size_t>(b)])
            return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
        return a < b;
    });
    int rank = 1;
    for (int s : order) table.index[static_cast<std::size_t>(s)] = rank++;
    return table;
}

std::vector<int> index_policy(std::span<const policy::ClientView> clients,
                              const IndexTable& table, int n_hi) {
    if (static_cast<int>(clients.size()) < n_hi)
        throw std::invalid_argument("index_policy: fewer clients than n_hi");
    struct Ranked {
        int id;
        int idx;
        double buffer;
    };
    std::vector<Ranked> ranked;
    ranked.reserve(clients.size());
    for (const auto& c : clients) {
        const int label = mdp::encode(mdp::discretize(c.buffer, c.stalls, c.qoe));
        ranked.push_back({c.id, table.index.at(static_cast<std::size_t>(label)), c.buffer});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.idx != b.idx) return a.idx > b.idx;
        if (a.buffer != b.buffer) return a.buffer < b.buffer;
        return a.id < b.id;
    });
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n_hi));
    for (int i = 0; i < n_hi; ++i) out.push_back(ranked[static_cast<std::size_t>(i)].id);
    return out;
}

namespace {
// average ranks (1-based) with ties shared
std::vector<double> average_ranks(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}
}  // namespace

double rank_consistency(const IndexTable& a, const IndexTable& b, int top_k) {
    if (a.index.size() != b.index.size())
        throw std::invalid_argument("rank_consistency: table size mismatch");
    std::vector<int> shared;
    for (std::size_t s = 0; s < a.index.size(); ++s)
        if (a.index[s] > 0) shared.push_back(static_cast<int>(s));
    // keep the top_k highest-ranked states of table a
    std::sort(shared.begin(), shared.end(), [&](int x, int y) {
        return a.index[static_cast<std::size_t>(x)] > a.index[static_cast<std::size_t>(y)];
    });
    if (top_k > 0 && static_cast<int>(shared.size()) > top_k)
        shared.resize(static_cast<std::size_t>(top_k));
    if (shared.size() < 3) throw std::invalid_argument("rank_consistency: fewer than 3 shared states");

    std::vector<double> xa, xb;
    xa.reserve(shared.size());
    xb.reserve(shared.size());
    for (int s : shared) {
        xa.push_back(a.index[static_cast<std::size_t>(s)]);
        xb.push_back(b.index[static_cast<std::size_t>(s)]);
    }
    const auto ra = average_ranks(xa);
    const auto rb = average_ranks(xb);
    const double n = static_cast<double>(ra.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace qflow::indexing
