#include "qflow/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace qflow::sim {

namespace {
constexpr double kEps = 1e-9;
}

void BinConfig::validate() const {
    if (single_queue) {
        if (!(hi_bw >= 0.0)) throw std::invalid_argument("bin: bandwidth must be nonnegative");
        return;
    }
    if (!(hi_bw > lo_bw && lo_bw > 0.0))
        throw std::invalid_argument("bin: requires hi_bw > lo_bw > 0");
    if (n_hi < 1) throw std::invalid_argument("bin: n_hi must be >= 1");
}

void SimConfig::validate() const {
    if (bins.empty()) throw std::invalid_argument("sim: at least one bin");
    for (const auto& b : bins) b.validate();
    if (n_clients < 1 || n_clients > max_clients)
        throw std::invalid_argument("sim: n_clients out of range");
    if (!(substep > 0.0) || !(dp_seconds > 0.0))
        throw std::invalid_argument("sim: dp_seconds and substep must be positive");
    const double ratio = dp_seconds / substep;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
        throw std::invalid_argument("sim: dp_seconds must be a multiple of substep");
    if (!(rebuffer_threshold <= buffer_cap))
        throw std::invalid_argument("sim: rebuffer_threshold must be <= buffer_cap");
    if (!(dirichlet_alpha > 0.0)) throw std::invalid_argument("sim: dirichlet_alpha must be positive");
    dqs_params.validate();
}

VideoSpec sample_video(Rng& rng, const SimConfig& cfg) {
    VideoSpec v;
    v.bitrate_mbps = cfg.bitrate_dist.sample(rng);
    v.length_s = cfg.length_dist.sample(rng);
    return v;
}

Simulation::Simulation(SimConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
    queue_cums_.resize(static_cast<std::size_t>(num_queues()));
    queue_flows_.resize(static_cast<std::size_t>(num_queues()));
    clients_.reserve(static_cast<std::size_t>(cfg_.n_clients));
    for (int i = 0; i < cfg_.n_clients; ++i) clients_.push_back(make_fresh_client(i, 0));
}

ClientSim Simulation::make_fresh_client(int id, int bin) {
    ClientSim c;
    c.id = id;
    c.bin = bin;
    c.video = sample_video(rng_, cfg_);
    c.tracker = dqs::init(cfg_.dqs_params);
    return c;
}

std::vector<int> Simulation::client_ids_in_bin(int bin) const {
    std::vector<int> ids;
    for (const auto& c : clients_)
        if (c.bin == bin) ids.push_back(c.id);
    return ids;
}

std::vector<mdp::ClientObs> Simulation::observe() const {
    std::vector<mdp::ClientObs> out;
    out.reserve(clients_.size());
    for (const auto& c : clients_)
        out.push_back({c.buffer, c.tracker.stall_count, c.tracker.qoe});
    return out;
}

ClientSim& Simulation::client_mut(int id) {
    for (auto& c : clients_)
        if (c.id == id) return c;
    throw std::invalid_argument("unknown client id " + std::to_string(id));
}

void Simulation::set_population(int n) {
    if (n < 1 || n > cfg_.max_clients) throw std::invalid_argument("set_population: n out of range");
    while (static_cast<int>(clients_.size()) > n) clients_.pop_back();  // ids are dense, highest last
    while (static_cast<int>(clients_.size()) < n)
        clients_.push_back(make_fresh_client(static_cast<int>(clients_.size()), 0));
}

void Simulation::set_bin_quality(int bin, BinQuality q) {
    if (bin < 0 || bin >= static_cast<int>(cfg_.bins.size()))
        throw std::invalid_argument("set_bin_quality: unknown bin");
    const BinConfig good;  // reference good profile (11 / 4.3)
    auto& b = cfg_.bins[static_cast<std::size_t>(bin)];
    const double scale = (q == BinQuality::Good) ? 1.0 : cfg_.bad_bin_scale;
    b.hi_bw = good.hi_bw * scale;
    b.lo_bw = good.lo_bw * scale;
}

void Simulation::set_client_bin(int client_id, int bin) {
    if (bin < 0 || bin >= static_cast<int>(cfg_.bins.size()))
        throw std::invalid_argument("set_client_bin: unknown bin");
    client_mut(client_id).bin = bin;
}

double Simulation::queue_backlog_mbits(const std::vector<int>& flow_ids) const {
    double total = 0.0;
    for (int id : flow_ids) {
        const ClientSim& c = clients_[static_cast<std::size_t>(id)];
        const double fetchable_s =
            std::min(cfg_.buffer_cap - c.buffer, c.video.length_s - c.playhead - c.buffer);
        if (fetchable_s > 0.0) total += fetchable_s * c.video.bitrate_mbps;
    }
    return total;
}

SecondSnapshot Simulation::snapshot() const {
    SecondSnapshot s;
    s.sim_time = sim_time_;
    for (const auto& c : clients_)
        s.clients.push_back({c.id, c.buffer, c.tracker.stall_count, c.video.bitrate_mbps, c.tracker.qoe});
    for (int q = 0; q < num_queues(); ++q) {
        const auto& cums = queue_cums_[static_cast<std::size_t>(q)];
        s.queues.push_back({q, cums.served_mbits,
                            queue_backlog_mbits(queue_flows_[static_cast<std::size_t>(q)]),
                            cums.wasted_mbits});
    }
    return s;
}

DpResult Simulation::step_dp(const Action& action) {
    const int n_bins = static_cast<int>(cfg_.bins.size());
    if (static_cast<int>(action.hi.size()) != n_bins)
        throw std::invalid_argument("action: one hi set per bin required");

    // Resolve queue membership and validate cardinalities.
    for (auto& f : queue_flows_) f.clear();
    std::vector<double> rate(clients_.size(), 0.0);  // Mbps per client, fixed for the DP
    std::vector<int> queue_of(clients_.size(), -1);

    for (int b = 0; b < n_bins; ++b) {
        const BinConfig& bin = cfg_.bins[static_cast<std::size_t>(b)];
        std::vector<int> members = client_ids_in_bin(b);
        if (bin.single_queue) {
            queue_flows_[static_cast<std::size_t>(hi_queue_id(b))] = members;
            for (int id : members) queue_of[static_cast<std::size_t>(id)] = hi_queue_id(b);
            continue;
        }
        const auto& hi = action.hi[static_cast<std::size_t>(b)];
        const int want = std::min<int>(bin.n_hi, static_cast<int>(members.size()));
        if (static_cast<int>(hi.size()) != want)
            throw std::invalid_argument("action: bin " + std::to_string(b) + " needs exactly " +
                                        std::to_string(want) + " high-priority clients");
        std::set<int> hi_set(hi.begin(), hi.end());
        if (static_cast<int>(hi_set.size()) != want)
            throw std::invalid_argument("action: duplicate client in hi set");
        for (int id : hi_set)
            if (std::find(members.begin(), members.end(), id) == members.end())
                throw std::invalid_argument("action: client " + std::to_string(id) + " not in bin " +
                                            std::to_string(b));
        for (int id : members) {
            const int q = hi_set.count(id) ? hi_queue_id(b) : lo_queue_id(b);
            queue_flows_[static_cast<std::size_t>(q)].push_back(id);
            queue_of[static_cast<std::size_t>(id)] = q;
        }
    }

    // Per-DP Dirichlet fairness split, flows in ascending id order.
    for (int q = 0; q < num_queues(); ++q) {
        auto& flows = queue_flows_[static_cast<std::size_t>(q)];
        if (flows.empty()) continue;
        std::sort(flows.begin(), flows.end());
        const int b = q / 2;
        const double bw = (q % 2 == 0) ? cfg_.bins[static_cast<std::size_t>(b)].hi_bw
                                       : cfg_.bins[static_cast<std::size_t>(b)].lo_bw;
        const std::vector<double> w =
            dirichlet(rng_, static_cast<int>(flows.size()), cfg_.dirichlet_alpha);
        for (std::size_t i = 0; i < flows.size(); ++i)
            rate[static_cast<std::size_t>(flows[i])] = w[i] * bw;
    }

    DpResult result;
    result.queue_totals.resize(static_cast<std::size_t>(num_queues()));
    for (int q = 0; q < num_queues(); ++q) result.queue_totals[static_cast<std::size_t>(q)].queue_id = q;
    std::vector<double> served_mbits(clients_.size(), 0.0);
    std::vector<double> stalled_s(clients_.size(), 0.0);

    const double dt = cfg_.substep;
    const long n_sub = std::lround(cfg_.dp_seconds / dt);
    const long subs_per_second = std::max<long>(1, std::lround(1.0 / dt));

    for (long step = 0; step < n_sub; ++step) {
        const double t_sub = sim_time_ + static_cast<double>(step) * dt;
        for (auto& c : clients_) {
            const std::size_t ci = static_cast<std::size_t>(c.id);
            const int q = queue_of[ci];
            auto& qt = result.queue_totals[static_cast<std::size_t>(q)];
            auto& qc = queue_cums_[static_cast<std::size_t>(q)];

            // phase for this substep; dqs::step does the transition bookkeeping
            dqs::Phase phase = c.tracker.phase;
            if (phase != dqs::Phase::Playing) {
                // resume when the buffer covers the threshold or the video tail
                const double need = std::min(cfg_.rebuffer_threshold, c.video.length_s - c.playhead);
                if (c.buffer + kEps >= need) {
                    if (c.stall_started_at >= 0.0) {
                        result.completed_stalls.push_back({c.id, c.stall_started_at, t_sub});
                        c.stall_started_at = -1.0;
                    }
                    phase = dqs::Phase::Playing;
                }
            }

            if (phase == dqs::Phase::Playing) {
                const double play_dt = std::min(dt, c.buffer);
                c.playhead += play_dt;
                c.buffer -= play_dt;
                if (c.playhead >= c.video.length_s - kEps) {
                    c.video = sample_video(rng_, cfg_);
                    c.buffer = 0.0;
                    c.playhead = 0.0;
                    c.tracker = dqs::reset_for_new_video(c.tracker);
                    phase = dqs::Phase::InitialBuffering;
                } else if (play_dt < dt - 1e-12) {
                    phase = dqs::Phase::Stalled;
                    c.stall_started_at = t_sub + play_dt;
                }
            }

            // download after playout so the buffer sits at the cap, not one
            // substep below it, when inflow exceeds the playback rate
            const double offered_mbits = rate[ci] * dt;
            if (offered_mbits > 0.0) {
                const double dl_s = offered_mbits / c.video.bitrate_mbps;
                const double room_s = std::min(cfg_.buffer_cap - c.buffer,
                                               c.video.length_s - c.playhead - c.buffer);
                const double used_s = std::clamp(room_s, 0.0, dl_s);
                c.buffer += used_s;
                const double used_mbits = used_s * c.video.bitrate_mbps;
                served_mbits[ci] += used_mbits;
                qt.served_mbits += used_mbits;
                qt.wasted_mbits += offered_mbits - used_mbits;
                qc.served_mbits += used_mbits;
                qc.wasted_mbits += offered_mbits - used_mbits;
            }

            c.tracker = dqs::step(c.tracker, phase, dt);
            if (phase == dqs::Phase::Stalled) {
                c.cumulative_stall += dt;
                stalled_s[ci] += dt;
            }
        }

        if ((step + 1) % subs_per_second == 0) {
            sim_time_ += static_cast<double>(step + 1) * dt;
            result.seconds.push_back(snapshot());
            sim_time_ -= static_cast<double>(step + 1) * dt;
        }
    }

    sim_time_ += cfg_.dp_seconds;

    result.qoe.reserve(clients_.size());
    for (const auto& c : clients_) {
        result.qoe.push_back(c.tracker.qoe);
        result.rows.push_back({dp_index_, c.id, c.buffer, c.tracker.stall_count, c.tracker.qoe,
                               queue_of[static_cast<std::size_t>(c.id)], c.bin,
                               served_mbits[static_cast<std::size_t>(c.id)],
                               stalled_s[static_cast<std::size_t>(c.id)]});
    }
    ++dp_index_;
    return result;
}

}  // namespace qflow::sim
