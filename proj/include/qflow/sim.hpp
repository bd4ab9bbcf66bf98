#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qflow/dqs.hpp"
#include "qflow/mdp.hpp"
#include "qflow/rng.hpp"

// Discrete-time streaming environment: clients play videos from buffers fed
// by the priority queues of an access point. Queue service is fluid; the
// fairness split among a queue's flows is redrawn per decision period from a
// symmetric Dirichlet and held for the DP. Client playback advances in fixed
// substeps so stall onset/exit lands within one substep of the exact time.

namespace qflow::sim {

struct VideoSpec {
    double bitrate_mbps = 0.0;
    double length_s = 0.0;
};

enum class BinQuality { Good, Bad };

struct BinConfig {
    double hi_bw = 11.0;
    double lo_bw = 4.3;
    int n_hi = 2;
    bool single_queue = false;  // one queue at hi_bw, no assignment choice

    void validate() const;
};

struct SimConfig {
    std::vector<BinConfig> bins{BinConfig{}};
    int n_clients = 6;
    int max_clients = 6;
    double dp_seconds = 10.0;
    double substep = 0.1;
    TruncNormal bitrate_dist{2.9, 10.0, 0.2, 10.0};  // Mbps
    TruncNormal length_dist{600.0, 50.0, 60.0, 1200.0};  // seconds
    double rebuffer_threshold = 10.0;
    double buffer_cap = 20.0;
    double dirichlet_alpha = 1.0;
    double bad_bin_scale = 0.4;  // bad-bin bandwidths = scale * good profile
    dqs::Params dqs_params{};

    void validate() const;
};

struct ClientSim {
    int id = 0;
    int bin = 0;
    double buffer = 0.0;    // seconds of video buffered ahead of the playhead
    double playhead = 0.0;  // seconds into the current video
    VideoSpec video{};
    dqs::Tracker tracker{};
    double cumulative_stall = 0.0;  // session seconds spent in Stalled
    double stall_started_at = -1.0;  // sim time the current stall began, <0 if none
};

struct Action {
    // hi[b] = client ids granted high priority in bin b; ignored for
    // single-queue bins.
    std::vector<std::vector<int>> hi;

    static Action single_bin(std::vector<int> ids) {
        Action a;
        a.hi.push_back(std::move(ids));
        return a;
    }
};

inline int hi_queue_id(int bin) { return 2 * bin; }
inline int lo_queue_id(int bin) { return 2 * bin + 1; }

struct StallEvent {
    int client_id = 0;
    double start_s = 0.0;
    double end_s = 0.0;
};

struct DpClientRow {
    long dp_index = 0;
    int client_id = 0;
    double buffer = 0.0;
    int stall_count = 0;
    double qoe = 5.0;
    int queue_id = 0;
    int bin = 0;
    double served_mbits = 0.0;
    double stalled_s = 0.0;
};

struct QueueDpTotals {
    int queue_id = 0;
    double served_mbits = 0.0;
    double wasted_mbits = 0.0;  // allocated capacity the flow could not absorb
};

// Once-per-simulated-second snapshot, the granularity of the stats reports.
struct SecondSnapshot {
    double sim_time = 0.0;
    struct ClientSnap {
        int id;
        double buffer;
        int stall_count;
        double bitrate_mbps;
        double qoe;
    };
    struct QueueSnap {
        int queue_id;
        double served_mbits_cum;
        double backlog_mbits;
        double dropped_mbits_cum;
    };
    std::vector<ClientSnap> clients;
    std::vector<QueueSnap> queues;
};

struct DpResult {
    std::vector<double> qoe;  // per client, id order, at DP end
    std::vector<DpClientRow> rows;
    std::vector<StallEvent> completed_stalls;
    std::vector<QueueDpTotals> queue_totals;
    std::vector<SecondSnapshot> seconds;
};

VideoSpec sample_video(Rng& rng, const SimConfig& cfg);

class Simulation {
  public:
    Simulation(SimConfig cfg, std::uint64_t seed);

    const SimConfig& config() const { return cfg_; }
    long dp_index() const { return dp_index_; }
    double sim_time() const { return sim_time_; }
    const std::vector<ClientSim>& clients() const { return clients_; }
    std::vector<int> client_ids_in_bin(int bin) const;
    int num_queues() const { return 2 * static_cast<int>(cfg_.bins.size()); }

    std::vector<mdp::ClientObs> observe() const;

    DpResult step_dp(const Action& action);

    void set_population(int n);
    void set_bin_quality(int bin, BinQuality q);
    void set_client_bin(int client_id, int bin);

    // Test hook: direct access for constructing scenarios.
    ClientSim& client_mut(int id);

    struct QueueCums {
        double served_mbits = 0.0;
        double wasted_mbits = 0.0;
    };
    const QueueCums& queue_cums(int queue_id) const { return queue_cums_.at(static_cast<std::size_t>(queue_id)); }

    SecondSnapshot snapshot() const;  // instantaneous stats at the current sim time

  private:
    ClientSim make_fresh_client(int id, int bin);
    double queue_backlog_mbits(const std::vector<int>& flow_ids) const;

    SimConfig cfg_;
    Rng rng_;
    std::vector<ClientSim> clients_;
    std::vector<QueueCums> queue_cums_;
    long dp_index_ = 0;
    double sim_time_ = 0.0;
    // flows assigned per queue during the current/last DP, for backlog stats
    std::vector<std::vector<int>> queue_flows_;
};

}  // namespace qflow::sim
