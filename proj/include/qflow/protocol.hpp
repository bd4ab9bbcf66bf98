#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "qflow/sim.hpp"

// Control plane between environment and controller. One UTF-8 line per
// message: version, sequence number, type tag, then the payload fields in
// fixed order, tab-separated; reals carry 6 decimal places. Policy commands
// are acknowledged with a solicited response; statistics flow once per
// simulated second.

namespace qflow::proto {

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Hello {
    bool operator==(const Hello&) const = default;
};

struct PolicyCmd {
    long dp_index = 0;
    std::vector<std::pair<int, int>> assignments;  // (client_id, queue_id)
    bool operator==(const PolicyCmd&) const = default;
};

struct SolicitedResp {
    std::uint64_t ack_seq = 0;
    bool ok = true;
    long dp_index = 0;
    bool operator==(const SolicitedResp&) const = default;
};

struct ClientStats {
    int client_id = 0;
    double sim_time = 0.0;
    double buffer = 0.0;
    int stall_count = 0;
    double bitrate = 0.0;
    double qoe = 5.0;
    bool operator==(const ClientStats&) const = default;
};

struct QueueStats {
    int queue_id = 0;
    double sim_time = 0.0;
    double served_mbits = 0.0;
    double backlog_mbits = 0.0;
    double drops = 0.0;
    bool operator==(const QueueStats&) const = default;
};

struct ErrorMsg {
    std::uint64_t offending_seq = 0;
    std::string reason;
    bool operator==(const ErrorMsg&) const = default;
};

using Payload = std::variant<Hello, PolicyCmd, SolicitedResp, ClientStats, QueueStats, ErrorMsg>;

struct Envelope {
    int version = 1;
    std::uint64_t seq = 0;
    Payload payload;
    bool operator==(const Envelope&) const = default;
};

std::string encode_message(const Envelope& env);
Envelope decode_message(std::string_view line);  // throws ProtocolError

// ---- transport ----

struct RecvResult {
    enum class Kind { Line, Timeout, Eof } kind = Kind::Eof;
    std::string line;
};

class Transport {
  public:
    virtual ~Transport() = default;
    virtual void send_line(const std::string& line) = 0;
    virtual RecvResult recv_line(double timeout_s) = 0;
    virtual void close() = 0;
};

// in-process duplex channel; make_pipe_pair() returns the two endpoints
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe_pair();

// loopback TCP; server blocks in listen_tcp until a client connects
std::unique_ptr<Transport> listen_tcp(int port);
std::unique_ptr<Transport> connect_tcp(const std::string& host, int port);

// ---- lockstep loops ----

struct ServeConfig {
    long dps = 100;
    double cmd_timeout_s = 30.0;  // missing command: repeat previous assignment
};

using DpSink = std::function<void(const sim::DpResult&)>;

// Runs the environment side: emits stats, applies one POLICY_CMD per DP.
void serve_environment(sim::Simulation& env, Transport& t, const ServeConfig& cfg,
                       const DpSink& sink = {});

// Controller-side view assembled from the latest statistics round.
struct ControllerView {
    long dp_index = 0;
    std::vector<ClientStats> clients;  // ascending client_id
};

using DecideFn = std::function<sim::Action(const ControllerView&)>;

// Maps the policy's Action to queue assignments; bins are known out of band
// via the shared experiment configuration.
struct ControllerConfig {
    long dps = 100;
    std::vector<int> client_bins;  // bin per client id; missing ids -> bin 0
    int n_bins = 1;
    double dp_seconds = 10.0;
    double recv_timeout_s = 30.0;
};

void run_controller(Transport& t, const DecideFn& decide, const ControllerConfig& cfg);

}  // namespace qflow::proto
