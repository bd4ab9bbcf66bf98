#include "qflow/protocol.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <map>
#include <sstream>

namespace qflow::proto {

namespace {

const char* type_name(const Payload& p) {
    switch (p.index()) {
        case 0: return "HELLO";
        case 1: return "POLICY_CMD";
        case 2: return "SOLICITED_RESP";
        case 3: return "CLIENT_STATS";
        case 4: return "QUEUE_STATS";
        case 5: return "ERROR";
    }
    return "?";
}

void append_real(std::string& out, double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    out += buf;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == '\t') {
            fields.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return fields;
}

long parse_int(std::string_view s, const char* what) {
    long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ProtocolError(std::string("bad integer field: ") + what);
    return v;
}

std::uint64_t parse_u64(std::string_view s, const char* what) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ProtocolError(std::string("bad unsigned field: ") + what);
    return v;
}

double parse_real(std::string_view s, const char* what) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ProtocolError(std::string("bad real field: ") + what);
    return v;
}

void require_fields(const std::vector<std::string_view>& f, std::size_t n, const char* type) {
    if (f.size() != n)
        throw ProtocolError(std::string("wrong field count for ") + type + ": got " +
                            std::to_string(f.size()) + ", want " + std::to_string(n));
}

}  // namespace

std::string encode_message(const Envelope& env) {
    std::string out;
    out += std::to_string(env.version);
    out += '\t';
    out += std::to_string(env.seq);
    out += '\t';
    out += type_name(env.payload);
    switch (env.payload.index()) {
        case 0:
            break;
        case 1: {
            const auto& m = std::get<PolicyCmd>(env.payload);
            out += '\t';
            out += std::to_string(m.dp_index);
            out += '\t';
            out += std::to_string(m.assignments.size());
            for (const auto& [client, queue] : m.assignments) {
                out += '\t';
                out += std::to_string(client);
                out += '\t';
                out += std::to_string(queue);
            }
            break;
        }
        case 2: {
            const auto& m = std::get<SolicitedResp>(env.payload);
            out += '\t';
            out += std::to_string(m.ack_seq);
            out += '\t';
            out += m.ok ? "OK" : "ERROR";
            out += '\t';
            out += std::to_string(m.dp_index);
            break;
        }
        case 3: {
            const auto& m = std::get<ClientStats>(env.payload);
            out += '\t';
            out += std::to_string(m.client_id);
            out += '\t';
            append_real(out, m.sim_time);
            out += '\t';
            append_real(out, m.buffer);
            out += '\t';
            out += std::to_string(m.stall_count);
            out += '\t';
            append_real(out, m.bitrate);
            out += '\t';
            append_real(out, m.qoe);
            break;
        }
        case 4: {
            const auto& m = std::get<QueueStats>(env.payload);
            out += '\t';
            out += std::to_string(m.queue_id);
            out += '\t';
            append_real(out, m.sim_time);
            out += '\t';
            append_real(out, m.served_mbits);
            out += '\t';
            append_real(out, m.backlog_mbits);
            out += '\t';
            append_real(out, m.drops);
            break;
        }
        case 5: {
            const auto& m = std::get<ErrorMsg>(env.payload);
            out += '\t';
            out += std::to_string(m.offending_seq);
            out += '\t';
            out += m.reason;
            break;
        }
    }
    out += '\n';
    return out;
}

Envelope decode_message(std::string_view line) {
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
    const auto f = split_tabs(line);
    if (f.size() < 3) throw ProtocolError("truncated message");
    Envelope env;
    env.version = static_cast<int>(parse_int(f[0], "version"));
    if (env.version != 1) throw ProtocolError("unsupported version");
    env.seq = parse_u64(f[1], "seq");
    const std::string_view type = f[2];
    if (type == "HELLO") {
        require_fields(f, 3, "HELLO");
        env.payload = Hello{};
    } else if (type == "POLICY_CMD") {
        if (f.size() < 5) throw ProtocolError("truncated POLICY_CMD");
        PolicyCmd m;
        m.dp_index = parse_int(f[3], "dp_index");
        const long n = parse_int(f[4], "assignment count");
        if (n < 0 || f.size() != 5 + 2 * static_cast<std::size_t>(n))
            throw ProtocolError("wrong field count for POLICY_CMD");
        for (long i = 0; i < n; ++i) {
            const int client = static_cast<int>(parse_int(f[5 + 2 * static_cast<std::size_t>(i)], "client"));
            const int queue = static_cast<int>(parse_int(f[6 + 2 * static_cast<std::size_t>(i)], "queue"));
            m.assignments.emplace_back(client, queue);
        }
        env.payload = std::move(m);
    } else if (type == "SOLICITED_RESP") {
        require_fields(f, 6, "SOLICITED_RESP");
        SolicitedResp m;
        m.ack_seq = parse_u64(f[3], "ack_seq");
        if (f[4] == "OK")
            m.ok = true;
        else if (f[4] == "ERROR")
            m.ok = false;
        else
            throw ProtocolError("bad status field");
        m.dp_index = parse_int(f[5], "dp_index");
        env.payload = m;
    } else if (type == "CLIENT_STATS") {
        require_fields(f, 9, "CLIENT_STATS");
        ClientStats m;
        m.client_id = static_cast<int>(parse_int(f[3], "client_id"));
        m.sim_time = parse_real(f[4], "sim_time");
        m.buffer = parse_real(f[5], "buffer");
        m.stall_count = static_cast<int>(parse_int(f[6], "stall_count"));
        m.bitrate = parse_real(f[7], "bitrate");
        m.qoe = parse_real(f[8], "qoe");
        env.payload = m;
    } else if (type == "QUEUE_STATS") {
        require_fields(f, 8, "QUEUE_STATS");
        QueueStats m;
        m.queue_id = static_cast<int>(parse_int(f[3], "queue_id"));
        m.sim_time = parse_real(f[4], "sim_time");
        m.served_mbits = parse_real(f[5], "served_mbits");
        m.backlog_mbits = parse_real(f[6], "backlog_mbits");
        m.drops = parse_real(f[7], "drops");
        env.payload = m;
    } else if (type == "ERROR") {
        require_fields(f, 5, "ERROR");
        ErrorMsg m;
        m.offending_seq = parse_u64(f[3], "offending_seq");
        m.reason = std::string(f[4]);
        env.payload = std::move(m);
    } else {
        throw ProtocolError("unknown msg_type: " + std::string(type));
    }
    return env;
}

// ---------------------------------------------------------------------------
// lockstep loops
// ---------------------------------------------------------------------------

namespace {

class Peer {
  public:
    Peer(Transport& t) : t_(t) {}

    void send(Payload p) {
        Envelope env;
        env.seq = ++send_seq_;
        env.payload = std::move(p);
        t_.send_line(encode_message(env));
    }

    // receives and seq-checks one message; Timeout/Eof reported via kind
    struct Received {
        RecvResult::Kind kind;
        Envelope env;
    };

    Received recv(double timeout_s) {
        RecvResult r = t_.recv_line(timeout_s);
        if (r.kind != RecvResult::Kind::Line) return {r.kind, {}};
        Envelope env = decode_message(r.line);
        if (env.seq <= last_peer_seq_) {
            send(ErrorMsg{env.seq, "out_of_order_seq"});
            throw ProtocolError("out-of-order seq " + std::to_string(env.seq));
        }
        last_peer_seq_ = env.seq;
        return {RecvResult::Kind::Line, std::move(env)};
    }

  private:
    Transport& t_;
    std::uint64_t send_seq_ = 0;
    std::uint64_t last_peer_seq_ = 0;
};

}  // namespace

void serve_environment(sim::Simulation& env, Transport& t, const ServeConfig& cfg,
                       const DpSink& sink) {
    Peer peer(t);

    auto send_snapshot = [&](const sim::SecondSnapshot& snap) {
        for (const auto& c : snap.clients)
            peer.send(ClientStats{c.id, snap.sim_time, c.buffer, c.stall_count, c.bitrate_mbps, c.qoe});
        for (const auto& q : snap.queues)
            peer.send(QueueStats{q.queue_id, snap.sim_time, q.served_mbits_cum, q.backlog_mbits,
                                 q.dropped_mbits_cum});
    };

    // handshake
    auto first = peer.recv(cfg.cmd_timeout_s);
    if (first.kind != RecvResult::Kind::Line || !std::holds_alternative<Hello>(first.env.payload))
        throw ProtocolError("expected HELLO");
    peer.send(Hello{});
    send_snapshot(env.snapshot());  // initial state, sim_time 0

    // previous assignment fallback: the lowest-id clients per bin
    sim::Action prev;
    for (int b = 0; b < static_cast<int>(env.config().bins.size()); ++b) {
        auto ids = env.client_ids_in_bin(b);
        std::sort(ids.begin(), ids.end());
        const int want = std::min<int>(env.config().bins[static_cast<std::size_t>(b)].n_hi,
                                       static_cast<int>(ids.size()));
        ids.resize(static_cast<std::size_t>(
            env.config().bins[static_cast<std::size_t>(b)].single_queue ? 0 : want));
        prev.hi.push_back(std::move(ids));
    }

    for (long dp = 0; dp < cfg.dps; ++dp) {
        auto got = peer.recv(cfg.cmd_timeout_s);
        if (got.kind == RecvResult::Kind::Eof) return;

        sim::Action action = prev;
        bool ok = false;
        std::uint64_t ack = 0;
        if (got.kind == RecvResult::Kind::Line) {
            if (!std::holds_alternative<PolicyCmd>(got.env.payload)) {
                peer.send(ErrorMsg{got.env.seq, "expected_POLICY_CMD"});
                throw ProtocolError("expected POLICY_CMD");
            }
            const auto& cmd = std::get<PolicyCmd>(got.env.payload);
            ack = got.env.seq;
            // rebuild the per-bin hi sets from the queue assignment list
            sim::Action parsed;
            parsed.hi.assign(env.config().bins.size(), {});
            bool valid = cmd.dp_index == dp;
            for (const auto& [client, queue] : cmd.assignments) {
                const int bin = queue / 2;
                if (bin < 0 || bin >= static_cast<int>(parsed.hi.size())) {
                    valid = false;
                    break;
                }
                if (queue % 2 == 0 && !env.config().bins[static_cast<std::size_t>(bin)].single_queue)
                    parsed.hi[static_cast<std::size_t>(bin)].push_back(client);
            }
            if (valid) {
                action = parsed;
                ok = true;
            }
        }

        try {
            const sim::DpResult result = env.step_dp(action);
            if (ok) prev = action;
            peer.send(SolicitedResp{ack, ok, dp});
            if (sink) sink(result);
            for (const auto& snap : result.seconds) send_snapshot(snap);
        } catch (const std::invalid_argument&) {
            // malformed action cardinality: fall back to the previous one
            const sim::DpResult result = env.step_dp(prev);
            peer.send(SolicitedResp{ack, false, dp});
            if (sink) sink(result);
            for (const auto& snap : result.seconds) send_snapshot(snap);
        }
    }
    t.close();
}

void run_controller(Transport& t, const DecideFn& decide, const ControllerConfig& cfg) {
    Peer peer(t);
    peer.send(Hello{});

    const int last_queue = 2 * cfg.n_bins - 1;
    std::map<int, ClientStats> latest;
    bool hello_seen = false;

    // A stats burst ends with the QUEUE_STATS of the highest queue id at the
    // burst's sim time. Clients absent from a burst have left the system.
    auto drain_burst = [&](double end_time) {
        std::map<int, ClientStats> burst;
        for (;;) {
            auto got = peer.recv(cfg.recv_timeout_s);
            if (got.kind == RecvResult::Kind::Eof) return false;
            if (got.kind == RecvResult::Kind::Timeout)
                throw ProtocolError("controller: stats timeout");
            if (std::holds_alternative<Hello>(got.env.payload)) {
                hello_seen = true;
            } else if (std::holds_alternative<ErrorMsg>(got.env.payload)) {
                throw ProtocolError("environment error: " +
                                    std::get<ErrorMsg>(got.env.payload).reason);
            } else if (std::holds_alternative<ClientStats>(got.env.payload)) {
                const auto& s = std::get<ClientStats>(got.env.payload);
                if (s.sim_time >= end_time - 1e-9) burst[s.client_id] = s;
            } else if (std::holds_alternative<QueueStats>(got.env.payload)) {
                const auto& q = std::get<QueueStats>(got.env.payload);
                if (q.queue_id == last_queue && q.sim_time >= end_time - 1e-9) {
                    latest = std::move(burst);
                    return true;
                }
            }
        }
    };

    if (!drain_burst(0.0)) throw ProtocolError("controller: no initial stats");
    if (!hello_seen) throw ProtocolError("controller: missing HELLO");

    for (long dp = 0; dp < cfg.dps; ++dp) {
        ControllerView view;
        view.dp_index = dp;
        for (const auto& [id, s] : latest) view.clients.push_back(s);
        const sim::Action action = decide(view);

        PolicyCmd cmd;
        cmd.dp_index = dp;
        // full assignment list: hi members to even queues, the rest to odd
        for (const auto& [id, s] : latest) {
            const int bin =
                id < static_cast<int>(cfg.client_bins.size()) ? cfg.client_bins[static_cast<std::size_t>(id)] : 0;
            bool in_hi = false;
            if (bin < static_cast<int>(action.hi.size()))
                for (int h : action.hi[static_cast<std::size_t>(bin)])
                    if (h == id) in_hi = true;
            cmd.assignments.emplace_back(id, in_hi ? sim::hi_queue_id(bin) : sim::lo_queue_id(bin));
        }
        peer.send(cmd);

        // ack first, then the DP's per-second stats
        for (;;) {
            auto got = peer.recv(cfg.recv_timeout_s);
            if (got.kind != RecvResult::Kind::Line) throw ProtocolError("controller: lost environment");
            if (std::holds_alternative<SolicitedResp>(got.env.payload)) break;
            if (std::holds_alternative<ErrorMsg>(got.env.payload))
                throw ProtocolError("environment error: " +
                                    std::get<ErrorMsg>(got.env.payload).reason);
        }
        if (!drain_burst((dp + 1) * cfg.dp_seconds)) break;
    }
    t.close();
}

}  // namespace qflow::proto
