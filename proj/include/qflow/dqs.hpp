#pragma once

#include <stdexcept>

// Stall-event-driven QoE model: ramp decay while buffering or stalled,
// raised-cosine recovery while playing. Repeated stalls decay faster and
// recover slower. QoE lives in [q_min, q_max].

namespace qflow::dqs {

enum class Phase { InitialBuffering, Playing, Stalled };

// Phase the playback is in for the duration of a step; mirrors Phase.
using Event = Phase;

struct Params {
    double q_max = 5.0;
    double q_min = 1.0;
    double r_stall = 0.15;        // QoE/s base decay during a playback stall
    double kappa = 0.5;           // per-stall decay growth
    double r_init = 0.05;         // QoE/s decay during initial buffering
    double t_recover0 = 30.0;     // s, base recovery duration
    double recover_growth = 1.0;  // per-stall recovery-time growth

    void validate() const {
        if (!(q_min < q_max)) throw std::invalid_argument("dqs: q_min must be < q_max");
        if (!(r_stall > 0.0) || !(r_init > 0.0) || !(t_recover0 > 0.0))
            throw std::invalid_argument("dqs: rates and durations must be positive");
        if (!(kappa >= 0.0) || !(recover_growth >= 0.0))
            throw std::invalid_argument("dqs: growth factors must be nonnegative");
        if (!(r_init < r_stall))
            throw std::invalid_argument("dqs: r_init must be < r_stall");
    }
};

struct Tracker {
    Params params;
    Phase phase = Phase::InitialBuffering;
    double qoe = 5.0;
    int stall_count = 0;
    double recovery_anchor = 5.0;  // QoE at the start of the current Playing phase
    double phase_elapsed = 0.0;
};

Tracker init(const Params& params);
Tracker step(Tracker t, Event event, double dt);
Tracker reset_for_new_video(const Tracker& t);

}  // namespace qflow::dqs
