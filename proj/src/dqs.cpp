#include "qflow/dqs.hpp"

#include <algorithm>
#include <cmath>

namespace qflow::dqs {

Tracker init(const Params& params) {
    params.validate();
    Tracker t;
    t.params = params;
    t.phase = Phase::InitialBuffering;
    t.qoe = params.q_max;
    t.stall_count = 0;
    t.recovery_anchor = params.q_max;
    t.phase_elapsed = 0.0;
    return t;
}

Tracker step(Tracker t, Event event, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("dqs: dt must be positive");
    const Params& p = t.params;

    if (event != t.phase) {
        if (event == Phase::Stalled && t.phase == Phase::Playing) ++t.stall_count;
        if (event == Phase::Playing) t.recovery_anchor = t.qoe;
        t.phase = event;
        t.phase_elapsed = 0.0;
    }

    switch (t.phase) {
        case Phase::Stalled: {
            const int k = std::max(1, t.stall_count);  // counting this stall
            const double rate = p.r_stall * (1.0 + p.kappa * (k - 1));
            t.qoe = std::max(p.q_min, t.qoe - rate * dt);
            break;
        }
        case Phase::InitialBuffering:
            t.qoe = std::max(p.q_min, t.qoe - p.r_init * dt);
            break;
        case Phase::Playing: {
            const double t_k = p.t_recover0 * (1.0 + p.recover_growth * t.stall_count);
            const double tau = std::min(t.phase_elapsed + dt, t_k);
            const double rise = 0.5 * (1.0 - std::cos(M_PI * tau / t_k));
            t.qoe = t.recovery_anchor + (p.q_max - t.recovery_anchor) * rise;
            break;
        }
    }
    t.qoe = std::clamp(t.qoe, p.q_min, p.q_max);
    t.phase_elapsed += dt;
    return t;
}

Tracker reset_for_new_video(const Tracker& t) { return init(t.params); }

}  // namespace qflow::dqs
