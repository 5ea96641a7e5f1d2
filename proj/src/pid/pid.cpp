#include "safekernel/pid.hpp"

#include "safekernel/error.hpp"

#include <algorithm>
#include <cmath>

namespace safekernel {

void PidParams::validate() const {
    if (!(u_min < u_max)) fail(ErrorCode::ConfigError, "pid: u_min must be below u_max");
    if (!(tt_s > 0.0)) fail(ErrorCode::ConfigError, "pid: tracking time constant must be positive");
    if (!std::isfinite(kp) || !std::isfinite(ki) || !std::isfinite(kd) || !std::isfinite(setpoint))
        fail(ErrorCode::ConfigError, "pid: gains must be finite");
}

double pid_step(PidState& s, const PidParams& p, double y, double dt_s) {
    if (!(dt_s > 0.0)) fail(ErrorCode::InvalidArgument, "pid_step: dt must be positive");
    const double e = p.setpoint - y;
    if (!s.primed) {
        s.last_y = y;
        s.primed = true;
    }
    const double tf = 10.0 * dt_s;
    const double raw_rate = (y - s.last_y) / dt_s;
    s.d_filtered = (tf * s.d_filtered + dt_s * raw_rate) / (tf + dt_s);
    s.last_y = y;

    s.u_raw = p.kp * e + s.integral - p.kd * s.d_filtered;
    s.u = std::clamp(s.u_raw, p.u_min, p.u_max);
    s.integral += p.ki * e * dt_s;
    if (p.anti_windup) s.integral += dt_s / p.tt_s * (s.u - s.u_raw);
    return s.u;
}

void pid_track(PidState& s, const PidParams& p, double u_applied, double dt_s) {
    if (p.anti_windup) s.integral += dt_s / p.tt_s * (u_applied - s.u);
}

} // namespace safekernel
