#pragma once

namespace safekernel {

// Parallel PID on e = setpoint - y. Time in seconds: ki is per second, kd in
// seconds. Negative gains give a reverse-acting loop (more drug lowers DoH).
struct PidParams {
    double kp = -1.0;
    double ki = -0.008;
    double kd = 0.0;
    double tt_s = 30.0;
    double u_min = 0.0;
    double u_max = 600.0;
    double setpoint = 50.0;
    bool anti_windup = true;

    void validate() const;
};

struct PidState {
    double integral = 0.0;
    double d_filtered = 0.0;
    double last_y = 0.0;
    bool primed = false;
    // Output of the last step before and after saturation.
    double u_raw = 0.0;
    double u = 0.0;
};

// One controller update. The derivative acts on the measurement through a
// first-order filter with time constant 10 dt; the integrator is corrected by
// (u_sat - u_raw) / tt when anti-windup is on.
double pid_step(PidState& state, const PidParams& p, double y, double dt_s);

// Back-calculation toward an input that differs from the controller's own
// saturated output (e.g. after a downstream safety override).
void pid_track(PidState& state, const PidParams& p, double u_applied, double dt_s);

} // namespace safekernel
