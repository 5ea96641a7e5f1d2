#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "safekernel/falsification.hpp"
#include "safekernel/pid.hpp"
#include "safekernel/safety_control.hpp"

namespace safekernel {

enum class SafetyMode { None, Individualized, ModelInvariant, ModelInvariantFalsified };

const char* to_string(SafetyMode mode) noexcept;
SafetyMode parse_safety_mode(const std::string& name);

struct Scenario {
    std::string name = "default";
    SafetyMode mode = SafetyMode::ModelInvariantFalsified;
    double bp_bound_pct = 50.0;
    double duration_min = 20.0;
    double dt_s = 5.0;
    double horizon_min = 10.0;
    std::size_t facet_cap = 512;
    double pk_max = 10.0;
    double u_max = 600.0;
    // Uniform measurement noise on the BP effect, percent.
    double noise_bound = 10.0;
    std::uint64_t seed = 1;
    // Permits noise above the falsification threshold, which voids soundness.
    bool allow_unsound_noise = false;
    bool median_filter = false;
    FalsificationConfig falsification;
    PidParams pid;
    BlendMode blend_mode = BlendMode::ConvexBlend;
    // Unset: 10% of the active kernel's Chebyshev radius.
    std::optional<double> band_width;
    // Infusion (ml/h per sample) applied open loop to every model before t = 0.
    std::vector<double> initial_infusion;

    void validate() const;
    int samples() const;
    KernelConfig kernel_config() const;
};

// Models, discretisations and kernels shared by every run of one scenario over
// one cohort.
class SimulationContext {
public:
    SimulationContext(const Scenario& scenario, const Cohort& cohort);
    // Reuses precomputed kernels (e.g. loaded from an archive).
    SimulationContext(const Scenario& scenario, const Cohort& cohort, KernelResult kernels);

    const Cohort& cohort() const { return cohort_; }
    const std::vector<SafetyModel>& models() const { return models_; }
    const std::vector<LinearStateSpace>& discrete() const { return sys_d_; }
    const KernelResult& kernels() const { return kernels_; }
    bool has_kernels() const { return !kernels_.per_model.empty(); }
    std::size_t index_of(const std::string& id) const;
    std::shared_ptr<const Polytope> active(const std::vector<std::string>& ids) const;

private:
    void build(const Scenario& scenario);

    Cohort cohort_;
    std::vector<SafetyModel> models_;
    std::vector<LinearStateSpace> sys_d_;
    KernelResult kernels_;
    std::unique_ptr<ActiveKernelCache> cache_;

    friend struct SimulationAccess;
};

struct TraceRow {
    double t_s = 0.0;
    double u_pr = 0.0;
    // NaN when no safety layer is active.
    double u_sp = 0.0;
    double u_applied = 0.0;
    double zeta = 0.0;
    double pk[3] = {0.0, 0.0, 0.0};
    std::vector<double> ce;
    double bp_true = 0.0;
    double bp_measured = 0.0;
    double bp_drop_pct = 0.0;
    double doh_true = 0.0;
    std::string worst_model;
    int unfalsified = 0;
    int guard_level = 0;
    bool breach = false;
};

struct SimTrace {
    std::vector<std::string> model_ids;
    std::vector<TraceRow> rows;
    std::vector<FalsificationEvent> events;
};

struct Metrics {
    std::string patient_id;
    bool induction_completed = false;
    std::optional<double> induction_time_min;
    std::optional<double> doh_at_20min;
    double max_bp_drop_pct = 0.0;
    double max_pk = 0.0;
    double time_in_doh_40_60 = 0.0;
    std::size_t breaches = 0;
    // (t_s, unfalsified count) at the start and after every change.
    std::vector<std::pair<double, int>> falsified_count_timeline;
};

struct RunResult {
    SimTrace trace;
    Metrics metrics;
};

Metrics compute_metrics(const SimTrace& trace, double dt_s);

RunResult run(const Scenario& scenario, const PatientModel& true_patient, const SimulationContext& ctx);

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
};

Quartiles quartiles(std::vector<double> values);

struct CohortSummary {
    double induction_fraction = 0.0;
    Quartiles doh_at_20min;
    Quartiles max_bp_drop_pct;
    Quartiles induction_time_min;
};

struct CohortRun {
    std::vector<RunResult> runs;
    CohortSummary summary;
};

// Every cohort member in turn as the true patient, in parallel. Each run draws
// noise from a stream seeded by (scenario seed, patient id).
CohortRun run_cohort(const Scenario& scenario, const SimulationContext& ctx, bool keep_traces = true);
CohortRun run_patients(const Scenario& scenario, const SimulationContext& ctx, const std::vector<std::string>& ids,
                       bool keep_traces = true);

std::uint64_t stream_seed(std::uint64_t seed, const std::string& id);

} // namespace safekernel
