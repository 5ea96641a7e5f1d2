#include "safekernel/simulation.hpp"

#include "safekernel/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace safekernel {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Per-run view of one patient model.
struct Track {
    const SafetyModel* model = nullptr;
    const LinearStateSpace* sys_d = nullptr;
    const KernelSequence* kernels = nullptr;
    Vector z;
};

} // namespace

const char* to_string(SafetyMode mode) noexcept {
    switch (mode) {
    case SafetyMode::None: return "none";
    case SafetyMode::Individualized: return "individualized";
    case SafetyMode::ModelInvariant: return "model-invariant";
    case SafetyMode::ModelInvariantFalsified: return "model-invariant-falsified";
    }
    return "unknown";
}

SafetyMode parse_safety_mode(const std::string& name) {
    for (SafetyMode m : {SafetyMode::None, SafetyMode::Individualized, SafetyMode::ModelInvariant,
                         SafetyMode::ModelInvariantFalsified})
        if (name == to_string(m)) return m;
    fail(ErrorCode::ConfigError, "unknown safety mode '" + name + "'");
}

void Scenario::validate() const {
    if (!(dt_s > 0.0)) fail(ErrorCode::ConfigError, "scenario: dt must be positive");
    if (!(horizon_min > 0.0)) fail(ErrorCode::ConfigError, "scenario: horizon must be positive");
    if (duration_min < 0.0) fail(ErrorCode::ConfigError, "scenario: negative duration");
    if (duration_min > 0.0 && duration_min < horizon_min)
        fail(ErrorCode::ConfigError, "scenario: duration shorter than the kernel horizon");
    if (!(bp_bound_pct > 0.0 && bp_bound_pct < 100.0))
        fail(ErrorCode::ConfigError, "scenario: BP bound must lie in (0, 100)");
    if (!(pk_max > 0.0) || !(u_max > 0.0)) fail(ErrorCode::ConfigError, "scenario: constraint bounds must be positive");
    if (noise_bound < 0.0) fail(ErrorCode::ConfigError, "scenario: negative noise bound");
    falsification.validate();
    if (noise_bound > falsification.gamma && !allow_unsound_noise)
        fail(ErrorCode::ConfigError, "scenario: noise bound exceeds the falsification threshold");
    pid.validate();
    if (band_width && !(*band_width > 0.0)) fail(ErrorCode::ConfigError, "scenario: band width must be positive");
    for (double u : initial_infusion)
        if (!(u >= 0.0 && u <= u_max)) fail(ErrorCode::ConfigError, "scenario: initial infusion outside [0, u_max]");
}

int Scenario::samples() const { return static_cast<int>(std::llround(duration_min * 60.0 / dt_s)); }

KernelConfig Scenario::kernel_config() const {
    KernelConfig cfg;
    cfg.horizon_min = horizon_min;
    cfg.dt_s = dt_s;
    cfg.constraint_set = pkpd_constraint_set(pk_max);
    cfg.input_set = pkpd_input_set(u_max);
    cfg.facet_cap = facet_cap;
    return cfg;
}

SimulationContext::SimulationContext(const Scenario& scenario, const Cohort& cohort) : cohort_(cohort) {
    build(scenario);
    if (scenario.mode != SafetyMode::None) kernels_ = compute_kernels(models_, scenario.kernel_config());
    cache_ = std::make_unique<ActiveKernelCache>(kernels_);
}

SimulationContext::SimulationContext(const Scenario& scenario, const Cohort& cohort, KernelResult kernels)
    : cohort_(cohort), kernels_(std::move(kernels)) {
    build(scenario);
    for (const auto& m : models_)
        if (!kernels_.per_model.count(m.id)) fail(ErrorCode::MissingKernel, "no stored kernel for model " + m.id);
    cache_ = std::make_unique<ActiveKernelCache>(kernels_);
}

void SimulationContext::build(const Scenario& scenario) {
    scenario.validate();
    cohort_.validate();
    for (const auto& p : cohort_.models) {
        models_.push_back(safety_model(p, scenario.bp_bound_pct));
        sys_d_.push_back(discretize_zoh(models_.back().sys, scenario.dt_s / 60.0));
    }
}

std::size_t SimulationContext::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < models_.size(); ++i)
        if (models_[i].id == id) return i;
    fail(ErrorCode::MissingKernel, "model " + id + " is not part of the cohort");
}

std::shared_ptr<const Polytope> SimulationContext::active(const std::vector<std::string>& ids) const {
    return cache_->get(ids);
}

Metrics compute_metrics(const SimTrace& trace, double dt_s) {
    Metrics m;
    if (trace.rows.empty()) return m;
    const int needed = static_cast<int>(std::ceil(30.0 / dt_s - 1e-9)) + 1;
    int run_length = 0;
    std::size_t in_band = 0;
    for (std::size_t k = 0; k < trace.rows.size(); ++k) {
        const TraceRow& r = trace.rows[k];
        m.max_bp_drop_pct = std::max(m.max_bp_drop_pct, r.bp_drop_pct);
        for (double p : r.pk) m.max_pk = std::max(m.max_pk, p);
        if (r.doh_true >= 40.0 && r.doh_true <= 60.0) ++in_band;
        m.breaches += r.breach ? 1 : 0;
        run_length = r.doh_true < 60.0 ? run_length + 1 : 0;
        if (!m.induction_completed && run_length >= needed) {
            m.induction_completed = true;
            m.induction_time_min = trace.rows[k + 1 - static_cast<std::size_t>(needed)].t_s / 60.0;
        }
        if (m.falsified_count_timeline.empty() || m.falsified_count_timeline.back().second != r.unfalsified)
            m.falsified_count_timeline.emplace_back(r.t_s, r.unfalsified);
    }
    m.time_in_doh_40_60 = static_cast<double>(in_band) / static_cast<double>(trace.rows.size());
    const double t20 = std::min(20.0 * 60.0, trace.rows.back().t_s);
    for (const auto& r : trace.rows)
        if (r.t_s <= t20 + 1e-9) m.doh_at_20min = r.doh_true;
    return m;
}

RunResult run(const Scenario& scenario, const PatientModel& true_patient, const SimulationContext& ctx) {
    scenario.validate();
    const bool safety = scenario.mode != SafetyMode::None;
    if (safety && !ctx.has_kernels()) fail(ErrorCode::ConfigError, "run: context was built without kernels");
    const double dt_min = scenario.dt_s / 60.0;

    // True patient: BP cascade in safety coordinates plus its DoH cascade.
    const SafetyModel truth = safety_model(true_patient, scenario.bp_bound_pct);
    const LinearStateSpace truth_d = discretize_zoh(truth.sys, dt_min);
    const LinearStateSpace doh_d = discretize_zoh(cascade(true_patient.pk, true_patient.doh_pd), dt_min);

    std::vector<Track> tracks;
    for (std::size_t i = 0; i < ctx.models().size(); ++i) {
        Track t;
        t.model = &ctx.models()[i];
        t.sys_d = &ctx.discrete()[i];
        if (safety) t.kernels = &ctx.kernels().per_model.at(t.model->id);
        t.z = Vector::Zero(4);
        tracks.push_back(std::move(t));
    }

    KernelSequence own_kernels;
    Track own{&truth, &truth_d, nullptr, Vector::Zero(4)};
    std::shared_ptr<const Polytope> individual;
    if (scenario.mode == SafetyMode::Individualized) {
        const auto it = ctx.kernels().per_model.find(true_patient.id);
        if (it != ctx.kernels().per_model.end()) {
            own.kernels = &it->second;
        } else {
            own_kernels = viability_kernel(truth.sys, scenario.kernel_config());
            own.kernels = &own_kernels;
        }
        if (own.kernels->final_kernel().is_empty())
            fail(ErrorCode::EmptyKernel, "individual kernel of " + true_patient.id + " is empty");
        individual = std::make_shared<const Polytope>(own.kernels->final_kernel());
    }

    Vector x_true = Vector::Zero(4);
    Vector x_doh = Vector::Zero(4);
    for (double u : scenario.initial_infusion) {
        x_true = truth_d.a * x_true + truth_d.b * u;
        x_doh = doh_d.a * x_doh + doh_d.b * u;
        for (auto& t : tracks) t.z = t.sys_d->a * t.z + t.sys_d->b * u;
    }

    std::vector<std::string> ids;
    for (const auto& t : tracks) ids.push_back(t.model->id);
    ModelSetState set = ModelSetState::all(ids);

    std::mt19937_64 rng(stream_seed(scenario.seed, true_patient.id));
    std::uniform_real_distribution<double> noise(-scenario.noise_bound, scenario.noise_bound);
    MedianOf3 filter;
    PidState pid;
    const Polytope input_set = pkpd_input_set(scenario.u_max);
    ProjectionWarmStart warm;

    std::shared_ptr<const Polytope> active;
    std::vector<std::string> active_ids;
    SafetyBlendConfig blend_cfg;
    blend_cfg.mode = scenario.blend_mode;
    auto refresh_active = [&] {
        if (!safety) return;
        std::vector<std::string> want = scenario.mode == SafetyMode::Individualized ? std::vector<std::string>{}
                                        : scenario.mode == SafetyMode::ModelInvariant ? ids
                                                                                      : set.unfalsified;
        if (active && want == active_ids) return;
        active_ids = want;
        active = scenario.mode == SafetyMode::Individualized ? individual : ctx.active(active_ids);
        if (active->is_empty()) fail(ErrorCode::EmptyKernel, "active kernel is empty");
        blend_cfg.band_width = scenario.band_width ? *scenario.band_width : default_band_width(*active);
        warm = {};
    };
    refresh_active();

    RunResult out;
    out.trace.model_ids = ids;
    const int n = scenario.duration_min > 0.0 ? scenario.samples() + 1 : 0;
    out.trace.rows.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        TraceRow row;
        row.t_s = k * scenario.dt_s;
        row.bp_drop_pct = truth.predicted_drop(x_true);
        row.bp_true = bp_from_effect(row.bp_drop_pct, truth.bp_baseline);
        double measured = row.bp_drop_pct + noise(rng);
        if (scenario.median_filter) measured = filter.push(measured);
        row.bp_measured = bp_from_effect(measured, truth.bp_baseline);
        row.doh_true = doh_index((doh_d.c * x_doh)(0), true_patient.doh_pd);
        for (int i = 0; i < 3; ++i) row.pk[i] = x_true(i);
        for (const auto& t : tracks) row.ce.push_back(t.z(3) * t.model->ce_max);

        if (scenario.mode == SafetyMode::ModelInvariantFalsified) {
            std::map<std::string, double> res;
            for (const auto& t : tracks)
                if (set.is_unfalsified(t.model->id))
                    res[t.model->id] = residual(measured, t.model->predicted_drop(t.z));
            set = update(set, row.t_s, res, scenario.falsification);
            refresh_active();
        }
        row.unfalsified = static_cast<int>(set.unfalsified.size());

        row.u_pr = pid_step(pid, scenario.pid, row.doh_true, scenario.dt_s);
        if (!safety) {
            row.u_applied = row.u_pr;
            row.u_sp = kNaN;
        } else {
            std::vector<GuardedModel> guarded;
            if (scenario.mode == SafetyMode::Individualized) {
                guarded.push_back({own.model, own.sys_d, &x_true, own.kernels});
            } else {
                for (const auto& t : tracks)
                    if (std::binary_search(active_ids.begin(), active_ids.end(), t.model->id))
                        guarded.push_back({t.model, t.sys_d, &t.z, t.kernels});
            }
            const SafetyDecision d = safe_input(row.u_pr, guarded, *active, input_set, blend_cfg, &warm);
            row.u_applied = d.u_applied;
            row.u_sp = d.u_sp;
            row.zeta = d.zeta;
            row.worst_model = d.worst_model;
            row.guard_level = d.guard_level;
            row.breach = d.breach;
        }
        pid_track(pid, scenario.pid, row.u_applied, scenario.dt_s);

        x_true = truth_d.a * x_true + truth_d.b * row.u_applied;
        x_doh = doh_d.a * x_doh + doh_d.b * row.u_applied;
        for (auto& t : tracks) t.z = t.sys_d->a * t.z + t.sys_d->b * row.u_applied;
        out.trace.rows.push_back(std::move(row));
    }
    out.trace.events = set.events;
    out.metrics = compute_metrics(out.trace, scenario.dt_s);
    out.metrics.patient_id = true_patient.id;
    return out;
}

Quartiles quartiles(std::vector<double> v) {
    Quartiles q;
    if (v.empty()) return q;
    std::sort(v.begin(), v.end());
    auto at = [&](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    q.q1 = at(0.25);
    q.median = at(0.5);
    q.q3 = at(0.75);
    return q;
}

std::uint64_t stream_seed(std::uint64_t seed, const std::string& id) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : id) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

CohortRun run_patients(const Scenario& scenario, const SimulationContext& ctx, const std::vector<std::string>& ids,
                       bool keep_traces) {
    std::vector<const PatientModel*> patients;
    for (const auto& id : ids) patients.push_back(&ctx.cohort().find(id));
    CohortRun out;
    out.runs.resize(patients.size());
    parallel_for(patients.size(), [&](std::size_t i) {
        out.runs[i] = run(scenario, *patients[i], ctx);
        if (!keep_traces) out.runs[i].trace.rows.clear();
    });
    std::vector<double> doh, drop, ind;
    std::size_t completed = 0;
    for (const auto& r : out.runs) {
        if (r.metrics.doh_at_20min) doh.push_back(*r.metrics.doh_at_20min);
        drop.push_back(r.metrics.max_bp_drop_pct);
        if (r.metrics.induction_time_min) ind.push_back(*r.metrics.induction_time_min);
        completed += r.metrics.induction_completed ? 1 : 0;
    }
    if (!out.runs.empty())
        out.summary.induction_fraction = static_cast<double>(completed) / static_cast<double>(out.runs.size());
    out.summary.doh_at_20min = quartiles(doh);
    out.summary.max_bp_drop_pct = quartiles(drop);
    out.summary.induction_time_min = quartiles(ind);
    return out;
}

CohortRun run_cohort(const Scenario& scenario, const SimulationContext& ctx, bool keep_traces) {
    std::vector<std::string> ids;
    for (const auto& m : ctx.cohort().models) ids.push_back(m.id);
    return run_patients(scenario, ctx, ids, keep_traces);
}

} // namespace safekernel
