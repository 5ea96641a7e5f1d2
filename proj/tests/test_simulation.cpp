#include "doctest.h"

#include "safekernel/io.hpp"
#include "safekernel/simulation.hpp"

#include <cmath>
#include <random>
#include <set>

using namespace safekernel;

namespace {

SimTrace doh_trace(const std::vector<double>& doh, double dt) {
    SimTrace t;
    for (std::size_t k = 0; k < doh.size(); ++k) {
        TraceRow r;
        r.t_s = dt * static_cast<double>(k);
        r.doh_true = doh[k];
        t.rows.push_back(r);
    }
    return t;
}

// Small cohort shared by the closed-loop tests; kernels are computed once.
struct Fixture {
    Scenario scenario;
    Cohort cohort = synthesize_cohort(77, 4);
    std::unique_ptr<SimulationContext> ctx;
    Fixture() { ctx = std::make_unique<SimulationContext>(scenario, cohort); }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

} // namespace

TEST_CASE("induction needs thirty seconds below sixty") {
    Metrics m = compute_metrics(doh_trace({90, 70, 59, 58, 57, 56, 55, 54, 70, 50, 50}, 5.0), 5.0);
    CHECK_FALSE(m.induction_completed);
    m = compute_metrics(doh_trace({90, 70, 59, 58, 57, 56, 55, 54, 53, 70}, 5.0), 5.0);
    CHECK(m.induction_completed);
    REQUIRE(m.induction_time_min.has_value());
    CHECK(*m.induction_time_min == doctest::Approx(10.0 / 60.0));
    CHECK(m.time_in_doh_40_60 == doctest::Approx(7.0 / 10.0));
    CHECK(m.doh_at_20min == 70.0);

    const Metrics empty = compute_metrics(SimTrace{}, 5.0);
    CHECK_FALSE(empty.induction_completed);
    CHECK_FALSE(empty.doh_at_20min.has_value());
}

TEST_CASE("quartiles and seed streams") {
    const Quartiles q = quartiles({4.0, 1.0, 3.0, 2.0, 5.0});
    CHECK(q.q1 == 2.0);
    CHECK(q.median == 3.0);
    CHECK(q.q3 == 4.0);
    CHECK(quartiles({1.0, 2.0}).median == 1.5);
    std::set<std::uint64_t> seeds;
    for (const char* id : {"p01", "p02", "p03"})
        for (std::uint64_t s : {1u, 2u}) seeds.insert(stream_seed(s, id));
    CHECK(seeds.size() == 6);
    CHECK(stream_seed(5, "p01") == stream_seed(5, "p01"));
}

TEST_CASE("scenario validation") {
    Scenario s;
    CHECK_NOTHROW(s.validate());
    CHECK(s.samples() == 240);
    s.noise_bound = 20.0;
    CHECK_THROWS_AS(s.validate(), Error);
    s.allow_unsound_noise = true;
    CHECK_NOTHROW(s.validate());
    s = Scenario{};
    s.duration_min = 5.0;
    CHECK_THROWS_AS(s.validate(), Error);
    s.duration_min = 0.0;
    CHECK_NOTHROW(s.validate());
    CHECK_THROWS_AS(parse_safety_mode("strict"), Error);
    CHECK(parse_safety_mode("model-invariant") == SafetyMode::ModelInvariant);
}

TEST_CASE("zero duration produces an empty run") {
    Scenario s;
    s.mode = SafetyMode::None;
    s.duration_min = 0.0;
    const Cohort c = synthesize_cohort(1, 2);
    const SimulationContext ctx(s, c);
    const RunResult r = run(s, c.models[0], ctx);
    CHECK(r.trace.rows.empty());
    CHECK_FALSE(r.metrics.induction_completed);
    CHECK_FALSE(r.metrics.doh_at_20min.has_value());
}

TEST_CASE("unconstrained loop completes induction and leaves safety columns empty") {
    Scenario s;
    s.mode = SafetyMode::None;
    const Cohort c = synthesize_cohort(77, 4);
    const SimulationContext ctx(s, c);
    for (const auto& p : c.models) {
        const RunResult r = run(s, p, ctx);
        CHECK(r.metrics.induction_completed);
        CHECK(std::abs(*r.metrics.doh_at_20min - 50.0) < 2.0);
        CHECK(r.trace.events.empty());
        for (const auto& row : r.trace.rows) {
            CHECK(std::isnan(row.u_sp));
            CHECK(row.u_applied == row.u_pr);
        }
    }
    const std::string csv = io::trace_csv(run(s, c.models[0], ctx).trace);
    CHECK(csv.find("\n0,50,,50,,") != std::string::npos);
}

TEST_CASE("identical scenarios give identical traces") {
    Fixture& f = fixture();
    const RunResult a = run(f.scenario, f.cohort.models[1], *f.ctx);
    const RunResult b = run(f.scenario, f.cohort.models[1], *f.ctx);
    CHECK(io::trace_csv(a.trace) == io::trace_csv(b.trace));
    Scenario other = f.scenario;
    other.seed = 2;
    CHECK(io::trace_csv(run(other, f.cohort.models[1], *f.ctx).trace) != io::trace_csv(a.trace));
}

TEST_CASE("every safety mode respects the bound and the concentration box") {
    Fixture& f = fixture();
    for (SafetyMode mode : {SafetyMode::Individualized, SafetyMode::ModelInvariant,
                            SafetyMode::ModelInvariantFalsified}) {
        Scenario s = f.scenario;
        s.mode = mode;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            s.seed = seed;
            const CohortRun cr = run_cohort(s, *f.ctx);
            for (const auto& r : cr.runs) {
                INFO(to_string(mode) << " " << r.metrics.patient_id << " seed " << seed);
                CHECK(r.metrics.max_bp_drop_pct <= s.bp_bound_pct + 0.5);
                CHECK(r.metrics.max_pk <= 10.0 + 1e-6);
                CHECK(r.metrics.breaches == 0);
                for (const auto& row : r.trace.rows) {
                    CHECK(row.u_applied >= 0.0);
                    CHECK(row.u_applied <= 600.0);
                }
            }
        }
    }
}

TEST_CASE("falsification keeps the true model and only shrinks the set") {
    Fixture& f = fixture();
    Scenario s = f.scenario;
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        s.seed = seed;
        for (const auto& p : f.cohort.models) {
            const RunResult r = run(s, p, *f.ctx);
            for (const auto& e : r.trace.events) CHECK(e.model_id != p.id);
            for (std::size_t k = 1; k < r.trace.rows.size(); ++k)
                CHECK(r.trace.rows[k].unfalsified <= r.trace.rows[k - 1].unfalsified);
            CHECK(r.trace.rows.back().unfalsified >= 1);
        }
    }
}

TEST_CASE("no excitation falsifies nothing") {
    Fixture& f = fixture();
    Scenario s = f.scenario;
    s.pid.setpoint = 100.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        s.seed = seed;
        for (const auto& p : f.cohort.models) {
            const RunResult r = run(s, p, *f.ctx);
            CHECK(r.trace.events.empty());
            for (const auto& row : r.trace.rows) CHECK(row.u_applied == 0.0);
        }
    }
}

TEST_CASE("falsifying the outlier enlarges the active kernel") {
    Fixture& f = fixture();
    const KernelResult& kr = f.ctx->kernels();
    std::vector<std::string> all, normals;
    for (const auto& m : f.cohort.models) all.push_back(m.id);
    normals.assign(all.begin(), all.end() - 1);
    const Polytope full = intersect_final(kr.per_model, all);
    const Polytope relaxed = intersect_final(kr.per_model, normals);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> pk(0.0, 10.0), ce(0.0, 1.0);
    int gained = 0, lost = 0;
    for (int i = 0; i < 20000; ++i) {
        Vector z(4);
        z << pk(rng), pk(rng), pk(rng), ce(rng);
        const bool in_full = contains(full, z), in_relaxed = contains(relaxed, z);
        gained += in_relaxed && !in_full;
        lost += in_full && !in_relaxed;
    }
    CHECK(gained > 0);
    CHECK(lost == 0);
}

TEST_CASE("model invariant safety is the most conservative mode") {
    Fixture& f = fixture();
    std::map<SafetyMode, CohortSummary> summary;
    for (SafetyMode mode : {SafetyMode::Individualized, SafetyMode::ModelInvariant,
                            SafetyMode::ModelInvariantFalsified}) {
        Scenario s = f.scenario;
        s.mode = mode;
        summary[mode] = run_cohort(s, *f.ctx, false).summary;
    }
    CHECK(summary[SafetyMode::Individualized].induction_fraction == 1.0);
    CHECK(summary[SafetyMode::ModelInvariantFalsified].induction_fraction == 1.0);
    CHECK(summary[SafetyMode::ModelInvariant].induction_fraction < 1.0);
    CHECK(summary[SafetyMode::ModelInvariant].doh_at_20min.median >
          summary[SafetyMode::ModelInvariantFalsified].doh_at_20min.median + 10.0);
}

TEST_CASE("induction outcome does not depend on the noise seed") {
    Fixture& f = fixture();
    for (SafetyMode mode : {SafetyMode::Individualized, SafetyMode::ModelInvariantFalsified}) {
        Scenario s = f.scenario;
        s.mode = mode;
        std::vector<bool> first;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            s.seed = seed;
            const CohortRun cr = run_cohort(s, *f.ctx, false);
            std::vector<bool> flags;
            for (const auto& r : cr.runs) flags.push_back(r.metrics.induction_completed);
            if (first.empty())
                first = flags;
            else
                CHECK(flags == first);
        }
    }
}

TEST_CASE("precomputed kernels must cover the cohort") {
    Fixture& f = fixture();
    KernelResult partial = f.ctx->kernels();
    partial.per_model.erase(partial.per_model.begin());
    CHECK_THROWS_AS(SimulationContext(f.scenario, f.cohort, partial), Error);
}
