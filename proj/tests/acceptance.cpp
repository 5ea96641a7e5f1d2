// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include "oracles.hpp"
#include "safekernel/io.hpp"
#include "safekernel/parallel.hpp"

#include <boost/numeric/odeint.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

using namespace safekernel;
namespace fs = std::filesystem;

namespace {

constexpr double kBpTolerance = 0.5;
constexpr double kPkTolerance = 1e-6;

fs::path source(const std::string& rel) { return fs::path(SAFEKERNEL_SOURCE_DIR) / rel; }

struct Clock {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

int failures = 0;

void verdict(int n, bool ok, const std::string& detail, double seconds) {
    std::printf("criterion %d: %s  %s  (%.1fs)\n", n, ok ? "PASS" : "FAIL", detail.c_str(), seconds);
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// P subset of Q, by support functions over Q's rows.
bool subset(const Polytope& p, const Polytope& q) {
    if (p.is_empty()) return true;
    if (q.is_empty()) return false;
    for (std::size_t r = 0; r < q.rows(); ++r) {
        const Vector n = q.normals().row(static_cast<Eigen::Index>(r)).transpose();
        if (support(p, n) > q.offsets()(static_cast<Eigen::Index>(r)) + 1e-7 * (1.0 + n.norm())) return false;
    }
    return true;
}

std::vector<const KernelSequence*> all_sequences;

// Cohort kernels, models and discretisations shared by criteria 2 to 6.
struct Shared {
    io::ScenarioFile file;
    std::unique_ptr<SimulationContext> ctx;
    double kernel_seconds = 0.0;
};

Shared& shared() {
    static Shared s = [] {
        Shared out;
        out.file = io::load_scenario_file(source("configs/scenario_default.json"));
        const Clock c;
        out.ctx = std::make_unique<SimulationContext>(out.file.scenario, out.file.cohort);
        out.kernel_seconds = c.seconds();
        return out;
    }();
    return s;
}

void criterion1() {
    const Clock total;
    bool ok = true;
    std::string detail;
    std::vector<KernelResult>* keep = new std::vector<KernelResult>();
    for (const char* name : {"oracle_2d_coupled", "oracle_2d_cascade", "oracle_2d_effect_site"}) {
        const Clock c;
        const io::OracleProblem o = io::load_oracle_problem(source(std::string("configs/") + name + ".json"));
        keep->push_back(compute_kernels(o.problem.models, o.problem.config));
        std::vector<LinearStateSpace> disc;
        for (const auto& [id, sys] : o.problem.models) disc.push_back(discretize_zoh(sys, o.problem.config.dt_s / 60.0));
        OracleOptions opts;
        opts.refine = o.refine;
        const GridSet g = brute_force_kernel(disc, o.problem.config.constraint_set, o.problem.config.input_set,
                                             o.problem.config.steps(), 0.05, o.input_levels, opts);
        const OracleComparison cmp = compare_with_oracle(keep->back().intersection.final_kernel(), g, 10000, o.seed);
        const double t = c.seconds();
        const bool one = o.problem.models.size() >= 2 && o.problem.models.size() <= 3 && cmp.samples == 10000 &&
                         cmp.counterexamples == 0 && cmp.coverage() >= 0.90 && t < 60.0;
        ok = ok && one;
        detail += fmt("%s[%zu models: %zu/%zu counterexamples, coverage %.3f, %.1fs] ", name, o.problem.models.size(),
                      cmp.counterexamples, cmp.samples, cmp.coverage(), t);
    }
    for (const auto& r : *keep) {
        for (const auto& [id, seq] : r.per_model) all_sequences.push_back(&seq);
        all_sequences.push_back(&r.intersection);
    }
    verdict(1, ok, detail, total.seconds());
}

// Random infusion history from zero after which every model lies in `kernel`.
std::vector<double> kernel_start(std::mt19937_64& rng, const SimulationContext& ctx, const Polytope& kernel) {
    std::uniform_int_distribution<int> length(0, 72);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (;;) {
        std::vector<double> h;
        const int n1 = length(rng), n2 = length(rng);
        const double r1 = 600.0 * unit(rng), r2 = 600.0 * unit(rng) * unit(rng);
        h.insert(h.end(), static_cast<std::size_t>(n1), r1);
        h.insert(h.end(), static_cast<std::size_t>(n2), r2);
        bool inside = true;
        for (std::size_t i = 0; i < ctx.models().size() && inside; ++i) {
            Vector z = Vector::Zero(4);
            for (double u : h) z = ctx.discrete()[i].a * z + ctx.discrete()[i].b * u;
            inside = contains(kernel, z);
        }
        if (inside) return h;
    }
}

void criterion2() {
    const Clock total;
    Shared& s = shared();
    const SimulationContext& ctx = *s.ctx;
    const Polytope& inter = ctx.kernels().intersection.final_kernel();
    std::mt19937_64 rng(2024);
    constexpr int kStarts = 100, kSeeds = 20;
    std::vector<std::vector<double>> starts;
    double nonzero = 0;
    for (int i = 0; i < kStarts; ++i) {
        starts.push_back(kernel_start(rng, ctx, inter));
        nonzero += starts.back().empty() ? 0 : 1;
    }
    const auto& patients = ctx.cohort().models;
    std::vector<double> worst_drop(kStarts * kSeeds, 0.0), worst_pk(kStarts * kSeeds, 0.0),
        lowest_pk(kStarts * kSeeds, 0.0);
    std::vector<std::size_t> breaches(kStarts * kSeeds, 0);
    parallel_for(static_cast<std::size_t>(kStarts * kSeeds), [&](std::size_t job) {
        const int start = static_cast<int>(job) / kSeeds;
        Scenario sc = s.file.scenario;
        sc.mode = start % 2 == 0 ? SafetyMode::ModelInvariant : SafetyMode::ModelInvariantFalsified;
        sc.seed = 1 + job % kSeeds;
        sc.initial_infusion = starts[static_cast<std::size_t>(start)];
        const RunResult r = run(sc, patients[static_cast<std::size_t>(start) % patients.size()], ctx);
        for (const auto& row : r.trace.rows) {
            worst_drop[job] = std::max(worst_drop[job], row.bp_drop_pct);
            for (double p : row.pk) {
                worst_pk[job] = std::max(worst_pk[job], p);
                lowest_pk[job] = std::min(lowest_pk[job], p);
            }
        }
        breaches[job] = r.metrics.breaches;
    });
    std::size_t bp_violations = 0, pk_exits = 0, breach_total = 0;
    for (std::size_t j = 0; j < worst_drop.size(); ++j) {
        bp_violations += worst_drop[j] > 50.0 + kBpTolerance;
        pk_exits += worst_pk[j] > 10.0 + kPkTolerance || lowest_pk[j] < -kPkTolerance;
        breach_total += breaches[j];
    }
    const double t = total.seconds() + s.kernel_seconds;
    const bool ok = bp_violations == 0 && pk_exits == 0 && t < 600.0;
    verdict(2, ok,
            fmt("%d starts (%d with drug on board) x %d seeds: BP-drop max %.3f%%, violations %zu; PK max %.4f, exits "
                "%zu; guard breaches %zu",
                kStarts, static_cast<int>(nonzero), kSeeds,
                *std::max_element(worst_drop.begin(), worst_drop.end()), bp_violations,
                *std::max_element(worst_pk.begin(), worst_pk.end()), pk_exits, breach_total),
            t);
}

void criterion3() {
    const Clock total;
    const io::KernelProblem p = io::load_kernel_problem(source("configs/kernel_default.json"));
    const std::string k_cfg = io::box_json(p.config.constraint_set).dump();
    const std::string u_cfg = io::box_json(p.config.input_set).dump();

    const fs::path dir = fs::temp_directory_path() / "safekernel-acceptance-archive";
    fs::remove_all(dir);
    io::write_kernel_archive(dir, shared().ctx->kernels(), io::Json::object());
    const io::Json manifest = io::read_json(dir / "manifest.json");
    const std::string k_arch = manifest.at("constraint_set").dump();
    const std::string u_arch = manifest.at("input_set").dump();
    fs::remove_all(dir);

    const std::string k_want = R"({"lower":[0.0,0.0,0.0,0.0],"upper":[10.0,10.0,10.0,1.0]})";
    const std::string u_want = R"({"lower":[0.0],"upper":[600.0]})";
    const std::string g_default = io::to_json(Scenario{}).at("falsification").dump();
    const std::string g_file = io::read_json(source("configs/scenario_default.json"))
                                   .at("scenario").at("falsification").at("gamma").dump();
    const bool ok = k_cfg == k_want && k_arch == k_want && u_cfg == u_want && u_arch == u_want &&
                    g_default == R"({"gamma":17.0,"strict":true})" && g_file == "17" &&
                    FalsificationConfig{}.gamma == 17.0;
    verdict(3, ok, "K " + k_arch + "  U " + u_arch + "  falsification " + g_default, total.seconds());
}

void criterion4() {
    const Clock total;
    Shared& s = shared();
    const auto& patients = s.ctx->cohort().models;
    constexpr std::size_t kRuns = 1000;
    std::vector<std::size_t> wrong(kRuns, 0), removed(kRuns, 0);
    parallel_for(kRuns, [&](std::size_t i) {
        Scenario sc = s.file.scenario;
        sc.mode = SafetyMode::ModelInvariantFalsified;
        sc.noise_bound = 10.0;
        sc.seed = 1 + i / patients.size();
        const PatientModel& truth = patients[i % patients.size()];
        const RunResult r = run(sc, truth, *s.ctx);
        for (const auto& e : r.trace.events) wrong[i] += e.model_id == truth.id;
        removed[i] = r.trace.events.size();
    });
    std::size_t wrong_total = 0, removed_total = 0;
    for (std::size_t i = 0; i < kRuns; ++i) {
        wrong_total += wrong[i];
        removed_total += removed[i];
    }
    const FalsificationConfig cfg;
    const ModelSetState two = ModelSetState::all({"a", "b"});
    const bool strict_ok = update(two, 0.0, {{"a", residual(40.0, 23.0)}, {"b", 0.0}}, cfg).unfalsified.size() == 2 &&
                           update(two, 0.0, {{"a", 17.0 + 1e-9}}, cfg).unfalsified.size() == 1;
    verdict(4, wrong_total == 0 && strict_ok,
            fmt("%zu runs, noise bound 10: true model falsified %zu times (other models removed %zu times); residual "
                "17.0 %s",
                kRuns, wrong_total, removed_total, strict_ok ? "kept" : "FALSIFIED"),
            total.seconds());
}

void criterion5() {
    const Clock total;
    Shared& s = shared();
    std::map<SafetyMode, CohortRun> runs;
    for (SafetyMode m : {SafetyMode::Individualized, SafetyMode::ModelInvariant, SafetyMode::ModelInvariantFalsified}) {
        Scenario sc = s.file.scenario;
        sc.mode = m;
        runs[m] = run_cohort(sc, *s.ctx, false);
    }
    auto median_dev = [](const CohortRun& cr) {
        std::vector<double> d;
        for (const auto& r : cr.runs) d.push_back(std::abs(r.metrics.doh_at_20min.value_or(100.0) - 50.0));
        return quartiles(d).median;
    };
    const double fa = runs[SafetyMode::Individualized].summary.induction_fraction;
    const double fb = runs[SafetyMode::ModelInvariant].summary.induction_fraction;
    const double fc = runs[SafetyMode::ModelInvariantFalsified].summary.induction_fraction;
    const double da = median_dev(runs[SafetyMode::Individualized]);
    const double db = median_dev(runs[SafetyMode::ModelInvariant]);
    const double dc = median_dev(runs[SafetyMode::ModelInvariantFalsified]);
    const double t = total.seconds() + s.kernel_seconds;
    const bool ok = fa == 1.0 && fb < 1.0 && fc == 1.0 && std::abs(dc - da) <= 5.0 && t < 300.0;
    verdict(5, ok,
            fmt("induction individualized %.0f%%, model-invariant %.0f%%, falsified %.0f%%; median |DoH@20-50| "
                "%.2f / %.2f / %.2f",
                100 * fa, 100 * fb, 100 * fc, da, db, dc),
            t);
}

void criterion6() {
    const Clock total;
    Shared& s = shared();
    const SimulationContext& ctx = *s.ctx;
    std::size_t divergent = 0, missed = 0;
    double slowest = 0.0;
    for (const auto& id : s.file.true_patients) {
        const RunResult r = run(s.file.scenario, ctx.cohort().find(id), ctx);
        for (std::size_t i = 0; i < ctx.models().size(); ++i) {
            const SafetyModel& m = ctx.models()[i];
            bool diverges = false;
            for (const auto& row : r.trace.rows) {
                if (row.t_s > 300.0) break;
                diverges = diverges ||
                           std::abs(hill_effect(row.ce[i], m.bp_pd) - row.bp_drop_pct) > s.file.scenario.falsification.gamma;
            }
            if (!diverges) continue;
            ++divergent;
            double when = -1.0;
            for (const auto& e : r.trace.events)
                if (e.model_id == m.id) when = e.t_s;
            if (when < 0.0 || when > 300.0)
                ++missed;
            else
                slowest = std::max(slowest, when);
        }
    }
    verdict(6, missed == 0,
            fmt("%zu true patients: %zu models diverge by more than gamma within 5 min, %zu not falsified by 5 min; "
                "latest falsification at %.0f s",
                s.file.true_patients.size(), divergent, missed, slowest),
            total.seconds());
}

using OdeState = std::vector<double>;

Vector integrate(const LinearStateSpace& s, double u, double t_end) {
    OdeState x(static_cast<std::size_t>(s.states()), 0.0);
    auto rhs = [&](const OdeState& y, OdeState& dy, double) {
        Eigen::Map<const Vector> ym(y.data(), static_cast<Eigen::Index>(y.size()));
        const Vector d = s.a * ym + s.b.col(0) * u;
        dy.assign(d.data(), d.data() + d.size());
    };
    using namespace boost::numeric::odeint;
    integrate_adaptive(make_controlled(1e-12, 1e-12, runge_kutta_dopri5<OdeState>()), rhs, x, 0.0, t_end, 1e-3);
    return Eigen::Map<Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
}

void criterion7() {
    const Clock total;
    Shared& s = shared();
    const Cohort& cohort = s.ctx->cohort();

    double hill_err = 0.0;
    for (const auto& m : cohort.models)
        for (const PdParams* pd : {&m.bp_pd, &m.doh_pd}) hill_err = std::max(hill_err, std::abs(hill_effect(pd->ec50, *pd) - 50.0));

    double zoh_err = 0.0;
    for (const auto& m : cohort.models) {
        const LinearStateSpace sys = cascade(m.pk, m.bp_pd);
        const LinearStateSpace d = discretize_zoh(sys, 5.0 / 60.0);
        for (double u : {50.0, 200.0, 600.0}) {
            Vector x = Vector::Zero(4);
            for (int k = 1; k <= 120; ++k) {
                x = d.a * x + d.b.col(0) * u;
                if (k % 12 != 0) continue;
                const Vector ref = integrate(sys, u, k * 5.0 / 60.0);
                const double bp = bp_from_effect(hill_effect(std::max(0.0, x(3)), m.bp_pd), m.bp_baseline);
                const double bp_ref = bp_from_effect(hill_effect(std::max(0.0, ref(3)), m.bp_pd), m.bp_baseline);
                zoh_err = std::max(zoh_err, std::abs(bp - bp_ref) / m.bp_baseline);
            }
        }
    }

    std::mt19937_64 rng(1000);
    std::uniform_real_distribution<double> coord(-4.0, 4.0);
    double vi_worst = -1.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int d = 2 + trial % 3;
        const auto [a, b] = oracle::random_polytope(rng, d, 3 + trial % 6, 2.0);
        const Polytope p(a, b);
        Vector x(d);
        for (int j = 0; j < d; ++j) x(j) = coord(rng);
        const Projection pr = euclidean_project(p, x);
        for (const auto& v : oracle::vertices(a, b)) vi_worst = std::max(vi_worst, (x - pr.point).dot(v - pr.point));
    }

    for (const auto& [id, seq] : s.ctx->kernels().per_model) all_sequences.push_back(&seq);
    all_sequences.push_back(&s.ctx->kernels().intersection);
    std::size_t checked = 0, broken = 0;
    for (const KernelSequence* seq : all_sequences)
        for (std::size_t k = 1; k < seq->steps.size(); ++k) {
            ++checked;
            broken += !subset(seq->steps[k], seq->steps[k - 1]);
        }

    const bool ok = hill_err <= 1e-9 && zoh_err <= 0.005 && vi_worst <= 1e-7 && broken == 0;
    verdict(7, ok,
            fmt("hill(EC50) error %.1e; ZOH vs adaptive max %.2e of baseline; projection VI max %.1e over 1000; "
                "%zu/%zu kernel steps nested",
                hill_err, zoh_err, vi_worst, checked - broken, checked),
            total.seconds());
}

} // namespace

int main() {
    const Clock total;
    const std::vector<std::function<void()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                      criterion5, criterion6, criterion7};
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        try {
            criteria[i]();
        } catch (const std::exception& e) {
            verdict(static_cast<int>(i + 1), false, std::string("error: ") + e.what(), 0.0);
        }
    }
    std::printf("acceptance: %d of 7 criteria failed (%.1fs total, %d worker threads)\n", failures, total.seconds(),
                worker_threads());
    return failures == 0 ? 0 : 1;
}
