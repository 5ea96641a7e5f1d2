#include "safekernel/safekernel.h"

#include "safekernel/io.hpp"

#include <chrono>
#include <cstring>
#include <memory>

using namespace safekernel;

struct sk_problem {
    io::KernelProblem problem;
    std::filesystem::path path;
};

struct sk_kernel {
    KernelResult result;
    std::string config_hash;
};

struct sk_scenario {
    io::ScenarioFile file;
    std::string archive;
};

struct sk_run {
    std::vector<Metrics> metrics;
    std::vector<std::size_t> falsified;
    std::string directory;
};

namespace {

thread_local std::string last_error;

sk_status status_of(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return SK_INVALID_ARGUMENT;
    case ErrorCode::DimensionMismatch: return SK_DIMENSION_MISMATCH;
    case ErrorCode::EmptySet: return SK_EMPTY_SET;
    case ErrorCode::EmptyKernel: return SK_EMPTY_KERNEL;
    case ErrorCode::SingularMatrix: return SK_SINGULAR_MATRIX;
    case ErrorCode::UnsupportedSummand: return SK_UNSUPPORTED_SUMMAND;
    case ErrorCode::DomainError: return SK_DOMAIN_ERROR;
    case ErrorCode::ResourceLimit: return SK_RESOURCE_LIMIT;
    case ErrorCode::NoModelsLeft: return SK_NO_MODELS_LEFT;
    case ErrorCode::MissingKernel: return SK_MISSING_KERNEL;
    case ErrorCode::ConfigError: return SK_CONFIG_ERROR;
    case ErrorCode::IoError: return SK_IO_ERROR;
    }
    return SK_INTERNAL_ERROR;
}

template <typename F>
sk_status guarded(F&& body) {
    try {
        body();
        last_error.clear();
        return SK_OK;
    } catch (const Error& e) {
        last_error = e.what();
        return status_of(e.code());
    } catch (const nlohmann::json::exception& e) {
        last_error = e.what();
        return SK_CONFIG_ERROR;
    } catch (const std::filesystem::filesystem_error& e) {
        last_error = e.what();
        return SK_IO_ERROR;
    } catch (const std::exception& e) {
        last_error = e.what();
        return SK_INTERNAL_ERROR;
    } catch (...) {
        last_error = "unknown error";
        return SK_INTERNAL_ERROR;
    }
}

void need(const void* p, const char* what) {
    if (!p) fail(ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

const Polytope& select(const sk_kernel* k, const char* model_id) {
    need(k, "kernel");
    if (!model_id) return k->result.intersection.final_kernel();
    const auto it = k->result.per_model.find(model_id);
    if (it == k->result.per_model.end()) fail(ErrorCode::MissingKernel, std::string("no kernel for model ") + model_id);
    return it->second.final_kernel();
}

const KernelSequence& sequence(const sk_kernel* k, const char* model_id) {
    if (!model_id) return k->result.intersection;
    const auto it = k->result.per_model.find(model_id);
    if (it == k->result.per_model.end()) fail(ErrorCode::MissingKernel, std::string("no kernel for model ") + model_id);
    return it->second;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

extern "C" {

const char* sk_last_error(void) { return last_error.c_str(); }

const char* sk_status_name(sk_status status) {
    switch (status) {
    case SK_OK: return "ok";
    case SK_INVALID_ARGUMENT: return "invalid argument";
    case SK_DIMENSION_MISMATCH: return "dimension mismatch";
    case SK_EMPTY_SET: return "empty set";
    case SK_EMPTY_KERNEL: return "empty kernel";
    case SK_SINGULAR_MATRIX: return "singular matrix";
    case SK_UNSUPPORTED_SUMMAND: return "unsupported summand";
    case SK_DOMAIN_ERROR: return "domain error";
    case SK_RESOURCE_LIMIT: return "resource limit";
    case SK_NO_MODELS_LEFT: return "no models left";
    case SK_MISSING_KERNEL: return "missing kernel";
    case SK_CONFIG_ERROR: return "config error";
    case SK_IO_ERROR: return "io error";
    case SK_INTERNAL_ERROR: return "internal error";
    }
    return "unknown status";
}

const char* sk_version(void) { return SAFEKERNEL_VERSION; }

sk_status sk_problem_load(const char* path, sk_problem** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = nullptr;
        auto p = std::make_unique<sk_problem>();
        p->path = path;
        p->problem = io::load_kernel_problem(p->path);
        *out = p.release();
    });
}

void sk_problem_free(sk_problem* problem) { delete problem; }

size_t sk_problem_state_dim(const sk_problem* problem) {
    return problem ? static_cast<size_t>(problem->problem.config.constraint_set.dim()) : 0;
}

const char* sk_problem_hash(const sk_problem* problem) { return problem ? problem->problem.hash.c_str() : ""; }

sk_status sk_kernel_compute(const sk_problem* problem, sk_kernel** out) {
    return guarded([&] {
        need(problem, "problem");
        need(out, "out");
        *out = nullptr;
        auto k = std::make_unique<sk_kernel>();
        k->result = compute_kernels(problem->problem.models, problem->problem.config);
        k->config_hash = problem->problem.hash;
        *out = k.release();
    });
}

sk_status sk_kernel_load(const char* archive_dir, sk_kernel** out) {
    return guarded([&] {
        need(archive_dir, "archive_dir");
        need(out, "out");
        *out = nullptr;
        auto k = std::make_unique<sk_kernel>();
        k->result = io::read_kernel_archive(archive_dir);
        const auto m = io::read_json(std::filesystem::path(archive_dir) / "manifest.json");
        k->config_hash = m.value("config_hash", "");
        *out = k.release();
    });
}

sk_status sk_kernel_save(const sk_kernel* kernel, const char* archive_dir, const char* manifest_json) {
    return guarded([&] {
        need(kernel, "kernel");
        need(archive_dir, "archive_dir");
        io::Json extra = manifest_json ? io::Json::parse(manifest_json) : io::Json::object();
        if (!extra.is_object()) fail(ErrorCode::InvalidArgument, "manifest extras must be a JSON object");
        if (!extra.contains("config_hash")) extra["config_hash"] = kernel->config_hash;
        extra["versions"] = io::Json{{"safekernel", SAFEKERNEL_VERSION}};
        io::write_kernel_archive(archive_dir, kernel->result, extra);
    });
}

void sk_kernel_free(sk_kernel* kernel) { delete kernel; }

size_t sk_kernel_model_count(const sk_kernel* kernel) { return kernel ? kernel->result.per_model.size() : 0; }

const char* sk_kernel_model_id(const sk_kernel* kernel, size_t index) {
    if (!kernel || index >= kernel->result.per_model.size()) return nullptr;
    auto it = kernel->result.per_model.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(index));
    return it->first.c_str();
}

sk_status sk_kernel_summary_get(const sk_kernel* kernel, const char* model_id, sk_kernel_summary* out) {
    return guarded([&] {
        need(out, "out");
        const Polytope& p = select(kernel, model_id);
        const KernelSequence& seq = sequence(kernel, model_id);
        out->rows = p.rows();
        out->empty = p.is_empty() ? 1 : 0;
        out->empty_at = seq.empty_at ? *seq.empty_at : -1;
        out->chebyshev_radius = p.is_empty() ? 0.0 : chebyshev_ball(p).radius;
    });
}

sk_status sk_kernel_bounds(const sk_kernel* kernel, const char* model_id, double* lower, double* upper, size_t dim) {
    return guarded([&] {
        need(lower, "lower");
        need(upper, "upper");
        const Polytope& p = select(kernel, model_id);
        if (static_cast<size_t>(p.dim()) != dim) fail(ErrorCode::DimensionMismatch, "kernel dimension differs");
        if (p.is_empty()) fail(ErrorCode::EmptyKernel, "kernel is empty");
        const auto [lo, hi] = bounding_box(p);
        for (size_t i = 0; i < dim; ++i) {
            lower[i] = lo(static_cast<Eigen::Index>(i));
            upper[i] = hi(static_cast<Eigen::Index>(i));
        }
    });
}

sk_status sk_kernel_contains(const sk_kernel* kernel, const char* model_id, const double* x, size_t dim, int* inside) {
    return guarded([&] {
        need(x, "x");
        need(inside, "inside");
        const Polytope& p = select(kernel, model_id);
        if (static_cast<size_t>(p.dim()) != dim) fail(ErrorCode::DimensionMismatch, "kernel dimension differs");
        *inside = contains(p, Eigen::Map<const Vector>(x, static_cast<Eigen::Index>(dim))) ? 1 : 0;
    });
}

sk_status sk_oracle_run(const sk_problem* problem, double grid, sk_oracle_report* out) {
    return guarded([&] {
        need(problem, "problem");
        need(out, "out");
        const auto t0 = std::chrono::steady_clock::now();
        io::OracleProblem o = io::load_oracle_problem(problem->path);
        if (grid > 0.0) o.grid = grid;
        const KernelResult kr = compute_kernels(o.problem.models, o.problem.config);
        std::vector<LinearStateSpace> discrete;
        for (const auto& [id, sys] : o.problem.models)
            discrete.push_back(discretize_zoh(sys, o.problem.config.dt_s / 60.0));
        OracleOptions opts;
        opts.refine = o.refine;
        const GridSet g = brute_force_kernel(discrete, o.problem.config.constraint_set, o.problem.config.input_set,
                                             o.problem.config.steps(), o.grid, o.input_levels, opts);
        const OracleComparison c = compare_with_oracle(kr.intersection.final_kernel(), g, o.samples, o.seed);
        out->samples = c.samples;
        out->counterexamples = c.counterexamples;
        out->oracle_cells = c.oracle_cells;
        out->covered_cells = c.covered_cells;
        out->coverage = c.coverage();
        out->subset = c.subset() ? 1 : 0;
        out->grid = o.grid;
        out->seconds = seconds_since(t0);
    });
}

sk_status sk_scenario_load(const char* path, sk_scenario** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = nullptr;
        auto s = std::make_unique<sk_scenario>();
        s->file = io::load_scenario_file(path);
        if (s->file.kernel_archive) s->archive = s->file.kernel_archive->string();
        *out = s.release();
    });
}

void sk_scenario_free(sk_scenario* scenario) { delete scenario; }

sk_status sk_scenario_set_mode(sk_scenario* scenario, const char* mode) {
    return guarded([&] {
        need(scenario, "scenario");
        need(mode, "mode");
        scenario->file.scenario.mode = parse_safety_mode(mode);
    });
}

void sk_scenario_set_seed(sk_scenario* scenario, uint64_t seed) {
    if (scenario) scenario->file.scenario.seed = seed;
}

const char* sk_scenario_kernel_archive(const sk_scenario* scenario) {
    return scenario && !scenario->archive.empty() ? scenario->archive.c_str() : nullptr;
}

sk_status sk_simulate(const sk_scenario* scenario, const sk_kernel* kernel, const char* out_root, sk_run** out) {
    return guarded([&] {
        need(scenario, "scenario");
        need(out_root, "out_root");
        need(out, "out");
        *out = nullptr;
        const auto t0 = std::chrono::steady_clock::now();
        const io::ScenarioFile& f = scenario->file;
        const Scenario& sc = f.scenario;
        std::unique_ptr<SimulationContext> ctx;
        if (kernel && sc.mode != SafetyMode::None) {
            const KernelConfig want = sc.kernel_config();
            const KernelConfig& have = kernel->result.config;
            if (have.steps() != want.steps() || have.dt_s != want.dt_s ||
                !set_equal(have.constraint_set, want.constraint_set) || !set_equal(have.input_set, want.input_set))
                fail(ErrorCode::ConfigError, "kernel archive was computed for a different horizon or constraint set");
            ctx = std::make_unique<SimulationContext>(sc, f.cohort, kernel->result);
        } else {
            ctx = std::make_unique<SimulationContext>(sc, f.cohort);
        }
        const CohortRun cr = run_patients(sc, *ctx, f.true_patients);

        const std::string hash = io::scenario_hash(f);
        const auto dir = std::filesystem::path(out_root) / ("run-" + hash.substr(0, 16));
        io::Json outputs = io::Json::object();
        auto r = std::make_unique<sk_run>();
        for (const auto& run : cr.runs) {
            for (const auto& p : io::write_run(dir / run.metrics.patient_id, run))
                outputs[std::filesystem::relative(p, dir).string()] = io::sha256_hex(io::read_file(p));
            r->metrics.push_back(run.metrics);
            r->falsified.push_back(run.trace.events.size());
        }
        io::write_file_atomic(dir / "summary.json", io::to_json(cr.summary).dump(2));
        io::write_file_atomic(dir / "scenario.json", io::to_json(sc).dump(2));
        const io::Json manifest{{"command", "simulate"},
                                {"config_hash", hash},
                                {"seed", sc.seed},
                                {"mode", to_string(sc.mode)},
                                {"versions", io::Json{{"safekernel", SAFEKERNEL_VERSION}}},
                                {"outputs", outputs},
                                {"wall_clock_s", seconds_since(t0)}};
        io::write_file_atomic(dir / "manifest.json", manifest.dump(2));
        r->directory = dir.string();
        *out = r.release();
    });
}

void sk_run_free(sk_run* run) { delete run; }

size_t sk_run_patient_count(const sk_run* run) { return run ? run->metrics.size() : 0; }

sk_status sk_run_metrics(const sk_run* run, size_t index, sk_metrics* out) {
    return guarded([&] {
        need(run, "run");
        need(out, "out");
        if (index >= run->metrics.size()) fail(ErrorCode::InvalidArgument, "patient index out of range");
        const Metrics& m = run->metrics[index];
        std::memset(out, 0, sizeof *out);
        std::strncpy(out->patient_id, m.patient_id.c_str(), sizeof out->patient_id - 1);
        out->induction_completed = m.induction_completed ? 1 : 0;
        out->induction_time_min = m.induction_time_min.value_or(-1.0);
        out->doh_at_20min = m.doh_at_20min.value_or(-1.0);
        out->max_bp_drop_pct = m.max_bp_drop_pct;
        out->max_pk = m.max_pk;
        out->time_in_doh_40_60 = m.time_in_doh_40_60;
        out->breaches = m.breaches;
        out->falsified = run->falsified[index];
    });
}

const char* sk_run_directory(const sk_run* run) { return run ? run->directory.c_str() : ""; }

} // extern "C"
