#include "safekernel/safekernel.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kEmptyKernel = 3, kBreach = 4, kOracleFail = 5 };

int report(sk_status s) {
    std::fprintf(stderr, "error: %s: %s\n", sk_status_name(s), sk_last_error());
    if (s == SK_CONFIG_ERROR) return kConfig;
    if (s == SK_EMPTY_KERNEL) return kEmptyKernel;
    return kFailure;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void print_summary(const sk_kernel* k, const char* id, size_t dim) {
    sk_kernel_summary s{};
    if (sk_kernel_summary_get(k, id, &s) != SK_OK) return;
    std::printf("%-14s rows=%-4zu radius=%-10.6g", id ? id : "intersection", s.rows, s.chebyshev_radius);
    if (s.empty) std::printf(" EMPTY from step %d", s.empty_at);
    if (!s.empty && dim == 1) {
        double lo = 0.0, hi = 0.0;
        if (sk_kernel_bounds(k, id, &lo, &hi, 1) == SK_OK) std::printf(" bounds=[%.6f, %.6f]", lo, hi);
    }
    std::printf("\n");
}

int cmd_kernel(const std::string& config, const std::string& out, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    sk_problem* p = nullptr;
    if (sk_status s = sk_problem_load(config.c_str(), &p); s != SK_OK) return report(s);
    sk_kernel* k = nullptr;
    sk_status s = sk_kernel_compute(p, &k);
    const size_t dim = sk_problem_state_dim(p);
    if (s != SK_OK) {
        sk_problem_free(p);
        return report(s);
    }
    for (size_t i = 0; i < sk_kernel_model_count(k); ++i) print_summary(k, sk_kernel_model_id(k, i), dim);
    print_summary(k, nullptr, dim);

    const fs::path dir = out.empty() ? fs::path("out") / fs::path(config).stem() : fs::path(out);
    const nlohmann::json extra{{"command", "kernel"},
                               {"config", config},
                               {"config_hash", sk_problem_hash(p)},
                               {"seed", seed},
                               {"wall_clock_s", elapsed(t0)}};
    s = sk_kernel_save(k, dir.string().c_str(), extra.dump().c_str());
    sk_kernel_summary inter{};
    sk_kernel_summary_get(k, nullptr, &inter);
    sk_kernel_free(k);
    sk_problem_free(p);
    if (s != SK_OK) return report(s);
    std::printf("archive: %s\n", dir.string().c_str());
    if (inter.empty) {
        std::fprintf(stderr, "error: intersection kernel is empty from step %d\n", inter.empty_at);
        return kEmptyKernel;
    }
    return kOk;
}

int cmd_simulate(const std::string& config, const std::string& out, const std::string& mode, bool compute,
                 bool seed_given, std::uint64_t seed) {
    sk_scenario* sc = nullptr;
    if (sk_status s = sk_scenario_load(config.c_str(), &sc); s != SK_OK) return report(s);
    if (!mode.empty()) {
        if (sk_status s = sk_scenario_set_mode(sc, mode.c_str()); s != SK_OK) {
            sk_scenario_free(sc);
            return report(s);
        }
    }
    if (seed_given) sk_scenario_set_seed(sc, seed);

    sk_kernel* k = nullptr;
    if (!compute && mode != "none") {
        const char* archive = sk_scenario_kernel_archive(sc);
        if (!archive || !fs::exists(fs::path(archive) / "manifest.json")) {
            std::fprintf(stderr, "error: kernel archive %s not found; run the kernel command first or pass --compute\n",
                         archive ? archive : "(none configured)");
            sk_scenario_free(sc);
            return kConfig;
        }
        if (sk_status s = sk_kernel_load(archive, &k); s != SK_OK) {
            sk_scenario_free(sc);
            return report(s);
        }
    }
    sk_run* run = nullptr;
    const sk_status s = sk_simulate(sc, k, out.empty() ? "out" : out.c_str(), &run);
    sk_kernel_free(k);
    sk_scenario_free(sc);
    if (s != SK_OK) return report(s);

    size_t breaches = 0;
    for (size_t i = 0; i < sk_run_patient_count(run); ++i) {
        sk_metrics m{};
        sk_run_metrics(run, i, &m);
        breaches += m.breaches;
        std::printf("%-8s induction=%s t=%6.2f min  doh@20=%6.2f  max_bp_drop=%6.2f%%  falsified=%zu  breaches=%zu\n",
                    m.patient_id, m.induction_completed ? "yes" : "no ", m.induction_time_min, m.doh_at_20min,
                    m.max_bp_drop_pct, m.falsified, m.breaches);
    }
    std::printf("run: %s\n", sk_run_directory(run));
    sk_run_free(run);
    if (breaches > 0) {
        std::fprintf(stderr, "error: safety breach in %zu samples\n", breaches);
        return kBreach;
    }
    return kOk;
}

int cmd_oracle(const std::string& config, const std::string& out, double grid) {
    sk_problem* p = nullptr;
    if (sk_status s = sk_problem_load(config.c_str(), &p); s != SK_OK) return report(s);
    sk_oracle_report r{};
    const sk_status s = sk_oracle_run(p, grid, &r);
    const std::string hash = sk_problem_hash(p);
    sk_problem_free(p);
    if (s != SK_OK) return report(s);
    std::printf("subset %s  counterexamples=%zu/%zu  coverage=%.4f (%zu/%zu cells)  grid=%g  %.2fs\n",
                r.subset ? "PASS" : "FAIL", r.counterexamples, r.samples, r.coverage, r.covered_cells, r.oracle_cells,
                r.grid, r.seconds);
    const fs::path dir = out.empty() ? fs::path("out") : fs::path(out);
    fs::create_directories(dir);
    const nlohmann::json j{{"config", config},         {"config_hash", hash},
                           {"subset", r.subset != 0},  {"counterexamples", r.counterexamples},
                           {"samples", r.samples},     {"coverage", r.coverage},
                           {"oracle_cells", r.oracle_cells}, {"covered_cells", r.covered_cells},
                           {"grid", r.grid},           {"seconds", r.seconds}};
    const fs::path file = dir / ("oracle-" + fs::path(config).stem().string() + ".json");
    std::ofstream(file) << j.dump(2) << "\n";
    std::printf("report: %s\n", file.string().c_str());
    return r.subset ? kOk : kOracleFail;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Viability kernels and safety-preserving control for uncertain drug-infusion models"};
    app.set_version_flag("--version", sk_version());
    app.require_subcommand(1);

    std::string config, out, mode;
    std::uint64_t seed = 1;
    double grid = 0.0;
    bool compute = false;

    auto* kernel = app.add_subcommand("kernel", "compute per-model and intersection kernels");
    kernel->add_option("--config", config, "kernel config JSON")->required();
    kernel->add_option("--out", out, "archive directory");
    kernel->add_option("--seed", seed, "recorded in the manifest");

    auto* simulate = app.add_subcommand("simulate", "closed-loop simulation of a scenario");
    simulate->add_option("--config", config, "scenario JSON")->required();
    simulate->add_option("--out", out, "root of run directories");
    simulate->add_option("--mode", mode, "none | individualized | model-invariant | model-invariant-falsified");
    auto* seed_opt = simulate->add_option("--seed", seed, "noise seed");
    simulate->add_flag("--compute", compute, "compute kernels instead of loading the archive");

    auto* oracle = app.add_subcommand("oracle", "compare the intersection kernel with the grid oracle");
    oracle->add_option("--config", config, "2-state kernel config JSON with an oracle section")->required();
    oracle->add_option("--grid", grid, "grid spacing (overrides the config)");
    oracle->add_option("--out", out, "report directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfig;
    }
    if (*kernel) return cmd_kernel(config, out, seed);
    if (*simulate) return cmd_simulate(config, out, mode, compute, seed_opt->count() > 0, seed);
    return cmd_oracle(config, out, grid);
}
