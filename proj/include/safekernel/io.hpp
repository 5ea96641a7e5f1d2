#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "safekernel/simulation.hpp"

namespace safekernel::io {

using Json = nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes);
std::string read_file(const fs::path& path);
// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const fs::path& path, const std::string& content);
Json read_json(const fs::path& path);

// Rows are sorted so equal sets with permuted rows serialise identically.
Json to_json(const Polytope& p);
Polytope polytope_from_json(const Json& j);
// {"lower": [...], "upper": [...]} of a bounded set.
Json box_json(const Polytope& p);
Polytope box_from_json(const Json& j);

Json to_json(const LinearStateSpace& s);
LinearStateSpace system_from_json(const Json& j);
Json to_json(const PdParams& p);
PdParams pd_from_json(const Json& j);
Json to_json(const Cohort& c);
Cohort cohort_from_json(const Json& j);
// A cohort file path (relative to `base`), an inline cohort, or
// {"synthetic": {"seed", "n", "preset"}}.
Cohort load_cohort(const Json& spec, const fs::path& base);

// Kernel problem: a cohort of pharmacological models under a BP bound, or
// explicit linear models with box constraint and input sets.
struct KernelProblem {
    std::string kind;
    std::vector<std::pair<std::string, LinearStateSpace>> models;
    KernelConfig config;
    std::optional<Cohort> cohort;
    double bp_bound_pct = 0.0;
    Json source;
    std::string hash;
};

KernelProblem load_kernel_problem(const Json& j, const fs::path& base);
KernelProblem load_kernel_problem(const fs::path& path);

struct OracleProblem {
    KernelProblem problem;
    double grid = 0.05;
    int refine = 16;
    int input_levels = 21;
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
};

OracleProblem load_oracle_problem(const fs::path& path);

Json to_json(const Scenario& s);
Scenario scenario_from_json(const Json& j);

struct ScenarioFile {
    Scenario scenario;
    Cohort cohort;
    std::vector<std::string> true_patients;
    std::optional<fs::path> kernel_archive;
    Json source;
};

ScenarioFile load_scenario_file(const fs::path& path);
std::string scenario_hash(const ScenarioFile& f);

// Per-model and intersection sequences as <dir>/<id>/step<k>.json, plus a
// manifest carrying the K and U boxes and a SHA-256 for every file.
Json write_kernel_archive(const fs::path& dir, const KernelResult& r, Json manifest);
KernelResult read_kernel_archive(const fs::path& dir);

std::string trace_csv(const SimTrace& t);
std::string events_csv(const SimTrace& t);
Json to_json(const Metrics& m);
Json to_json(const CohortSummary& s);

// trace.csv, metrics.json and events.csv for one run.
std::vector<fs::path> write_run(const fs::path& dir, const RunResult& r);

} // namespace safekernel::io
