#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "safekernel/geometry.hpp"
#include "safekernel/pkpd.hpp"

namespace safekernel {

struct KernelConfig {
    double horizon_min = 10.0;
    double dt_s = 5.0;
    Polytope constraint_set;
    Polytope input_set;
    std::size_t facet_cap = 512;

    // Recursion depth N = horizon / dt.
    int steps() const;
    void validate(int state_dim) const;
};

// Backward recursion V_0 = K, ..., V_N. When a step comes out empty the
// remaining entries are empty sets and `empty_at` names the first such step.
struct KernelSequence {
    std::vector<Polytope> steps;
    std::optional<int> empty_at;

    const Polytope& final_kernel() const { return steps.back(); }
};

struct KernelResult {
    std::map<std::string, KernelSequence> per_model;
    KernelSequence intersection;
    KernelConfig config;
};

// {x : exists u in U with A_d x + B_d u in V}.
Polytope one_step_pre(const Polytope& v, const LinearStateSpace& sys_d, const Polytope& u);

// `sys` is continuous time (rates per minute); it is discretised with cfg.dt_s.
KernelSequence viability_kernel(const LinearStateSpace& sys, const KernelConfig& cfg);
KernelSequence viability_kernel_discrete(const LinearStateSpace& sys_d, const Polytope& k, const Polytope& u,
                                         int steps, std::size_t facet_cap);

// Stepwise intersection across models.
KernelSequence model_invariant_kernel(const std::map<std::string, KernelSequence>& kernels);

// Intersection of the final kernels of the listed models.
Polytope intersect_final(const std::map<std::string, KernelSequence>& kernels,
                         const std::vector<std::string>& ids);

// Safety coordinates for one patient model: states (x1, x2, x3, Ce / ce_max)
// where ce_max is the effect-site concentration of the BP-drop bound. In these
// coordinates every model shares K = [0,10]^3 x [0,1].
struct SafetyModel {
    std::string id;
    double ce_max = 0.0;
    LinearStateSpace sys;
    PdParams bp_pd;
    double bp_baseline = 0.0;

    // Predicted BP drop (percent of baseline) for a state in these coordinates.
    double predicted_drop(const Vector& z) const;
};

SafetyModel safety_model(const PatientModel& m, double bp_bound_pct);

// Box of the anesthesia problem: PK concentrations in [0, pk_max] mg/l,
// normalised effect in [0, 1].
Polytope pkpd_constraint_set(double pk_max = 10.0);
Polytope pkpd_input_set(double u_max = 600.0);

// Per-model kernels (in parallel) plus their intersection.
KernelResult compute_kernels(const std::vector<SafetyModel>& models, const KernelConfig& cfg);
KernelResult compute_kernels(const std::vector<std::pair<std::string, LinearStateSpace>>& models,
                             const KernelConfig& cfg);

// Grid dynamic-programming oracle for small state dimension. Values are
// propagated by multilinear interpolation of a worst-case constraint-violation
// value function, which can only overestimate the exact value, so every
// surviving node is truly viable for all models under one input.
struct GridSet {
    Vector lower;
    double spacing = 0.0;
    std::vector<int> counts;
    std::vector<char> viable;

    std::size_t size() const { return viable.size(); }
    Vector node(std::size_t flat) const;
    std::size_t nearest(const Vector& x) const;
    // x is within one cell of a surviving node.
    bool near_viable(const Vector& x) const;
    std::size_t survivors() const;
};

struct OracleOptions {
    // The value function is propagated on a grid `refine` times finer than
    // the reported one; reported nodes are the coincident fine nodes.
    int refine = 1;
    std::size_t max_nodes = 2'000'000;
    std::size_t max_work = 20'000'000'000ull;
};

GridSet brute_force_kernel(const std::vector<LinearStateSpace>& models_d, const Polytope& k, const Polytope& u,
                           int steps, double spacing, int input_levels, OracleOptions options = {});

struct OracleComparison {
    std::size_t samples = 0;
    std::size_t counterexamples = 0;
    std::size_t oracle_cells = 0;
    std::size_t covered_cells = 0;
    double coverage() const {
        return oracle_cells == 0 ? 1.0 : static_cast<double>(covered_cells) / static_cast<double>(oracle_cells);
    }
    bool subset() const { return counterexamples == 0; }
};

// Samples `samples` points of `kernel` (rejection sampling inside its bounding
// box) and checks each against the oracle, then measures which share of the
// oracle survivors lies in the kernel.
OracleComparison compare_with_oracle(const Polytope& kernel, const GridSet& oracle, std::size_t samples,
                                     std::uint64_t seed);

} // namespace safekernel
