#pragma once

#include <map>
#include <string>
#include <vector>

#include "safekernel/geometry.hpp"
#include "safekernel/viability.hpp"

namespace safekernel {

enum class BlendMode { HardSwitch, ConvexBlend };

struct SafetyBlendConfig {
    // Width of the ramp over which zeta goes from 0 to 1, in state units.
    double band_width = 0.0;
    BlendMode mode = BlendMode::ConvexBlend;

    void validate() const;
};

// 10% of the kernel's Chebyshev radius.
double default_band_width(const Polytope& kernel);

struct SafetyAction {
    double u = 0.0;
    Projection projection;
};

// Steepest return toward the kernel: argmin over U of <l0, B u>, with l0 the
// normalised projection residual of x. Ties (including x inside the kernel)
// resolve to the smallest input.
SafetyAction safety_action(const Vector& x, const Polytope& kernel, const Matrix& b, const Polytope& u,
                           ProjectionWarmStart* warm = nullptr);

struct SafetyDecision {
    double u_applied = 0.0;
    double u_pr = 0.0;
    double u_sp = 0.0;
    double zeta = 0.0;
    Direction l0;
    std::string worst_model;
    double distance_to_boundary = 0.0;
    // Target level the admissibility guard could honour; see `guard_inputs`.
    int guard_level = 0;
    bool breach = false;
};

// Signed distance from x to the kernel facets that the move from u_sp to
// u_pr pushes toward; +infinity when no facet is threatened, negative when x
// is outside the kernel.
double threatened_distance(const Vector& x, const Polytope& kernel, const Matrix& b, double u_pr, double u_sp);

// zeta = clamp(1 - d / band, 0, 1) and u = (1 - zeta) u_pr + zeta u_sp,
// clipped to U. Hard-switch mode uses u_pr strictly inside and u_sp otherwise.
SafetyDecision blend(double u_pr, double u_sp, const Vector& x, const Polytope& kernel, const Matrix& b,
                     const Polytope& u, const SafetyBlendConfig& cfg);

struct WorstCase {
    std::string id;
    Vector state;
    double drop_pct = 0.0;
};

// Model with the largest predicted BP drop among `ids`; equal drops resolve
// to the lexicographically smallest id.
WorstCase worst_case_state(const std::vector<const SafetyModel*>& models, const std::map<std::string, Vector>& states);

struct InputInterval {
    double lo = 0.0;
    double hi = 0.0;
    bool empty() const { return lo > hi; }
    double clip(double u) const { return std::min(std::max(u, lo), hi); }
};

// Inputs u in [u_lo, u_hi] with A_d x + B_d u in `target`.
InputInterval admissible_inputs(const Polytope& target, const LinearStateSpace& sys_d, const Vector& x, double u_lo,
                                double u_hi);

// One model seen by the sampled-data guard.
struct GuardedModel {
    const SafetyModel* model = nullptr;
    const LinearStateSpace* sys_d = nullptr;
    const Vector* state = nullptr;
    const KernelSequence* kernels = nullptr;
};

// Largest admissible input set, trying in turn: every model's successor in
// the active kernel (level 0), then each model's successor in its own k-step
// kernel for k = N, N-1, ..., 0 (levels 1 .. N+1). Returns the level used or
// -1 when even K cannot be guaranteed.
int guard_inputs(const std::vector<GuardedModel>& models, const Polytope& active, double u_lo, double u_hi,
                 InputInterval& out);

// Full safety layer for one sample: worst-case feedback, safety action,
// blend and the sampled-data admissibility guard.
SafetyDecision safe_input(double u_pr, const std::vector<GuardedModel>& models, const Polytope& active,
                          const Polytope& u, const SafetyBlendConfig& cfg, ProjectionWarmStart* warm = nullptr);

} // namespace safekernel
