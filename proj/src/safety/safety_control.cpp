#include "safekernel/safety_control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace safekernel {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTie = 1e-12;
constexpr double kGuardSlack = 1e-9;

std::pair<Vector, Vector> input_box(const Polytope& u) {
    if (u.is_empty()) fail(ErrorCode::InvalidArgument, "input set is empty");
    auto [lo, hi] = bounding_box(u);
    if (!lo.allFinite() || !hi.allFinite()) fail(ErrorCode::InvalidArgument, "input set must be bounded");
    return {lo, hi};
}

} // namespace

void SafetyBlendConfig::validate() const {
    if (mode == BlendMode::ConvexBlend && !(band_width > 0.0))
        fail(ErrorCode::ConfigError, "blend: band width must be positive for the convex blend");
}

double default_band_width(const Polytope& kernel) {
    const Ball ball = chebyshev_ball(kernel);
    if (!(ball.radius > 0.0)) fail(ErrorCode::EmptyKernel, "default_band_width: kernel has no interior");
    return 0.1 * ball.radius;
}

SafetyAction safety_action(const Vector& x, const Polytope& kernel, const Matrix& b, const Polytope& u,
                           ProjectionWarmStart* warm) {
    if (kernel.is_empty()) fail(ErrorCode::EmptyKernel, "safety_action: kernel is empty");
    if (!x.allFinite()) fail(ErrorCode::InvalidArgument, "safety_action: state not finite");
    if (b.rows() != x.size() || b.cols() != u.dim())
        fail(ErrorCode::DimensionMismatch, "safety_action: B shape does not match state and input");
    SafetyAction out;
    out.projection = warm ? euclidean_project(kernel, x, *warm) : euclidean_project(kernel, x);
    const auto [lo, hi] = input_box(u);
    Vector choice = lo;
    if (!out.projection.l0.zero) {
        const Vector g = b.transpose() * out.projection.l0.l;
        for (Eigen::Index j = 0; j < g.size(); ++j) choice(j) = g(j) < -kTie ? hi(j) : lo(j);
    }
    out.u = choice(0);
    return out;
}

double threatened_distance(const Vector& x, const Polytope& kernel, const Matrix& b, double u_pr, double u_sp) {
    if (kernel.is_empty()) fail(ErrorCode::EmptyKernel, "threatened_distance: kernel is empty");
    const double outside = inner_distance(kernel, x);
    if (outside < 0.0) return outside;
    const Vector push = kernel.normals() * (b.col(0) * (u_pr - u_sp));
    double best = kInf;
    for (Eigen::Index r = 0; r < push.size(); ++r) {
        if (push(r) <= kTie) continue;
        const double norm = kernel.normals().row(r).norm();
        best = std::min(best, (kernel.offsets()(r) - kernel.normals().row(r).dot(x)) / norm);
    }
    return best;
}

SafetyDecision blend(double u_pr, double u_sp, const Vector& x, const Polytope& kernel, const Matrix& b,
                     const Polytope& u, const SafetyBlendConfig& cfg) {
    cfg.validate();
    const auto [lo, hi] = input_box(u);
    SafetyDecision out;
    out.u_pr = u_pr;
    out.u_sp = u_sp;
    const double d = threatened_distance(x, kernel, b, u_pr, u_sp);
    out.distance_to_boundary = d;
    if (cfg.mode == BlendMode::HardSwitch) {
        out.zeta = d > 0.0 ? 0.0 : 1.0;
    } else {
        out.zeta = std::isinf(d) && d > 0 ? 0.0 : std::clamp(1.0 - d / cfg.band_width, 0.0, 1.0);
    }
    out.u_applied = std::clamp((1.0 - out.zeta) * u_pr + out.zeta * u_sp, lo(0), hi(0));
    return out;
}

WorstCase worst_case_state(const std::vector<const SafetyModel*>& models, const std::map<std::string, Vector>& states) {
    if (models.empty()) fail(ErrorCode::NoModelsLeft, "worst_case_state: every model has been falsified");
    std::vector<const SafetyModel*> order = models;
    std::sort(order.begin(), order.end(), [](const SafetyModel* a, const SafetyModel* b) { return a->id < b->id; });
    WorstCase best;
    best.drop_pct = -kInf;
    for (const SafetyModel* m : order) {
        const auto it = states.find(m->id);
        if (it == states.end()) fail(ErrorCode::MissingKernel, "worst_case_state: no state for model " + m->id);
        const double drop = m->predicted_drop(it->second);
        if (drop > best.drop_pct) {
            best.id = m->id;
            best.state = it->second;
            best.drop_pct = drop;
        }
    }
    return best;
}

InputInterval admissible_inputs(const Polytope& target, const LinearStateSpace& sys_d, const Vector& x, double u_lo,
                                double u_hi) {
    InputInterval iv{u_lo, u_hi};
    if (target.is_empty()) {
        iv.lo = 1.0;
        iv.hi = 0.0;
        return iv;
    }
    const Vector drift = target.normals() * (sys_d.a * x);
    const Vector gain = target.normals() * sys_d.b.col(0);
    for (Eigen::Index r = 0; r < drift.size(); ++r) {
        const double rhs = target.offsets()(r) - drift(r) + kGuardSlack;
        const double c = gain(r);
        if (std::abs(c) <= 1e-14) {
            if (rhs < 0.0) {
                iv.lo = 1.0;
                iv.hi = 0.0;
                return iv;
            }
        } else if (c > 0.0) {
            iv.hi = std::min(iv.hi, rhs / c);
        } else {
            iv.lo = std::max(iv.lo, rhs / c);
        }
    }
    return iv;
}

int guard_inputs(const std::vector<GuardedModel>& models, const Polytope& active, double u_lo, double u_hi,
                 InputInterval& out) {
    auto attempt = [&](auto&& target_of) {
        InputInterval iv{u_lo, u_hi};
        for (const auto& g : models) {
            const InputInterval one = admissible_inputs(target_of(g), *g.sys_d, *g.state, u_lo, u_hi);
            iv.lo = std::max(iv.lo, one.lo);
            iv.hi = std::min(iv.hi, one.hi);
            if (iv.empty()) break;
        }
        return iv;
    };
    InputInterval iv = attempt([&](const GuardedModel&) -> const Polytope& { return active; });
    if (!iv.empty()) {
        out = iv;
        return 0;
    }
    std::size_t depth = 0;
    for (const auto& g : models)
        if (g.kernels) depth = std::max(depth, g.kernels->steps.size());
    for (std::size_t k = depth; k-- > 0;) {
        iv = attempt([&](const GuardedModel& g) -> const Polytope& {
            const auto& steps = g.kernels->steps;
            return steps[std::min(k, steps.size() - 1)];
        });
        if (!iv.empty()) {
            out = iv;
            return static_cast<int>(depth - k);
        }
    }
    return -1;
}

SafetyDecision safe_input(double u_pr, const std::vector<GuardedModel>& models, const Polytope& active,
                          const Polytope& u, const SafetyBlendConfig& cfg, ProjectionWarmStart* warm) {
    if (models.empty()) fail(ErrorCode::NoModelsLeft, "safe_input: every model has been falsified");
    for (const auto& g : models)
        if (!g.model || !g.sys_d || !g.state || !g.kernels)
            fail(ErrorCode::InvalidArgument, "safe_input: incomplete model entry");
    std::vector<const SafetyModel*> ms;
    std::map<std::string, Vector> states;
    const GuardedModel* by_id = nullptr;
    for (const auto& g : models) {
        ms.push_back(g.model);
        states[g.model->id] = *g.state;
    }
    const WorstCase wc = worst_case_state(ms, states);
    for (const auto& g : models)
        if (g.model->id == wc.id) by_id = &g;

    const auto [lo, hi] = input_box(u);
    const SafetyAction act = safety_action(wc.state, active, by_id->sys_d->b, u, warm);
    SafetyDecision out = blend(u_pr, act.u, wc.state, active, by_id->sys_d->b, u, cfg);
    out.l0 = act.projection.l0;
    out.worst_model = wc.id;
    out.distance_to_boundary = inner_distance(active, wc.state);

    InputInterval iv;
    out.guard_level = guard_inputs(models, active, lo(0), hi(0), iv);
    if (out.guard_level < 0) {
        out.breach = true;
        out.u_applied = act.u;
    } else {
        out.u_applied = iv.clip(out.u_applied);
    }
    return out;
}

} // namespace safekernel
