#include "safekernel/viability.hpp"

#include "safekernel/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace safekernel {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Polytope stack(const Polytope& p, const Polytope& q) {
    Matrix n(static_cast<Eigen::Index>(p.rows() + q.rows()), p.dim());
    Vector b(n.rows());
    n << p.normals(), q.normals();
    b << p.offsets(), q.offsets();
    return Polytope(std::move(n), std::move(b));
}

std::pair<double, double> interval_bounds(const Polytope& u) {
    if (u.dim() != 1) fail(ErrorCode::InvalidArgument, "input set must be one-dimensional");
    if (u.is_empty()) fail(ErrorCode::InvalidArgument, "input set is empty");
    const auto [lo, hi] = bounding_box(u);
    if (!std::isfinite(lo(0)) || !std::isfinite(hi(0)))
        fail(ErrorCode::InvalidArgument, "input set must be bounded");
    return {lo(0), hi(0)};
}

} // namespace

int KernelConfig::steps() const {
    return static_cast<int>(std::lround(horizon_min * 60.0 / dt_s));
}

void KernelConfig::validate(int state_dim) const {
    if (!(horizon_min > 0.0)) fail(ErrorCode::ConfigError, "kernel config: horizon must be positive");
    if (!(dt_s > 0.0)) fail(ErrorCode::ConfigError, "kernel config: dt must be positive");
    if (steps() < 1) fail(ErrorCode::ConfigError, "kernel config: horizon shorter than one sample");
    if (constraint_set.dim() != state_dim)
        fail(ErrorCode::ConfigError, "kernel config: constraint set dimension " +
                                         std::to_string(constraint_set.dim()) + " vs model states " +
                                         std::to_string(state_dim));
    if (constraint_set.is_empty() || chebyshev_ball(constraint_set).radius < 0.0)
        fail(ErrorCode::ConfigError, "kernel config: constraint set is empty");
    if (input_set.is_empty() || chebyshev_ball(input_set).radius < 0.0)
        fail(ErrorCode::ConfigError, "kernel config: input set is empty");
    if (facet_cap < static_cast<std::size_t>(2 * state_dim))
        fail(ErrorCode::ConfigError, "kernel config: facet cap too small");
}

Polytope one_step_pre(const Polytope& v, const LinearStateSpace& sys_d, const Polytope& u) {
    if (v.dim() != sys_d.states() || u.dim() != sys_d.inputs())
        fail(ErrorCode::DimensionMismatch, "one_step_pre: set and model dimensions differ");
    const Polytope shifted = minkowski_sum_box(v, -sys_d.b, u);
    return reduce(affine_preimage(shifted, sys_d.a));
}

KernelSequence viability_kernel_discrete(const LinearStateSpace& sys_d, const Polytope& k, const Polytope& u,
                                         int steps, std::size_t facet_cap) {
    if (k.dim() != sys_d.states() || u.dim() != sys_d.inputs())
        fail(ErrorCode::DimensionMismatch, "viability_kernel: set and model dimensions differ");
    KernelSequence seq;
    seq.steps.reserve(static_cast<std::size_t>(steps) + 1);
    seq.steps.push_back(reduce(k));
    for (int s = 1; s <= steps; ++s) {
        const Polytope& prev = seq.steps.back();
        if (prev.is_empty()) {
            seq.steps.push_back(Polytope::empty_set(k.dim()));
            continue;
        }
        const Polytope pre = affine_preimage(minkowski_sum_box(prev, -sys_d.b, u), sys_d.a);
        Polytope next = reduce(stack(k, pre));
        if (!next.is_empty() && chebyshev_ball(next).radius < 0.0) next = Polytope::empty_set(k.dim());
        if (next.is_empty()) {
            if (!seq.empty_at) seq.empty_at = s;
        } else if (next.rows() > facet_cap) {
            next = cap_facets(next, facet_cap);
        }
        seq.steps.push_back(std::move(next));
    }
    return seq;
}

KernelSequence viability_kernel(const LinearStateSpace& sys, const KernelConfig& cfg) {
    cfg.validate(sys.states());
    const auto sys_d = discretize_zoh(sys, cfg.dt_s / 60.0);
    return viability_kernel_discrete(sys_d, cfg.constraint_set, cfg.input_set, cfg.steps(), cfg.facet_cap);
}

KernelSequence model_invariant_kernel(const std::map<std::string, KernelSequence>& kernels) {
    if (kernels.empty()) fail(ErrorCode::InvalidArgument, "model_invariant_kernel: no models");
    const auto& first = kernels.begin()->second;
    const std::size_t len = first.steps.size();
    const int dim = first.steps.front().dim();
    for (const auto& [id, seq] : kernels) {
        if (seq.steps.size() != len)
            fail(ErrorCode::DimensionMismatch, "model_invariant_kernel: sequence length differs for " + id);
        for (const auto& p : seq.steps)
            if (p.dim() != dim) fail(ErrorCode::DimensionMismatch, "model_invariant_kernel: dimension differs for " + id);
    }
    KernelSequence out;
    out.steps.reserve(len);
    for (std::size_t s = 0; s < len; ++s) {
        Polytope acc = Polytope::universe(dim);
        bool empty = false;
        for (const auto& [id, seq] : kernels) {
            if (seq.steps[s].is_empty()) {
                empty = true;
                break;
            }
            acc = stack(acc, seq.steps[s]);
        }
        Polytope step = empty ? Polytope::empty_set(dim) : reduce(acc);
        if (step.is_empty() && !out.empty_at) out.empty_at = static_cast<int>(s);
        out.steps.push_back(std::move(step));
    }
    return out;
}

Polytope intersect_final(const std::map<std::string, KernelSequence>& kernels, const std::vector<std::string>& ids) {
    if (ids.empty()) fail(ErrorCode::NoModelsLeft, "intersect_final: no models");
    std::optional<Polytope> acc;
    for (const auto& id : ids) {
        const auto it = kernels.find(id);
        if (it == kernels.end()) fail(ErrorCode::MissingKernel, "no stored kernel for model " + id);
        const Polytope& p = it->second.final_kernel();
        if (p.is_empty()) return Polytope::empty_set(p.dim());
        acc = acc ? stack(*acc, p) : p;
    }
    return ids.size() == 1 ? *acc : reduce(*acc);
}

SafetyModel safety_model(const PatientModel& m, double bp_bound_pct) {
    m.validate();
    SafetyModel s;
    s.id = m.id;
    s.ce_max = invert_hill_bound(bp_bound_pct, m.bp_pd);
    s.sys = cascade(m.pk, m.bp_pd);
    // Row 4 of A and C rescaled so the fourth state is Ce / ce_max.
    s.sys.a.row(3) /= s.ce_max;
    s.sys.a(3, 3) *= s.ce_max;
    s.sys.b.row(3) /= s.ce_max;
    s.sys.c(0, 3) = s.ce_max;
    s.bp_pd = m.bp_pd;
    s.bp_baseline = m.bp_baseline;
    return s;
}

double SafetyModel::predicted_drop(const Vector& z) const {
    return hill_effect(std::max(0.0, z(3) * ce_max), bp_pd);
}

Polytope pkpd_constraint_set(double pk_max) {
    Vector lo = Vector::Zero(4);
    Vector hi(4);
    hi << pk_max, pk_max, pk_max, 1.0;
    return Polytope::box(lo, hi);
}

Polytope pkpd_input_set(double u_max) { return Polytope::interval(0.0, u_max); }

KernelResult compute_kernels(const std::vector<std::pair<std::string, LinearStateSpace>>& models,
                             const KernelConfig& cfg) {
    if (models.empty()) fail(ErrorCode::InvalidArgument, "compute_kernels: no models");
    for (const auto& m : models) cfg.validate(m.second.states());
    std::vector<KernelSequence> seqs(models.size());
    parallel_for(models.size(), [&](std::size_t i) { seqs[i] = viability_kernel(models[i].second, cfg); });
    KernelResult r;
    r.config = cfg;
    for (std::size_t i = 0; i < models.size(); ++i) {
        if (!r.per_model.emplace(models[i].first, std::move(seqs[i])).second)
            fail(ErrorCode::InvalidArgument, "compute_kernels: duplicate model id " + models[i].first);
    }
    r.intersection = model_invariant_kernel(r.per_model);
    return r;
}

KernelResult compute_kernels(const std::vector<SafetyModel>& models, const KernelConfig& cfg) {
    std::vector<std::pair<std::string, LinearStateSpace>> named;
    for (const auto& m : models) named.emplace_back(m.id, m.sys);
    return compute_kernels(named, cfg);
}

Vector GridSet::node(std::size_t flat) const {
    Vector x(lower.size());
    for (Eigen::Index j = 0; j < lower.size(); ++j) {
        const auto cj = static_cast<std::size_t>(counts[static_cast<std::size_t>(j)]);
        x(j) = lower(j) + spacing * static_cast<double>(flat % cj);
        flat /= cj;
    }
    return x;
}

std::size_t GridSet::nearest(const Vector& x) const {
    std::size_t flat = 0, stride = 1;
    for (Eigen::Index j = 0; j < lower.size(); ++j) {
        const int cj = counts[static_cast<std::size_t>(j)];
        const int i = std::clamp(static_cast<int>(std::lround((x(j) - lower(j)) / spacing)), 0, cj - 1);
        flat += stride * static_cast<std::size_t>(i);
        stride *= static_cast<std::size_t>(cj);
    }
    return flat;
}

bool GridSet::near_viable(const Vector& x) const {
    const auto d = static_cast<int>(lower.size());
    std::vector<int> base(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
        base[static_cast<std::size_t>(j)] = static_cast<int>(std::lround((x(j) - lower(j)) / spacing));
    int combos = 1;
    for (int j = 0; j < d; ++j) combos *= 3;
    for (int c = 0; c < combos; ++c) {
        int code = c;
        std::size_t flat = 0, stride = 1;
        bool inside = true;
        for (int j = 0; j < d; ++j) {
            const int i = base[static_cast<std::size_t>(j)] + code % 3 - 1;
            code /= 3;
            const int cj = counts[static_cast<std::size_t>(j)];
            if (i < 0 || i >= cj) {
                inside = false;
                break;
            }
            flat += stride * static_cast<std::size_t>(i);
            stride *= static_cast<std::size_t>(cj);
        }
        if (inside && viable[flat]) return true;
    }
    return false;
}

std::size_t GridSet::survivors() const {
    return static_cast<std::size_t>(std::count(viable.begin(), viable.end(), char{1}));
}

GridSet brute_force_kernel(const std::vector<LinearStateSpace>& models_d, const Polytope& k, const Polytope& u,
                           int steps, double spacing, int input_levels, OracleOptions options) {
    if (models_d.empty()) fail(ErrorCode::InvalidArgument, "brute_force_kernel: no models");
    const int d = k.dim();
    if (d < 1 || d > 3) fail(ErrorCode::InvalidArgument, "brute_force_kernel: state dimension must be 1 to 3");
    for (const auto& m : models_d)
        if (m.states() != d || m.inputs() != 1)
            fail(ErrorCode::DimensionMismatch, "brute_force_kernel: models must have the set's dimension and one input");
    if (!(spacing > 0.0) || input_levels < 1 || steps < 0 || options.refine < 1)
        fail(ErrorCode::InvalidArgument, "brute_force_kernel: bad grid parameters");
    const auto [ulo, uhi] = interval_bounds(u);
    const auto [lo, hi] = bounding_box(k);
    if (!lo.allFinite() || !hi.allFinite()) fail(ErrorCode::InvalidArgument, "brute_force_kernel: K must be bounded");

    GridSet g;
    g.lower = lo;
    g.spacing = spacing;
    const double h = spacing / options.refine;
    std::vector<int> fine_counts;
    std::size_t nodes = 1;
    for (int j = 0; j < d; ++j) {
        const double cells = (hi(j) - lo(j)) / spacing;
        if (cells > 1e7) fail(ErrorCode::ResourceLimit, "brute_force_kernel: grid too large");
        const int c = static_cast<int>(std::floor(cells + 1e-9)) + 1;
        g.counts.push_back(c);
        fine_counts.push_back((c - 1) * options.refine + 1);
        nodes *= static_cast<std::size_t>(fine_counts.back());
        if (nodes > options.max_nodes)
            fail(ErrorCode::ResourceLimit, "brute_force_kernel: grid too large (more than " +
                                               std::to_string(options.max_nodes) + " nodes)");
    }
    const std::size_t corners = std::size_t{1} << d;
    const std::size_t work = nodes * static_cast<std::size_t>(input_levels) * models_d.size() * corners *
                             static_cast<std::size_t>(std::max(steps, 1));
    if (work > options.max_work)
        fail(ErrorCode::ResourceLimit, "brute_force_kernel: work estimate " + std::to_string(work) + " exceeds limit");

    auto fine_node = [&](std::size_t flat) {
        Vector x(d);
        for (int j = 0; j < d; ++j) {
            const auto cj = static_cast<std::size_t>(fine_counts[static_cast<std::size_t>(j)]);
            x(j) = lo(j) + h * static_cast<double>(flat % cj);
            flat /= cj;
        }
        return x;
    };

    std::vector<double> levels(static_cast<std::size_t>(input_levels));
    for (int l = 0; l < input_levels; ++l)
        levels[static_cast<std::size_t>(l)] =
            input_levels == 1 ? ulo : ulo + (uhi - ulo) * static_cast<double>(l) / (input_levels - 1);

    // Signed violation of K, scaled per row; the value function is convex.
    std::vector<double> v0(nodes);
    std::vector<Vector> drift(nodes * models_d.size());
    for (std::size_t n = 0; n < nodes; ++n) {
        const Vector x = fine_node(n);
        double worst = -kInf;
        for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(k.rows()); ++r) {
            const double norm = k.normals().row(r).norm();
            if (norm > 0.0) worst = std::max(worst, (k.normals().row(r).dot(x) - k.offsets()(r)) / norm);
        }
        v0[n] = worst;
        for (std::size_t m = 0; m < models_d.size(); ++m) drift[n * models_d.size() + m] = models_d[m].a * x;
    }

    // Multilinear interpolation; successors leaving the grid box are infinitely bad.
    std::vector<double> val = v0, next(nodes);
    auto interpolate = [&](const Vector& y) {
        double frac[3] = {0.0, 0.0, 0.0};
        std::size_t base = 0, stride = 1;
        std::size_t strides[3] = {0, 0, 0};
        for (int j = 0; j < d; ++j) {
            const int cj = fine_counts[static_cast<std::size_t>(j)];
            double t = (y(j) - lo(j)) / h;
            if (t < -1e-9 || t > (cj - 1) + 1e-9) return kInf;
            t = std::clamp(t, 0.0, static_cast<double>(cj - 1));
            int i = static_cast<int>(std::floor(t));
            double f = t - i;
            if (i >= cj - 1) {
                i = cj - 1;
                f = 0.0;
            }
            // Snap round-off so that exact hits do not pull in a neighbour.
            if (f < 1e-9) f = 0.0;
            if (f > 1.0 - 1e-9) {
                f = 0.0;
                ++i;
            }
            frac[j] = f;
            base += stride * static_cast<std::size_t>(i);
            strides[j] = stride;
            stride *= static_cast<std::size_t>(cj);
        }
        double v = 0.0;
        for (std::size_t c = 0; c < corners; ++c) {
            double w = 1.0;
            std::size_t flat = base;
            for (int j = 0; j < d; ++j) {
                if ((c >> j) & 1u) {
                    if (frac[j] == 0.0) {
                        w = 0.0;
                        break;
                    }
                    w *= frac[j];
                    flat += strides[j];
                } else {
                    w *= 1.0 - frac[j];
                }
            }
            if (w != 0.0) v += w * val[flat];
        }
        return v;
    };

    for (int s = 0; s < steps; ++s) {
        for (std::size_t n = 0; n < nodes; ++n) {
            double best = kInf;
            for (std::size_t l = 0; l < levels.size() && best > v0[n]; ++l) {
                double worst = -kInf;
                for (std::size_t m = 0; m < models_d.size() && worst < best; ++m) {
                    const Vector y = drift[n * models_d.size() + m] + models_d[m].b.col(0) * levels[l];
                    worst = std::max(worst, interpolate(y));
                }
                best = std::min(best, worst);
            }
            next[n] = std::max(v0[n], best);
        }
        if (next == val) break;
        val.swap(next);
    }

    std::size_t coarse = 1;
    for (int c : g.counts) coarse *= static_cast<std::size_t>(c);
    g.viable.resize(coarse);
    for (std::size_t n = 0; n < coarse; ++n) {
        std::size_t rest = n, flat = 0, stride = 1;
        for (int j = 0; j < d; ++j) {
            const auto cj = static_cast<std::size_t>(g.counts[static_cast<std::size_t>(j)]);
            flat += stride * (rest % cj) * static_cast<std::size_t>(options.refine);
            rest /= cj;
            stride *= static_cast<std::size_t>(fine_counts[static_cast<std::size_t>(j)]);
        }
        g.viable[n] = val[flat] <= 1e-12 ? 1 : 0;
    }
    return g;
}

OracleComparison compare_with_oracle(const Polytope& kernel, const GridSet& oracle, std::size_t samples,
                                     std::uint64_t seed) {
    if (kernel.dim() != oracle.lower.size())
        fail(ErrorCode::DimensionMismatch, "compare_with_oracle: dimensions differ");
    OracleComparison r;
    r.oracle_cells = oracle.survivors();
    for (std::size_t n = 0; n < oracle.size(); ++n)
        if (oracle.viable[n] && !kernel.is_empty() && contains(kernel, oracle.node(n), 1e-6)) ++r.covered_cells;
    if (kernel.is_empty() || chebyshev_ball(kernel).radius < 0.0) return r;

    const auto [lo, hi] = bounding_box(kernel);
    std::mt19937_64 rng(seed);
    std::vector<std::uniform_real_distribution<double>> coord;
    for (Eigen::Index j = 0; j < lo.size(); ++j) coord.emplace_back(lo(j), hi(j));
    Vector x(lo.size());
    std::size_t attempts = 0;
    while (r.samples < samples && attempts < 1000 * samples) {
        ++attempts;
        for (Eigen::Index j = 0; j < lo.size(); ++j) x(j) = coord[static_cast<std::size_t>(j)](rng);
        if (!contains(kernel, x, 0.0)) continue;
        ++r.samples;
        if (!oracle.near_viable(x)) ++r.counterexamples;
    }
    return r;
}

} // namespace safekernel
