#include "safekernel/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace safekernel {
namespace {

constexpr double kActiveTol = 1e-9;

Vector feasible_start(const Polytope& p, const ProjectionWarmStart* warm) {
    if (warm != nullptr && warm->point.size() == p.dim() && contains(p, warm->point, 1e-12))
        return warm->point;
    const Ball ball = chebyshev_ball(p);
    if (ball.radius < -tolerance::feasibility) fail(ErrorCode::EmptySet, "euclidean_project: empty set");
    return ball.center;
}

} // namespace

// Primal active-set method for min |v - x|^2 s.t. N v <= b. The working set
// stays linearly independent because a blocking row always has a positive
// component along a step that lies in the null space of the current rows.
QpSolution solve_projection_qp(const Polytope& p, const Vector& x, ProjectionWarmStart* warm) {
    QpSolution out;
    if (p.dim() != x.size()) fail(ErrorCode::DimensionMismatch, "euclidean_project: dimension");
    if (p.is_empty()) return out;
    if (contains(p, x, 0.0)) {
        out.status = SolveStatus::Optimal;
        out.optimizer = x;
        out.value = 0.0;
        if (warm != nullptr) {
            warm->active.clear();
            warm->point = x;
        }
        return out;
    }

    const Matrix& n = p.normals();
    const Vector& b = p.offsets();
    const auto m = static_cast<int>(p.rows());
    const auto d = static_cast<int>(p.dim());
    Vector v = feasible_start(p, warm);

    std::vector<int> work;
    if (warm != nullptr) {
        for (int i : warm->active) {
            if (i < 0 || i >= m || static_cast<int>(work.size()) >= d) continue;
            if (std::abs(n.row(i).dot(v) - b(i)) > kActiveTol) continue;
            Matrix trial(static_cast<Eigen::Index>(work.size() + 1), d);
            for (std::size_t k = 0; k < work.size(); ++k)
                trial.row(static_cast<Eigen::Index>(k)) = n.row(work[k]);
            trial.row(static_cast<Eigen::Index>(work.size())) = n.row(i);
            Eigen::FullPivLU<Matrix> lu(trial);
            if (lu.rank() == trial.rows()) work.push_back(i);
        }
    }

    const int max_iter = 20 * (m + d) + 100;
    for (int iter = 0; iter < max_iter; ++iter) {
        Vector target = x;
        Vector lambda;
        if (!work.empty()) {
            Matrix nw(static_cast<Eigen::Index>(work.size()), d);
            Vector bw(static_cast<Eigen::Index>(work.size()));
            for (std::size_t k = 0; k < work.size(); ++k) {
                nw.row(static_cast<Eigen::Index>(k)) = n.row(work[k]);
                bw(static_cast<Eigen::Index>(k)) = b(work[k]);
            }
            const Matrix gram = nw * nw.transpose();
            lambda = gram.ldlt().solve(nw * x - bw);
            target = x - nw.transpose() * lambda;
        }
        const Vector step = target - v;
        if (step.norm() <= 1e-13 * (1.0 + v.norm())) {
            if (work.empty()) break;
            Eigen::Index worst = 0;
            const double most_negative = lambda.minCoeff(&worst);
            if (most_negative >= -1e-12) break;
            work.erase(work.begin() + worst);
            continue;
        }
        double alpha = 1.0;
        int blocking = -1;
        for (int j = 0; j < m; ++j) {
            if (std::find(work.begin(), work.end(), j) != work.end()) continue;
            const double rate = n.row(j).dot(step);
            if (rate <= 1e-14) continue;
            const double room = std::max(0.0, b(j) - n.row(j).dot(v));
            const double a = room / rate;
            if (a < alpha) {
                alpha = a;
                blocking = j;
            }
        }
        v += alpha * step;
        if (blocking >= 0) work.push_back(blocking);
    }

    out.status = SolveStatus::Optimal;
    out.optimizer = v;
    out.value = (x - v).squaredNorm();
    if (warm != nullptr) {
        warm->active = work;
        warm->point = v;
    }
    return out;
}

Projection euclidean_project(const Polytope& p, const Vector& x, ProjectionWarmStart& warm) {
    if (p.is_empty()) fail(ErrorCode::EmptySet, "euclidean_project: empty set");
    const auto sol = solve_projection_qp(p, x, &warm);
    if (sol.status != SolveStatus::Optimal) fail(ErrorCode::EmptySet, "euclidean_project: empty set");
    Projection out;
    out.point = sol.optimizer;
    const Vector residual = x - out.point;
    out.distance = residual.norm();
    if (out.distance > 0.0) {
        out.l0.l = residual / out.distance;
        out.l0.zero = false;
    } else {
        out.l0.l = Vector::Zero(x.size());
        out.l0.zero = true;
    }
    return out;
}

Projection euclidean_project(const Polytope& p, const Vector& x) {
    ProjectionWarmStart scratch;
    return euclidean_project(p, x, scratch);
}

} // namespace safekernel
