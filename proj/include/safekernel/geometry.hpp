#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "safekernel/error.hpp"

namespace safekernel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace tolerance {
inline constexpr double feasibility = 1e-7;
inline constexpr double redundancy = 1e-7;
inline constexpr double unit_norm = 1e-9;
} // namespace tolerance

// Convex set {x : normals * x <= offsets} in half-space form. An empty set
// carries an explicit flag instead of an inconsistent row system.
class Polytope {
public:
    Polytope() = default;
    Polytope(Matrix normals, Vector offsets);

    static Polytope box(const Vector& lower, const Vector& upper);
    static Polytope interval(double lower, double upper);
    static Polytope empty_set(int dim);
    // Whole space; no rows.
    static Polytope universe(int dim);

    int dim() const noexcept { return dim_; }
    std::size_t rows() const noexcept { return static_cast<std::size_t>(offsets_.size()); }
    const Matrix& normals() const noexcept { return normals_; }
    const Vector& offsets() const noexcept { return offsets_; }
    bool is_empty() const noexcept { return empty_; }

private:
    Matrix normals_;
    Vector offsets_;
    int dim_ = 0;
    bool empty_ = false;
};

// Unit direction, or the zero flag when the query point lies in the set.
struct Direction {
    Vector l;
    bool zero = true;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded };
enum class Sense { Maximize, Minimize };

struct LpSolution {
    SolveStatus status = SolveStatus::Infeasible;
    Vector optimizer;
    double value = 0.0;
};

struct QpSolution {
    SolveStatus status = SolveStatus::Infeasible;
    Vector optimizer;
    double value = 0.0;
};

struct Projection {
    Vector point;
    double distance = 0.0;
    Direction l0;
};

struct Ball {
    Vector center;
    double radius = 0.0;
};

// Active set carried between consecutive projections onto the same set.
struct ProjectionWarmStart {
    std::vector<int> active;
    Vector point;
};

// Dense simplex on {x free : A x <= b}.
LpSolution solve_lp(const Vector& c, const Polytope& p, Sense sense);
LpSolution solve_lp(const Vector& c, const Matrix& a, const Vector& b, Sense sense);

// max <l, z> over P; +infinity when unbounded in l.
double support(const Polytope& p, const Vector& l);

bool contains(const Polytope& p, const Vector& x, double tol = tolerance::feasibility);

Polytope intersect(const Polytope& p, const Polytope& q);

// P + {map * v : v in box}. The box must be axis aligned; it is summed one
// generator (segment) at a time, which is exact.
Polytope minkowski_sum_box(const Polytope& p, const Matrix& map, const Polytope& box);
// P + S with S an axis-aligned box (or degenerate box) in the same space.
Polytope minkowski_sum_box(const Polytope& p, const Polytope& box);

// {x : M x in P}.
Polytope affine_preimage(const Polytope& p, const Matrix& m);
double condition_number(const Matrix& m);

Projection euclidean_project(const Polytope& p, const Vector& x);
Projection euclidean_project(const Polytope& p, const Vector& x, ProjectionWarmStart& warm);
QpSolution solve_projection_qp(const Polytope& p, const Vector& x, ProjectionWarmStart* warm);

// Drops every row whose removal leaves the set unchanged. Rows come back
// unit-normalised.
Polytope reduce(const Polytope& p);

// Largest inscribed ball; radius < 0 means empty.
Ball chebyshev_ball(const Polytope& p);

// min over rows of (offset - normal.x) / |normal|; negative outside.
double inner_distance(const Polytope& p, const Vector& x);

// Keeps at most `cap` rows. Dropped rows are the ones whose removal enlarges
// the set least; the remaining rows are then pulled in about the Chebyshev
// centre so the result stays inside P.
Polytope cap_facets(const Polytope& p, std::size_t cap);

// Axis-aligned bounding box as (lower, upper); infinite entries when unbounded.
std::pair<Vector, Vector> bounding_box(const Polytope& p);

// Set equality via mutual support comparison on each other's rows.
bool set_equal(const Polytope& p, const Polytope& q, double tol = 1e-6);

} // namespace safekernel
