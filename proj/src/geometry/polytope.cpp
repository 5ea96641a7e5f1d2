#include "safekernel/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace safekernel {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kZeroNorm = 1e-14;

void require_dim(const Polytope& p, Eigen::Index n, const char* what) {
    if (p.dim() != n)
        fail(ErrorCode::DimensionMismatch,
             std::string(what) + ": dimension " + std::to_string(n) + " vs set dimension " +
                 std::to_string(p.dim()));
}

Polytope from_rows(const Matrix& normals, const Vector& offsets, const std::vector<int>& keep) {
    Matrix n(static_cast<Eigen::Index>(keep.size()), normals.cols());
    Vector b(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        n.row(static_cast<Eigen::Index>(k)) = normals.row(keep[k]);
        b(static_cast<Eigen::Index>(k)) = offsets(keep[k]);
    }
    return Polytope(std::move(n), std::move(b));
}

// Unit-normalises rows, drops null rows and merges parallel duplicates.
// Returns false when a null row is inconsistent (0 <= negative).
bool normalise_rows(const Polytope& p, Matrix& normals, Vector& offsets) {
    const Eigen::Index d = p.dim();
    std::vector<Eigen::Index> order;
    Matrix n(static_cast<Eigen::Index>(p.rows()), d);
    Vector b(static_cast<Eigen::Index>(p.rows()));
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(p.rows()); ++i) {
        const double norm = p.normals().row(i).norm();
        if (norm <= kZeroNorm) {
            if (p.offsets()(i) < -tolerance::feasibility) return false;
            continue;
        }
        n.row(count) = p.normals().row(i) / norm;
        b(count) = p.offsets()(i) / norm;
        ++count;
    }
    order.resize(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index c) {
        for (Eigen::Index j = 0; j < d; ++j) {
            if (n(a, j) != n(c, j)) return n(a, j) < n(c, j);
        }
        return b(a) < b(c);
    });
    std::vector<Eigen::Index> kept;
    for (auto i : order) {
        bool merged = false;
        for (auto it = kept.rbegin(); it != kept.rend(); ++it) {
            if ((n.row(*it) - n.row(i)).cwiseAbs().maxCoeff() <= 1e-12) {
                b(*it) = std::min(b(*it), b(i));
                merged = true;
                break;
            }
            // Sorted by first coordinate: stop once it is clearly different.
            if (n(i, 0) - n(*it, 0) > 1e-12) break;
        }
        if (!merged) kept.push_back(i);
    }
    normals.resize(static_cast<Eigen::Index>(kept.size()), d);
    offsets.resize(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) {
        normals.row(static_cast<Eigen::Index>(k)) = n.row(kept[k]);
        offsets(static_cast<Eigen::Index>(k)) = b(kept[k]);
    }
    return true;
}

// max <c, x> over the rows listed in `subset` plus the bound <c, x> <= cap.
LpSolution lp_on_subset(const Matrix& normals, const Vector& offsets, const std::vector<int>& subset,
                        const Vector& c, double cap) {
    const auto m = static_cast<Eigen::Index>(subset.size());
    Matrix a(m + 1, normals.cols());
    Vector b(m + 1);
    for (Eigen::Index k = 0; k < m; ++k) {
        a.row(k) = normals.row(subset[static_cast<std::size_t>(k)]);
        b(k) = offsets(subset[static_cast<std::size_t>(k)]);
    }
    a.row(m) = c.transpose();
    b(m) = cap;
    return solve_lp(c, a, b, Sense::Maximize);
}

// Row i is redundant when the maximum of its normal over the other rows does
// not exceed its offset.
std::vector<int> drop_redundant_sequential(const Matrix& normals, const Vector& offsets,
                                           std::vector<int> rows) {
    for (std::size_t k = 0; k < rows.size();) {
        std::vector<int> others;
        others.reserve(rows.size() - 1);
        for (std::size_t j = 0; j < rows.size(); ++j)
            if (j != k) others.push_back(rows[j]);
        const int i = rows[k];
        const Vector c = normals.row(i).transpose();
        const auto sol = lp_on_subset(normals, offsets, others, c, offsets(i) + 1.0);
        if (sol.status == SolveStatus::Optimal && sol.value <= offsets(i) + tolerance::redundancy) {
            rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(k));
        } else {
            ++k;
        }
    }
    return rows;
}

} // namespace

Polytope::Polytope(Matrix normals, Vector offsets)
    : normals_(std::move(normals)), offsets_(std::move(offsets)),
      dim_(static_cast<int>(normals_.cols())) {
    if (normals_.rows() != offsets_.size())
        fail(ErrorCode::DimensionMismatch, "Polytope: normals rows != offsets length");
    if (dim_ <= 0) fail(ErrorCode::InvalidArgument, "Polytope: dimension must be positive");
}

Polytope Polytope::box(const Vector& lower, const Vector& upper) {
    if (lower.size() != upper.size() || lower.size() == 0)
        fail(ErrorCode::DimensionMismatch, "Polytope::box: bound sizes differ");
    const Eigen::Index d = lower.size();
    Matrix n = Matrix::Zero(2 * d, d);
    Vector b(2 * d);
    for (Eigen::Index j = 0; j < d; ++j) {
        n(2 * j, j) = -1.0;
        b(2 * j) = -lower(j);
        n(2 * j + 1, j) = 1.0;
        b(2 * j + 1) = upper(j);
    }
    Polytope p(std::move(n), std::move(b));
    if ((lower.array() > upper.array()).any()) p.empty_ = true;
    return p;
}

Polytope Polytope::interval(double lower, double upper) {
    return box(Vector::Constant(1, lower), Vector::Constant(1, upper));
}

Polytope Polytope::empty_set(int dim) {
    Polytope p(Matrix(0, dim), Vector(0));
    p.empty_ = true;
    return p;
}

Polytope Polytope::universe(int dim) { return Polytope(Matrix(0, dim), Vector(0)); }

double support(const Polytope& p, const Vector& l) {
    require_dim(p, l.size(), "support");
    if (!l.allFinite()) fail(ErrorCode::InvalidArgument, "support: direction not finite");
    if (p.is_empty()) fail(ErrorCode::EmptySet, "support: empty set");
    const auto sol = solve_lp(l, p, Sense::Maximize);
    switch (sol.status) {
    case SolveStatus::Optimal: return sol.value;
    case SolveStatus::Unbounded: return kInf;
    case SolveStatus::Infeasible: break;
    }
    fail(ErrorCode::EmptySet, "support: empty set");
}

bool contains(const Polytope& p, const Vector& x, double tol) {
    require_dim(p, x.size(), "contains");
    if (p.is_empty()) return false;
    if (p.rows() == 0) return true;
    return ((p.normals() * x - p.offsets()).array() <= tol).all();
}

Polytope intersect(const Polytope& p, const Polytope& q) {
    if (p.dim() != q.dim()) fail(ErrorCode::DimensionMismatch, "intersect: dimensions differ");
    if (p.is_empty() || q.is_empty()) return Polytope::empty_set(p.dim());
    Matrix n(static_cast<Eigen::Index>(p.rows() + q.rows()), p.dim());
    Vector b(n.rows());
    n << p.normals(), q.normals();
    b << p.offsets(), q.offsets();
    return reduce(Polytope(std::move(n), std::move(b)));
}

namespace {

// P + {a + t d : t in [0, 1]} by eliminating t from the lifted system.
Polytope add_segment(const Polytope& p, const Vector& a, const Vector& d) {
    const Matrix& n = p.normals();
    const Vector& b = p.offsets();
    const Vector g = n * d;
    const Vector na = n * a;
    const double scale = d.norm();
    if (scale <= kZeroNorm) return Polytope(n, b + na);

    std::vector<Eigen::Index> pos, neg;
    std::vector<Vector> rows;
    std::vector<double> offs;
    for (Eigen::Index j = 0; j < n.rows(); ++j) {
        const double tol = 1e-12 * n.row(j).norm() * scale;
        if (g(j) > tol) {
            pos.push_back(j);
            rows.emplace_back(n.row(j).transpose());
            offs.push_back(b(j) + na(j) + g(j));
        } else if (g(j) < -tol) {
            neg.push_back(j);
            rows.emplace_back(n.row(j).transpose());
            offs.push_back(b(j) + na(j));
        } else {
            rows.emplace_back(n.row(j).transpose());
            offs.push_back(b(j) + na(j) + std::max(0.0, g(j)));
        }
    }
    for (auto j : pos) {
        for (auto k : neg) {
            const double gk = -g(k);
            Vector row = gk * n.row(j).transpose() + g(j) * n.row(k).transpose();
            const double norm = row.norm();
            if (norm <= kZeroNorm) continue;
            const double off = gk * b(j) + g(j) * b(k) + row.dot(a);
            rows.push_back(row / norm);
            offs.push_back(off / norm);
        }
    }
    Matrix out(static_cast<Eigen::Index>(rows.size()), p.dim());
    Vector ob(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
        ob(static_cast<Eigen::Index>(r)) = offs[r];
    }
    return Polytope(std::move(out), std::move(ob));
}

// Per-coordinate bounds of an axis-aligned box polytope.
std::pair<Vector, Vector> box_bounds(const Polytope& box) {
    const Eigen::Index d = box.dim();
    Vector lo = Vector::Constant(d, -kInf);
    Vector hi = Vector::Constant(d, kInf);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(box.rows()); ++i) {
        Eigen::Index axis = -1;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (std::abs(box.normals()(i, j)) <= kZeroNorm) continue;
            if (axis != -1)
                fail(ErrorCode::UnsupportedSummand, "minkowski_sum_box: summand is not an axis-aligned box");
            axis = j;
        }
        if (axis == -1) continue;
        const double coef = box.normals()(i, axis);
        const double bound = box.offsets()(i) / coef;
        if (coef > 0)
            hi(axis) = std::min(hi(axis), bound);
        else
            lo(axis) = std::max(lo(axis), bound);
    }
    if (!lo.allFinite() || !hi.allFinite())
        fail(ErrorCode::UnsupportedSummand, "minkowski_sum_box: summand box is unbounded");
    return {lo, hi};
}

} // namespace

Polytope minkowski_sum_box(const Polytope& p, const Matrix& map, const Polytope& box) {
    if (map.rows() != p.dim() || map.cols() != box.dim())
        fail(ErrorCode::DimensionMismatch, "minkowski_sum_box: map shape");
    if (p.is_empty() || box.is_empty()) return Polytope::empty_set(p.dim());
    const auto [lo, hi] = box_bounds(box);
    if ((lo.array() > hi.array() + tolerance::feasibility).any()) return Polytope::empty_set(p.dim());
    Polytope acc = p;
    for (Eigen::Index j = 0; j < map.cols(); ++j) {
        const Vector a = map.col(j) * lo(j);
        const Vector d = map.col(j) * (hi(j) - lo(j));
        acc = add_segment(acc, a, d);
        if (map.cols() > 1) acc = reduce(acc);
    }
    return acc;
}

Polytope minkowski_sum_box(const Polytope& p, const Polytope& box) {
    if (p.dim() != box.dim()) fail(ErrorCode::DimensionMismatch, "minkowski_sum_box: dimensions differ");
    return minkowski_sum_box(p, Matrix::Identity(p.dim(), p.dim()), box);
}

double condition_number(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0) return kInf;
    const double smallest = s(s.size() - 1);
    return smallest <= 0.0 ? kInf : s(0) / smallest;
}

Polytope affine_preimage(const Polytope& p, const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() != p.dim())
        fail(ErrorCode::DimensionMismatch, "affine_preimage: map must be square and match the set");
    const double cond = condition_number(m);
    if (!(cond < 1e12))
        fail(ErrorCode::SingularMatrix, "affine_preimage: map is numerically singular (cond=" +
                                            std::to_string(cond) + ")");
    if (p.is_empty()) return Polytope::empty_set(p.dim());
    return Polytope(p.normals() * m, p.offsets());
}

Ball chebyshev_ball(const Polytope& p) {
    const Eigen::Index d = p.dim();
    Ball ball;
    if (p.is_empty()) {
        ball.center = Vector::Zero(d);
        ball.radius = -kInf;
        return ball;
    }
    const auto m = static_cast<Eigen::Index>(p.rows());
    Matrix a(m + 1, d + 1);
    Vector b(m + 1);
    for (Eigen::Index i = 0; i < m; ++i) {
        a.row(i).head(d) = p.normals().row(i);
        a(i, d) = p.normals().row(i).norm();
        b(i) = p.offsets()(i);
    }
    // Radius cap keeps the program bounded for unbounded sets.
    a.row(m).setZero();
    a(m, d) = 1.0;
    b(m) = 1e9;
    Vector c = Vector::Zero(d + 1);
    c(d) = 1.0;
    const auto sol = solve_lp(c, a, b, Sense::Maximize);
    if (sol.status != SolveStatus::Optimal) {
        ball.center = Vector::Zero(d);
        ball.radius = -kInf;
        return ball;
    }
    ball.center = sol.optimizer.head(d);
    ball.radius = sol.optimizer(d);
    return ball;
}

Polytope reduce(const Polytope& p) {
    if (p.is_empty()) return Polytope::empty_set(p.dim());
    Matrix n;
    Vector b;
    if (!normalise_rows(p, n, b)) return Polytope::empty_set(p.dim());
    if (n.rows() == 0) return Polytope::universe(p.dim());
    const Polytope normalised(n, b);

    const Ball ball = chebyshev_ball(normalised);
    if (ball.radius < -tolerance::feasibility) return Polytope::empty_set(p.dim());

    const auto m = static_cast<int>(n.rows());
    std::vector<int> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), 0);

    if (ball.radius <= 1e-9) {
        // Flat set: no interior point to shoot rays from.
        return from_rows(n, b, drop_redundant_sequential(n, b, all));
    }

    // Clarkson's output-sensitive scheme: an LP over the known essential rows
    // either certifies redundancy or yields a point from which a ray out of
    // the Chebyshev centre discovers a new essential row.
    const Vector& center = ball.center;
    const Vector slack = b - n * center;
    std::vector<int> order = all;
    std::sort(order.begin(), order.end(), [&](int x, int y) { return slack(x) < slack(y); });

    std::vector<char> essential(static_cast<std::size_t>(m), 0);
    std::vector<char> decided(static_cast<std::size_t>(m), 0);
    std::vector<int> known;
    for (int i : order) {
        if (decided[static_cast<std::size_t>(i)]) continue;
        const Vector c = n.row(i).transpose();
        for (int guard = 0; guard <= m; ++guard) {
            const auto sol = lp_on_subset(n, b, known, c, b(i) + 1.0);
            if (sol.status != SolveStatus::Optimal || sol.value <= b(i) + tolerance::redundancy) {
                decided[static_cast<std::size_t>(i)] = 1;
                break;
            }
            const Vector dir = sol.optimizer - center;
            const Vector rate = n * dir;
            int hit = -1;
            double best = kInf;
            for (int j = 0; j < m; ++j) {
                if (rate(j) <= 1e-15) continue;
                const double t = slack(j) / rate(j);
                if (t < best - 1e-12 || (t <= best + 1e-12 && j == i)) {
                    best = t;
                    hit = j;
                }
            }
            if (hit == -1 || hit == i || essential[static_cast<std::size_t>(hit)]) {
                essential[static_cast<std::size_t>(i)] = 1;
                decided[static_cast<std::size_t>(i)] = 1;
                known.push_back(i);
                break;
            }
            essential[static_cast<std::size_t>(hit)] = 1;
            decided[static_cast<std::size_t>(hit)] = 1;
            known.push_back(hit);
        }
    }
    // Ray ties can admit rows that only touch the set; a final pass over the
    // small essential set removes them.
    std::sort(known.begin(), known.end());
    return from_rows(n, b, drop_redundant_sequential(n, b, known));
}

double inner_distance(const Polytope& p, const Vector& x) {
    require_dim(p, x.size(), "inner_distance");
    if (p.is_empty()) fail(ErrorCode::EmptySet, "inner_distance: empty set");
    double best = kInf;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(p.rows()); ++i) {
        const double norm = p.normals().row(i).norm();
        if (norm <= kZeroNorm) continue;
        best = std::min(best, (p.offsets()(i) - p.normals().row(i).dot(x)) / norm);
    }
    return best;
}

std::pair<Vector, Vector> bounding_box(const Polytope& p) {
    if (p.is_empty()) fail(ErrorCode::EmptySet, "bounding_box: empty set");
    const Eigen::Index d = p.dim();
    Vector lo(d), hi(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const Vector e = Vector::Unit(d, j);
        hi(j) = support(p, e);
        lo(j) = -support(p, -e);
    }
    return {lo, hi};
}

Polytope cap_facets(const Polytope& p, std::size_t cap) {
    if (p.is_empty() || p.rows() <= cap || cap == 0) return p;
    const Matrix& n = p.normals();
    const Vector& b = p.offsets();
    const auto m = static_cast<int>(p.rows());
    const Ball ball = chebyshev_ball(p);
    if (ball.radius <= 0.0) return p;

    // How far the set would grow along each row's normal if that row went away.
    std::vector<double> excess(static_cast<std::size_t>(m));
    std::vector<int> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), 0);
    for (int i = 0; i < m; ++i) {
        std::vector<int> others;
        for (int j = 0; j < m; ++j)
            if (j != i) others.push_back(j);
        const auto sol = lp_on_subset(n, b, others, n.row(i).transpose(), b(i) + 1e6);
        excess[static_cast<std::size_t>(i)] =
            sol.status == SolveStatus::Optimal ? std::max(0.0, sol.value - b(i)) : kInf;
    }
    std::vector<int> order = all;
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return excess[static_cast<std::size_t>(x)] > excess[static_cast<std::size_t>(y)]; });
    std::vector<int> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cap));
    std::vector<int> dropped(order.begin() + static_cast<std::ptrdiff_t>(cap), order.end());
    std::sort(kept.begin(), kept.end());

    const Vector& c = ball.center;
    double scale = 1.0;
    for (int j : dropped) {
        const auto sol = lp_on_subset(n, b, kept, n.row(j).transpose(), b(j) + 1e6);
        if (sol.status != SolveStatus::Optimal) return p;
        const double inside = b(j) - n.row(j).dot(c);
        const double reach = sol.value - n.row(j).dot(c);
        if (reach > inside && reach > 0.0) scale = std::min(scale, inside / reach);
    }
    Matrix kn(static_cast<Eigen::Index>(kept.size()), p.dim());
    Vector kb(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        kn.row(r) = n.row(kept[k]);
        const double nc = n.row(kept[k]).dot(c);
        kb(r) = nc + scale * (b(kept[k]) - nc);
    }
    return Polytope(std::move(kn), std::move(kb));
}

bool set_equal(const Polytope& p, const Polytope& q, double tol) {
    if (p.dim() != q.dim()) return false;
    const bool pe = p.is_empty() || chebyshev_ball(p).radius < -tolerance::feasibility;
    const bool qe = q.is_empty() || chebyshev_ball(q).radius < -tolerance::feasibility;
    if (pe || qe) return pe && qe;
    auto inside = [tol](const Polytope& a, const Polytope& bnd) {
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(bnd.rows()); ++i) {
            const double norm = bnd.normals().row(i).norm();
            if (norm <= kZeroNorm) continue;
            if (support(a, bnd.normals().row(i).transpose()) > bnd.offsets()(i) + tol * norm) return false;
        }
        return true;
    };
    return inside(p, q) && inside(q, p);
}

} // namespace safekernel
