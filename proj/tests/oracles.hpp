#pragma once

// Test-only reference computations. Nothing here calls into the polytope
// operations it is used to check.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline void combinations(int m, int k, const std::function<void(const std::vector<int>&)>& visit) {
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    if (k > m) return;
    for (;;) {
        visit(idx);
        int i = k - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == m - k + i) --i;
        if (i < 0) return;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

// All vertices of a bounded {x : A x <= b}, by solving every d-subset of rows.
inline std::vector<Vector> vertices(const Matrix& a, const Vector& b, double tol = 1e-9) {
    const int d = static_cast<int>(a.cols());
    const int m = static_cast<int>(a.rows());
    std::vector<Vector> out;
    combinations(m, d, [&](const std::vector<int>& rows) {
        Matrix sub(d, d);
        Vector rhs(d);
        for (int k = 0; k < d; ++k) {
            sub.row(k) = a.row(rows[static_cast<std::size_t>(k)]);
            rhs(k) = b(rows[static_cast<std::size_t>(k)]);
        }
        Eigen::FullPivLU<Matrix> lu(sub);
        if (lu.rank() < d) return;
        const Vector x = lu.solve(rhs);
        if (((a * x - b).array() > tol).any()) return;
        for (const auto& v : out)
            if ((v - x).norm() < 1e-9) return;
        out.push_back(x);
    });
    return out;
}

inline double max_dot(const std::vector<Vector>& pts, const Vector& l) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : pts) best = std::max(best, l.dot(p));
    return best;
}

inline Vector random_unit(std::mt19937_64& rng, int d) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector v(d);
    for (int i = 0; i < d; ++i) v(i) = g(rng);
    return v / v.norm();
}

// Random bounded polytope containing the origin: random facets plus a box.
inline std::pair<Matrix, Vector> random_polytope(std::mt19937_64& rng, int d, int extra_rows,
                                                 double box = 3.0) {
    std::uniform_real_distribution<double> off(0.5, 1.5);
    Matrix a(2 * d + extra_rows, d);
    Vector b(2 * d + extra_rows);
    for (int j = 0; j < d; ++j) {
        a.row(2 * j) = -Vector::Unit(d, j).transpose();
        a.row(2 * j + 1) = Vector::Unit(d, j).transpose();
        b(2 * j) = box;
        b(2 * j + 1) = box;
    }
    for (int r = 0; r < extra_rows; ++r) {
        a.row(2 * d + r) = random_unit(rng, d).transpose();
        b(2 * d + r) = off(rng);
    }
    return {a, b};
}

inline bool satisfies(const Matrix& a, const Vector& b, const Vector& x, double tol = 0.0) {
    return ((a * x - b).array() <= tol).all();
}

} // namespace oracle
