#include "safekernel/geometry.hpp"

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace safekernel {
namespace {

constexpr double kPivotEps = 1e-9;

// Tableau simplex for max c'y s.t. A y <= b, y >= 0, with a single artificial
// column for phase one. Ties in both the entering and the leaving choice are
// broken by variable index, which rules out cycling.
class Tableau {
public:
    Tableau(const Matrix& a, const Vector& b, const Vector& c)
        : m_(static_cast<int>(b.size())), n_(static_cast<int>(c.size())),
          nonbasic_(n_ + 1), basic_(m_), cols_(n_ + 2),
          d_(static_cast<std::size_t>((m_ + 2) * (n_ + 2)), 0.0) {
        for (int i = 0; i < m_; ++i) {
            for (int j = 0; j < n_; ++j) at(i, j) = a(i, j);
            basic_[i] = n_ + i;
            at(i, n_) = -1.0;
            at(i, n_ + 1) = b(i);
        }
        for (int j = 0; j < n_; ++j) {
            nonbasic_[j] = j;
            at(m_, j) = -c(j);
        }
        nonbasic_[n_] = -1;
        at(m_ + 1, n_) = 1.0;
    }

    // Returns +inf when unbounded, -inf when infeasible.
    double solve(Vector& y) {
        int r = 0;
        for (int i = 1; i < m_; ++i)
            if (at(i, n_ + 1) < at(r, n_ + 1)) r = i;
        if (m_ > 0 && at(r, n_ + 1) < -kPivotEps) {
            pivot(r, n_);
            if (!simplex(2) || at(m_ + 1, n_ + 1) < -kPivotEps)
                return -std::numeric_limits<double>::infinity();
            for (int i = 0; i < m_; ++i) {
                if (basic_[i] != -1) continue;
                int s = 0;
                for (int j = 1; j <= n_; ++j)
                    if (less(at(i, j), nonbasic_[j], at(i, s), nonbasic_[s])) s = j;
                pivot(i, s);
            }
        }
        const bool bounded = simplex(1);
        y = Vector::Zero(n_);
        for (int i = 0; i < m_; ++i)
            if (basic_[i] >= 0 && basic_[i] < n_) y(basic_[i]) = at(i, n_ + 1);
        return bounded ? at(m_, n_ + 1) : std::numeric_limits<double>::infinity();
    }

private:
    double& at(int i, int j) { return d_[static_cast<std::size_t>(i * cols_ + j)]; }

    static bool less(double va, int ia, double vb, int ib) {
        return va < vb || (va == vb && ia < ib);
    }

    void pivot(int r, int s) {
        const double inv = 1.0 / at(r, s);
        double* row_r = &at(r, 0);
        for (int i = 0; i < m_ + 2; ++i) {
            if (i == r) continue;
            double* row_i = &at(i, 0);
            if (std::abs(row_i[s]) <= kPivotEps) continue;
            const double f = row_i[s] * inv;
            for (int j = 0; j < cols_; ++j) row_i[j] -= row_r[j] * f;
            row_i[s] = row_r[s] * f;
        }
        for (int j = 0; j < cols_; ++j)
            if (j != s) row_r[j] *= inv;
        for (int i = 0; i < m_ + 2; ++i)
            if (i != r) at(i, s) *= -inv;
        row_r[s] = inv;
        std::swap(basic_[r], nonbasic_[s]);
    }

    bool simplex(int phase) {
        const int x = m_ + phase - 1;
        for (;;) {
            int s = -1;
            for (int j = 0; j <= n_; ++j) {
                if (nonbasic_[j] == -phase) continue;
                if (s == -1 || less(at(x, j), nonbasic_[j], at(x, s), nonbasic_[s])) s = j;
            }
            if (at(x, s) >= -kPivotEps) return true;
            int r = -1;
            for (int i = 0; i < m_; ++i) {
                if (at(i, s) <= kPivotEps) continue;
                if (r == -1) {
                    r = i;
                    continue;
                }
                const double ri = at(i, n_ + 1) / at(i, s);
                const double rr = at(r, n_ + 1) / at(r, s);
                if (ri < rr || (ri == rr && basic_[i] < basic_[r])) r = i;
            }
            if (r == -1) return false;
            pivot(r, s);
        }
    }

    int m_;
    int n_;
    std::vector<int> nonbasic_;
    std::vector<int> basic_;
    int cols_;
    std::vector<double> d_;
};

} // namespace

LpSolution solve_lp(const Vector& c, const Matrix& a, const Vector& b, Sense sense) {
    const auto n = c.size();
    if (a.cols() != n || a.rows() != b.size())
        fail(ErrorCode::DimensionMismatch, "solve_lp: inconsistent dimensions");

    // Free variables split as x = y+ - y-.
    Matrix split(a.rows(), 2 * n);
    split << a, -a;
    const Vector obj_x = sense == Sense::Maximize ? c : Vector(-c);
    Vector obj(2 * n);
    obj << obj_x, -obj_x;

    Tableau tableau(split, b, obj);
    Vector y;
    const double v = tableau.solve(y);

    LpSolution out;
    if (v == -std::numeric_limits<double>::infinity()) {
        out.status = SolveStatus::Infeasible;
        return out;
    }
    out.optimizer = y.head(n) - y.tail(n);
    if (v == std::numeric_limits<double>::infinity()) {
        out.status = SolveStatus::Unbounded;
        out.value = sense == Sense::Maximize ? v : -v;
        return out;
    }
    out.status = SolveStatus::Optimal;
    out.value = c.dot(out.optimizer);
    return out;
}

LpSolution solve_lp(const Vector& c, const Polytope& p, Sense sense) {
    if (c.size() != p.dim()) fail(ErrorCode::DimensionMismatch, "solve_lp: objective dimension");
    if (p.is_empty()) return {};
    return solve_lp(c, p.normals(), p.offsets(), sense);
}

} // namespace safekernel
