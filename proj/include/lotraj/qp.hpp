#pragma once

// Dense strictly convex QP via the Goldfarb-Idnani dual active-set method:
//
//   minimize   ½ xᵀ G x + gᵀ x
//   subject to A x + b >= 0        (one row per inequality)
//
// Sized for the handful of variables and a few dozen constraints that the
// trajectory NLP produces per SQP step.

#include "lotraj/common.hpp"

namespace lotraj {

enum class QpStatus { Optimal, Infeasible, NotConvex };

struct QpResult {
    QpStatus status = QpStatus::Infeasible;
    Vec x;
    Vec multipliers;  ///< one per inequality row, ≥ 0, zero for inactive rows
    int iterations = 0;
};

namespace detail {

struct Givens {
    double c = 1.0, s = 0.0, r = 0.0;
    static Givens make(double a, double b) {
        Givens g;
        g.r = std::hypot(a, b);
        if (g.r == 0.0) return g;
        g.c = a / g.r;
        g.s = b / g.r;
        return g;
    }
};

}  // namespace detail

inline QpResult solve_qp(const Mat& G, const Vec& g, const Mat& A, const Vec& b, double tol = 1e-12,
                         int max_iter = 500) {
    const Eigen::Index n = G.rows();
    const Eigen::Index m = A.rows();
    QpResult res;
    res.multipliers = Vec::Zero(m);

    Eigen::LLT<Mat> llt(G);
    if (llt.info() != Eigen::Success) {
        res.status = QpStatus::NotConvex;
        res.x = Vec::Zero(n);
        return res;
    }
    // J = L^{-T}; its columns are kept orthogonalised against the active normals.
    const Mat L = llt.matrixL();
    Mat J = L.triangularView<Eigen::Lower>().transpose().solve(Mat::Identity(n, n));
    Mat R = Mat::Zero(n, n);

    Vec x = -llt.solve(g);
    std::vector<Eigen::Index> active;  // row indices of active constraints
    Vec u = Vec::Zero(n + 1);          // multipliers aligned with `active`
    Eigen::Index q = 0;                // number of active constraints

    auto slack = [&](Eigen::Index i) { return A.row(i).dot(x) + b[i]; };

    auto add_constraint = [&](const Vec& d_full) -> bool {
        Vec d = d_full;
        for (Eigen::Index j = n - 1; j > q; --j) {
            auto rot = detail::Givens::make(d[j - 1], d[j]);
            if (rot.r == 0.0) continue;
            d[j - 1] = rot.r;
            d[j] = 0.0;
            for (Eigen::Index k = 0; k < n; ++k) {
                const double t1 = J(k, j - 1), t2 = J(k, j);
                J(k, j - 1) = rot.c * t1 + rot.s * t2;
                J(k, j) = -rot.s * t1 + rot.c * t2;
            }
        }
        if (std::abs(d[q]) <= 1e-14 * std::max(1.0, d.head(q + 1).norm())) return false;  // dependent
        R.col(q).head(q + 1) = d.head(q + 1);
        ++q;
        return true;
    };

    auto drop_constraint = [&](Eigen::Index pos) {
        active.erase(active.begin() + pos);
        for (Eigen::Index k = pos; k < q - 1; ++k) {
            u[k] = u[k + 1];
            R.col(k) = R.col(k + 1);
        }
        u[q - 1] = 0.0;
        R.col(q - 1).setZero();
        --q;
        for (Eigen::Index j = pos; j < q; ++j) {
            auto rot = detail::Givens::make(R(j, j), R(j + 1, j));
            if (rot.r == 0.0) continue;
            for (Eigen::Index k = j; k < q; ++k) {
                const double t1 = R(j, k), t2 = R(j + 1, k);
                R(j, k) = rot.c * t1 + rot.s * t2;
                R(j + 1, k) = -rot.s * t1 + rot.c * t2;
            }
            R(j + 1, j) = 0.0;
            for (Eigen::Index k = 0; k < n; ++k) {
                const double t1 = J(k, j), t2 = J(k, j + 1);
                J(k, j) = rot.c * t1 + rot.s * t2;
                J(k, j + 1) = -rot.s * t1 + rot.c * t2;
            }
        }
    };

    const double scale = m > 0 ? 1.0 + b.cwiseAbs().maxCoeff() + A.cwiseAbs().maxCoeff() : 1.0;
    int iter = 0;
    while (true) {
        if (++iter > max_iter) {
            res.status = QpStatus::Infeasible;
            break;
        }
        // Step 1: pick the most violated constraint.
        Eigen::Index p = -1;
        double worst = -tol * scale;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (std::find(active.begin(), active.end(), i) != active.end()) continue;
            const double si = slack(i);
            if (si < worst) {
                worst = si;
                p = i;
            }
        }
        if (p < 0) {
            res.status = QpStatus::Optimal;
            break;
        }
        const Vec np = A.row(p).transpose();
        double up = 0.0;  // multiplier of the entering constraint

        bool entered = false;
        bool failed = false;
        while (!entered) {
            if (++iter > max_iter) {
                failed = true;
                break;
            }
            const Vec d = J.transpose() * np;
            const Vec z = J.rightCols(n - q) * d.tail(n - q);
            Vec r = Vec::Zero(q);
            if (q > 0) r = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));

            double t1 = kInf;
            Eigen::Index drop = -1;
            for (Eigen::Index k = 0; k < q; ++k) {
                if (r[k] > 0.0) {
                    const double ratio = u[k] / r[k];
                    if (ratio < t1) {
                        t1 = ratio;
                        drop = k;
                    }
                }
            }
            const double zn = z.dot(np);
            const double t2 = (z.norm() > 1e-14 * std::max(1.0, np.norm()) && zn > 0.0) ? -slack(p) / zn : kInf;
            const double t = std::min(t1, t2);
            if (!std::isfinite(t)) {
                failed = true;
                break;
            }
            if (!std::isfinite(t2)) {
                // Dual-only step.
                for (Eigen::Index k = 0; k < q; ++k) u[k] -= t * r[k];
                up += t;
                drop_constraint(drop);
                continue;
            }
            x += t * z;
            for (Eigen::Index k = 0; k < q; ++k) u[k] -= t * r[k];
            up += t;
            if (t == t2) {
                if (!add_constraint(d)) {
                    failed = true;
                    break;
                }
                active.push_back(p);
                u[q - 1] = up;
                entered = true;
            } else {
                drop_constraint(drop);
            }
        }
        if (failed) {
            res.status = QpStatus::Infeasible;
            break;
        }
    }

    res.x = x;
    for (Eigen::Index k = 0; k < q; ++k) res.multipliers[active[static_cast<std::size_t>(k)]] = std::max(0.0, u[k]);
    res.iterations = iter;
    return res;
}

}  // namespace lotraj
