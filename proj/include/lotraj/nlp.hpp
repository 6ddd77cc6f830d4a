#pragma once

// The trajectory-parameter NLP O(X).
//
// Decision vector C = (ωm,1 … ωm,NJ, tf); ωm,i is the physical (signed)
// cruise velocity of joint i, tf the shared motion time.
//
//   minimize  F(C) = μ·(tf/t_max)² + (1−μ)/NJ · Σ (a_i / q̈_i,max)²
//   subject to, per joint in its direction-normalized frame,
//             0 < ωm,i < q̇_i,max,  0 < a_i < q̈_i,max,
//             0 ≤ t1,i ≤ tf/2,     t1,i ≤ t2,i ≤ tf,
//   and       0 < tf < t_c.
//
// Public residual layout (constraints()), all "≥ 0 when satisfied":
//   joint i, offset 8·i:  [0] ωm        [1] q̇max − ωm   [2] a       [3] q̈max − a
//                         [4] t1        [5] tf/2 − t1   [6] t2 − t1 [7] tf − t2
//   then global:          [8·NJ] tf     [8·NJ+1] t_c − tf
// ωm and a are magnitudes in the joint's normalized frame. Joints with zero
// displacement and zero initial velocity are at rest: a = t1 = t2 = 0.
// There are no equality constraints for this problem; the equality channel
// is present and empty.

#include "lotraj/common.hpp"
#include "lotraj/kinematics.hpp"
#include "lotraj/qp.hpp"
#include "lotraj/trajectory.hpp"

#include <optional>

namespace lotraj {

struct PlanningInput {
    Vec q0;
    Vec qc;
    Vec omega0;

    [[nodiscard]] Eigen::Index dof() const noexcept { return q0.size(); }

    void validate() const {
        require_same_size(q0, qc, "PlanningInput q0/qc");
        require_same_size(q0, omega0, "PlanningInput q0/omega0");
        require(q0.size() > 0, "PlanningInput: empty joint vectors");
        require(q0.allFinite() && qc.allFinite() && omega0.allFinite(), "PlanningInput: non-finite values");
    }
};

struct TrajectoryParams {
    Vec omega_m;
    double tf = 0.0;

    [[nodiscard]] Eigen::Index dof() const noexcept { return omega_m.size(); }

    [[nodiscard]] Vec as_vector() const {
        Vec v(omega_m.size() + 1);
        v.head(omega_m.size()) = omega_m;
        v[omega_m.size()] = tf;
        return v;
    }

    static TrajectoryParams from_vector(const Vec& v) {
        require(v.size() >= 2, "TrajectoryParams: vector needs NJ + 1 >= 2 entries");
        return {v.head(v.size() - 1), v[v.size() - 1]};
    }
};

struct ProblemConfig {
    double mu = 0.5;     ///< weight of the time term
    double t_max = 3.0;  ///< normaliser of the time term (s)
    double t_c = 2.0;    ///< interacting time budget (s)
    RobotModel model = default_robot();

    void validate() const {
        require(mu >= 0.0 && mu <= 1.0, "ProblemConfig: mu must lie in [0, 1]");
        require(t_max > 0.0, "ProblemConfig: t_max must be > 0");
        require(t_c > 0.0, "ProblemConfig: t_c must be > 0");
        model.validate();
    }
};

struct SolverOptions {
    int max_iterations = 200;
    double stationarity_tol = 1e-6;
    /// Verdict tolerance on the public residuals.
    double feasibility_tol = 1e-6;
    /// Target violation of the margin-shifted constraints inside the solvers.
    double internal_feasibility_tol = 1e-10;
    /// An infeasible local solve gives up when the constraint violation
    /// dropped by less than 10% over this many iterations.
    int stall_iterations = 50;
};

struct SolveReport {
    TrajectoryParams params;
    double objective_value = 0.0;
    bool feasible = false;
    bool converged = false;
    int iterations = 0;
    int restarts_used = 0;
    double wall_time = 0.0;
    double max_violation = 0.0;
    double stationarity = 0.0;
};

struct ConstraintResiduals {
    std::vector<double> inequality;
    std::vector<double> equality;

    [[nodiscard]] double min_inequality() const {
        return inequality.empty() ? kInf : *std::min_element(inequality.begin(), inequality.end());
    }
};

inline constexpr std::size_t kResidualsPerJoint = 8;
inline constexpr double kPenaltyBase = 1e6;

namespace detail {

struct JointTerm {
    double s = 1.0;       // direction
    double distance = 0;  // |qc − q0|
    double w0 = 0;        // normalized initial velocity
    double vmax = 0;
    double amax = 0;
    double vscale = 0;  // velocity scale of the solver rows
    bool moving = true;
};

/// Derived per-joint quantities with first derivatives with respect to the
/// normalized cruise velocity w and tf.
struct JointEval {
    bool valid = false;
    double a = 0, a_w = 0, a_tf = 0;
    double t1 = 0, t1_w = 0, t1_tf = 0;
    double t2 = 0, t2_w = 0, t2_tf = 0;
    double shape_violation = 0;
};

inline JointEval eval_joint(const JointTerm& j, double w, double tf) {
    JointEval e;
    if (!j.moving) {
        e.valid = true;
        return e;
    }
    const double P = w * tf - j.distance;
    e.shape_violation = std::max(0.0, -P) + std::max(0.0, -w) + std::max(0.0, -tf);
    if (!(w > 0.0) || !(tf > 0.0) || !(P > 0.0)) return e;
    const double dw = w - j.w0;
    const double N = w * w + dw * dw;
    const double N_w = 4.0 * w - 2.0 * j.w0;
    e.a = N / (2.0 * P);
    if (!std::isfinite(e.a) || !(e.a > 0.0)) return e;
    e.a_w = (N_w * P - N * tf) / (2.0 * P * P);
    e.a_tf = -N * w / (2.0 * P * P);
    const double a2 = e.a * e.a;
    e.t1 = dw / e.a;
    e.t1_w = (e.a - dw * e.a_w) / a2;
    e.t1_tf = -dw * e.a_tf / a2;
    e.t2 = tf - w / e.a;
    e.t2_w = -(e.a - w * e.a_w) / a2;
    e.t2_tf = 1.0 + w * e.a_tf / a2;
    e.valid = true;
    return e;
}

/// The NLP instantiated for one planning input.
class TrajectoryNlp {
public:
    TrajectoryNlp(const PlanningInput& x, const ProblemConfig& cfg) : cfg_(cfg) {
        x.validate();
        const auto n = x.dof();
        require(static_cast<std::size_t>(n) == cfg.model.joints(),
                "NLP: planning input has " + std::to_string(n) + " joints, robot has " +
                    std::to_string(cfg.model.joints()));
        joints_.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            JointBoundary b{x.q0[i], x.qc[i], x.omega0[i]};
            auto& j = joints_[static_cast<std::size_t>(i)];
            j.s = b.direction();
            j.distance = std::abs(b.displacement());
            j.w0 = j.s * b.omega0;
            j.vmax = cfg.model.vel_limits[i];
            j.amax = cfg.model.acc_limits[i];
            j.moving = !b.at_rest();
            // Joints moving orders of magnitude below their limit get rows
            // scaled by their own velocity, else those rows vanish below the
            // solver tolerance.
            const double v_c = std::max(std::abs(j.w0), j.distance / cfg.t_c);
            j.vscale = v_c < 1e-3 * j.vmax ? std::max(v_c, 1e-12) : j.vmax;
        }
    }

    [[nodiscard]] Eigen::Index dof() const noexcept { return static_cast<Eigen::Index>(joints_.size()); }
    [[nodiscard]] Eigen::Index size() const noexcept { return dof() + 1; }
    [[nodiscard]] const std::vector<JointTerm>& joints() const noexcept { return joints_; }
    [[nodiscard]] const ProblemConfig& config() const noexcept { return cfg_; }

    [[nodiscard]] double normalized_velocity(const Vec& x, std::size_t i) const {
        return joints_[i].s * x[static_cast<Eigen::Index>(i)];
    }

    /// True where every moving joint yields a trapezoid (objective is smooth).
    [[nodiscard]] bool in_domain(const Vec& x) const {
        if (!x.allFinite()) return false;
        const double tf = x[dof()];
        if (!(tf > 0.0)) return false;
        for (std::size_t i = 0; i < joints_.size(); ++i) {
            if (!eval_joint(joints_[i], normalized_velocity(x, i), tf).valid) return false;
        }
        return true;
    }

    [[nodiscard]] double objective(const Vec& x, Vec* grad = nullptr) const {
        const double tf = x[dof()];
        const double mu = cfg_.mu;
        const double nj = static_cast<double>(joints_.size());
        double f = mu * (tf / cfg_.t_max) * (tf / cfg_.t_max);
        double penalty = 0.0;
        bool valid = true;
        if (grad) {
            grad->setZero(size());
            (*grad)[dof()] = 2.0 * mu * tf / (cfg_.t_max * cfg_.t_max);
        }
        for (std::size_t i = 0; i < joints_.size(); ++i) {
            const auto& j = joints_[i];
            const auto e = eval_joint(j, normalized_velocity(x, i), tf);
            if (!e.valid) {
                valid = false;
                penalty += e.shape_violation * e.shape_violation;
                continue;
            }
            if (!j.moving) continue;
            const double ratio = e.a / j.amax;
            f += (1.0 - mu) / nj * ratio * ratio;
            if (grad) {
                const double coef = (1.0 - mu) / nj * 2.0 * e.a / (j.amax * j.amax);
                (*grad)[static_cast<Eigen::Index>(i)] += coef * e.a_w * j.s;
                (*grad)[dof()] += coef * e.a_tf;
            }
        }
        if (!valid) {
            if (grad) grad->setZero(size());
            return kPenaltyBase + penalty;
        }
        return f;
    }

    /// Public residuals within 1e-3·feasibility_tol. The scaled solver rows
    /// can be met while the relations of a slow joint (small N) are not.
    [[nodiscard]] bool natural_violation_small(const Vec& x, const SolverOptions& opt) const {
        return -residuals(x).min_inequality() <= 1e-3 * opt.feasibility_tol;
    }

    [[nodiscard]] ConstraintResiduals residuals(const Vec& x) const {
        ConstraintResiduals r;
        const double tf = x[dof()];
        r.inequality.reserve(kResidualsPerJoint * joints_.size() + 2);
        for (std::size_t i = 0; i < joints_.size(); ++i) {
            const auto& j = joints_[i];
            const double w = normalized_velocity(x, i);
            r.inequality.push_back(w);
            r.inequality.push_back(j.vmax - w);
            const auto e = eval_joint(j, w, tf);
            if (!e.valid) {
                const double bad = -std::max(e.shape_violation, kStrictMargin);
                for (int k = 0; k < 6; ++k) r.inequality.push_back(bad);
                continue;
            }
            if (!j.moving) {
                r.inequality.insert(r.inequality.end(), {0.0, j.amax, 0.0, 0.5 * tf, 0.0, tf});
                continue;
            }
            r.inequality.push_back(e.a);
            r.inequality.push_back(j.amax - e.a);
            r.inequality.push_back(e.t1);
            r.inequality.push_back(0.5 * tf - e.t1);
            r.inequality.push_back(e.t2 - e.t1);
            r.inequality.push_back(tf - e.t2);
        }
        r.inequality.push_back(tf);
        r.inequality.push_back(cfg_.t_c - tf);
        return r;
    }

    /// Constraints used by the solvers, c(x) ≥ 0, with Jacobian: the public
    /// relations multiplied through by their positive denominators, with the
    /// strict ones shifted by kStrictMargin. Polynomial in (ωm, tf), so they
    /// stay well scaled near the area boundary ωm·tf = D.
    void solver_constraints(const Vec& x, Vec& c, Mat& jac) const {
        const Eigen::Index n = size();
        const double tf = x[dof()];
        std::vector<double> vals;
        std::vector<Vec> rows;
        auto push = [&](double v, const Vec& g) {
            vals.push_back(v);
            rows.push_back(g);
        };
        Vec g(n);
        for (std::size_t ii = 0; ii < joints_.size(); ++ii) {
            const auto i = static_cast<Eigen::Index>(ii);
            const auto& j = joints_[ii];
            const double w = normalized_velocity(x, ii);
            g.setZero();
            g[i] = j.s;
            push(w - kStrictMargin, g);
            g[i] = -j.s;
            push(j.vmax - w - kStrictMargin, g);
            if (!j.moving) continue;
            auto row = [&](double dw, double dtf) {
                Vec out = Vec::Zero(n);
                out[i] = j.s * dw;
                out[dof()] = dtf;
                return out;
            };
            // Cleared of the positive denominators a, P and N; constant
            // per-joint scales keep the rows commensurate.
            const double P = w * tf - j.distance;
            const double dw0 = w - j.w0;
            const double N = w * w + dw0 * dw0;
            const double N_w = 4.0 * w - 2.0 * j.w0;
            const double amax = j.amax - kStrictMargin;
            const double s_acc = 1.0 / (2.0 * j.amax * j.vscale * cfg_.t_c);
            const double s_shape = 1.0 / (j.vscale * j.vscale * cfg_.t_c);
            // a ≤ q̈max  ⇔  2·q̈max·P − N ≥ 0   (also keeps P > 0, hence a > 0)
            push(s_acc * (2.0 * amax * P - N), row(s_acc * (2.0 * amax * tf - N_w), s_acc * 2.0 * amax * w));
            // t1 ≥ 0  ⇔  ωm − ω0 ≥ 0
            push(dw0 / j.vscale, row(1.0 / j.vscale, 0.0));
            // t1 ≤ tf/2  ⇔  tf·N − 4·(ωm − ω0)·P ≥ 0
            push(s_shape * (tf * N - 4.0 * dw0 * P),
                 row(s_shape * (tf * N_w - 4.0 * P - 4.0 * dw0 * tf), s_shape * (N - 4.0 * dw0 * w)));
            // t2 ≥ t1  ⇔  tf·N − 2·P·(2ωm − ω0) ≥ 0
            const double m = 2.0 * w - j.w0;
            push(s_shape * (tf * N - 2.0 * P * m),
                 row(s_shape * (tf * N_w - 2.0 * tf * m - 4.0 * P), s_shape * (N - 2.0 * w * m)));
        }
        g.setZero();
        g[dof()] = 1.0;
        push(tf - kStrictMargin, g);
        g[dof()] = -1.0;
        push(cfg_.t_c - tf - kStrictMargin, g);

        c = to_vec(vals);
        jac.resize(static_cast<Eigen::Index>(rows.size()), n);
        for (std::size_t k = 0; k < rows.size(); ++k) jac.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
    }

    /// Moves an arbitrary start into the domain: positive cruise velocities
    /// along each joint's motion and ωm·tf exceeding every displacement.
    /// Points already inside the domain are returned unchanged.
    [[nodiscard]] Vec repair_start(Vec x) const {
        const auto n = dof();
        if (in_domain(x)) return x;
        double tf = x[n];
        if (!std::isfinite(tf) || tf <= 0.0) tf = 0.5 * cfg_.t_c;
        for (std::size_t ii = 0; ii < joints_.size(); ++ii) {
            const auto i = static_cast<Eigen::Index>(ii);
            const auto& j = joints_[ii];
            double w = std::isfinite(x[i]) ? std::abs(x[i]) : 0.5 * j.vmax;
            w = std::clamp(w, 1e-3 * j.vmax, j.vmax);
            w = std::max(w, std::min(j.w0, j.vmax));
            x[i] = j.s * w;
        }
        double needed = 0.0;
        for (std::size_t ii = 0; ii < joints_.size(); ++ii) {
            const auto& j = joints_[ii];
            if (!j.moving) continue;
            needed = std::max(needed, 1.05 * j.distance / normalized_velocity(x, ii));
        }
        tf = std::max(tf, needed);
        if (tf >= cfg_.t_c) tf = std::max(0.95 * cfg_.t_c, std::min(tf, cfg_.t_c));
        x[n] = tf;
        for (std::size_t ii = 0; ii < joints_.size(); ++ii) {
            const auto i = static_cast<Eigen::Index>(ii);
            const auto& j = joints_[ii];
            if (!j.moving) continue;
            double w = normalized_velocity(x, ii);
            if (w * tf <= j.distance * 1.0001) w = 1.05 * j.distance / tf + 1e-9;
            x[i] = j.s * w;
        }
        return x;
    }

private:
    ProblemConfig cfg_;
    std::vector<JointTerm> joints_;
};

inline double max_violation(const ConstraintResiduals& r) { return std::max(0.0, -r.min_inequality()); }

/// Powell-damped BFGS update; keeps B positive definite.
inline void damped_bfgs_update(Mat& B, const Vec& s, Vec y) {
    const Vec Bs = B * s;
    const double sBs = s.dot(Bs);
    if (!(sBs > 1e-300)) return;
    double sy = s.dot(y);
    if (sy < 0.2 * sBs) {
        const double theta = 0.8 * sBs / (sBs - sy);
        y = theta * y + (1.0 - theta) * Bs;
        sy = s.dot(y);
    }
    if (!(sy > 1e-300)) return;
    B += (y * y.transpose()) / sy - (Bs * Bs.transpose()) / sBs;
    B = 0.5 * (B + B.transpose());
}

struct QpStep {
    bool ok = false;
    Vec d;
    Vec multipliers;  // for the nonlinear constraints only
    bool trust_active = false;
};

/// SQP subproblem with step bounds |d| ≤ radius; falls back to an elastic
/// (ℓ1-relaxed) formulation if the linearisation is inconsistent.
inline QpStep sqp_subproblem(const Mat& B, const Vec& g, const Mat& jac, const Vec& c, const Vec& radius) {
    const Eigen::Index n = g.size();
    const Eigen::Index m = c.size();
    QpStep out;
    Mat A(m + 2 * n, n);
    Vec b(m + 2 * n);
    A.topRows(m) = jac;
    b.head(m) = c;
    A.middleRows(m, n) = Mat::Identity(n, n);
    b.segment(m, n) = radius;
    A.bottomRows(n) = -Mat::Identity(n, n);
    b.tail(n) = radius;
    auto qp = solve_qp(B, g, A, b);
    if (qp.status == QpStatus::Optimal) {
        out.ok = true;
        out.d = qp.x;
        out.multipliers = qp.multipliers.head(m);
        out.trust_active = qp.multipliers.tail(2 * n).maxCoeff() > 0.0;
        return out;
    }
    // Elastic: variables (d, e) with e ≥ 0 relaxing every nonlinear row.
    const double weight = 100.0 * (1.0 + g.cwiseAbs().maxCoeff());
    Mat Ge = Mat::Zero(n + m, n + m);
    Ge.topLeftCorner(n, n) = B;
    Ge.bottomRightCorner(m, m) = 1e-6 * Mat::Identity(m, m);
    Vec ge(n + m);
    ge.head(n) = g;
    ge.tail(m).setConstant(weight);
    Mat Ae = Mat::Zero(2 * m + 2 * n, n + m);
    Vec be(2 * m + 2 * n);
    Ae.topLeftCorner(m, n) = jac;
    Ae.block(0, n, m, m) = Mat::Identity(m, m);
    be.head(m) = c;
    Ae.block(m, n, m, m) = Mat::Identity(m, m);
    be.segment(m, m).setZero();
    Ae.block(2 * m, 0, n, n) = Mat::Identity(n, n);
    be.segment(2 * m, n) = radius;
    Ae.block(2 * m + n, 0, n, n) = -Mat::Identity(n, n);
    be.tail(n) = radius;
    auto eqp = solve_qp(Ge, ge, Ae, be);
    if (eqp.status != QpStatus::Optimal) return out;
    out.ok = true;
    out.d = eqp.x.head(n);
    out.multipliers = eqp.multipliers.head(m);
    out.trust_active = true;  // not a KKT certificate
    return out;
}

inline double l1_violation(const Vec& c) { return (-c.array()).max(0.0).sum(); }

inline SolveReport finish_report(const TrajectoryNlp& nlp, const Vec& x, const SolverOptions& opt) {
    SolveReport rep;
    rep.params = TrajectoryParams::from_vector(x);
    rep.objective_value = nlp.objective(x);
    const auto res = nlp.residuals(x);
    rep.max_violation = max_violation(res);
    rep.feasible = nlp.in_domain(x) && rep.max_violation <= opt.feasibility_tol;
    return rep;
}

inline SolveReport sqp_solve(const TrajectoryNlp& nlp, const Vec& start, const SolverOptions& opt) {
    Stopwatch clock;
    const Eigen::Index n = nlp.size();
    Vec x = nlp.repair_start(start);

    Vec radius(n);
    for (Eigen::Index i = 0; i < nlp.dof(); ++i) radius[i] = nlp.config().model.vel_limits[i];
    radius[nlp.dof()] = nlp.config().t_max;

    Vec g(n), c;
    Mat jac;
    double f = nlp.objective(x, &g);
    nlp.solver_constraints(x, c, jac);

    Mat B = Mat::Identity(n, n);
    bool fresh_hessian = true;
    double nu = 1.0;
    bool converged = false;
    double stationarity = kInf;
    std::vector<double> violation_history;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        const double v = l1_violation(c);
        violation_history.push_back(v);
        const auto window = static_cast<std::size_t>(opt.stall_iterations);
        if (v > opt.internal_feasibility_tol && violation_history.size() > window &&
            v > 0.9 * violation_history[violation_history.size() - 1 - window]) {
            break;
        }
        auto step = sqp_subproblem(B, g, jac, c, radius);
        if (!step.ok) {
            if (!fresh_hessian) {
                B.setIdentity();
                fresh_hessian = true;
                continue;
            }
            break;
        }
        const Vec& lam = step.multipliers;
        stationarity = (g - jac.transpose() * lam).cwiseAbs().maxCoeff();
        const double viol = std::max(0.0, -c.minCoeff());
        const double dnorm = step.d.cwiseAbs().maxCoeff();
        if (viol <= opt.internal_feasibility_tol && !step.trust_active &&
            (stationarity <= opt.stationarity_tol || dnorm <= 1e-13 * (1.0 + x.cwiseAbs().maxCoeff())) &&
            nlp.natural_violation_small(x, opt)) {
            converged = stationarity <= opt.stationarity_tol;
            if (!converged && dnorm <= 1e-13 * (1.0 + x.cwiseAbs().maxCoeff())) converged = true;
            break;
        }

        nu = std::max(nu, 1.5 * lam.cwiseAbs().maxCoeff() + 1e-3);
        const double phi0 = f + nu * l1_violation(c);
        const double dphi = g.dot(step.d) - nu * l1_violation(c);

        double alpha = 1.0;
        bool accepted = false;
        Vec xt, gt(n), ct;
        Mat jact;
        double ft = 0.0;
        for (int ls = 0; ls < 40; ++ls) {
            xt = x + alpha * step.d;
            if (nlp.in_domain(xt)) {
                ft = nlp.objective(xt, &gt);
                nlp.solver_constraints(xt, ct, jact);
                const double phit = ft + nu * l1_violation(ct);
                if (phit <= phi0 + 1e-4 * alpha * std::min(dphi, 0.0)) {
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (!fresh_hessian) {
                B.setIdentity();
                fresh_hessian = true;
                continue;
            }
            break;
        }
        const Vec s = xt - x;
        const Vec y = (gt - jact.transpose() * lam) - (g - jac.transpose() * lam);
        if (fresh_hessian) {
            const double sy = s.dot(y);
            if (sy > 1e-12 * s.squaredNorm()) B = (y.squaredNorm() / sy) * Mat::Identity(n, n);
            fresh_hessian = false;
        }
        damped_bfgs_update(B, s, y);
        x = xt;
        f = ft;
        g = gt;
        c = ct;
        jac = jact;
    }

    auto rep = finish_report(nlp, x, opt);
    rep.converged = converged;
    rep.iterations = it;
    rep.stationarity = stationarity;
    rep.restarts_used = 1;
    rep.wall_time = clock.seconds();
    return rep;
}

/// Levenberg-Marquardt on ½·Σ min(0, c_j)² (constraints only, no objective).
inline SolveReport feasibility_solve(const TrajectoryNlp& nlp, const Vec& start, const SolverOptions& opt) {
    Stopwatch clock;
    const Eigen::Index n = nlp.size();
    Vec x = nlp.repair_start(start);
    Vec c;
    Mat jac;
    // Aim slightly inside so the returned point satisfies the margins exactly.
    constexpr double kAim = 1e-12;
    auto merit = [&](const Vec& cc) { return 0.5 * (cc.array() - kAim).min(0.0).square().sum(); };

    nlp.solver_constraints(x, c, jac);
    double lambda = 1e-6;
    int it = 0;
    auto satisfied = [&] { return c.minCoeff() >= -opt.internal_feasibility_tol && nlp.natural_violation_small(x, opt); };
    bool done = satisfied();
    for (; !done && it < opt.max_iterations; ++it) {
        Vec r = (c.array() - kAim).min(0.0);
        Mat Jv = jac;
        for (Eigen::Index k = 0; k < r.size(); ++k)
            if (r[k] == 0.0) Jv.row(k).setZero();
        const Mat H = Jv.transpose() * Jv;
        const Vec grad = Jv.transpose() * r;
        const double m0 = merit(c);
        bool accepted = false;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            Mat Hd = H;
            Hd.diagonal().array() += lambda * (1.0 + H.diagonal().array());
            const Vec d = -Hd.ldlt().solve(grad);
            Vec xt = x + d;
            if (nlp.in_domain(xt)) {
                Vec ct;
                Mat jt;
                nlp.solver_constraints(xt, ct, jt);
                if (merit(ct) < m0) {
                    x = xt;
                    c = ct;
                    jac = jt;
                    lambda = std::max(lambda * 0.3, 1e-12);
                    accepted = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if (!accepted) break;
        done = satisfied();
    }
    (void)n;
    auto rep = finish_report(nlp, x, opt);
    rep.converged = done;
    rep.iterations = it;
    rep.restarts_used = 1;
    rep.wall_time = clock.seconds();
    return rep;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations

inline double objective(const TrajectoryParams& c, const PlanningInput& x, const ProblemConfig& cfg) {
    detail::TrajectoryNlp nlp(x, cfg);
    require(c.dof() == nlp.dof(), "objective: parameter / input dimension mismatch");
    return nlp.objective(c.as_vector());
}

inline ConstraintResiduals constraints(const TrajectoryParams& c, const PlanningInput& x, const ProblemConfig& cfg) {
    detail::TrajectoryNlp nlp(x, cfg);
    require(c.dof() == nlp.dof(), "constraints: parameter / input dimension mismatch");
    return nlp.residuals(c.as_vector());
}

inline bool is_feasible(const TrajectoryParams& c, const PlanningInput& x, const ProblemConfig& cfg,
                        double tol = 1e-6) {
    detail::TrajectoryNlp nlp(x, cfg);
    const Vec v = c.as_vector();
    return nlp.in_domain(v) && detail::max_violation(nlp.residuals(v)) <= tol;
}

/// Per-joint trapezoidal profiles realised by C (throws ProfileInfeasible).
inline std::vector<TrapezoidalProfile> profiles(const TrajectoryParams& c, const PlanningInput& x) {
    x.validate();
    require(c.dof() == x.dof(), "profiles: parameter / input dimension mismatch");
    std::vector<TrapezoidalProfile> out;
    for (Eigen::Index i = 0; i < x.dof(); ++i) {
        out.push_back(solve_profile({x.q0[i], x.qc[i], x.omega0[i]}, c.omega_m[i], c.tf));
    }
    return out;
}

/// Lower bound on the motion time of one joint (normalized frame) under
/// |v| ≤ vmax, |a| ≤ amax, ending at rest after covering `distance`.
/// Returns +inf when no trapezoid of the family can reach the target
/// (initial velocity at or above vmax, or too fast to stop in time).
inline double min_time_bound(double distance, double w0, double vmax, double amax) {
    if (distance == 0.0 && w0 == 0.0) return 0.0;
    if (w0 >= vmax) return kInf;
    if (w0 > 0.0 && distance < w0 * w0 / (2.0 * amax)) return kInf;
    const double peak = std::sqrt(amax * distance + 0.5 * w0 * w0);
    if (peak <= vmax) return (2.0 * peak - w0) / amax;
    const double ramp_distance = (2.0 * vmax * vmax - w0 * w0) / (2.0 * amax);
    return (2.0 * vmax - w0) / amax + (distance - ramp_distance) / vmax;
}

inline double min_time_bound(const PlanningInput& x, const RobotModel& model) {
    double t = 0.0;
    for (Eigen::Index i = 0; i < x.dof(); ++i) {
        const double dq = x.qc[i] - x.q0[i];
        const double s = dq < 0.0 ? -1.0 : 1.0;
        t = std::max(t, min_time_bound(std::abs(dq), s * x.omega0[i], model.vel_limits[i], model.acc_limits[i]));
    }
    return t;
}

inline SolveReport solve_local(const PlanningInput& x, const ProblemConfig& cfg, const TrajectoryParams& c_init,
                               const SolverOptions& opt = {}) {
    detail::TrajectoryNlp nlp(x, cfg);
    require(c_init.dof() == nlp.dof(), "solve_local: initial parameters have wrong dimension");
    return detail::sqp_solve(nlp, c_init.as_vector(), opt);
}

inline SolveReport solve_feasible(const PlanningInput& x, const ProblemConfig& cfg, const TrajectoryParams& c_init,
                                  const SolverOptions& opt = {}) {
    detail::TrajectoryNlp nlp(x, cfg);
    require(c_init.dof() == nlp.dof(), "solve_feasible: initial parameters have wrong dimension");
    return detail::feasibility_solve(nlp, c_init.as_vector(), opt);
}

/// Restart seed k of solve_global. Seeds form one stream, so the first N
/// seeds of a larger restart budget are exactly the seeds of budget N.
class RestartSampler {
public:
    RestartSampler(const PlanningInput& x, const ProblemConfig& cfg, std::uint64_t seed)
        : x_(x), cfg_(cfg), rng_(seed) {
        t_lb_ = min_time_bound(x, cfg.model);
    }
    [[nodiscard]] double time_lower_bound() const noexcept { return t_lb_; }
    [[nodiscard]] bool provably_infeasible() const noexcept {
        return !(t_lb_ < cfg_.t_c - kStrictMargin);
    }
    TrajectoryParams next() {
        TrajectoryParams p;
        p.omega_m.resize(x_.dof());
        for (Eigen::Index i = 0; i < x_.dof(); ++i) {
            const double s = x_.qc[i] - x_.q0[i] < 0.0 ? -1.0 : 1.0;
            p.omega_m[i] = s * rng_.uniform(kStrictMargin, cfg_.model.vel_limits[i]);
        }
        p.tf = rng_.uniform(std::min(t_lb_, cfg_.t_c), cfg_.t_c);
        return p;
    }

private:
    const PlanningInput& x_;
    const ProblemConfig& cfg_;
    Rng rng_;
    double t_lb_ = 0.0;
};

/// Multi-restart global solve: local solves from `n_restarts` seeded starts,
/// keeping the feasible result with the least objective.
inline SolveReport solve_global(const PlanningInput& x, const ProblemConfig& cfg, int n_restarts, std::uint64_t seed,
                                const SolverOptions& opt = {}) {
    require(n_restarts >= 1, "solve_global: n_restarts must be >= 1");
    Stopwatch clock;
    detail::TrajectoryNlp nlp(x, cfg);
    RestartSampler sampler(x, cfg, seed);
    std::optional<SolveReport> best;
    std::optional<SolveReport> best_infeasible;
    int used = 0;
    if (!sampler.provably_infeasible()) {
        for (int k = 0; k < n_restarts; ++k) {
            auto rep = detail::sqp_solve(nlp, sampler.next().as_vector(), opt);
            ++used;
            if (rep.feasible) {
                if (!best || rep.objective_value < best->objective_value) best = rep;
            } else if (!best_infeasible || rep.max_violation < best_infeasible->max_violation) {
                best_infeasible = rep;
            }
        }
    }
    SolveReport out;
    if (best) {
        out = *best;
    } else if (best_infeasible) {
        out = *best_infeasible;
    } else {
        // Minimum-time bound exceeds the budget: report the bound-limited guess.
        Vec guess(nlp.size());
        for (Eigen::Index i = 0; i < nlp.dof(); ++i) {
            const double s = x.qc[i] - x.q0[i] < 0.0 ? -1.0 : 1.0;
            guess[i] = s * cfg.model.vel_limits[i];
        }
        guess[nlp.dof()] = cfg.t_c;
        out = detail::finish_report(nlp, guess, opt);
        out.feasible = false;
    }
    out.restarts_used = used;
    out.wall_time = clock.seconds();
    return out;
}

/// dF_r = (∇F(C*)·dC) / F(C*) with a central-difference gradient.
inline double relative_change_rate(const PlanningInput& x, const ProblemConfig& cfg, const TrajectoryParams& c_star,
                                   const TrajectoryParams& dc) {
    detail::TrajectoryNlp nlp(x, cfg);
    require(c_star.dof() == nlp.dof() && dc.dof() == nlp.dof(), "relative_change_rate: dimension mismatch");
    const Vec v = c_star.as_vector();
    const Vec dv = dc.as_vector();
    const double f = nlp.objective(v);
    if (f == 0.0) throw UndefinedRate("relative_change_rate: F(C*) = 0, rate undefined");
    double df = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv[i] == 0.0) continue;
        const double h = 1e-6 * std::max(1.0, std::abs(v[i]));
        Vec vp = v, vm = v;
        vp[i] += h;
        vm[i] -= h;
        df += (nlp.objective(vp) - nlp.objective(vm)) / (2.0 * h) * dv[i];
    }
    return df / f;
}

}  // namespace lotraj
