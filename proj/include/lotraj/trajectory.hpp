#pragma once

// Per-joint trapezoidal velocity profile.
//
// A profile is fixed by the boundary (q0, qc, ω0) plus two free parameters,
// the cruise velocity ωm and the total time tf. The remaining quantities
// (a, t1, t2) follow from the area and slope relations
//
//   ½·ωm·(tf + t2 − t1) + ½·ω0·t1 = qc − q0
//   ωm = ω0 + a·t1
//   (ωm − ω0)/t1 = ωm/(tf − t2)
//
// which have the closed form (in the direction-normalized frame, D = |qc − q0|)
//
//   a  = (ωm² + (ωm − ω0)²) / (2·(ωm·tf − D))
//   t1 = (ωm − ω0)/a,   t2 = tf − ωm/a.
//
// Motion is solved in the frame s = sign(qc − q0) (s = +1 for zero
// displacement) so that ωm and a are magnitudes there; physical values are
// s times the normalized ones.

#include "lotraj/common.hpp"

#include <string>

namespace lotraj {

struct JointBoundary {
    double q0 = 0.0;
    double qc = 0.0;
    double omega0 = 0.0;

    [[nodiscard]] double displacement() const noexcept { return qc - q0; }
    [[nodiscard]] double direction() const noexcept { return qc - q0 < 0.0 ? -1.0 : 1.0; }
    [[nodiscard]] bool at_rest() const noexcept { return qc == q0 && omega0 == 0.0; }
};

/// Shape of a trapezoid in the direction-normalized frame. `valid` is false
/// when ωm ≤ 0, tf ≤ 0 or the area bound ωm·tf > D fails; the derived fields
/// are then meaningless.
struct NormalizedShape {
    bool valid = false;
    double accel = 0.0;
    double t1 = 0.0;
    double t2 = 0.0;
    double area_slack = 0.0;  ///< ωm·tf − D
};

inline NormalizedShape normalized_shape(double distance, double omega0_n, double omega_m_n, double tf) {
    NormalizedShape s;
    s.area_slack = omega_m_n * tf - distance;
    if (!(omega_m_n > 0.0) || !(tf > 0.0) || !(s.area_slack > 0.0)) return s;
    const double dw = omega_m_n - omega0_n;
    s.accel = (omega_m_n * omega_m_n + dw * dw) / (2.0 * s.area_slack);
    s.t1 = dw / s.accel;
    s.t2 = tf - omega_m_n / s.accel;
    s.valid = std::isfinite(s.accel) && s.accel > 0.0;
    return s;
}

struct MotionState {
    double q = 0.0;
    double qdot = 0.0;
    double qddot = 0.0;
};

struct TrapezoidalProfile {
    JointBoundary boundary;
    double omega_m = 0.0;  ///< physical (signed) cruise velocity
    double tf = 0.0;
    double a = 0.0;        ///< physical (signed) acceleration of the first phase
    double t1 = 0.0;
    double t2 = 0.0;

    [[nodiscard]] double direction() const noexcept { return boundary.direction(); }
    [[nodiscard]] bool is_rest() const noexcept { return boundary.at_rest(); }

    /// Sample the profile at time t ∈ [0, tf].
    [[nodiscard]] MotionState at(double t) const;
};

/// Slack allowed on the phase-ordering relations, so that solver outputs
/// sitting on an active constraint (e.g. t1 = tf/2) are accepted. Matches the
/// default feasibility tolerance of the planner.
inline constexpr double kShapeTolerance = 1e-6;

inline TrapezoidalProfile solve_profile(const JointBoundary& boundary, double omega_m, double tf) {
    require(std::isfinite(boundary.q0) && std::isfinite(boundary.qc) && std::isfinite(boundary.omega0),
            "solve_profile: non-finite boundary");
    require(std::isfinite(omega_m) && std::isfinite(tf), "solve_profile: non-finite parameters");
    require(tf > 0.0, "solve_profile: tf must be > 0");

    TrapezoidalProfile p;
    p.boundary = boundary;
    p.omega_m = omega_m;
    p.tf = tf;
    if (boundary.at_rest()) return p;  // a = 0, t1 = t2 = 0

    const double s = boundary.direction();
    const double distance = std::abs(boundary.displacement());
    const double w0 = s * boundary.omega0;
    const double wm = s * omega_m;
    if (!(wm > 0.0)) {
        throw ProfileInfeasible("direction", "solve_profile: cruise velocity must be non-zero and point along the "
                                             "net motion");
    }
    const auto shape = normalized_shape(distance, w0, wm, tf);
    if (!shape.valid) {
        throw ProfileInfeasible("area", "solve_profile: ωm·tf = " + std::to_string(wm * tf) +
                                            " does not exceed the displacement " + std::to_string(distance));
    }
    const double tol = kShapeTolerance * std::max(1.0, tf);
    if (shape.t1 < -tol) {
        throw ProfileInfeasible("t1>=0", "solve_profile: derived t1 = " + std::to_string(shape.t1) + " < 0");
    }
    if (shape.t1 > 0.5 * tf + tol) {
        throw ProfileInfeasible("t1<=tf/2", "solve_profile: derived t1 = " + std::to_string(shape.t1) +
                                                " exceeds tf/2");
    }
    if (shape.t2 < shape.t1 - tol) {
        throw ProfileInfeasible("t2>=t1", "solve_profile: derived t2 = " + std::to_string(shape.t2) +
                                              " precedes t1 = " + std::to_string(shape.t1));
    }
    p.a = s * shape.accel;
    p.t1 = std::clamp(shape.t1, 0.0, tf);
    p.t2 = std::clamp(shape.t2, p.t1, tf);
    return p;
}

inline MotionState TrapezoidalProfile::at(double t) const {
    if (!(t >= 0.0 && t <= tf)) {
        throw InputError("evaluate: t = " + std::to_string(t) + " outside [0, " + std::to_string(tf) + "]");
    }
    const auto& b = boundary;
    if (is_rest()) return {b.q0, 0.0, 0.0};

    const double s = direction();
    const double an = s * a;
    const double w0 = s * b.omega0;
    const double wm = s * omega_m;
    const double distance = std::abs(b.displacement());

    double x = 0.0, v = 0.0, acc = 0.0;
    if (t < t1) {
        v = w0 + an * t;
        x = w0 * t + 0.5 * an * t * t;
        acc = an;
    } else if (t < t2) {
        v = wm;
        x = w0 * t1 + 0.5 * an * t1 * t1 + wm * (t - t1);
        acc = 0.0;
    } else {
        // Measured back from tf so the terminal state is exact.
        const double tau = tf - t;
        v = an * tau;
        x = distance - 0.5 * an * tau * tau;
        acc = -an;
    }
    if (t == tf) return {b.qc, 0.0, -s * an};
    return {b.q0 + s * x, s * v, s * acc};
}

inline MotionState evaluate(const TrapezoidalProfile& profile, double t) { return profile.at(t); }

}  // namespace lotraj
