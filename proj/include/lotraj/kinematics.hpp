#pragma once

// Denavit-Hartenberg forward kinematics (position only) and task-space
// workspace regions built from boxes and spherical-shell sectors.
//
// Link transform convention (classic DH):
//   T_i = Rot_z(q_i + theta_offset) * Trans_z(d) * Trans_x(a) * Rot_x(alpha)

#include "lotraj/common.hpp"

#include <numbers>
#include <optional>
#include <variant>

namespace lotraj {

struct DHLink {
    double alpha = 0.0;
    double a = 0.0;
    double theta_offset = 0.0;
    double d = 0.0;
};

struct JointRange {
    double lower = 0.0;
    double upper = 0.0;
    [[nodiscard]] double span() const noexcept { return upper - lower; }
    [[nodiscard]] bool contains(double q) const noexcept { return q >= lower && q <= upper; }
};

struct RobotModel {
    std::vector<DHLink> links;
    std::vector<JointRange> joint_limits;
    Vec vel_limits;  ///< q̇_max per joint (rad/s)
    Vec acc_limits;  ///< q̈_max per joint (rad/s²)

    [[nodiscard]] std::size_t joints() const noexcept { return links.size(); }
    [[nodiscard]] Eigen::Index dof() const noexcept { return static_cast<Eigen::Index>(links.size()); }

    void validate() const {
        require(!links.empty(), "robot: at least one link required");
        const auto n = links.size();
        require(joint_limits.size() == n, "robot: joint_limits length must equal link count");
        require(static_cast<std::size_t>(vel_limits.size()) == n, "robot: vel_limits length must equal link count");
        require(static_cast<std::size_t>(acc_limits.size()) == n, "robot: acc_limits length must equal link count");
        for (std::size_t i = 0; i < n; ++i) {
            const auto& l = links[i];
            require(std::isfinite(l.alpha) && std::isfinite(l.a) && std::isfinite(l.theta_offset) &&
                        std::isfinite(l.d),
                    "robot: non-finite DH parameter");
            require(l.a >= 0.0, "robot: DH link length a must be >= 0");
            require(joint_limits[i].lower < joint_limits[i].upper, "robot: joint range lower must be < upper");
            const auto k = static_cast<Eigen::Index>(i);
            require(vel_limits[k] > 0.0, "robot: velocity limits must be > 0");
            require(acc_limits[k] > 0.0, "robot: acceleration limits must be > 0");
        }
    }
};

inline Eigen::Matrix4d dh_transform(const DHLink& link, double q) {
    const double theta = q + link.theta_offset;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double ca = std::cos(link.alpha), sa = std::sin(link.alpha);
    Eigen::Matrix4d t;
    t << ct, -st * ca, st * sa, link.a * ct,
         st, ct * ca, -ct * sa, link.a * st,
         0.0, sa, ca, link.d,
         0.0, 0.0, 0.0, 1.0;
    return t;
}

/// End-effector position for joint vector q. Joint limits are not enforced
/// here; use within_joint_limits() to flag violations.
inline Eigen::Vector3d forward_kinematics(const RobotModel& model, const Vec& q) {
    if (static_cast<std::size_t>(q.size()) != model.joints()) {
        throw InputError("forward_kinematics: expected " + std::to_string(model.joints()) +
                         " joint values, got " + std::to_string(q.size()));
    }
    Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
    for (std::size_t i = 0; i < model.links.size(); ++i) {
        t = t * dh_transform(model.links[i], q[static_cast<Eigen::Index>(i)]);
    }
    return t.block<3, 1>(0, 3);
}

inline bool within_joint_limits(const RobotModel& model, const Vec& q) {
    if (static_cast<std::size_t>(q.size()) != model.joints()) return false;
    for (std::size_t i = 0; i < model.joints(); ++i) {
        if (!model.joint_limits[i].contains(q[static_cast<Eigen::Index>(i)])) return false;
    }
    return true;
}

/// Position Jacobian by central differences.
inline Eigen::Matrix<double, 3, Eigen::Dynamic> position_jacobian(const RobotModel& model, const Vec& q) {
    Eigen::Matrix<double, 3, Eigen::Dynamic> j(3, q.size());
    constexpr double h = 1e-7;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        Vec qp = q, qm = q;
        qp[i] += h;
        qm[i] -= h;
        j.col(i) = (forward_kinematics(model, qp) - forward_kinematics(model, qm)) / (2.0 * h);
    }
    return j;
}

struct IkOptions {
    int max_iterations = 500;
    double tolerance = 1e-10;  ///< position residual (m)
    double damping = 1e-3;     ///< initial damping, adapted per step
};

/// Damped least-squares position IK from `start`, clamped to the joint
/// ranges. Damping shrinks after a step that reduces the residual and
/// grows otherwise. Empty when the residual does not reach the tolerance.
inline std::optional<Vec> inverse_kinematics(const RobotModel& model, const Eigen::Vector3d& target, const Vec& start,
                                             const IkOptions& opt = {}) {
    require(static_cast<std::size_t>(start.size()) == model.joints(), "inverse_kinematics: wrong joint count");
    auto clamp = [&](Vec q) {
        for (std::size_t i = 0; i < model.joints(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            q[k] = std::clamp(q[k], model.joint_limits[i].lower, model.joint_limits[i].upper);
        }
        return q;
    };
    Vec q = clamp(start);
    double err = (target - forward_kinematics(model, q)).norm();
    double lambda = opt.damping;
    for (int it = 0; it < opt.max_iterations && err > opt.tolerance; ++it) {
        const Eigen::Vector3d e = target - forward_kinematics(model, q);
        const auto j = position_jacobian(model, q);
        const Eigen::Matrix3d jjt = j * j.transpose() + lambda * lambda * Eigen::Matrix3d::Identity();
        const Vec trial = clamp(q + j.transpose() * jjt.ldlt().solve(e));
        const double trial_err = (target - forward_kinematics(model, trial)).norm();
        if (trial_err < err) {
            q = trial;
            err = trial_err;
            lambda = std::max(lambda * 0.5, 1e-9);
        } else {
            lambda *= 10.0;
            if (lambda > 1e3) break;
        }
    }
    if (err <= opt.tolerance) return q;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Workspace regions

struct Box {
    Eigen::Vector3d lo = Eigen::Vector3d::Zero();
    Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

/// Points whose spherical coordinates about `center` fall in
/// [r_min, r_max] x [azimuth_min, azimuth_max] x [elevation_min, elevation_max].
/// Azimuth is atan2(dy, dx); elevation is the angle above the xy plane.
struct ShellSector {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double r_min = 0.0;
    double r_max = 0.0;
    double azimuth_min = -std::numbers::pi;
    double azimuth_max = std::numbers::pi;
    double elevation_min = -std::numbers::pi / 2;
    double elevation_max = std::numbers::pi / 2;
};

using RegionPrimitive = std::variant<Box, ShellSector>;

/// Closed union of primitives.
struct Region {
    std::vector<RegionPrimitive> primitives;

    [[nodiscard]] Region united_with(const Region& other) const {
        Region out = *this;
        out.primitives.insert(out.primitives.end(), other.primitives.begin(), other.primitives.end());
        return out;
    }
};

struct WorkspaceSpec {
    Region effective;    ///< W_E
    Region interacting;  ///< W_C, expected to lie inside W_E
};

inline bool contains(const Box& box, const Eigen::Vector3d& p) {
    return (p.array() >= box.lo.array()).all() && (p.array() <= box.hi.array()).all();
}

inline bool contains(const ShellSector& s, const Eigen::Vector3d& p) {
    const Eigen::Vector3d v = p - s.center;
    const double r = v.norm();
    if (r < s.r_min || r > s.r_max) return false;
    if (r == 0.0) return true;  // centre point: angles undefined, radius test decides
    const double horizontal = std::hypot(v.x(), v.y());
    const double elevation = std::atan2(v.z(), horizontal);
    if (elevation < s.elevation_min || elevation > s.elevation_max) return false;
    if (horizontal == 0.0) return true;  // on the polar axis every azimuth matches
    const double azimuth = std::atan2(v.y(), v.x());
    return azimuth >= s.azimuth_min && azimuth <= s.azimuth_max;
}

inline bool in_region(const Eigen::Vector3d& p, const Region& region) {
    for (const auto& prim : region.primitives) {
        if (std::visit([&](const auto& shape) { return contains(shape, p); }, prim)) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Shipped case-study robot

/// 3-DOF elbow arm with the link lengths and motion limits of the haptic
/// feedback manipulator case: 0.2 m base height, two 0.3 m links, joint 1
/// in [-π/2, π/2], joints 2-3 in [-π/4, π/4], 1.75 rad/s, 15 rad/s².
inline RobotModel default_robot() {
    using std::numbers::pi;
    RobotModel m;
    m.links = {
        {.alpha = -pi / 2, .a = 0.0, .theta_offset = 0.0, .d = 0.2},
        {.alpha = 0.0, .a = 0.3, .theta_offset = 0.0, .d = 0.0},
        {.alpha = 0.0, .a = 0.3, .theta_offset = 0.0, .d = 0.0},
    };
    m.joint_limits = {{-pi / 2, pi / 2}, {-pi / 4, pi / 4}, {-pi / 4, pi / 4}};
    m.vel_limits = Vec::Constant(3, 1.75);
    m.acc_limits = Vec::Constant(3, 15.0);
    return m;
}

/// Forward-facing shell sectors about the shoulder (0, 0, 0.2): W_E spans
/// ±60° azimuth and ±45° elevation, W_C the inner ±30° / ±20° patch.
inline WorkspaceSpec default_workspace() {
    using std::numbers::pi;
    const Eigen::Vector3d shoulder(0.0, 0.0, 0.2);
    ShellSector effective{.center = shoulder,
                          .r_min = 0.45,
                          .r_max = 0.65,
                          .azimuth_min = -pi / 3,
                          .azimuth_max = pi / 3,
                          .elevation_min = -pi / 4,
                          .elevation_max = pi / 4};
    ShellSector interacting{.center = shoulder,
                            .r_min = 0.5,
                            .r_max = 0.62,
                            .azimuth_min = -pi / 6,
                            .azimuth_max = pi / 6,
                            .elevation_min = -pi / 9,
                            .elevation_max = pi / 9};
    return {.effective = {{effective}}, .interacting = {{interacting}}};
}

}  // namespace lotraj
