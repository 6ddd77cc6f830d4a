#pragma once

// Continuous re-planning against a converging interaction target. Every
// period T_p the LO model plans from the current (q, q̇) to the latest joint
// target, and the robot follows that plan until the next period starts.

#include "lotraj/pipeline.hpp"

namespace lotraj {

struct ScenarioConfig {
    double T_p = 0.06;
    Eigen::Vector3d p_true = Eigen::Vector3d::Zero();
    Eigen::Vector3d p_init_guess = Eigen::Vector3d::Zero();
    double convergence_rate = 0.5;  ///< λ, per period
    double noise_amplitude = 0.0;   ///< m, per axis
    double t_c0 = 2.0;
    Vec start_q;
    std::uint64_t seed = 1;

    void validate(const WorkspaceSpec& ws, const RobotModel& model) const {
        require(T_p > 0.0, "scenario: T_p must be > 0");
        require(t_c0 > T_p, "scenario: t_c0 must exceed T_p");
        require(convergence_rate > 0.0, "scenario: convergence_rate must be > 0");
        require(noise_amplitude >= 0.0, "scenario: noise_amplitude must be >= 0");
        require(p_true.allFinite() && p_init_guess.allFinite(), "scenario: non-finite positions");
        require(in_region(p_true, ws.interacting), "scenario: p_true lies outside the interacting region");
        require(static_cast<std::size_t>(start_q.size()) == model.joints(), "scenario: start_q has the wrong length");
        require(within_joint_limits(model, start_q), "scenario: start_q violates the joint ranges");
    }
};

/// Shipped scenario: a forward reach from the effective region to a point
/// in the interacting region, first predicted about 6 cm off.
inline ScenarioConfig default_scenario() {
    ScenarioConfig s;
    s.start_q = Vec(3);
    s.start_q << -0.6, -0.75, 0.2;
    s.p_true = Eigen::Vector3d(0.574, -0.0926, 0.2879);
    s.p_init_guess = Eigen::Vector3d(0.5684, -0.0341, 0.3095);
    s.convergence_rate = 1.0;
    s.noise_amplitude = 0.001;
    s.seed = 7;
    return s;
}

struct TargetPoint {
    Eigen::Vector3d p_c;
    double t_c = 0.0;
};

/// p_c^i = p_true + (p_init_guess − p_true)·exp(−λi) + noise_i for
/// i = 0, 1, ... while t_c^i = t_c0 − i·T_p stays above T_p. Noise is
/// uniform per axis and dropped once the deterministic part is within
/// 1e-4 m of p_true.
inline std::vector<TargetPoint> target_stream(const ScenarioConfig& sc, std::uint64_t seed) {
    require(sc.convergence_rate > 0.0, "target_stream: convergence_rate must be > 0");
    require(sc.T_p > 0.0, "target_stream: T_p must be > 0");
    Rng rng(seed);
    std::vector<TargetPoint> out;
    bool settled = false;
    for (std::size_t i = 0;; ++i) {
        const double t_c = sc.t_c0 - static_cast<double>(i) * sc.T_p;
        if (t_c <= sc.T_p) break;
        const double decay = std::exp(-sc.convergence_rate * static_cast<double>(i));
        Eigen::Vector3d p = sc.p_true + (sc.p_init_guess - sc.p_true) * decay;
        if ((p - sc.p_true).norm() <= 1e-4) settled = true;
        Eigen::Vector3d noise;
        for (int a = 0; a < 3; ++a) noise[a] = rng.uniform(-1.0, 1.0) * sc.noise_amplitude;
        if (!settled) p += noise;
        out.push_back({p, t_c});
    }
    return out;
}

struct JointTargets {
    Vec q_true;                 ///< configuration reaching p_true
    std::vector<Vec> per_period;
};

/// Joint-space targets for a stream. q_true is the IK solution nearest to
/// start_q among local searches from sampled configurations whose end
/// effector lands near p_true; each period's target is then tracked by IK
/// warm-started from the previous one.
inline JointTargets resolve_joint_targets(const ScenarioConfig& sc, const RobotModel& model,
                                          const std::vector<TargetPoint>& stream, std::uint64_t seed) {
    Rng rng(seed);
    std::optional<Vec> best;
    const auto n = model.dof();
    for (int draw = 0, found = 0; draw < 20000 && found < 16; ++draw) {
        Vec q(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& r = model.joint_limits[static_cast<std::size_t>(i)];
            q[i] = rng.uniform(r.lower, r.upper);
        }
        if ((forward_kinematics(model, q) - sc.p_true).norm() > 0.05) continue;
        const auto sol = inverse_kinematics(model, sc.p_true, q);
        if (!sol) continue;
        ++found;
        if (!best || (*sol - sc.start_q).norm() < (*best - sc.start_q).norm()) best = sol;
    }
    if (!best) throw RegionUnreachable("resolve_joint_targets: no configuration reaches p_true");
    JointTargets out;
    out.q_true = *best;
    Vec prev = out.q_true;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        auto q = inverse_kinematics(model, stream[i].p_c, prev);
        if (!q) q = inverse_kinematics(model, stream[i].p_c, out.q_true);
        if (!q) throw RegionUnreachable("resolve_joint_targets: target of period " + std::to_string(i + 1) +
                                        " is out of reach");
        out.per_period.push_back(*q);
        prev = *q;
    }
    return out;
}

inline constexpr double kContactPositionTol = 1e-4;  // rad
inline constexpr double kContactVelocityTol = 1e-6;  // rad/s

struct PeriodRecord {
    std::size_t period = 0;  ///< 1-based
    double t_start = 0.0;
    double t_c = 0.0;
    PlanningInput input;
    PlanResult result;
    double advance = 0.0;  ///< time followed along the plan, min(T_p, tf)
    Vec q_end;
    Vec qd_end;
};

struct MotionTrace {
    double T_p = 0.0;
    std::vector<PeriodRecord> periods;
    bool contact = false;
    std::size_t contact_period = 0;
    bool failed = false;
    std::size_t failed_period = 0;
    Vec q_final;
    Vec qd_final;
    double final_error = kInf;  ///< max |q_final − q_true| (rad)
    /// Largest jump in q and q̇ between the end of one period's plan and the
    /// start of the next.
    double continuity_error_q = 0.0;
    double continuity_error_qd = 0.0;

    [[nodiscard]] std::size_t total_periods() const noexcept { return periods.size(); }

    [[nodiscard]] double real_time_fraction() const {
        if (periods.empty()) return 1.0;
        std::size_t ok = 0;
        for (const auto& p : periods) ok += p.result.T_L < T_p ? 1 : 0;
        return static_cast<double>(ok) / static_cast<double>(periods.size());
    }
};

inline bool at_contact(const Vec& q, const Vec& qd, const Vec& target) {
    return (target - q).cwiseAbs().maxCoeff() < kContactPositionTol && qd.cwiseAbs().maxCoeff() < kContactVelocityTol;
}

/// Plans once per period until contact, an infeasible plan, or the end of
/// the stream. Each plan is solved with the remaining budget t_c^i.
inline MotionTrace run_session(const LOModel& lo, const ScenarioConfig& sc, const std::vector<TargetPoint>& stream,
                               const JointTargets& targets) {
    require(targets.per_period.size() == stream.size(), "run_session: one joint target per period required");
    require(sc.T_p > 0.0, "run_session: T_p must be > 0");
    const auto n = lo.problem.model.dof();
    require(sc.start_q.size() == n && targets.q_true.size() == n, "run_session: joint count mismatch");

    MotionTrace trace;
    trace.T_p = sc.T_p;
    Vec q = sc.start_q;
    Vec qd = Vec::Zero(n);
    LOModel period_model = lo;
    std::optional<std::vector<TrapezoidalProfile>> previous;

    for (std::size_t i = 0; i < stream.size(); ++i) {
        const Vec& target = targets.per_period[i];
        if (at_contact(q, qd, target)) {
            trace.contact = true;
            trace.contact_period = i + 1;
            break;
        }
        PeriodRecord rec;
        rec.period = i + 1;
        rec.t_start = static_cast<double>(i) * sc.T_p;
        rec.t_c = stream[i].t_c;
        rec.input = {q, target, qd};
        period_model.problem.t_c = stream[i].t_c;
        rec.result = plan(period_model, rec.input);
        if (!rec.result.feasible) {
            trace.failed = true;
            trace.failed_period = rec.period;
            trace.periods.push_back(std::move(rec));
            break;
        }
        const auto prof = profiles(rec.result.params, rec.input);
        if (previous) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const auto s = prof[static_cast<std::size_t>(j)].at(0.0);
                trace.continuity_error_q = std::max(trace.continuity_error_q, std::abs(s.q - q[j]));
                trace.continuity_error_qd = std::max(trace.continuity_error_qd, std::abs(s.qdot - qd[j]));
            }
        }
        rec.advance = std::min(sc.T_p, rec.result.params.tf);
        rec.q_end.resize(n);
        rec.qd_end.resize(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto s = prof[static_cast<std::size_t>(j)].at(rec.advance);
            rec.q_end[j] = s.q;
            rec.qd_end[j] = s.qdot;
        }
        q = rec.q_end;
        qd = rec.qd_end;
        previous = prof;
        trace.periods.push_back(std::move(rec));
    }
    trace.q_final = q;
    trace.qd_final = qd;
    trace.final_error = (q - targets.q_true).cwiseAbs().maxCoeff();
    return trace;
}

/// Resolves targets and runs the scenario with its own seed.
inline MotionTrace run_scenario(const LOModel& lo, const ScenarioConfig& sc) {
    const auto stream = target_stream(sc, sc.seed);
    const auto targets = resolve_joint_targets(sc, lo.problem.model, stream, derive_seed(sc.seed, 1));
    return run_session(lo, sc, stream, targets);
}

/// Summary lines prefixed with "# ", then the motion sampled `samples` times
/// per period. `period_start` is 1 on the first row of each period.
inline std::string trace_csv(const MotionTrace& trace, int samples = 6) {
    require(samples >= 1, "trace_csv: samples must be >= 1");
    std::ostringstream os;
    os.precision(17);
    os << "# periods," << trace.total_periods() << "\n# contact," << (trace.contact ? 1 : 0)
       << "\n# contact_period," << trace.contact_period << "\n# failed," << (trace.failed ? 1 : 0)
       << "\n# failed_period," << trace.failed_period << "\n# final_error," << trace.final_error
       << "\n# real_time_fraction," << trace.real_time_fraction() << "\n";
    const auto n = trace.q_final.size();
    os << "t,period,period_start";
    for (Eigen::Index j = 0; j < n; ++j) os << ",q_" << j + 1;
    for (Eigen::Index j = 0; j < n; ++j) os << ",qd_" << j + 1;
    os << ",T_L\n";
    for (const auto& rec : trace.periods) {
        if (!rec.result.feasible) break;
        const auto prof = profiles(rec.result.params, rec.input);
        for (int k = 0; k < samples; ++k) {
            const double t = rec.advance * k / samples;
            os << rec.t_start + t << ',' << rec.period << ',' << (k == 0 ? 1 : 0);
            for (const auto& p : prof) os << ',' << p.at(t).q;
            for (const auto& p : prof) os << ',' << p.at(t).qdot;
            os << ',' << rec.result.T_L << '\n';
        }
    }
    const double t_end = trace.periods.empty() ? 0.0 : trace.periods.back().t_start + trace.periods.back().advance;
    os << t_end << ',' << trace.total_periods() << ",0";
    for (Eigen::Index j = 0; j < n; ++j) os << ',' << trace.q_final[j];
    for (Eigen::Index j = 0; j < n; ++j) os << ',' << trace.qd_final[j];
    os << ",\n";
    return os.str();
}

inline void save_trace_csv(const MotionTrace& trace, const std::filesystem::path& path) {
    write_file_atomic(path, trace_csv(trace));
}

inline Json scenario_to_json(const ScenarioConfig& s) {
    return {{"T_p", s.T_p},
            {"p_true", vec_to_json(s.p_true)},
            {"p_init_guess", vec_to_json(s.p_init_guess)},
            {"convergence_rate", s.convergence_rate},
            {"noise_amplitude", s.noise_amplitude},
            {"t_c0", s.t_c0},
            {"start_q", vec_to_json(s.start_q)},
            {"seed", s.seed}};
}

inline ScenarioConfig scenario_from_json(const Json& j) {
    constexpr std::string_view where = "scenario";
    if (!j.is_object()) throw SchemaError("scenario: expected an object");
    ScenarioConfig s;
    s.T_p = field<double>(j, "T_p", where);
    for (const char* key : {"p_true", "p_init_guess", "start_q"}) {
        if (!j.contains(key)) throw SchemaError(std::string("scenario: missing field '") + key + "'");
    }
    s.p_true = point_from_json(j["p_true"], "scenario.p_true");
    s.p_init_guess = point_from_json(j["p_init_guess"], "scenario.p_init_guess");
    s.convergence_rate = field<double>(j, "convergence_rate", where);
    s.noise_amplitude = field<double>(j, "noise_amplitude", where);
    s.t_c0 = field<double>(j, "t_c0", where);
    s.start_q = vec_from_json(j["start_q"], "scenario.start_q");
    if (j.contains("seed")) s.seed = field<std::uint64_t>(j, "seed", where);
    return s;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    return scenario_from_json(read_json_file(path));
}

}  // namespace lotraj
