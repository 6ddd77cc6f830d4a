#pragma once

// The learning-optimisation model: a regressor trained on an optimal
// database predicts C', and a warm-started local solve refines it.

#include "lotraj/regression.hpp"

#include <memory>

namespace lotraj {

enum class Refinement { WithObjective, NonObjective };

inline std::string to_string(Refinement r) { return r == Refinement::WithObjective ? "obj" : "nonobj"; }

inline Refinement refinement_from_string(std::string_view s) {
    if (s == "obj") return Refinement::WithObjective;
    if (s == "nonobj") return Refinement::NonObjective;
    throw InputError("unknown refinement '" + std::string(s) + "' (expected obj or nonobj)");
}

struct LOModel {
    std::shared_ptr<const Database> database;
    MultiOutputModel regressor;
    Refinement refinement = Refinement::WithObjective;
    ProblemConfig problem;
    SolverOptions solver;

    void validate() const {
        require(database != nullptr, "LOModel: no database");
        require(regressor.db_hash == database->content_hash(),
                "LOModel: regressor was fitted on a different database");
        require(regressor.dof() == problem.model.dof(), "LOModel: regressor and robot differ in joint count");
    }
};

/// LO model whose problem settings are the ones the database was built with.
inline LOModel make_lo_model(std::shared_ptr<const Database> db, MultiOutputModel regressor,
                             Refinement refinement = Refinement::WithObjective) {
    require(db != nullptr, "make_lo_model: no database");
    LOModel lo;
    lo.problem = db->metadata.problem;
    lo.database = std::move(db);
    lo.regressor = std::move(regressor);
    lo.refinement = refinement;
    lo.validate();
    return lo;
}

struct PlanResult {
    TrajectoryParams params;
    TrajectoryParams prediction;  ///< C' before refinement
    bool feasible = false;
    double objective_value = 0.0;
    double T_PR = 0.0;  ///< prediction time (s)
    double T_RO = 0.0;  ///< refinement time (s)
    double T_L = 0.0;   ///< T_PR + T_RO
    int iterations = 0;
    double max_violation = 0.0;
    /// q0 and qc inside the joint ranges. Not part of `feasible`: the problem
    /// only sees qc − q0, and sampled inputs put q0 at zero.
    bool within_limits = true;
};

/// predict → refine. The returned parameters always come out of the
/// refinement solve and `feasible` is its verdict.
inline PlanResult plan(const LOModel& lo, const PlanningInput& x) {
    x.validate();
    require(x.dof() == lo.problem.model.dof(), "plan: input has the wrong joint count");
    PlanResult out;
    const auto pred = predict_timed(lo.regressor, x);
    out.prediction = pred.params;
    out.T_PR = pred.seconds;
    Stopwatch clock;
    const auto rep = lo.refinement == Refinement::WithObjective
                         ? solve_local(x, lo.problem, pred.params, lo.solver)
                         : solve_feasible(x, lo.problem, pred.params, lo.solver);
    out.T_RO = clock.seconds();
    out.T_L = out.T_PR + out.T_RO;
    out.params = rep.params;
    out.objective_value = rep.objective_value;
    out.iterations = rep.iterations;
    out.max_violation = rep.max_violation;
    out.feasible = rep.feasible;
    out.within_limits = within_joint_limits(lo.problem.model, x.q0) && within_joint_limits(lo.problem.model, x.qc);
    return out;
}

// ---------------------------------------------------------------------------
// Test sets

struct TestSetOptions {
    std::size_t n_r = 200;
    std::size_t n2 = 5;
    int oracle_restarts = 100;
    std::uint64_t seed = 1001;
    unsigned jobs = 1;
};

/// N_r samples from the database sampling pipeline, solved with the oracle
/// restart budget. Batches are drawn until N_r feasible samples exist; the
/// first batch uses `seed`, later ones seeds derived from it. `training`, if
/// given, must have been generated with a different seed.
inline Database make_test_set(const ProblemConfig& cfg, const WorkspaceSpec& ws, const TestSetOptions& opt,
                              const Database* training = nullptr) {
    require(opt.n_r >= 1, "make_test_set: N_r must be >= 1");
    require(opt.n2 >= 1 && opt.oracle_restarts >= 1, "make_test_set: N_2 and N_RO must be >= 1");
    if (training != nullptr && training->metadata.seed == opt.seed) {
        throw InputError("make_test_set: seed " + std::to_string(opt.seed) +
                         " was used for the training database");
    }
    Database out;
    GenerationStats stats;
    for (std::uint64_t round = 0; out.size() < opt.n_r; ++round) {
        if (round >= 3 && stats.feasible == 0) {
            throw RegionUnreachable("make_test_set: no feasible samples after " + std::to_string(round) + " batches");
        }
        GenerationOptions g;
        g.n2 = opt.n2;
        g.n1 = (opt.n_r - out.size() + opt.n2 - 1) / opt.n2;
        g.restarts = opt.oracle_restarts;
        g.seed = round == 0 ? opt.seed : derive_seed(opt.seed, round);
        g.jobs = opt.jobs;
        auto batch = generate_database(cfg, ws, g);
        stats.attempted += batch.metadata.stats.attempted;
        stats.feasible += batch.metadata.stats.feasible;
        stats.rest_skipped += batch.metadata.stats.rest_skipped;
        for (auto& s : batch.samples) {
            if (out.size() == opt.n_r) break;
            out.samples.push_back(std::move(s));
        }
    }
    for (const auto& s : out.samples) {
        if (!is_feasible(s.params, s.variable.to_input(), cfg)) {
            throw Error("make_test_set: oracle entry failed re-verification");
        }
    }
    auto& m = out.metadata;
    m.kind = "testset";
    m.n2 = opt.n2;
    m.n1 = (stats.attempted + opt.n2 - 1) / opt.n2;
    m.restarts = opt.oracle_restarts;
    m.seed = opt.seed;
    m.alphas = alpha_grid(opt.n2);
    m.problem = cfg;
    m.stats = stats;
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct SampleRecord {
    std::size_t index = 0;
    SampleVariable variable;
    bool feasible = false;
    double F_p = 0.0;                                        ///< LO objective
    double F_a = 0.0;                                        ///< oracle objective
    double e_F = std::numeric_limits<double>::quiet_NaN();   ///< |F_p − F_a| / |F_a|, feasible only
    double dF_r = std::numeric_limits<double>::quiet_NaN();  ///< at C* along C_p − C*
    double T_PR = 0.0;
    double T_RO = 0.0;
    double T_L = 0.0;
    int iterations = 0;
};

struct TimingStats {
    double median = 0.0;
    double p95 = 0.0;
    double max = 0.0;
};

inline TimingStats timing_stats(const std::vector<double>& t) {
    if (t.empty()) return {};
    return {median(t), quantile(t, 0.95), *std::max_element(t.begin(), t.end())};
}

struct EvaluationReport {
    std::size_t N_r = 0;
    std::size_t N_r1 = 0;  ///< feasible plans
    double R_s = 0.0;
    double e_F = 0.0;  ///< mean over feasible plans
    TimingStats T_L;
    TimingStats T_PR;
    TimingStats T_RO;
    /// Spearman rank correlation of e_F against dF_r over feasible plans.
    double spearman_eF_dFr = std::numeric_limits<double>::quiet_NaN();
    std::vector<SampleRecord> per_sample;
};

/// Recomputes every summary field from per_sample.
inline void summarize(EvaluationReport& r) {
    r.N_r = r.per_sample.size();
    r.N_r1 = 0;
    std::vector<double> ef, ef_c, df_c, tl, tpr, tro;
    for (const auto& s : r.per_sample) {
        tl.push_back(s.T_L);
        tpr.push_back(s.T_PR);
        tro.push_back(s.T_RO);
        if (!s.feasible) continue;
        ++r.N_r1;
        ef.push_back(s.e_F);
        if (std::isfinite(s.dF_r)) {
            ef_c.push_back(s.e_F);
            df_c.push_back(s.dF_r);
        }
    }
    r.R_s = r.N_r == 0 ? 0.0 : static_cast<double>(r.N_r1) / static_cast<double>(r.N_r);
    r.e_F = ef.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(ef);
    r.T_L = timing_stats(tl);
    r.T_PR = timing_stats(tpr);
    r.T_RO = timing_stats(tro);
    r.spearman_eF_dFr = ef_c.size() >= 2 ? spearman(ef_c, df_c) : std::numeric_limits<double>::quiet_NaN();
}

inline constexpr int kWarmupRuns = 3;

/// Plans every test input and compares against the stored oracle optimum.
/// The first kWarmupRuns plans are run once and discarded before timing.
inline EvaluationReport evaluate(const LOModel& lo, const Database& test_set, unsigned jobs = 1) {
    if (test_set.empty()) throw InputError("evaluate: empty test set");
    lo.validate();
    require(test_set.dof() == lo.problem.model.dof(), "evaluate: test set has the wrong joint count");
    for (int w = 0; w < kWarmupRuns; ++w)
        (void)plan(lo, test_set.samples[static_cast<std::size_t>(w) % test_set.size()].variable.to_input());

    EvaluationReport rep;
    rep.per_sample.resize(test_set.size());
    parallel_for(test_set.size(), jobs, [&](std::size_t k) {
        const auto& s = test_set.samples[k];
        const auto x = s.variable.to_input();
        const auto p = plan(lo, x);
        SampleRecord& r = rep.per_sample[k];
        r.index = k;
        r.variable = s.variable;
        r.feasible = p.feasible;
        r.F_p = p.objective_value;
        r.F_a = s.objective_value;
        r.T_PR = p.T_PR;
        r.T_RO = p.T_RO;
        r.T_L = p.T_L;
        r.iterations = p.iterations;
        if (p.feasible) r.e_F = std::abs(r.F_p - r.F_a) / std::abs(r.F_a);
        const TrajectoryParams dc{p.params.omega_m - s.params.omega_m, p.params.tf - s.params.tf};
        try {
            r.dF_r = relative_change_rate(x, lo.problem, s.params, dc);
        } catch (const UndefinedRate&) {
            r.dF_r = std::numeric_limits<double>::quiet_NaN();
        }
    });
    summarize(rep);
    return rep;
}

/// Summary lines prefixed with "# ", then one row per test sample.
inline std::string evaluation_csv(const EvaluationReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "# N_r," << r.N_r << "\n# N_r1," << r.N_r1 << "\n# R_s," << r.R_s << "\n# e_F," << r.e_F
       << "\n# T_L_median," << r.T_L.median << "\n# T_L_p95," << r.T_L.p95 << "\n# T_L_max," << r.T_L.max
       << "\n# T_PR_median," << r.T_PR.median << "\n# T_RO_median," << r.T_RO.median << "\n# spearman_eF_dFr,"
       << r.spearman_eF_dFr << "\n";
    const auto n = r.per_sample.empty() ? 0 : r.per_sample.front().variable.dof();
    os << "index";
    for (Eigen::Index i = 0; i < n; ++i) os << ",qf_" << i + 1;
    for (Eigen::Index i = 0; i < n; ++i) os << ",omega0_" << i + 1;
    os << ",feasible,F_p,F_a,e_F,dF_r,T_PR,T_RO,T_L,iterations\n";
    for (const auto& s : r.per_sample) {
        os << s.index;
        for (Eigen::Index i = 0; i < n; ++i) os << ',' << s.variable.qf[i];
        for (Eigen::Index i = 0; i < n; ++i) os << ',' << s.variable.omega0[i];
        os << ',' << (s.feasible ? 1 : 0) << ',' << s.F_p << ',' << s.F_a << ',' << s.e_F << ',' << s.dF_r << ','
           << s.T_PR << ',' << s.T_RO << ',' << s.T_L << ',' << s.iterations << '\n';
    }
    return os.str();
}

inline void save_evaluation_csv(const EvaluationReport& r, const std::filesystem::path& path) {
    write_file_atomic(path, evaluation_csv(r));
}

}  // namespace lotraj
