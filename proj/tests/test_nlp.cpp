#include "lotraj/nlp.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace lotraj;

namespace {

PlanningInput single(double q0, double qc, double w0) {
    return {Vec::Constant(1, q0), Vec::Constant(1, qc), Vec::Constant(1, w0)};
}

ProblemConfig one_joint_config(double tc = 2.0) {
    ProblemConfig cfg;
    cfg.model = oracle::one_joint_robot();
    cfg.t_c = tc;
    return cfg;
}

PlanningInput random_input(Rng& rng, const RobotModel& m) {
    PlanningInput x{Vec(3), Vec(3), Vec(3)};
    for (int i = 0; i < 3; ++i) {
        x.q0[i] = 0.0;
        x.qc[i] = rng.uniform(-0.8, 0.8);
        const double s = x.qc[i] < 0 ? -1.0 : 1.0;
        x.omega0[i] = s * rng.uniform(0.0, 0.5) * m.vel_limits[i];
    }
    return x;
}

}  // namespace

TEST(Objective, FormulaExamples) {
    ProblemConfig cfg = one_joint_config();
    cfg.model.acc_limits[0] = 2.0;
    cfg.t_max = 2.0;
    // Symmetric rest profile with a = 2: both normalized terms equal 1.
    TrajectoryParams c{Vec::Constant(1, 1.0), 2.0};
    EXPECT_NEAR(objective(c, single(0, 1.5, 0), cfg), 1.0, 1e-12);
    cfg.mu = 1.0;
    cfg.t_max = 4.0;
    EXPECT_NEAR(objective(c, single(0, 1.5, 0), cfg), 0.25, 1e-12);
}

TEST(Objective, MatchesDirectFormulaOnRandomPoints) {
    ProblemConfig cfg;
    Rng rng(31);
    int checked = 0;
    while (checked < 200) {
        const auto x = random_input(rng, cfg.model);
        RestartSampler sampler(x, cfg, rng.next());
        const auto c = sampler.next();
        if (!is_feasible(c, x, cfg)) continue;
        EXPECT_NEAR(objective(c, x, cfg), oracle::objective_by_formula(c, x, cfg), 1e-12);
        ++checked;
    }
}

TEST(Objective, PenaltyOutsideDomain) {
    const auto cfg = one_joint_config();
    const double f = objective({Vec::Constant(1, 0.5), 1.0}, single(0, 1.5, 0), cfg);
    EXPECT_GE(f, kPenaltyBase);
    EXPECT_TRUE(std::isfinite(f));
}

TEST(Objective, LargerTmaxLowersTimeTerm) {
    ProblemConfig cfg = one_joint_config();
    cfg.mu = 1.0;
    const TrajectoryParams c{Vec::Constant(1, 1.0), 1.9};
    const double f1 = objective(c, single(0, 1.5, 0), cfg);
    cfg.t_max *= 2.0;
    EXPECT_LT(objective(c, single(0, 1.5, 0), cfg), f1);
}

TEST(Constraints, LayoutAndSigns) {
    auto cfg = one_joint_config(3.0);
    cfg.model.acc_limits[0] = 10.0;
    const auto r = constraints({Vec::Constant(1, 1.0), 2.0}, single(0, 1.5, 0), cfg);
    ASSERT_EQ(r.inequality.size(), 10u);
    EXPECT_TRUE(r.equality.empty());
    for (double v : r.inequality) EXPECT_GT(v, 0.0);
    EXPECT_NEAR(r.inequality[2], 2.0, 1e-12);  // a
    EXPECT_NEAR(r.inequality[4], 0.5, 1e-12);  // t1
    EXPECT_NEAR(r.inequality[9], 1.0, 1e-12);  // t_c − tf
}

TEST(Constraints, BudgetBoundaryIsZero) {
    auto cfg = one_joint_config(2.0);
    const auto r = constraints({Vec::Constant(1, 1.0), 2.0}, single(0, 1.5, 0), cfg);
    EXPECT_EQ(r.inequality.back(), 0.0);
}

TEST(Constraints, VelocityLimitViolation) {
    auto cfg = one_joint_config(5.0);
    const auto r = constraints({Vec::Constant(1, 1.75 * 1.1), 2.0}, single(0, 1.5, 0), cfg);
    EXPECT_LT(r.inequality[1], 0.0);
}

TEST(Constraints, AnalyticJacobianMatchesFiniteDifferences) {
    ProblemConfig cfg;
    Rng rng(5);
    int checked = 0;
    while (checked < 100) {
        const auto x = random_input(rng, cfg.model);
        detail::TrajectoryNlp nlp(x, cfg);
        RestartSampler sampler(x, cfg, rng.next());
        const Vec v = sampler.next().as_vector();
        if (!nlp.in_domain(v)) continue;
        Vec g;
        (void)nlp.objective(v, &g);
        Vec c;
        Mat J;
        nlp.solver_constraints(v, c, J);
        const double h = 1e-7;
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            Vec vp = v, vm = v;
            vp[k] += h;
            vm[k] -= h;
            if (!nlp.in_domain(vp) || !nlp.in_domain(vm)) continue;
            const double fd = (nlp.objective(vp) - nlp.objective(vm)) / (2 * h);
            EXPECT_NEAR(g[k], fd, 1e-5 * (1.0 + std::abs(fd)));
            Vec cp, cm;
            Mat Jp, Jm;
            nlp.solver_constraints(vp, cp, Jp);
            nlp.solver_constraints(vm, cm, Jm);
            const Vec fdc = (cp - cm) / (2 * h);
            for (Eigen::Index r = 0; r < c.size(); ++r) EXPECT_NEAR(J(r, k), fdc[r], 1e-5 * (1.0 + std::abs(fdc[r])));
        }
        ++checked;
    }
}

TEST(MinTimeBound, MatchesKnownCases) {
    // Rest-to-rest triangle: T = 2·sqrt(D/a).
    EXPECT_NEAR(min_time_bound(1.0, 0.0, 10.0, 4.0), 1.0, 1e-12);
    // Velocity-limited: T = D/v + v/a.
    EXPECT_NEAR(min_time_bound(10.0, 0.0, 1.0, 4.0), 10.25, 1e-12);
    EXPECT_EQ(min_time_bound(0.01, 1.0, 2.0, 1.0), kInf);
    EXPECT_EQ(min_time_bound(1.0, 2.0, 2.0, 1.0), kInf);
}

TEST(SolveLocal, WarmStartAtOptimumIsFixedPoint) {
    ProblemConfig cfg;
    Rng rng(17);
    int checked = 0;
    for (int k = 0; k < 30 && checked < 10; ++k) {
        const auto x = random_input(rng, cfg.model);
        const auto star = solve_global(x, cfg, 10, rng.next());
        if (!star.feasible || !star.converged) continue;
        const auto again = solve_local(x, cfg, star.params);
        ASSERT_TRUE(again.feasible);
        EXPECT_LT((again.params.as_vector() - star.params.as_vector()).cwiseAbs().maxCoeff(), 1e-6);
        ++checked;
    }
    EXPECT_GE(checked, 5);
}

TEST(SolveLocal, OutOfBudgetIsInfeasible) {
    // D = 1.5 needs at least 2·sqrt(1.5/15) ≈ 0.632 s; give it 0.5 s.
    const auto cfg = one_joint_config(0.5);
    const auto x = single(0, 1.5, 0);
    EXPECT_GT(min_time_bound(x, cfg.model), cfg.t_c);
    const auto r = solve_local(x, cfg, {Vec::Constant(1, 1.0), 0.4});
    EXPECT_FALSE(r.feasible);
    const auto g = solve_global(x, cfg, 5, 1);
    EXPECT_FALSE(g.feasible);
    EXPECT_EQ(g.restarts_used, 0);
}

TEST(SolveLocal, FeasibleReportsSatisfyResiduals) {
    ProblemConfig cfg;
    Rng rng(3);
    for (int k = 0; k < 40; ++k) {
        const auto x = random_input(rng, cfg.model);
        RestartSampler sampler(x, cfg, rng.next());
        const auto r = solve_local(x, cfg, sampler.next());
        if (r.feasible) {
            EXPECT_GE(constraints(r.params, x, cfg).min_inequality(), -1e-6);
        }
    }
}

TEST(SolveLocal, AllRestInput) {
    ProblemConfig cfg;
    PlanningInput x{Vec::Zero(3), Vec::Zero(3), Vec::Zero(3)};
    const auto r = solve_local(x, cfg, {Vec::Constant(3, 0.5), 1.0});
    EXPECT_TRUE(r.feasible);
    EXPECT_LE(r.params.tf, 1e-6);
}

TEST(SolveLocal, GridOracleSingleJoint) {
    Rng rng(123);
    int matched = 0, total = 0;
    for (int k = 0; k < 10; ++k) {
        const auto cfg = one_joint_config(2.0);
        const double qc = rng.uniform(0.1, 1.5) * (rng.uniform() < 0.5 ? -1 : 1);
        const double w0 = (qc < 0 ? -1 : 1) * rng.uniform(0.0, 0.8);
        const auto x = single(0.0, qc, w0);
        const auto ref = oracle::grid_optimum(x, cfg, 200, 40);
        const auto r = solve_global(x, cfg, 10, derive_seed(9, static_cast<std::uint64_t>(k)));
        if (!ref.found) {
            EXPECT_FALSE(r.feasible);
            continue;
        }
        ++total;
        ASSERT_TRUE(r.feasible);
        if (std::abs(r.objective_value - ref.value) <= 1e-3) ++matched;
        EXPECT_LE(r.objective_value, ref.value + 1e-3);
    }
    EXPECT_EQ(matched, total);
}

TEST(SolveGlobal, MoreRestartsNeverWorse) {
    ProblemConfig cfg;
    Rng rng(77);
    for (int k = 0; k < 15; ++k) {
        const auto x = random_input(rng, cfg.model);
        const auto seed = rng.next();
        const auto a = solve_global(x, cfg, 3, seed);
        const auto b = solve_global(x, cfg, 12, seed);
        if (a.feasible) {
            ASSERT_TRUE(b.feasible);
            EXPECT_LE(b.objective_value, a.objective_value);
        }
    }
}

TEST(SolveGlobal, SingleRestartEqualsLocalFromSeed) {
    ProblemConfig cfg;
    Rng rng(8);
    const auto x = random_input(rng, cfg.model);
    RestartSampler sampler(x, cfg, 42);
    const auto local = solve_local(x, cfg, sampler.next());
    const auto global = solve_global(x, cfg, 1, 42);
    EXPECT_EQ(local.params.as_vector(), global.params.as_vector());
}

TEST(SolveGlobal, Deterministic) {
    ProblemConfig cfg;
    Rng rng(8);
    const auto x = random_input(rng, cfg.model);
    const auto a = solve_global(x, cfg, 5, 42);
    const auto b = solve_global(x, cfg, 5, 42);
    EXPECT_EQ(a.params.as_vector(), b.params.as_vector());
}

TEST(SolveFeasible, FeasibleStartUnchanged) {
    const auto cfg = one_joint_config(3.0);
    const TrajectoryParams c{Vec::Constant(1, 1.0), 2.0};
    const auto r = solve_feasible(single(0, 1.5, 0), cfg, c);
    EXPECT_TRUE(r.feasible);
    EXPECT_EQ(r.params.as_vector(), c.as_vector());
}

TEST(SolveFeasible, RepairsBudgetViolation) {
    const auto cfg = one_joint_config(1.8);
    const auto x = single(0, 1.5, 0);
    const auto r = solve_feasible(x, cfg, {Vec::Constant(1, 1.0), 2.0});
    ASSERT_TRUE(r.feasible);
    EXPECT_GE(constraints(r.params, x, cfg).min_inequality(), -1e-6);
    EXPECT_LT(r.params.tf, 1.8);
}

TEST(SolveFeasible, ImpossibleInstance) {
    const auto cfg = one_joint_config(0.5);
    const auto r = solve_feasible(single(0, 1.5, 0), cfg, {Vec::Constant(1, 1.0), 0.45});
    EXPECT_FALSE(r.feasible);
}

TEST(RelativeChangeRate, Basics) {
    ProblemConfig cfg;
    Rng rng(4);
    const auto x = random_input(rng, cfg.model);
    const auto star = solve_global(x, cfg, 5, 4);
    ASSERT_TRUE(star.feasible);
    const TrajectoryParams zero{Vec::Zero(3), 0.0};
    EXPECT_EQ(relative_change_rate(x, cfg, star.params, zero), 0.0);

    auto cfg1 = cfg;
    cfg1.mu = 1.0;
    const TrajectoryParams only_w{Vec::Constant(3, 0.01), 0.0};
    EXPECT_NEAR(relative_change_rate(x, cfg1, star.params, only_w), 0.0, 1e-12);
}

TEST(RelativeChangeRate, TaylorRemainderShrinksQuadratically) {
    ProblemConfig cfg;
    Rng rng(12);
    int checked = 0;
    while (checked < 10) {
        const auto x = random_input(rng, cfg.model);
        RestartSampler sampler(x, cfg, rng.next());
        const auto c = sampler.next();
        if (!is_feasible(c, x, cfg)) continue;
        // Move inside the feasible set so the perturbed points stay smooth.
        Vec dir(4);
        for (int i = 0; i < 4; ++i) dir[i] = rng.uniform(-1, 1);
        const double f = objective(c, x, cfg);
        std::vector<double> rem;
        bool ok = true;
        for (double h : {1e-2, 1e-3, 1e-4}) {
            const Vec dv = h * dir;
            const auto dc = TrajectoryParams::from_vector(dv);
            const auto cp = TrajectoryParams::from_vector(c.as_vector() + dv);
            const double fp = objective(cp, x, cfg);
            if (fp >= kPenaltyBase) {
                ok = false;
                break;
            }
            const double lin = relative_change_rate(x, cfg, c, dc) * f;
            rem.push_back(std::abs(fp - f - lin));
        }
        if (!ok) continue;
        // O(|dC|²): each 10× step reduction shrinks the remainder ~100×.
        EXPECT_LT(rem[1], rem[0] * 0.05 + 1e-12);
        EXPECT_LT(rem[2], rem[1] * 0.05 + 1e-11);
        ++checked;
    }
}

TEST(RelativeChangeRate, ZeroObjectiveThrows) {
    ProblemConfig cfg = one_joint_config();
    cfg.mu = 0.0;
    PlanningInput x = single(0, 0, 0);
    EXPECT_THROW(relative_change_rate(x, cfg, {Vec::Constant(1, 1.0), 1.0}, {Vec::Constant(1, 0.1), 0.1}),
                 UndefinedRate);
}

TEST(Nlp, DimensionMismatchThrows) {
    ProblemConfig cfg;
    EXPECT_THROW(objective({Vec::Zero(2), 1.0}, single(0, 1, 0), cfg), InputError);
}
