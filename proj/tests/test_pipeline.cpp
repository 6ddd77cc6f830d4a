#include "lotraj/pipeline.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace lotraj;

namespace {

std::shared_ptr<const Database> small_database() {
    static const auto db = std::make_shared<const Database>(
        generate_database(ProblemConfig{}, default_workspace(), {.n1 = 8, .n2 = 3, .restarts = 5, .seed = 21}));
    return db;
}

LOModel knn_model(Refinement r = Refinement::WithObjective) {
    const auto db = small_database();
    const auto spec = make_feature_spec(FeatureVariant::Feature2, db->metadata.problem);
    return make_lo_model(db, fit(*db, spec, RegressorConfig::knn(1)), r);
}

SampleRecord record(bool feasible, double e_F, double dF_r) {
    SampleRecord s;
    s.feasible = feasible;
    s.e_F = e_F;
    s.dF_r = dF_r;
    s.T_PR = 1e-4;
    s.T_RO = 2e-4;
    s.T_L = 3e-4;
    s.variable = {Vec::Zero(2), Vec::Zero(2)};
    return s;
}

}  // namespace

TEST(Refinement, Names) {
    EXPECT_EQ(refinement_from_string("obj"), Refinement::WithObjective);
    EXPECT_EQ(refinement_from_string(to_string(Refinement::NonObjective)), Refinement::NonObjective);
    EXPECT_THROW(refinement_from_string("fast"), InputError);
}

TEST(LOModelTest, RejectsForeignRegressor) {
    const auto db = small_database();
    auto other = *db;
    other.samples.pop_back();
    const auto spec = make_feature_spec(FeatureVariant::Feature2, db->metadata.problem);
    auto m = fit(other, spec, RegressorConfig::knn(1));
    EXPECT_THROW(make_lo_model(db, m), InputError);
    EXPECT_THROW(make_lo_model(nullptr, m), InputError);
}

TEST(Plan, KnnOnTrainingInputStartsAtStoredOptimum) {
    const auto lo = knn_model();
    for (const auto& s : small_database()->samples) {
        const auto x = s.variable.to_input();
        const auto p = plan(lo, x);
        EXPECT_LE((p.prediction.as_vector() - s.params.as_vector()).lpNorm<Eigen::Infinity>(), 1e-6);
        ASSERT_TRUE(p.feasible);
        EXPECT_LE(p.objective_value, s.objective_value * (1.0 + 1e-6) + 1e-12);
        EXPECT_DOUBLE_EQ(p.T_L, p.T_PR + p.T_RO);
        EXPECT_TRUE(is_feasible(p.params, x, lo.problem));
    }
}

TEST(Plan, BudgetTooShortIsInfeasible) {
    auto lo = knn_model();
    lo.problem.t_c = 0.05;
    const auto& s = small_database()->samples.front();
    const auto p = plan(lo, s.variable.to_input());
    EXPECT_FALSE(p.feasible);
    EXPECT_GT(p.max_violation, 0.0);
}

TEST(Plan, OutOfRangeConfigurationIsFlagged) {
    const auto lo = knn_model();
    auto x = small_database()->samples.front().variable.to_input();
    x.q0[0] += 10.0;
    x.qc[0] += 10.0;
    const auto p = plan(lo, x);
    EXPECT_FALSE(p.within_limits);
    EXPECT_THROW(plan(lo, PlanningInput{Vec::Zero(2), Vec::Zero(2), Vec::Zero(2)}), InputError);
}

TEST(Evaluate, ReplayOfTrainingSetIsPerfect) {
    for (auto r : {Refinement::WithObjective, Refinement::NonObjective}) {
        const auto lo = knn_model(r);
        const auto rep = evaluate(lo, *small_database());
        EXPECT_EQ(rep.N_r, small_database()->size());
        EXPECT_DOUBLE_EQ(rep.R_s, 1.0);
        EXPECT_LE(rep.e_F, 1e-6) << to_string(r);
        for (const auto& s : rep.per_sample) {
            EXPECT_DOUBLE_EQ(s.T_L, s.T_PR + s.T_RO);
            EXPECT_LE(std::abs(s.dF_r), 1e-4);
        }
    }
}

TEST(Evaluate, EmptyTestSetThrows) {
    Database empty;
    EXPECT_THROW(evaluate(knn_model(), empty), InputError);
}

TEST(Evaluate, ParallelMatchesSerial) {
    const auto lo = knn_model(Refinement::NonObjective);
    const auto a = evaluate(lo, *small_database(), 1);
    const auto b = evaluate(lo, *small_database(), 3);
    ASSERT_EQ(a.per_sample.size(), b.per_sample.size());
    for (std::size_t k = 0; k < a.per_sample.size(); ++k) {
        EXPECT_EQ(a.per_sample[k].feasible, b.per_sample[k].feasible);
        EXPECT_EQ(a.per_sample[k].F_p, b.per_sample[k].F_p);
    }
}

TEST(Summarize, RateAndErrorArithmetic) {
    EvaluationReport r;
    r.per_sample = {record(true, 0.1, 0.3), record(false, std::nan(""), 5.0), record(true, 0.3, 0.2),
                    record(true, 0.2, 0.4)};
    summarize(r);
    EXPECT_EQ(r.N_r, 4u);
    EXPECT_EQ(r.N_r1, 3u);
    EXPECT_DOUBLE_EQ(r.R_s, 0.75);
    EXPECT_NEAR(r.e_F, 0.2, 1e-15);
    // e_F ranks (1,3,2) against dF_r ranks (2,1,3): rho = 1 - 6*6/(3*8).
    EXPECT_NEAR(r.spearman_eF_dFr, -0.5, 1e-12);
    EXPECT_DOUBLE_EQ(r.T_L.median, 3e-4);

    EvaluationReport none;
    none.per_sample = {record(false, std::nan(""), 0.1)};
    summarize(none);
    EXPECT_EQ(none.R_s, 0.0);
    EXPECT_TRUE(std::isnan(none.e_F));
}

TEST(Summarize, ReproducesEvaluatedReport) {
    const auto rep = evaluate(knn_model(), *small_database());
    auto copy = rep;
    copy.R_s = copy.e_F = -1.0;
    copy.N_r1 = 0;
    summarize(copy);
    EXPECT_EQ(copy.N_r1, rep.N_r1);
    EXPECT_EQ(copy.R_s, rep.R_s);
    EXPECT_EQ(copy.e_F, rep.e_F);
    EXPECT_EQ(copy.T_L.p95, rep.T_L.p95);
}

TEST(EvaluationCsv, Layout) {
    EvaluationReport r;
    r.per_sample = {record(true, 0.1, 0.3), record(false, std::nan(""), 5.0)};
    summarize(r);
    const auto text = evaluation_csv(r);
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 10u + 1u + 2u);
    EXPECT_EQ(lines[0], "# N_r,2");
    EXPECT_EQ(lines[2], "# R_s,0.5");
    EXPECT_EQ(lines[10], "index,qf_1,qf_2,omega0_1,omega0_2,feasible,F_p,F_a,e_F,dF_r,T_PR,T_RO,T_L,iterations");
    EXPECT_EQ(lines[12].substr(0, 12), "0,0,0,0,0,0,");
}

TEST(TestSet, DisjointReverifiedAndSized) {
    ProblemConfig cfg;
    const auto training = small_database();
    TestSetOptions opt{.n_r = 12, .n2 = 3, .oracle_restarts = 8, .seed = 77};
    const auto ts = make_test_set(cfg, default_workspace(), opt, training.get());
    EXPECT_EQ(ts.size(), 12u);
    EXPECT_EQ(ts.metadata.kind, "testset");
    EXPECT_EQ(ts.metadata.seed, 77u);
    std::set<std::vector<double>> seen;
    for (const auto& s : training->samples) seen.insert(to_std(s.variable.qf));
    for (const auto& s : ts.samples) {
        EXPECT_FALSE(seen.count(to_std(s.variable.qf)));
        EXPECT_TRUE(is_feasible(s.params, s.variable.to_input(), cfg));
        EXPECT_EQ(s.provenance.restarts, 8);
    }
}

TEST(TestSet, InvalidRequests) {
    ProblemConfig cfg;
    const auto training = small_database();
    EXPECT_THROW(make_test_set(cfg, default_workspace(), {.n_r = 0}), InputError);
    TestSetOptions clash{.n_r = 4, .seed = training->metadata.seed};
    EXPECT_THROW(make_test_set(cfg, default_workspace(), clash, training.get()), InputError);
}
