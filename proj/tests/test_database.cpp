#include "lotraj/database.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace lotraj;

namespace {

WorkspaceSpec everywhere() {
    Box b{Eigen::Vector3d::Constant(-10), Eigen::Vector3d::Constant(10)};
    return {Region{{b}}, Region{{b}}};
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("lotraj_test_" + name);
}

}  // namespace

TEST(MergeOffsets, Examples) {
    Vec q0(3), qc(3);
    q0 << 0.1, 0.2, 0.3;
    qc << 0.4, 0.1, 0.0;
    const Vec qf = merge_offsets(q0, qc);
    EXPECT_NEAR(qf[0], 0.3, 1e-15);
    EXPECT_NEAR(qf[1], -0.1, 1e-15);
    EXPECT_NEAR(qf[2], -0.3, 1e-15);
    EXPECT_TRUE(merge_offsets(q0, q0).isZero(0.0));
    EXPECT_THROW(merge_offsets(q0, Vec::Zero(2)), InputError);
}

TEST(AlphaGrid, EvenlySpaced) {
    EXPECT_EQ(alpha_grid(1), std::vector<double>{0.0});
    const auto a = alpha_grid(4);
    ASSERT_EQ(a.size(), 4u);
    EXPECT_DOUBLE_EQ(a[0], 0.0);
    EXPECT_NEAR(a[1], 0.3, 1e-15);
    EXPECT_NEAR(a[3], 0.9, 1e-15);
}

TEST(WorkspaceSampling, VacuousFilterAcceptsEverything) {
    const auto s = sample_workspace_configurations(everywhere(), default_robot(), 50, 3);
    EXPECT_EQ(s.pairs.size(), 50u);
    EXPECT_EQ(s.draws, 50u);
    EXPECT_DOUBLE_EQ(s.acceptance_rate(), 1.0);
}

TEST(WorkspaceSampling, UnreachableRegionThrows) {
    Box far{Eigen::Vector3d::Constant(5), Eigen::Vector3d::Constant(6)};
    WorkspaceSpec ws{Region{{far}}, Region{{far}}};
    EXPECT_THROW(sample_workspace_pairs(ws, default_robot(), 5, 1), RegionUnreachable);
}

TEST(WorkspaceSampling, DefaultRegionsReverify) {
    const auto ws = default_workspace();
    const auto model = default_robot();
    const auto s = sample_workspace_configurations(ws, model, 100, 11);
    ASSERT_EQ(s.pairs.size(), 100u);
    for (const auto& p : s.pairs) {
        EXPECT_TRUE(within_joint_limits(model, p.q0));
        EXPECT_TRUE(within_joint_limits(model, p.qc));
        EXPECT_TRUE(in_region(forward_kinematics(model, p.q0), ws.effective));
        EXPECT_TRUE(in_region(forward_kinematics(model, p.qc), ws.interacting));
    }
    const auto again = sample_workspace_pairs(ws, model, 100, 11);
    for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(again[i], merge_offsets(s.pairs[i].q0, s.pairs[i].qc));
}

TEST(IntermediateState, WorkedSingleJointExample) {
    const TrajectoryParams c{Vec::Constant(1, 1.0), 2.0};
    const Vec qf = Vec::Constant(1, 1.5);
    const auto half = intermediate_state(c, qf, 0.5);
    EXPECT_NEAR(half.omega0[0], 1.0, 1e-12);
    EXPECT_NEAR(half.qf[0], 0.75, 1e-12);
    const auto start = intermediate_state(c, qf, 0.0);
    EXPECT_EQ(start.omega0[0], 0.0);
    EXPECT_EQ(start.qf[0], 1.5);
    EXPECT_THROW(intermediate_state(c, qf, 1.0), InputError);
}

TEST(IntermediateState, CruisePhaseVelocityIsCruiseVelocity) {
    // Both joints cruise on [0.5, 1.5].
    const TrajectoryParams c{Vec::LinSpaced(2, 1.0, 0.8), 2.0};
    Vec qf(2);
    qf << 1.5, 1.2;
    for (double alpha : {0.3, 0.5, 0.7}) {
        const auto v = intermediate_state(c, qf, alpha);
        EXPECT_NEAR(v.omega0[0], 1.0, 1e-12);
        EXPECT_NEAR(v.omega0[1], 0.8, 1e-12);
    }
}

TEST(Expansion, SkipsInfeasibleRestSolves) {
    ProblemConfig cfg;
    cfg.t_c = 0.3;  // too short for large offsets
    std::vector<Vec> qfs = {Vec::Constant(3, 0.01), Vec::Constant(3, 1.2)};
    const auto e = expand_intermediate_points(qfs, {0.0, 0.5}, cfg, 3, 1);
    EXPECT_EQ(e.rest_skipped, 1u);
    EXPECT_EQ(e.variables.size(), 2u);
}

TEST(GenerateDatabase, SmallRunReverifiesAndIsDeterministic) {
    ProblemConfig cfg;
    GenerationOptions opt{.n1 = 10, .n2 = 2, .restarts = 3, .seed = 5, .jobs = 1};
    const auto db = generate_database(cfg, default_workspace(), opt);
    EXPECT_LE(db.size(), 20u);
    EXPECT_EQ(db.metadata.stats.attempted, 20u);
    EXPECT_EQ(db.metadata.stats.feasible, db.size());
    for (const auto& s : db.samples) {
        const auto x = s.variable.to_input();
        EXPECT_GE(constraints(s.params, x, cfg).min_inequality(), -1e-6);
        EXPECT_NEAR(objective(s.params, x, cfg), s.objective_value, 1e-9);
        EXPECT_EQ(s.provenance.restarts, 3);
    }
    const auto again = generate_database(cfg, default_workspace(), opt);
    EXPECT_EQ(database_to_string(db), database_to_string(again));
    auto opt2 = opt;
    opt2.jobs = 3;
    EXPECT_EQ(database_to_string(db), database_to_string(generate_database(cfg, default_workspace(), opt2)));
}

TEST(GenerateDatabase, SingleAlphaIsRestStart) {
    ProblemConfig cfg;
    const auto db = generate_database(cfg, default_workspace(), {.n1 = 5, .n2 = 1, .restarts = 2, .seed = 9});
    EXPECT_EQ(db.metadata.alphas, std::vector<double>{0.0});
    for (const auto& s : db.samples) EXPECT_TRUE(s.variable.omega0.isZero(0.0));
}

TEST(GenerateDatabaseNaive, DensityOneAndDeterminism) {
    ProblemConfig cfg;
    const auto vars = naive_variables(cfg.model, 1, 3);
    EXPECT_EQ(vars.size(), 1u);
    const auto db = generate_database_naive(cfg, 1, 2, 3);
    EXPECT_EQ(db.metadata.stats.attempted, 1u);
    EXPECT_LE(db.size(), 1u);
    EXPECT_EQ(naive_variables(cfg.model, 2, 3).size(), 64u);
    EXPECT_EQ(database_to_string(generate_database_naive(cfg, 2, 1, 4)),
              database_to_string(generate_database_naive(cfg, 2, 1, 4)));
}

TEST(DatabaseFile, RoundTripAndTamperDetection) {
    ProblemConfig cfg;
    auto db = generate_database(cfg, default_workspace(), {.n1 = 4, .n2 = 2, .restarts = 2, .seed = 1});
    const auto path = temp_path("db.jsonl");
    save_database(db, path);
    const auto back = load_database(path);
    EXPECT_EQ(back.size(), db.size());
    EXPECT_EQ(back.content_hash(), db.content_hash());
    EXPECT_EQ(database_to_string(back), database_to_string(db));
    for (std::size_t i = 0; i < db.size(); ++i) {
        EXPECT_EQ(back.samples[i].params.as_vector(), db.samples[i].params.as_vector());
    }

    auto text = database_to_string(db);
    const auto pos = text.find("\"tf\":");
    ASSERT_NE(pos, std::string::npos);
    text.insert(pos + 5, "1");
    EXPECT_THROW(database_from_string(text), SchemaError);

    auto bad_version = database_to_string(db);
    bad_version.replace(bad_version.find("\"schema_version\":1"), 18, "\"schema_version\":7");
    EXPECT_THROW(database_from_string(bad_version), SchemaError);
    EXPECT_THROW(load_database(temp_path("missing.jsonl")), SchemaError);
    std::filesystem::remove(path);
}

TEST(DemoMapping, SizesAndCoverage) {
    for (auto mapping : {DemoMappingSpec::fm1(), DemoMappingSpec::fm2()}) {
        const auto r = demo_merging_distributions(mapping, DemoMode::Uniform, 27, 3, 1);
        EXPECT_EQ(r.direct.size(), 729u);
        EXPECT_EQ(r.pushed.size(), 729u);
        for (int a = 0; a < 2; ++a) EXPECT_GE(r.direct_stats.coverage[a], r.pushed_stats.coverage[a]);
    }
}

TEST(DemoMapping, SingleValueCollapses) {
    const auto r = demo_merging_distributions(DemoMappingSpec::fm1(), DemoMode::Random, 5, 1, 2);
    EXPECT_EQ(r.pushed.size(), 1u);
    EXPECT_EQ(r.pushed_stats.distinct, 1u);
}

TEST(DemoMapping, ProjectionMakesSetsCoincide) {
    Eigen::Matrix<double, 2, 6> m = Eigen::Matrix<double, 2, 6>::Zero();
    m(0, 0) = 1.0;
    m(1, 1) = 1.0;
    const auto r = demo_merging_distributions(DemoMappingSpec::linear(m), DemoMode::Uniform, 4, 4, 0);
    std::set<std::pair<double, double>> a, b;
    for (const auto& p : r.direct) a.insert({p.x(), p.y()});
    for (const auto& p : r.pushed) b.insert({p.x(), p.y()});
    EXPECT_EQ(a, b);
    EXPECT_EQ(r.direct_stats.coverage, r.pushed_stats.coverage);
}
