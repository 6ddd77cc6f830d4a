#include "lotraj/regression.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace lotraj;

namespace {

Vec random_vec(Rng& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return v;
}

Mat random_rows(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Mat X(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) X.row(r) = random_vec(rng, cols).transpose();
    return X;
}

// Synthetic database whose targets are smooth functions of the variables.
Database synthetic_db(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Database db;
    for (std::size_t k = 0; k < n; ++k) {
        Sample s;
        s.variable.qf = random_vec(rng, 3, -1.0, 1.0);
        s.variable.omega0 = random_vec(rng, 3, -0.5, 0.5);
        s.params.tf = 1.0 + 0.3 * s.variable.qf.cwiseAbs().sum() / 3.0;
        s.params.omega_m = 0.5 * s.variable.qf + 0.2 * s.variable.omega0;
        db.samples.push_back(s);
    }
    return db;
}

const Database& desk_db() {
    static const Database db = [] {
        GenerationOptions opt;
        opt.n1 = 50;
        opt.n2 = 10;
        opt.seed = 11;
        return generate_database(ProblemConfig{}, default_workspace(), opt);
    }();
    return db;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("lotraj_test_" + name);
}

}  // namespace

TEST(KernelEval, Examples) {
    const auto gs = RegressorConfig::gaussian_svr(10.0, 0.01, 2.0);
    const auto lin = RegressorConfig::linear_svr();
    const auto gp = RegressorConfig::gpr(1.0, 2.5, 1e-4);
    Vec a(3), b(3);
    a << 1, 0, 0;
    b << 0, 1, 0;
    EXPECT_DOUBLE_EQ(kernel_eval(gs, a, a), 1.0);
    EXPECT_DOUBLE_EQ(kernel_eval(gp, a, a), 2.5);
    EXPECT_DOUBLE_EQ(kernel_eval(lin, a, b), 0.0);
    EXPECT_NEAR(kernel_eval(gs, a, b), std::exp(-4.0), 1e-15);
    EXPECT_NEAR(kernel_eval(gp, a, b), 2.5 * std::exp(-1.0), 1e-15);
    EXPECT_THROW(kernel_eval(RegressorConfig::knn(), a, b), InputError);
    EXPECT_THROW(kernel_eval(gs, a, Vec::Zero(2)), InputError);
}

TEST(KernelEval, Symmetric) {
    Rng rng(5);
    for (const auto& cfg : {RegressorConfig::gaussian_svr(), RegressorConfig::linear_svr(), RegressorConfig::gpr(0.7)}) {
        for (int t = 0; t < 50; ++t) {
            const Vec x = random_vec(rng, 4), y = random_vec(rng, 4);
            EXPECT_EQ(kernel_eval(cfg, x, y), kernel_eval(cfg, y, x));
        }
    }
}

TEST(RegressorConfig, Validation) {
    EXPECT_THROW(RegressorConfig::knn(0).validate(), InputError);
    EXPECT_THROW(RegressorConfig::linear_svr(0.0).validate(), InputError);
    EXPECT_THROW(RegressorConfig::linear_svr(1.0, -0.1).validate(), InputError);
    EXPECT_THROW(RegressorConfig::gaussian_svr(1.0, 0.1, 0.0).validate(), InputError);
    EXPECT_THROW(RegressorConfig::gpr(1.0, 0.0).validate(), InputError);
    EXPECT_THROW(RegressorConfig::gpr(1.0, 1.0, 0.0).validate(), InputError);
    EXPECT_THROW(RegressorConfig::gpr(-1.0).validate(), InputError);
    EXPECT_EQ(regression_method_from_string("gaussian-svr"), RegressionMethod::GaussianSvr);
    EXPECT_THROW(regression_method_from_string("mlp"), InputError);
}

// Optimality conditions of the ε-SVR dual, checked from the fitted function
// alone: with θ_i = β_i − β*_i and residual r_i = f(x_i) − z_i,
//   θ_i = 0      ⇒ |r_i| ≤ ε
//   0 < |θ_i| < C ⇒ r_i = −sign(θ_i)·ε
//   |θ_i| = C    ⇒ −sign(θ_i)·r_i ≥ ε
// and Σθ_i = 0.
TEST(Svr, SatisfiesDualOptimality) {
    Rng rng(21);
    for (const auto& cfg : {RegressorConfig::gaussian_svr(10.0, 0.05, 2.0), RegressorConfig::linear_svr(1.0, 0.05)}) {
        const Mat X = random_rows(rng, 40, 2);
        Vec z(40);
        for (Eigen::Index r = 0; r < 40; ++r) z[r] = std::sin(2.0 * X(r, 0)) + 0.5 * X(r, 1) + 0.1 * rng.uniform(-1, 1);
        const auto m = fit_channel(cfg, X, z);
        Vec theta = Vec::Zero(40);
        for (Eigen::Index s = 0; s < m.support.rows(); ++s)
            for (Eigen::Index r = 0; r < 40; ++r)
                if (X.row(r) == m.support.row(s)) theta[r] = m.coef[s];
        EXPECT_NEAR(theta.sum(), 0.0, 1e-9);
        const double slack = 2e-3;
        for (Eigen::Index r = 0; r < 40; ++r) {
            const double res = predict_channel(cfg, m, X.row(r).transpose()) - z[r];
            const double t = theta[r];
            EXPECT_GE(t, -cfg.c_reg - 1e-12);
            EXPECT_LE(t, cfg.c_reg + 1e-12);
            if (t == 0.0) {
                EXPECT_LE(std::abs(res), cfg.epsilon + slack) << r;
            } else if (std::abs(t) < cfg.c_reg) {
                EXPECT_NEAR(res, -(t > 0 ? 1.0 : -1.0) * cfg.epsilon, slack) << r;
            } else {
                EXPECT_GE(-(t > 0 ? 1.0 : -1.0) * res, cfg.epsilon - slack) << r;
            }
        }
    }
}

TEST(Svr, LinearRecoversAffineFunction) {
    Rng rng(8);
    const Mat X = random_rows(rng, 30, 3);
    Vec w(3);
    w << 0.4, -0.7, 0.2;
    const Vec z = (X * w).array() + 0.3;
    const auto cfg = RegressorConfig::linear_svr(100.0, 0.0);
    const auto m = fit_channel(cfg, X, z);
    EXPECT_LT((m.weights - w).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_NEAR(m.bias, 0.3, 1e-3);
}

TEST(Gpr, InterpolatesWithTinyNoise) {
    Rng rng(3);
    const Mat X = random_rows(rng, 25, 2);
    Vec z(25);
    for (Eigen::Index r = 0; r < 25; ++r) z[r] = std::cos(3.0 * X(r, 0)) * X(r, 1);
    // Length scale short enough that the noise-free Gram matrix is well
    // conditioned; with ℓ = 1 on [−1, 1]² it is singular to working precision.
    for (double noise : {1e-9, 1e-10}) {
        const auto cfg = RegressorConfig::gpr(0.3, 1.0, noise);
        const auto m = fit_channel(cfg, X, z);
        for (Eigen::Index r = 0; r < 25; ++r) EXPECT_NEAR(predict_channel(cfg, m, X.row(r).transpose()), z[r], 1e-6);
    }
}

TEST(Gpr, MatchesDirectPosteriorMean) {
    Rng rng(4);
    const Mat X = random_rows(rng, 20, 3);
    const Vec z = random_vec(rng, 20);
    auto cfg = RegressorConfig::gpr(0.8, 1.3, 1e-3);
    const auto m = fit_channel(cfg, X, z);
    // Dense reference: ȳ + k*ᵀ (K + σn² I)⁻¹ (y − ȳ) solved by full-pivot LU.
    Mat K(20, 20);
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j)
            K(i, j) = 1.3 * std::exp(-0.5 * (X.row(i) - X.row(j)).squaredNorm() / (0.8 * 0.8)) + (i == j ? 1e-3 : 0.0);
    const double ybar = z.mean();
    const Vec alpha = K.fullPivLu().solve((z.array() - ybar).matrix());
    for (int t = 0; t < 10; ++t) {
        const Vec q = random_vec(rng, 3);
        Vec k(20);
        for (int i = 0; i < 20; ++i) k[i] = 1.3 * std::exp(-0.5 * (X.row(i).transpose() - q).squaredNorm() / 0.64);
        EXPECT_NEAR(predict_channel(cfg, m, q), ybar + k.dot(alpha), 1e-9);
    }
}

TEST(Gpr, GridPicksLargestMarginalLikelihood) {
    Rng rng(12);
    const Mat X = random_rows(rng, 30, 2);
    Vec z(30);
    for (Eigen::Index r = 0; r < 30; ++r) z[r] = std::sin(4.0 * X(r, 0)) + X(r, 1) * X(r, 1);
    const auto cfg = RegressorConfig::gpr_tuned(1.0, 1e-3);
    const auto m = fit_channel(cfg, X, z);
    // log p(y) = −½ yᵀK⁻¹y − ½ log|K| − (n/2) log 2π, via full-pivot LU.
    const Vec y = z.array() - z.mean();
    double best_l = 0.0, best = -kInf;
    for (double l : cfg.length_scale_grid) {
        Mat K(30, 30);
        for (int i = 0; i < 30; ++i)
            for (int j = 0; j < 30; ++j)
                K(i, j) = std::exp(-0.5 * (X.row(i) - X.row(j)).squaredNorm() / (l * l)) + (i == j ? 1e-3 : 0.0);
        const auto lu = K.fullPivLu();
        const double lml = -0.5 * y.dot(lu.solve(y)) - 0.5 * std::log(lu.determinant()) - 15.0 * std::log(2 * std::numbers::pi);
        if (lml > best) {
            best = lml;
            best_l = l;
        }
    }
    ASSERT_EQ(m.length_scales.size(), 2);
    EXPECT_EQ(m.length_scales[0], best_l);
    EXPECT_EQ(m.length_scales[1], best_l);
}

TEST(Gpr, JitterRescuesDuplicatePoints) {
    Mat X(3, 1);
    X << 0.0, 0.0, 1.0;
    Vec z(3);
    z << 1.0, 1.0, 2.0;
    const auto cfg = RegressorConfig::gpr(1.0, 1.0, 1e-18);
    const auto m = fit_channel(cfg, X, z);
    EXPECT_TRUE(std::isfinite(predict_channel(cfg, m, Vec::Constant(1, 0.5))));
    EXPECT_NEAR(predict_channel(cfg, m, Vec::Constant(1, 1.0)), 2.0, 1e-4);
}

TEST(Knn, Examples) {
    Mat X(4, 1);
    X << 0.0, 1.0, 2.0, 4.0;
    Vec z(4);
    z << 10.0, 20.0, 30.0, 50.0;
    EXPECT_DOUBLE_EQ(knn_predict(X, z, 1, Vec::Constant(1, 2.0)), 30.0);
    // Inverse-distance weights 1/0.5 and 1/0.5.
    EXPECT_DOUBLE_EQ(knn_predict(X, z, 2, Vec::Constant(1, 1.5)), 25.0);
    // k = N: weighted mean of everything.
    const double q = 3.0;
    double acc = 0.0, ws = 0.0;
    for (int r = 0; r < 4; ++r) {
        acc += z[r] / std::abs(X(r, 0) - q);
        ws += 1.0 / std::abs(X(r, 0) - q);
    }
    EXPECT_NEAR(knn_predict(X, z, 4, Vec::Constant(1, q)), acc / ws, 1e-12);
    // Zero-distance ties: uniform among the exact matches.
    Mat Y(3, 1);
    Y << 1.0, 1.0, 3.0;
    Vec y(3);
    y << 4.0, 8.0, 100.0;
    EXPECT_DOUBLE_EQ(knn_predict(Y, y, 3, Vec::Constant(1, 1.0)), 6.0);
}

TEST(FitChannel, DegenerateInputs) {
    Mat one(1, 2);
    one << 0.3, 0.4;
    Vec z1 = Vec::Constant(1, 7.5);
    for (const auto& cfg : {RegressorConfig::knn(), RegressorConfig::linear_svr(), RegressorConfig::gaussian_svr(),
                            RegressorConfig::gpr()}) {
        const auto m = fit_channel(cfg, one, z1);
        EXPECT_DOUBLE_EQ(predict_channel(cfg, m, Vec::Zero(2)), 7.5);
    }
    Mat same(3, 2);
    same.rowwise() = one.row(0);
    const Vec z3 = Vec::LinSpaced(3, 0.0, 1.0);
    EXPECT_THROW(fit_channel(RegressorConfig::gpr(), same, z3), FitError);
    EXPECT_THROW(fit_channel(RegressorConfig::gaussian_svr(), same, z3), FitError);
    EXPECT_THROW(fit_channel(RegressorConfig::linear_svr(), same, z3), FitError);
    EXPECT_NO_THROW(fit_channel(RegressorConfig::knn(3), same, z3));
    EXPECT_THROW(fit_channel(RegressorConfig::knn(4), same, z3), InputError);
}

TEST(FeatureSpec, Layout) {
    const ProblemConfig cfg;
    const auto f1 = make_feature_spec(FeatureVariant::Feature1, cfg);
    const auto f2 = make_feature_spec(FeatureVariant::Feature2, cfg);
    for (Eigen::Index c = 0; c < 3; ++c) {
        EXPECT_EQ(f1.feature_count(c), 6);
        EXPECT_EQ(f2.feature_count(c), 3);
    }
    EXPECT_EQ(f1.feature_count(3), 6);
    EXPECT_EQ(f2.feature_count(3), 6);
    SampleVariable v{Vec::Constant(3, 0.5), Vec::Constant(3, 0.35)};
    const Vec a = f2.features(1, v, 1.5);
    EXPECT_NEAR(a[0], 0.5 / (std::numbers::pi / 2), 1e-15);
    EXPECT_NEAR(a[1], 0.35 / 1.75, 1e-15);
    EXPECT_NEAR(a[2], 0.5, 1e-15);
    EXPECT_NEAR(f1.features(0, v, 99.0)[0], 0.5 / std::numbers::pi, 1e-15);
}

TEST(Fit, SingleSampleIsConstant) {
    const auto db = synthetic_db(1, 2);
    const auto spec = make_feature_spec(FeatureVariant::Feature2, ProblemConfig{});
    for (const auto& cfg : {RegressorConfig::knn(), RegressorConfig::gaussian_svr(), RegressorConfig::gpr()}) {
        const auto m = fit(db, spec, cfg);
        const auto c = predict(m, SampleVariable{Vec::Constant(3, 0.9), Vec::Zero(3)});
        EXPECT_EQ(c.omega_m, db.samples[0].params.omega_m);
        EXPECT_EQ(c.tf, db.samples[0].params.tf);
    }
}

TEST(Fit, KnnReturnsTrainingPointExactly) {
    const auto db = synthetic_db(60, 3);
    const auto m = fit(db, make_feature_spec(FeatureVariant::Feature1, ProblemConfig{}), RegressorConfig::knn(1));
    for (std::size_t k = 0; k < db.size(); k += 7) {
        const auto c = predict(m, db.samples[k].variable);
        EXPECT_EQ(c.omega_m, db.samples[k].params.omega_m);
        EXPECT_EQ(c.tf, db.samples[k].params.tf);
    }
    EXPECT_THROW(fit(db, m.features, RegressorConfig::knn(61)), InputError);
}

TEST(Fit, GprReturnsTrainingPointWithTinyNoise) {
    const auto db = synthetic_db(60, 4);
    for (auto variant : {FeatureVariant::Feature1, FeatureVariant::Feature2}) {
        const auto m = fit(db, make_feature_spec(variant, ProblemConfig{}), RegressorConfig::gpr(1.0, 1.0, 1e-10));
        for (std::size_t k = 0; k < db.size(); k += 5) {
            const auto c = predict(m, db.samples[k].variable);
            EXPECT_NEAR(c.tf, db.samples[k].params.tf, 1e-6);
            // Feature2 feeds the predicted tf, itself within 1e-6 of the truth.
            EXPECT_LT((c.omega_m - db.samples[k].params.omega_m).cwiseAbs().maxCoeff(), 1e-5);
        }
    }
}

TEST(Fit, ChannelsAreIndependent) {
    auto db = synthetic_db(40, 5);
    const auto spec = make_feature_spec(FeatureVariant::Feature1, ProblemConfig{});
    const auto cfg = RegressorConfig::gaussian_svr();
    const auto before = fit(db, spec, cfg);
    for (auto& s : db.samples) s.params.tf *= 1.7;
    const auto after = fit(db, spec, cfg);
    Rng rng(6);
    for (int t = 0; t < 10; ++t) {
        SampleVariable v{random_vec(rng, 3), random_vec(rng, 3, -0.5, 0.5)};
        EXPECT_EQ(predict(before, v).omega_m, predict(after, v).omega_m);
    }
}

TEST(Fit, DeterministicAcrossThreads) {
    const auto db = synthetic_db(80, 6);
    const auto spec = make_feature_spec(FeatureVariant::Feature2, ProblemConfig{});
    for (const auto& cfg : {RegressorConfig::gaussian_svr(), RegressorConfig::gpr(), RegressorConfig::linear_svr()}) {
        const auto a = fit(db, spec, cfg, 1);
        const auto b = fit(db, spec, cfg, 4);
        Rng rng(7);
        for (int t = 0; t < 10; ++t) {
            SampleVariable v{random_vec(rng, 3), random_vec(rng, 3, -0.5, 0.5)};
            const auto ca = predict(a, v), cb = predict(b, v);
            EXPECT_EQ(ca.omega_m, cb.omega_m);
            EXPECT_EQ(ca.tf, cb.tf);
        }
    }
}

TEST(Fit, PlanningInputUsesOffsets) {
    const auto db = synthetic_db(50, 7);
    const auto m = fit(db, make_feature_spec(FeatureVariant::Feature2, ProblemConfig{}), RegressorConfig::gpr());
    const auto& v = db.samples[3].variable;
    const Vec q0 = Vec::Constant(3, 0.2);
    const auto a = predict(m, v);
    const auto b = predict(m, PlanningInput{q0, q0 + v.qf, v.omega0});
    EXPECT_NEAR(a.tf, b.tf, 1e-12);
    EXPECT_LT((a.omega_m - b.omega_m).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ModelFile, RoundTrip) {
    const auto db = synthetic_db(50, 8);
    const auto spec = make_feature_spec(FeatureVariant::Feature2, ProblemConfig{});
    const auto path = temp_path("model.json");
    for (const auto& cfg : {RegressorConfig::knn(3), RegressorConfig::linear_svr(), RegressorConfig::gaussian_svr(),
                            RegressorConfig::gpr(), RegressorConfig::gpr_tuned()}) {
        const auto m = fit(db, spec, cfg);
        save_model(m, path);
        const auto raw = read_json_file(path);
        EXPECT_EQ(raw.contains("channels"), cfg.method != RegressionMethod::Knn);
        const auto back = load_model(path, &db);
        EXPECT_EQ(back.db_hash, db.content_hash());
        EXPECT_EQ(back.fit_time, m.fit_time);
        Rng rng(9);
        for (int t = 0; t < 5; ++t) {
            SampleVariable v{random_vec(rng, 3), random_vec(rng, 3, -0.5, 0.5)};
            EXPECT_EQ(predict(m, v).omega_m, predict(back, v).omega_m);
            EXPECT_EQ(predict(m, v).tf, predict(back, v).tf);
        }
    }
    std::filesystem::remove(path);
}

TEST(ModelFile, HashMismatchAndMissingDatabase) {
    const auto db = synthetic_db(30, 9);
    const auto other = synthetic_db(30, 10);
    const auto spec = make_feature_spec(FeatureVariant::Feature1, ProblemConfig{});
    const auto knn = model_to_json(fit(db, spec, RegressorConfig::knn()));
    EXPECT_THROW(model_from_json(knn), SchemaError);
    EXPECT_THROW(model_from_json(knn, &other), SchemaError);
    const auto gpr = model_to_json(fit(db, spec, RegressorConfig::gpr()));
    EXPECT_NO_THROW(model_from_json(gpr));
    EXPECT_THROW(model_from_json(gpr, &other), SchemaError);
    auto broken = gpr;
    broken["channels"].erase(0);
    EXPECT_THROW(model_from_json(broken), SchemaError);
    EXPECT_THROW(model_from_json(Json{{"format", "other"}}), SchemaError);
}

TEST(Fit, DeskDatabaseHeldOutError) {
    const auto& db = desk_db();
    ASSERT_GE(db.size(), 300u);
    Database train, test;
    for (std::size_t k = 0; k < db.size(); ++k) (k % 5 == 4 ? test : train).samples.push_back(db.samples[k]);
    const auto spec = make_feature_spec(FeatureVariant::Feature2, db.metadata.problem);
    for (const auto& cfg : {RegressorConfig::gpr_tuned(), RegressorConfig::gaussian_svr()}) {
        const auto m = fit(train, spec, cfg);
        const auto nc = spec.channels();
        Vec sq = Vec::Zero(nc), lo = Vec::Constant(nc, kInf), hi = Vec::Constant(nc, -kInf);
        for (const auto& s : db.samples) {
            const Vec t = s.params.as_vector();
            lo = lo.cwiseMin(t);
            hi = hi.cwiseMax(t);
        }
        for (const auto& s : test.samples) sq += (predict(m, s.variable).as_vector() - s.params.as_vector()).cwiseAbs2();
        const Vec rmse = (sq / static_cast<double>(test.size())).cwiseSqrt();
        for (Eigen::Index c = 0; c < nc; ++c)
            EXPECT_LT(rmse[c], 0.1 * (hi[c] - lo[c])) << to_string(cfg.method) << " channel " << c;
    }
}
