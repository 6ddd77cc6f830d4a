// Builds a small database, fits a GPR model, plans one input and
// evaluates the model on a held-out test set.

#include "lotraj/lotraj.hpp"

#include <cstdio>

using namespace lotraj;

int main() {
    const ProblemConfig cfg;
    const auto ws = default_workspace();

    auto db = std::make_shared<const Database>(
        generate_database(cfg, ws, {.n1 = 20, .n2 = 10, .restarts = 10, .seed = 1}));
    std::printf("database: %zu samples\n", db->size());

    auto model = fit(*db, make_feature_spec(FeatureVariant::Feature2, cfg), RegressorConfig::gpr_tuned());
    const auto lo = make_lo_model(db, std::move(model));

    Vec q0(3), qc(3), w0(3);
    q0 << -0.6, -0.75, 0.2;
    qc << 0.1, 0.2, 0.3;
    w0 << 0.0, 0.0, 0.0;
    const auto p = plan(lo, {q0, qc, w0});
    std::printf("plan: %s, tf %.4f s, objective %.5f, T_L %.3f ms\n", p.feasible ? "feasible" : "infeasible",
                p.params.tf, p.objective_value, p.T_L * 1e3);

    const auto ts = make_test_set(cfg, ws, {.n_r = 50, .oracle_restarts = 50, .seed = 99}, db.get());
    const auto rep = evaluate(lo, ts);
    std::printf("test set: R_s %.3f, mean e_F %.2e, median T_L %.3f ms\n", rep.R_s, rep.e_F, rep.T_L.median * 1e3);

    const auto trace = run_scenario(lo, default_scenario());
    std::printf("session: %s after %zu periods, final error %.2e rad\n", trace.contact ? "contact" : "no contact",
                trace.total_periods(), trace.final_error);
    return 0;
}
