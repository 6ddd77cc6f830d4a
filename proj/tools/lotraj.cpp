// lotraj: database generation, training, evaluation, planning and
// simulation from the command line.
//
// Exit codes: 0 success, 1 usage error, 2 infeasible or failed run,
// 3 I/O or schema error.

#include "lotraj/lotraj.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>

using namespace lotraj;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailed = 2;
constexpr int kExitIo = 3;

struct RunFailed : Error {
    using Error::Error;
};

std::filesystem::path config_dir() {
    if (const char* env = std::getenv("LOTRAJ_CONFIG_DIR"); env != nullptr && *env != '\0') return env;
    return "configs";
}

/// Explicit path, else <config dir>/<name> if present, else nothing.
std::optional<std::filesystem::path> locate_config(const std::string& explicit_path, const char* name) {
    if (!explicit_path.empty()) return explicit_path;
    const auto p = config_dir() / name;
    if (std::filesystem::exists(p)) return p;
    return std::nullopt;
}

RobotConfig robot_config(const std::string& path, std::string& used) {
    const auto p = locate_config(path, "default_robot.json");
    used = p ? p->string() : "built-in";
    return p ? load_robot_config(*p) : RobotConfig{};
}

Json manifest(const std::string& subcommand, const std::vector<std::string>& args, Json extra = Json::object()) {
    Json m{{"tool", "lotraj"}, {"version", kVersion}, {"subcommand", subcommand}, {"args", args}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    return m;
}

Vec parse_vector(const std::string& text, std::string_view what) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, end - pos);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        const auto rest = item.find_first_not_of(" \t", used);
        if (used == 0 || rest != std::string::npos || !std::isfinite(v))
            throw InputError(std::string(what) + ": '" + item + "' is not a number");
        out.push_back(v);
        pos = end + 1;
    }
    return to_vec(out);
}

PlanningInput parse_input(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        const auto end = text.find(';', pos);
        parts.push_back(text.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
        if (end == std::string::npos) break;
        pos = end + 1;
    }
    if (parts.size() != 3) throw InputError("--input: expected \"q0;qc;omega0\"");
    PlanningInput x{parse_vector(parts[0], "q0"), parse_vector(parts[1], "qc"), parse_vector(parts[2], "omega0")};
    x.validate();
    return x;
}

std::shared_ptr<const Database> load_db(const std::string& path) {
    return std::make_shared<const Database>(load_database(path));
}

LOModel load_lo(const std::string& model_path, const std::shared_ptr<const Database>& db, const std::string& refine) {
    auto model = load_model(model_path, db.get());
    return make_lo_model(db, std::move(model), refinement_from_string(refine));
}

void write_with_manifest(const std::filesystem::path& path, const Json& m, const std::string& body) {
    write_file_atomic(path, "# manifest," + m.dump() + "\n" + body);
}

// ---------------------------------------------------------------------------
// Subcommands

struct GenDbArgs {
    std::string config, out, train_db;
    std::size_t n1 = 1000, n2 = 10, density = 3, n_r = 200;
    int restarts = 10, oracle_restarts = 100;
    std::uint64_t seed = 1;
    bool naive = false, testset = false, timestamp = false;
    unsigned jobs = 1;
    CLI::Option* n2_opt = nullptr;
};

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

int run_gen_db(const GenDbArgs& a, const std::vector<std::string>& args) {
    std::string used;
    const auto rc = robot_config(a.config, used);
    Database db;
    if (a.testset) {
        std::optional<Database> training;
        if (!a.train_db.empty()) training = load_database(a.train_db);
        TestSetOptions opt{.n_r = a.n_r,
                           .n2 = a.n2_opt->count() > 0 ? a.n2 : 5,
                           .oracle_restarts = a.oracle_restarts,
                           .seed = a.seed,
                           .jobs = a.jobs};
        db = make_test_set(rc.problem, rc.workspace, opt, training ? &*training : nullptr);
    } else if (a.naive) {
        db = generate_database_naive(rc.problem, a.density, a.restarts, a.seed, a.jobs);
    } else {
        db = generate_database(rc.problem, rc.workspace,
                               {.n1 = a.n1, .n2 = a.n2, .restarts = a.restarts, .seed = a.seed, .jobs = a.jobs});
    }
    db.metadata.manifest = manifest("gen-db", args,
                                    {{"config", used},
                                     {"config_hash", problem_hash(rc.problem)},
                                     {"seed", a.seed},
                                     {"output", a.out}});
    if (a.timestamp) db.metadata.created = now_utc();
    save_database(db, a.out);
    const auto& s = db.metadata.stats;
    std::printf("%s database: %zu samples of %zu attempted (success rate %.4f) -> %s\n", db.metadata.kind.c_str(),
                db.size(), s.attempted, s.success_rate(), a.out.c_str());
    return kExitOk;
}

struct TrainArgs {
    std::string db, method = "gpr", feature = "feature2", out;
    int k = 1;
    double c_reg = 0.0, epsilon = -1.0, gamma = 0.0, noise = 0.0, length_scale = 0.0;
    bool no_tune = false;
};

int run_train(const TrainArgs& a, const std::vector<std::string>& args) {
    const auto db = load_database(a.db);
    const auto method = regression_method_from_string(a.method);
    auto cfg = RegressorConfig::defaults(method);
    if (method == RegressionMethod::Gpr && !a.no_tune && a.length_scale <= 0.0) cfg = RegressorConfig::gpr_tuned();
    if (a.length_scale > 0.0) cfg.length_scales = {a.length_scale};
    cfg.k = a.k;
    if (a.c_reg > 0.0) cfg.c_reg = a.c_reg;
    if (a.epsilon >= 0.0) cfg.epsilon = a.epsilon;
    if (a.gamma > 0.0) cfg.gamma = a.gamma;
    if (a.noise > 0.0) cfg.noise_variance = a.noise;
    const auto spec = make_feature_spec(feature_variant_from_string(a.feature), db.metadata.problem);
    const auto model = fit(db, spec, cfg);
    auto j = model_to_json(model);
    j["manifest"] = manifest("train", args, {{"database", a.db}, {"db_hash", model.db_hash}, {"output", a.out}});
    write_file_atomic(a.out, j.dump() + "\n");
    std::printf("%s %s model on %zu samples, fit %.3f s -> %s\n", a.method.c_str(), a.feature.c_str(),
                model.training_size, model.fit_time, a.out.c_str());
    return kExitOk;
}

struct EvalArgs {
    std::string model, db, testset, refine = "obj", out;
    unsigned jobs = 1;
};

int run_eval(const EvalArgs& a, const std::vector<std::string>& args) {
    const auto db = load_db(a.db);
    const auto lo = load_lo(a.model, db, a.refine);
    const auto ts = load_database(a.testset);
    const auto rep = evaluate(lo, ts, a.jobs);
    std::printf("N_r %zu  N_r1 %zu  R_s %.4f  e_F %.6g  T_L median %.4f ms (T_PR %.4f, T_RO %.4f)  rho %.3f\n",
                rep.N_r, rep.N_r1, rep.R_s, rep.e_F, rep.T_L.median * 1e3, rep.T_PR.median * 1e3,
                rep.T_RO.median * 1e3, rep.spearman_eF_dFr);
    if (!a.out.empty()) {
        write_with_manifest(a.out,
                            manifest("eval", args,
                                     {{"model", a.model},
                                      {"database", a.db},
                                      {"testset", a.testset},
                                      {"db_hash", db->content_hash()},
                                      {"testset_hash", ts.content_hash()}}),
                            evaluation_csv(rep));
    }
    return kExitOk;
}

struct PlanArgs {
    std::string model, db, input, refine = "obj";
};

int run_plan(const PlanArgs& a) {
    const auto x = parse_input(a.input);
    const auto db = load_db(a.db);
    const auto lo = load_lo(a.model, db, a.refine);
    const auto p = plan(lo, x);
    std::cout.precision(10);
    std::cout << "omega_m";
    for (Eigen::Index i = 0; i < p.params.dof(); ++i) std::cout << ' ' << p.params.omega_m[i];
    std::cout << "\ntf " << p.params.tf << "\nobjective " << p.objective_value << "\nT_PR_ms " << p.T_PR * 1e3
              << "\nT_RO_ms " << p.T_RO * 1e3 << "\nT_L_ms " << p.T_L * 1e3 << "\niterations " << p.iterations
              << "\nmax_violation " << p.max_violation << '\n';
    const bool ok = p.feasible && p.within_limits;
    std::cout << "verdict " << (ok ? "feasible" : "infeasible");
    if (!p.within_limits) std::cout << " (q0 or qc outside the joint ranges)";
    std::cout << '\n';
    return ok ? kExitOk : kExitFailed;
}

struct SimulateArgs {
    std::string model, db, scenario, config, out;
    std::int64_t seed = -1;
};

int run_simulate(const SimulateArgs& a, const std::vector<std::string>& args) {
    std::string used;
    const auto rc = robot_config(a.config, used);
    const auto scen_path = locate_config(a.scenario, "default_scenario.json");
    auto sc = scen_path ? load_scenario(*scen_path) : default_scenario();
    if (a.seed >= 0) sc.seed = static_cast<std::uint64_t>(a.seed);
    const auto db = load_db(a.db);
    const auto lo = load_lo(a.model, db, "obj");
    sc.validate(rc.workspace, lo.problem.model);
    const auto tr = run_scenario(lo, sc);
    std::printf("periods %zu  contact %s  failed %s  final error %.3g rad  real-time fraction %.3f\n",
                tr.total_periods(), tr.contact ? ("at period " + std::to_string(tr.contact_period)).c_str() : "no",
                tr.failed ? ("at period " + std::to_string(tr.failed_period)).c_str() : "no", tr.final_error,
                tr.real_time_fraction());
    if (!a.out.empty()) {
        write_with_manifest(a.out,
                            manifest("simulate", args,
                                     {{"model", a.model},
                                      {"database", a.db},
                                      {"scenario", scen_path ? scen_path->string() : "built-in"},
                                      {"seed", sc.seed}}),
                            trace_csv(tr));
    }
    return tr.contact && !tr.failed ? kExitOk : kExitFailed;
}

struct BenchArgs {
    std::vector<std::string> models;
    std::string db, testset, refine = "obj", out;
    int repeat = 1, global_restarts = 10;
};

int run_bench(const BenchArgs& a, const std::vector<std::string>& args) {
    require(a.repeat >= 1, "bench: --repeat must be >= 1");
    const auto db = load_db(a.db);
    const auto ts = load_database(a.testset);
    require(!ts.empty(), "bench: empty test set");
    std::ostringstream csv;
    csv << "method,metric,median,p95,max\n";
    csv.precision(10);
    auto row = [&](const std::string& name, const char* metric, const std::vector<double>& t) {
        const auto s = timing_stats(t);
        csv << name << ',' << metric << ',' << s.median << ',' << s.p95 << ',' << s.max << '\n';
        std::printf("%-24s %-5s median %.4f ms  p95 %.4f ms  max %.4f ms\n", name.c_str(), metric, s.median * 1e3,
                    s.p95 * 1e3, s.max * 1e3);
    };
    std::map<std::string, int> seen;
    for (const auto& path : a.models) {
        const auto lo = load_lo(path, db, a.refine);
        std::string name = to_string(lo.regressor.config.method) + "-" + to_string(lo.regressor.features.variant);
        if (++seen[name] > 1) name += "#" + std::to_string(seen[name]);
        for (int w = 0; w < kWarmupRuns; ++w) (void)plan(lo, ts.samples[static_cast<std::size_t>(w) % ts.size()].variable.to_input());
        std::vector<double> tpr, tro, tl;
        for (int r = 0; r < a.repeat; ++r) {
            for (const auto& s : ts.samples) {
                const auto p = plan(lo, s.variable.to_input());
                tpr.push_back(p.T_PR);
                tro.push_back(p.T_RO);
                tl.push_back(p.T_L);
            }
        }
        row(name, "T_PR", tpr);
        row(name, "T_RO", tro);
        row(name, "T_L", tl);
    }
    if (a.global_restarts > 0) {
        std::vector<double> tg;
        for (int r = 0; r < a.repeat; ++r) {
            for (std::size_t k = 0; k < ts.size(); ++k) {
                tg.push_back(solve_global(ts.samples[k].variable.to_input(), db->metadata.problem, a.global_restarts,
                                          derive_seed(k, static_cast<std::uint64_t>(r)))
                                 .wall_time);
            }
        }
        row("global-" + std::to_string(a.global_restarts), "T_L", tg);
    }
    if (!a.out.empty()) {
        write_with_manifest(a.out, manifest("bench", args, {{"database", a.db}, {"testset", a.testset}}), csv.str());
    }
    return kExitOk;
}

struct DemoArgs {
    std::string mapping = "fm1", mode = "uniform", out;
    std::size_t d = 27, d_prime = 3;
    std::uint64_t seed = 1;
};

int run_demo(const DemoArgs& a, const std::vector<std::string>& args) {
    DemoMappingSpec spec;
    if (a.mapping == "fm1") {
        spec = DemoMappingSpec::fm1();
    } else if (a.mapping == "fm2") {
        spec = DemoMappingSpec::fm2();
    } else {
        throw InputError("--mapping: expected fm1 or fm2");
    }
    DemoMode mode;
    if (a.mode == "uniform") {
        mode = DemoMode::Uniform;
    } else if (a.mode == "random") {
        mode = DemoMode::Random;
    } else {
        throw InputError("--mode: expected uniform or random");
    }
    const auto r = demo_merging_distributions(spec, mode, a.d, a.d_prime, a.seed);
    std::printf("direct: %zu points, %zu distinct, coverage %.3f / %.3f\n", r.direct.size(), r.direct_stats.distinct,
                r.direct_stats.coverage[0], r.direct_stats.coverage[1]);
    std::printf("pushed: %zu points, %zu distinct, coverage %.3f / %.3f\n", r.pushed.size(), r.pushed_stats.distinct,
                r.pushed_stats.coverage[0], r.pushed_stats.coverage[1]);
    if (!a.out.empty()) {
        std::ostringstream os;
        os.precision(17);
        for (const auto& [name, st] : {std::pair{"direct", r.direct_stats}, std::pair{"pushed", r.pushed_stats}}) {
            os << "# " << name << "_coverage_x," << st.coverage[0] << "\n# " << name << "_coverage_y," << st.coverage[1]
               << "\n# " << name << "_distinct," << st.distinct << '\n';
        }
        os << "set,x,y\n";
        for (const auto& p : r.direct) os << "direct," << p.x() << ',' << p.y() << '\n';
        for (const auto& p : r.pushed) os << "pushed," << p.x() << ',' << p.y() << '\n';
        write_with_manifest(a.out, manifest("demo-mapping", args, {{"seed", a.seed}}), os.str());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    CLI::App app{"Learning-optimisation trajectory planner"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    GenDbArgs g;
    auto* gen = app.add_subcommand("gen-db", "Generate an optimal database, a naive baseline or a test set");
    gen->add_option("--config", g.config, "Robot config JSON (default: $LOTRAJ_CONFIG_DIR/default_robot.json)");
    gen->add_option("--n1", g.n1, "Workspace offsets")->capture_default_str();
    g.n2_opt = gen->add_option("--n2", g.n2, "Intermediate points per offset")->capture_default_str();
    gen->add_option("--restarts", g.restarts, "Global-solve restarts per sample")->capture_default_str();
    gen->add_option("--seed", g.seed)->capture_default_str();
    gen->add_flag("--naive", g.naive, "Grid the raw input space instead");
    gen->add_option("--density", g.density, "Values per coordinate with --naive")->capture_default_str();
    gen->add_flag("--testset", g.testset, "Generate an evaluation test set");
    gen->add_option("--n-r", g.n_r, "Test set size")->capture_default_str();
    gen->add_option("--oracle-restarts", g.oracle_restarts, "Restarts of the test-set oracle")->capture_default_str();
    gen->add_option("--train-db", g.train_db, "Training database the test set must not share a seed with");
    gen->add_flag("--timestamp", g.timestamp, "Record the creation time in the header");
    gen->add_option("--jobs", g.jobs)->capture_default_str();
    gen->add_option("--out", g.out)->required();

    TrainArgs t;
    auto* train = app.add_subcommand("train", "Fit a regression model on a database");
    train->add_option("--db", t.db)->required();
    train->add_option("--method", t.method, "knn, linear-svr, gaussian-svr or gpr")->capture_default_str();
    train->add_option("--feature", t.feature, "feature1 or feature2")->capture_default_str();
    train->add_option("--k", t.k, "Neighbours for knn")->capture_default_str();
    train->add_option("--C", t.c_reg, "SVR box constraint");
    train->add_option("--epsilon", t.epsilon, "SVR tube half-width");
    train->add_option("--gamma", t.gamma, "Gaussian SVR kernel width");
    train->add_option("--noise", t.noise, "GPR noise variance");
    train->add_option("--length-scale", t.length_scale, "Fixed GPR length scale");
    train->add_flag("--no-tune", t.no_tune, "GPR: keep length scale 1 instead of the marginal-likelihood grid");
    train->add_option("--out", t.out)->required();

    EvalArgs e;
    auto* eval = app.add_subcommand("eval", "Evaluate an LO model on a test set");
    eval->add_option("--model", e.model)->required();
    eval->add_option("--db", e.db)->required();
    eval->add_option("--testset", e.testset)->required();
    eval->add_option("--refine", e.refine, "obj or nonobj")->capture_default_str();
    eval->add_option("--jobs", e.jobs)->capture_default_str();
    eval->add_option("--out", e.out, "Per-sample report CSV");

    PlanArgs p;
    auto* planc = app.add_subcommand("plan", "Plan one input");
    planc->add_option("--model", p.model)->required();
    planc->add_option("--db", p.db)->required();
    planc->add_option("--input", p.input, "\"q0;qc;omega0\", comma-separated joint values")->required();
    planc->add_option("--refine", p.refine, "obj or nonobj")->capture_default_str();

    SimulateArgs s;
    auto* sim = app.add_subcommand("simulate", "Run a continuous re-planning session");
    sim->add_option("--model", s.model)->required();
    sim->add_option("--db", s.db)->required();
    sim->add_option("--scenario", s.scenario, "Scenario JSON (default: $LOTRAJ_CONFIG_DIR/default_scenario.json)");
    sim->add_option("--config", s.config, "Robot config JSON");
    sim->add_option("--seed", s.seed, "Override the scenario seed");
    sim->add_option("--out", s.out, "Trace CSV");

    BenchArgs b;
    auto* bench = app.add_subcommand("bench", "Time planning for one or more models");
    bench->add_option("--model", b.models)->required();
    bench->add_option("--db", b.db)->required();
    bench->add_option("--testset", b.testset)->required();
    bench->add_option("--refine", b.refine)->capture_default_str();
    bench->add_option("--repeat", b.repeat)->capture_default_str();
    bench->add_option("--global", b.global_restarts, "Restarts of the global baseline, 0 to skip")->capture_default_str();
    bench->add_option("--out", b.out, "Summary CSV");

    DemoArgs d;
    auto* demo = app.add_subcommand("demo-mapping", "Point sets before and after a merging mapping");
    demo->add_option("--mapping", d.mapping, "fm1 or fm2")->capture_default_str();
    demo->add_option("--mode", d.mode, "uniform or random")->capture_default_str();
    demo->add_option("--d", d.d)->capture_default_str();
    demo->add_option("--dprime", d.d_prime)->capture_default_str();
    demo->add_option("--seed", d.seed)->capture_default_str();
    demo->add_option("--out", d.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) return run_gen_db(g, args);
        if (*train) return run_train(t, args);
        if (*eval) return run_eval(e, args);
        if (*planc) return run_plan(p);
        if (*sim) return run_simulate(s, args);
        if (*bench) return run_bench(b, args);
        if (*demo) return run_demo(d, args);
    } catch (const InputError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kExitUsage;
    } catch (const SchemaError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kExitIo;
    } catch (const Error& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kExitFailed;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kExitIo;
    }
    return kExitUsage;
}
