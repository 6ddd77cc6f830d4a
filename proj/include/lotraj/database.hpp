#pragma once

// Offline database of optimal trajectory parameters.
//
// Sample variables are (qf, ω0) with qf = qc − q0: the NLP depends on the
// boundary only through the offset, so every stored instance uses the zero
// reference q0 = 0. The mapped generator draws workspace pairs (p0 ∈ W_E,
// pc ∈ W_C) by joint-space rejection sampling, solves the rest-start problem
// for each offset and expands it with intermediate states at t' = α·tf.
//
// File format (JSON Lines): one header object, then one object per sample.
//   {"format": "lotraj-db", "schema_version": 1, "kind": .., "count": N,
//    "sample_hash": .., "metadata": {..}, "manifest": {..}}
//   {"qf": [..], "omega0": [..], "omega_m": [..], "tf": .., "objective": ..,
//    "seed": .., "restarts": .., "tol": ..}

#include "lotraj/config_io.hpp"
#include "lotraj/kinematics.hpp"
#include "lotraj/nlp.hpp"
#include "lotraj/trajectory.hpp"

#include <array>
#include <optional>
#include <set>

namespace lotraj {

inline constexpr int kDatabaseSchemaVersion = 1;
inline constexpr const char* kDatabaseFormat = "lotraj-db";

struct SampleVariable {
    Vec qf;
    Vec omega0;

    [[nodiscard]] Eigen::Index dof() const noexcept { return qf.size(); }
    [[nodiscard]] PlanningInput to_input() const { return {Vec::Zero(qf.size()), qf, omega0}; }
    friend bool operator==(const SampleVariable& a, const SampleVariable& b) {
        return a.qf == b.qf && a.omega0 == b.omega0;
    }
};

struct SampleProvenance {
    std::uint64_t seed = 0;
    int restarts = 0;
    double tolerance = 1e-6;
};

struct Sample {
    SampleVariable variable;
    TrajectoryParams params;
    double objective_value = 0.0;
    SampleProvenance provenance;
};

struct GenerationStats {
    std::size_t attempted = 0;     ///< sample variables budgeted
    std::size_t feasible = 0;      ///< stored samples
    std::size_t rest_skipped = 0;  ///< workspace offsets whose rest-start solve failed

    [[nodiscard]] double success_rate() const {
        return attempted == 0 ? 0.0 : static_cast<double>(feasible) / static_cast<double>(attempted);
    }
};

struct DatabaseMetadata {
    std::string kind = "mapped";  ///< "mapped", "naive" or "testset"
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    std::size_t density = 0;
    int restarts = 0;
    std::uint64_t seed = 0;
    std::vector<double> alphas;
    ProblemConfig problem;
    GenerationStats stats;
    std::string created;  ///< optional wall-clock stamp; empty keeps files reproducible
    Json manifest = Json::object();
};

struct Database {
    std::vector<Sample> samples;
    DatabaseMetadata metadata;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples.empty(); }
    [[nodiscard]] Eigen::Index dof() const { return samples.empty() ? 0 : samples.front().variable.dof(); }
    [[nodiscard]] std::string content_hash() const;
};

// ---------------------------------------------------------------------------
// Mappings

inline Vec merge_offsets(const Vec& q0, const Vec& qc) {
    require_same_size(q0, qc, "merge_offsets");
    return qc - q0;
}

/// N_2 evenly spaced α in [0, 0.9]; {0} for N_2 = 1.
inline std::vector<double> alpha_grid(std::size_t n2) {
    require(n2 >= 1, "alpha_grid: N_2 must be >= 1");
    std::vector<double> out(n2, 0.0);
    for (std::size_t k = 1; k < n2; ++k) out[k] = 0.9 * static_cast<double>(k) / static_cast<double>(n2 - 1);
    return out;
}

struct ConfigurationPair {
    Vec q0;
    Vec qc;
};

/// Acceptance floor below which workspace sampling is declared hopeless.
inline constexpr double kMinAcceptanceRate = 1e-4;
inline constexpr std::size_t kAcceptanceCheckDraws = 10000;

struct WorkspaceSampling {
    std::vector<ConfigurationPair> pairs;
    std::size_t draws = 0;  ///< (q0, qc) candidates drawn

    [[nodiscard]] double acceptance_rate() const {
        return draws == 0 ? 0.0 : static_cast<double>(pairs.size()) / static_cast<double>(draws);
    }
};

/// Joint-space rejection sampling of (q0, qc) within joint limits such that
/// FK(q0) ∈ W_E and FK(qc) ∈ W_C.
inline WorkspaceSampling sample_workspace_configurations(const WorkspaceSpec& ws, const RobotModel& model,
                                                         std::size_t n1, std::uint64_t seed) {
    require(n1 >= 1, "sample_workspace_pairs: N_1 must be >= 1");
    require(!ws.effective.primitives.empty() && !ws.interacting.primitives.empty(),
            "sample_workspace_pairs: regions must be non-empty");
    model.validate();
    Rng rng(seed);
    const auto nj = model.dof();
    auto draw = [&] {
        Vec q(nj);
        for (Eigen::Index i = 0; i < nj; ++i) {
            const auto& r = model.joint_limits[static_cast<std::size_t>(i)];
            q[i] = rng.uniform(r.lower, r.upper);
        }
        return q;
    };
    WorkspaceSampling out;
    out.pairs.reserve(n1);
    while (out.pairs.size() < n1) {
        Vec q0 = draw();
        Vec qc = draw();
        ++out.draws;
        if (in_region(forward_kinematics(model, q0), ws.effective) &&
            in_region(forward_kinematics(model, qc), ws.interacting)) {
            out.pairs.push_back({std::move(q0), std::move(qc)});
        }
        if (out.draws % kAcceptanceCheckDraws == 0 && out.acceptance_rate() < kMinAcceptanceRate) {
            throw RegionUnreachable("sample_workspace_pairs: " + std::to_string(out.pairs.size()) + " of " +
                                    std::to_string(out.draws) +
                                    " joint-space draws landed in the workspace regions; "
                                    "W_E / W_C appear unreachable for this robot");
        }
    }
    return out;
}

inline std::vector<Vec> sample_workspace_pairs(const WorkspaceSpec& ws, const RobotModel& model, std::size_t n1,
                                               std::uint64_t seed) {
    std::vector<Vec> out;
    for (const auto& p : sample_workspace_configurations(ws, model, n1, seed).pairs)
        out.push_back(merge_offsets(p.q0, p.qc));
    return out;
}

/// State split of a rest-start trajectory at t' = α·tf: the remaining offset
/// q(tf) − q(t') and the velocity q̇(t').
inline SampleVariable intermediate_state(const TrajectoryParams& c, const Vec& qf, double alpha) {
    require(alpha >= 0.0 && alpha < 1.0, "expand_intermediate_points: alpha must lie in [0, 1)");
    const PlanningInput x{Vec::Zero(qf.size()), qf, Vec::Zero(qf.size())};
    const auto profs = profiles(c, x);
    const double t = alpha * c.tf;
    SampleVariable v{Vec(qf.size()), Vec(qf.size())};
    for (Eigen::Index i = 0; i < qf.size(); ++i) {
        const auto& p = profs[static_cast<std::size_t>(i)];
        const auto s = p.at(t);
        v.qf[i] = p.at(p.tf).q - s.q;
        v.omega0[i] = s.qdot;
    }
    return v;
}

struct ExpansionResult {
    std::vector<SampleVariable> variables;
    std::size_t rest_skipped = 0;
};

/// Rest-start solve per offset (seed derived from `seed` and the offset's
/// index) followed by the α split. Offsets whose rest solve is infeasible
/// are skipped and counted.
inline ExpansionResult expand_intermediate_points(const std::vector<Vec>& qf_list, const std::vector<double>& alphas,
                                                  const ProblemConfig& cfg, int n_restarts, std::uint64_t seed,
                                                  unsigned jobs = 1) {
    for (double a : alphas) require(a >= 0.0 && a < 1.0, "expand_intermediate_points: alpha must lie in [0, 1)");
    std::vector<std::optional<TrajectoryParams>> rest(qf_list.size());
    parallel_for(qf_list.size(), jobs, [&](std::size_t i) {
        const auto& qf = qf_list[i];
        const PlanningInput x{Vec::Zero(qf.size()), qf, Vec::Zero(qf.size())};
        const auto r = solve_global(x, cfg, n_restarts, derive_seed(seed, i));
        if (r.feasible) rest[i] = r.params;
    });
    ExpansionResult out;
    for (std::size_t i = 0; i < qf_list.size(); ++i) {
        if (!rest[i]) {
            ++out.rest_skipped;
            continue;
        }
        for (double a : alphas) out.variables.push_back(intermediate_state(*rest[i], qf_list[i], a));
    }
    return out;
}

/// Solves every variable with solve_global and keeps the feasible results in
/// index order. Variable i uses seed derive_seed(seed, i).
inline std::vector<Sample> solve_variables(const std::vector<SampleVariable>& vars, const ProblemConfig& cfg,
                                           int n_restarts, std::uint64_t seed, unsigned jobs = 1,
                                           const SolverOptions& opt = {}) {
    std::vector<std::optional<Sample>> slots(vars.size());
    parallel_for(vars.size(), jobs, [&](std::size_t i) {
        const auto s = derive_seed(seed, i);
        const auto r = solve_global(vars[i].to_input(), cfg, n_restarts, s, opt);
        if (r.feasible) slots[i] = Sample{vars[i], r.params, r.objective_value, {s, n_restarts, opt.feasibility_tol}};
    });
    std::vector<Sample> out;
    for (auto& s : slots)
        if (s) out.push_back(std::move(*s));
    return out;
}

struct GenerationOptions {
    std::size_t n1 = 1000;
    std::size_t n2 = 10;
    int restarts = 10;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
};

namespace detail {
// Independent sub-streams of one generation seed.
inline constexpr std::uint64_t kStreamPairs = 1;
inline constexpr std::uint64_t kStreamRest = 2;
inline constexpr std::uint64_t kStreamSolve = 3;
inline constexpr std::uint64_t kStreamNaive = 4;
}  // namespace detail

inline Database generate_database(const ProblemConfig& cfg, const WorkspaceSpec& ws, const GenerationOptions& opt) {
    require(opt.n1 >= 1 && opt.n2 >= 1 && opt.restarts >= 1, "generate_database: N_1, N_2, N_RO must be >= 1");
    cfg.validate();
    const auto offsets = sample_workspace_pairs(ws, cfg.model, opt.n1, derive_seed(opt.seed, detail::kStreamPairs));
    const auto alphas = alpha_grid(opt.n2);
    const auto expanded =
        expand_intermediate_points(offsets, alphas, cfg, opt.restarts, derive_seed(opt.seed, detail::kStreamRest), opt.jobs);
    Database db;
    db.samples = solve_variables(expanded.variables, cfg, opt.restarts, derive_seed(opt.seed, detail::kStreamSolve),
                                 opt.jobs);
    auto& m = db.metadata;
    m.kind = "mapped";
    m.n1 = opt.n1;
    m.n2 = opt.n2;
    m.restarts = opt.restarts;
    m.seed = opt.seed;
    m.alphas = alphas;
    m.problem = cfg;
    m.stats = {opt.n1 * opt.n2, db.samples.size(), expanded.rest_skipped};
    return db;
}

/// Baseline: d random values per component of (qf, ω0) in the raw limit
/// boxes (qf_i ∈ ±span_i, ω0_i ∈ ±q̇_i,max) and the full d^(2·N_J) grid of
/// their combinations; no workspace filter, no expansion.
inline std::vector<SampleVariable> naive_variables(const RobotModel& model, std::size_t d, std::uint64_t seed) {
    require(d >= 1, "generate_database_naive: density must be >= 1");
    const auto nj = static_cast<std::size_t>(model.dof());
    const std::size_t dims = 2 * nj;
    Rng rng(seed);
    std::vector<std::vector<double>> values(dims);
    for (std::size_t c = 0; c < dims; ++c) {
        const double half = c < nj ? model.joint_limits[c].span() : model.vel_limits[static_cast<Eigen::Index>(c - nj)];
        for (std::size_t k = 0; k < d; ++k) values[c].push_back(rng.uniform(-half, half));
    }
    double total_d = std::pow(static_cast<double>(d), static_cast<double>(dims));
    require(total_d <= 1e8, "generate_database_naive: d^(2·N_J) grid too large");
    const auto total = static_cast<std::size_t>(total_d);
    std::vector<SampleVariable> out;
    out.reserve(total);
    std::vector<std::size_t> idx(dims, 0);
    for (std::size_t n = 0; n < total; ++n) {
        SampleVariable v{Vec(static_cast<Eigen::Index>(nj)), Vec(static_cast<Eigen::Index>(nj))};
        for (std::size_t c = 0; c < nj; ++c) {
            v.qf[static_cast<Eigen::Index>(c)] = values[c][idx[c]];
            v.omega0[static_cast<Eigen::Index>(c)] = values[nj + c][idx[nj + c]];
        }
        out.push_back(std::move(v));
        for (std::size_t c = dims; c-- > 0;) {
            if (++idx[c] < d) break;
            idx[c] = 0;
        }
    }
    return out;
}

inline Database generate_database_naive(const ProblemConfig& cfg, std::size_t density, int restarts,
                                        std::uint64_t seed, unsigned jobs = 1) {
    require(restarts >= 1, "generate_database_naive: N_RO must be >= 1");
    cfg.validate();
    const auto vars = naive_variables(cfg.model, density, derive_seed(seed, detail::kStreamNaive));
    Database db;
    db.samples = solve_variables(vars, cfg, restarts, derive_seed(seed, detail::kStreamSolve), jobs);
    auto& m = db.metadata;
    m.kind = "naive";
    m.density = density;
    m.restarts = restarts;
    m.seed = seed;
    m.problem = cfg;
    m.stats = {vars.size(), db.samples.size(), 0};
    return db;
}

// ---------------------------------------------------------------------------
// Serialisation

inline Json sample_to_json(const Sample& s) {
    return {{"qf", vec_to_json(s.variable.qf)},
            {"omega0", vec_to_json(s.variable.omega0)},
            {"omega_m", vec_to_json(s.params.omega_m)},
            {"tf", s.params.tf},
            {"objective", s.objective_value},
            {"seed", s.provenance.seed},
            {"restarts", s.provenance.restarts},
            {"tol", s.provenance.tolerance}};
}

inline Sample sample_from_json(const Json& j) {
    Sample s;
    s.variable.qf = vec_from_json(j.value("qf", Json()), "sample qf");
    s.variable.omega0 = vec_from_json(j.value("omega0", Json()), "sample omega0");
    s.params.omega_m = vec_from_json(j.value("omega_m", Json()), "sample omega_m");
    s.params.tf = field<double>(j, "tf", "sample");
    s.objective_value = field<double>(j, "objective", "sample");
    s.provenance.seed = j.value("seed", std::uint64_t{0});
    s.provenance.restarts = j.value("restarts", 0);
    s.provenance.tolerance = j.value("tol", 1e-6);
    if (s.variable.qf.size() != s.variable.omega0.size() || s.variable.qf.size() != s.params.omega_m.size())
        throw SchemaError("sample: qf / omega0 / omega_m lengths differ");
    return s;
}

inline std::string Database::content_hash() const {
    Fnv1a h;
    for (const auto& s : samples) {
        h.update(sample_to_json(s).dump());
        h.update("\n");
    }
    return h.hex();
}

inline Json metadata_to_json(const DatabaseMetadata& m) {
    Json j{{"kind", m.kind},
           {"n1", m.n1},
           {"n2", m.n2},
           {"density", m.density},
           {"restarts", m.restarts},
           {"seed", m.seed},
           {"alphas", m.alphas},
           {"robot", robot_to_json(m.problem.model)},
           {"problem", problem_to_json(m.problem)},
           {"robot_hash", robot_hash(m.problem.model)},
           {"problem_hash", problem_hash(m.problem)},
           {"attempted", m.stats.attempted},
           {"feasible", m.stats.feasible},
           {"rest_skipped", m.stats.rest_skipped},
           {"success_rate", m.stats.success_rate()}};
    if (!m.created.empty()) j["created"] = m.created;
    return j;
}

inline DatabaseMetadata metadata_from_json(const Json& j) {
    DatabaseMetadata m;
    m.kind = j.value("kind", std::string("mapped"));
    m.n1 = j.value("n1", std::size_t{0});
    m.n2 = j.value("n2", std::size_t{0});
    m.density = j.value("density", std::size_t{0});
    m.restarts = j.value("restarts", 0);
    m.seed = j.value("seed", std::uint64_t{0});
    m.alphas = j.value("alphas", std::vector<double>{});
    if (!j.contains("robot")) throw SchemaError("database metadata: 'robot' block required");
    m.problem.model = robot_from_json(j["robot"]);
    if (j.contains("problem")) problem_from_json(j["problem"], m.problem);
    if (j.contains("problem_hash") && j["problem_hash"].get<std::string>() != problem_hash(m.problem))
        throw SchemaError("database metadata: problem hash does not match the embedded robot/problem settings");
    m.stats.attempted = j.value("attempted", std::size_t{0});
    m.stats.feasible = j.value("feasible", std::size_t{0});
    m.stats.rest_skipped = j.value("rest_skipped", std::size_t{0});
    m.created = j.value("created", std::string());
    return m;
}

inline std::string database_to_string(const Database& db) {
    Json header{{"format", kDatabaseFormat},
                {"schema_version", kDatabaseSchemaVersion},
                {"kind", db.metadata.kind},
                {"count", db.samples.size()},
                {"sample_hash", db.content_hash()},
                {"metadata", metadata_to_json(db.metadata)},
                {"manifest", db.metadata.manifest}};
    std::string out = header.dump();
    out += '\n';
    for (const auto& s : db.samples) {
        out += sample_to_json(s).dump();
        out += '\n';
    }
    return out;
}

inline Database database_from_string(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("database: empty file");
    Json header;
    try {
        header = Json::parse(line);
    } catch (const Json::parse_error& e) {
        throw SchemaError(std::string("database: bad header: ") + e.what());
    }
    if (header.value("format", std::string()) != kDatabaseFormat) throw SchemaError("database: not a lotraj database");
    const int version = header.value("schema_version", -1);
    if (version != kDatabaseSchemaVersion)
        throw SchemaError("database: unsupported schema_version " + std::to_string(version));
    Database db;
    db.metadata = metadata_from_json(header.value("metadata", Json::object()));
    db.metadata.manifest = header.value("manifest", Json::object());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            db.samples.push_back(sample_from_json(Json::parse(line)));
        } catch (const Json::parse_error& e) {
            throw SchemaError("database line " + std::to_string(lineno) + ": " + e.what());
        }
        if (db.samples.back().variable.dof() != db.metadata.problem.model.dof())
            throw SchemaError("database line " + std::to_string(lineno) + ": joint count differs from the robot");
    }
    if (db.samples.size() != header.value("count", std::size_t{0}))
        throw SchemaError("database: header count does not match the number of records");
    if (header.value("sample_hash", std::string()) != db.content_hash())
        throw SchemaError("database: sample hash mismatch (file modified or truncated)");
    return db;
}

inline void save_database(const Database& db, const std::filesystem::path& path) {
    write_file_atomic(path, database_to_string(db));
}

inline Database load_database(const std::filesystem::path& path) { return database_from_string(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Demo mappings of the merging step: 6 original coordinates in [−1, 1]
// reduced to 2.

enum class DemoMapping { FM1, FM2, Linear };
enum class DemoMode { Uniform, Random };

struct DemoMappingSpec {
    DemoMapping kind = DemoMapping::FM1;
    Eigen::Matrix<double, 2, 6> matrix = Eigen::Matrix<double, 2, 6>::Zero();  ///< used by FM1 and Linear

    static DemoMappingSpec fm1() {
        DemoMappingSpec s;
        s.kind = DemoMapping::FM1;
        s.matrix << 1, 2, 3, 0, 0, 0, 0, 0, 0, 0.5, 3, 10;
        return s;
    }
    static DemoMappingSpec fm2() {
        DemoMappingSpec s;
        s.kind = DemoMapping::FM2;
        return s;
    }
    static DemoMappingSpec linear(const Eigen::Matrix<double, 2, 6>& m) {
        DemoMappingSpec s;
        s.kind = DemoMapping::Linear;
        s.matrix = m;
        return s;
    }

    [[nodiscard]] Eigen::Vector2d apply(const Eigen::Matrix<double, 6, 1>& x) const {
        if (kind == DemoMapping::FM2) {
            const auto c = x.array().cube();
            return {c[0] + c[1] + c[2], c[3] + c[4] + c[5]};
        }
        return matrix * x;
    }

    /// Image of [−1, 1]^6 per reduced axis, as (lo, hi).
    [[nodiscard]] std::array<std::pair<double, double>, 2> range() const {
        std::array<std::pair<double, double>, 2> r;
        for (int k = 0; k < 2; ++k) {
            const double h = kind == DemoMapping::FM2 ? 3.0 : matrix.row(k).cwiseAbs().sum();
            r[static_cast<std::size_t>(k)] = {-h, h};
        }
        return r;
    }
};

struct PointSetStats {
    std::array<double, 2> coverage{};       ///< occupied bins / d per axis
    std::size_t distinct = 0;               ///< distinct points
    std::array<double, 3> nn_quantiles{};   ///< 10/50/90% nearest-neighbour distance (range-normalised)
};

struct DemoResult {
    std::vector<Eigen::Vector2d> direct;  ///< set A: selected in the reduced space
    std::vector<Eigen::Vector2d> pushed;  ///< set B: selected in the original space, mapped
    PointSetStats direct_stats;
    PointSetStats pushed_stats;
};

namespace detail {

inline std::vector<double> pick_values(double lo, double hi, std::size_t d, DemoMode mode, Rng& rng) {
    std::vector<double> v(d);
    for (std::size_t k = 0; k < d; ++k) {
        if (mode == DemoMode::Random) {
            v[k] = rng.uniform(lo, hi);
        } else {
            v[k] = d == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(d - 1);
        }
    }
    return v;
}

inline PointSetStats point_stats(const std::vector<Eigen::Vector2d>& pts,
                                 const std::array<std::pair<double, double>, 2>& range, std::size_t bins) {
    PointSetStats st;
    for (int axis = 0; axis < 2; ++axis) {
        const auto [lo, hi] = range[static_cast<std::size_t>(axis)];
        std::set<std::size_t> occupied;
        for (const auto& p : pts) {
            const double u = (p[axis] - lo) / (hi - lo);
            const auto b = static_cast<std::size_t>(std::clamp(std::floor(u * static_cast<double>(bins)), 0.0,
                                                                static_cast<double>(bins - 1)));
            occupied.insert(b);
        }
        st.coverage[static_cast<std::size_t>(axis)] = static_cast<double>(occupied.size()) / static_cast<double>(bins);
    }
    std::set<std::pair<double, double>> uniq;
    for (const auto& p : pts) uniq.insert({p.x(), p.y()});
    st.distinct = uniq.size();
    std::vector<double> nn;
    const Eigen::Vector2d scale(range[0].second - range[0].first, range[1].second - range[1].first);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double best = kInf;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (i == j) continue;
            best = std::min(best, (pts[i] - pts[j]).cwiseQuotient(scale).norm());
        }
        if (std::isfinite(best)) nn.push_back(best);
    }
    if (!nn.empty()) st.nn_quantiles = {quantile(nn, 0.1), quantile(nn, 0.5), quantile(nn, 0.9)};
    return st;
}

}  // namespace detail

/// Set A has d^2 points (d values per reduced axis within the image range),
/// set B has d'^6 points (d' values per original coordinate in [−1, 1] pushed
/// through the mapping). Coverage uses d bins per axis for both sets.
inline DemoResult demo_merging_distributions(const DemoMappingSpec& mapping, DemoMode mode, std::size_t d,
                                             std::size_t d_prime, std::uint64_t seed) {
    require(d >= 1 && d_prime >= 1, "demo_merging_distributions: densities must be >= 1");
    require(std::pow(static_cast<double>(d_prime), 6.0) <= 5e6, "demo_merging_distributions: d'^6 too large");
    Rng rng(seed);
    const auto range = mapping.range();
    DemoResult out;
    const auto ax = detail::pick_values(range[0].first, range[0].second, d, mode, rng);
    const auto ay = detail::pick_values(range[1].first, range[1].second, d, mode, rng);
    for (double x : ax)
        for (double y : ay) out.direct.emplace_back(x, y);

    std::array<std::vector<double>, 6> orig;
    for (auto& o : orig) o = detail::pick_values(-1.0, 1.0, d_prime, mode, rng);
    std::array<std::size_t, 6> idx{};
    const auto total = static_cast<std::size_t>(std::pow(static_cast<double>(d_prime), 6.0));
    for (std::size_t n = 0; n < total; ++n) {
        Eigen::Matrix<double, 6, 1> x;
        for (int c = 0; c < 6; ++c) x[c] = orig[static_cast<std::size_t>(c)][idx[static_cast<std::size_t>(c)]];
        out.pushed.push_back(mapping.apply(x));
        for (std::size_t c = 6; c-- > 0;) {
            if (++idx[c] < d_prime) break;
            idx[c] = 0;
        }
    }
    out.direct_stats = detail::point_stats(out.direct, range, d);
    out.pushed_stats = detail::point_stats(out.pushed, range, d);
    return out;
}

}  // namespace lotraj
