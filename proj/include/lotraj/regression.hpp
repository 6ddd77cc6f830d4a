#pragma once

// Multi-output regression from sample variables (qf, ω0) to trajectory
// parameters (ωm_1..ωm_N, tf). One single-output regressor per channel.
//
// Methods: k-NN (inverse-distance weights), ε-SVR with linear or Gaussian
// kernel (SMO with second-order working-set selection), and exact Gaussian
// process regression.

#include "lotraj/config_io.hpp"
#include "lotraj/database.hpp"

#include <Eigen/Cholesky>

#include <numbers>
#include <optional>

namespace lotraj {

enum class FeatureVariant { Feature1, Feature2 };

inline std::string to_string(FeatureVariant v) { return v == FeatureVariant::Feature1 ? "feature1" : "feature2"; }

inline FeatureVariant feature_variant_from_string(std::string_view s) {
    if (s == "feature1") return FeatureVariant::Feature1;
    if (s == "feature2") return FeatureVariant::Feature2;
    throw InputError("unknown feature variant '" + std::string(s) + "' (expected feature1 or feature2)");
}

/// Feature layout plus the normalisation constants. Offsets are divided by
/// the joint range span, velocities by the velocity limit, tf by t_max.
///   Feature1: every channel sees (qf/span, ω0/vmax)                 2·N_J features
///   Feature2: tf sees the same vector; ωm_i sees
///             (qf_i/span_i, ω0_i/vmax_i, tf/t_max)                 3 features
struct FeatureSpec {
    FeatureVariant variant = FeatureVariant::Feature2;
    Vec qf_scale;
    Vec omega_scale;
    double tf_scale = 1.0;

    [[nodiscard]] Eigen::Index dof() const noexcept { return qf_scale.size(); }
    [[nodiscard]] Eigen::Index channels() const noexcept { return dof() + 1; }
    [[nodiscard]] Eigen::Index tf_channel() const noexcept { return dof(); }

    [[nodiscard]] Eigen::Index feature_count(Eigen::Index channel) const {
        if (variant == FeatureVariant::Feature2 && channel != tf_channel()) return 3;
        return 2 * dof();
    }

    /// Features of `channel` for variable v; `tf` is only read by Feature2
    /// ωm channels.
    [[nodiscard]] Vec features(Eigen::Index channel, const SampleVariable& v, double tf) const {
        if (variant == FeatureVariant::Feature2 && channel != tf_channel()) {
            Vec f(3);
            f << v.qf[channel] / qf_scale[channel], v.omega0[channel] / omega_scale[channel], tf / tf_scale;
            return f;
        }
        Vec f(2 * dof());
        f.head(dof()) = v.qf.cwiseQuotient(qf_scale);
        f.tail(dof()) = v.omega0.cwiseQuotient(omega_scale);
        return f;
    }

    void validate() const {
        require(dof() > 0, "FeatureSpec: no joints");
        require(omega_scale.size() == dof(), "FeatureSpec: scale vectors differ in size");
        require((qf_scale.array() > 0.0).all() && (omega_scale.array() > 0.0).all() && tf_scale > 0.0,
                "FeatureSpec: scales must be > 0");
    }
};

inline FeatureSpec make_feature_spec(FeatureVariant variant, const ProblemConfig& cfg) {
    const auto& m = cfg.model;
    FeatureSpec spec;
    spec.variant = variant;
    spec.qf_scale.resize(m.dof());
    for (Eigen::Index i = 0; i < m.dof(); ++i) spec.qf_scale[i] = m.joint_limits[i].upper - m.joint_limits[i].lower;
    spec.omega_scale = m.vel_limits;
    spec.tf_scale = cfg.t_max;
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Configuration

enum class RegressionMethod { Knn, LinearSvr, GaussianSvr, Gpr };

inline std::string to_string(RegressionMethod m) {
    switch (m) {
        case RegressionMethod::Knn: return "knn";
        case RegressionMethod::LinearSvr: return "linear-svr";
        case RegressionMethod::GaussianSvr: return "gaussian-svr";
        case RegressionMethod::Gpr: return "gpr";
    }
    return "?";
}

inline RegressionMethod regression_method_from_string(std::string_view s) {
    if (s == "knn") return RegressionMethod::Knn;
    if (s == "linear-svr") return RegressionMethod::LinearSvr;
    if (s == "gaussian-svr") return RegressionMethod::GaussianSvr;
    if (s == "gpr") return RegressionMethod::Gpr;
    throw InputError("unknown regression method '" + std::string(s) +
                     "' (expected knn, linear-svr, gaussian-svr or gpr)");
}

struct RegressorConfig {
    RegressionMethod method = RegressionMethod::Gpr;
    int k = 1;                 ///< k-NN
    double c_reg = 10.0;       ///< SVR box constraint
    double epsilon = 0.01;     ///< SVR tube half-width, target units
    double gamma = 2.0;        ///< Gaussian SVR: exp(−γ‖Δ‖²)
    double svr_tolerance = 1e-4;
    /// GPR: empty means 1 for every feature, one entry is broadcast.
    std::vector<double> length_scales;
    /// GPR: when non-empty, every channel takes the isotropic length scale
    /// from this grid with the largest log marginal likelihood, and
    /// length_scales is ignored.
    std::vector<double> length_scale_grid;
    double signal_variance = 1.0;
    double noise_variance = 1e-4;

    static RegressorConfig knn(int k = 1) {
        RegressorConfig c;
        c.method = RegressionMethod::Knn;
        c.k = k;
        return c;
    }
    static RegressorConfig linear_svr(double c_reg = 1.0, double epsilon = 0.01) {
        RegressorConfig c;
        c.method = RegressionMethod::LinearSvr;
        c.c_reg = c_reg;
        c.epsilon = epsilon;
        return c;
    }
    static RegressorConfig gaussian_svr(double c_reg = 100.0, double epsilon = 0.01, double gamma = 5.0) {
        RegressorConfig c;
        c.method = RegressionMethod::GaussianSvr;
        c.c_reg = c_reg;
        c.epsilon = epsilon;
        c.gamma = gamma;
        return c;
    }
    static RegressorConfig gpr(double length_scale = 1.0, double signal_variance = 1.0, double noise_variance = 1e-4) {
        RegressorConfig c;
        c.method = RegressionMethod::Gpr;
        c.length_scales = {length_scale};
        c.signal_variance = signal_variance;
        c.noise_variance = noise_variance;
        return c;
    }
    /// GPR with the length scale chosen per channel from a small grid.
    static RegressorConfig gpr_tuned(double signal_variance = 1.0, double noise_variance = 1e-4) {
        auto c = gpr(1.0, signal_variance, noise_variance);
        c.length_scale_grid = {0.1, 0.2, 0.3, 0.5, 1.0, 2.0};
        return c;
    }
    /// Defaults for a method name as accepted by regression_method_from_string.
    static RegressorConfig defaults(RegressionMethod m) {
        switch (m) {
            case RegressionMethod::Knn: return knn();
            case RegressionMethod::LinearSvr: return linear_svr();
            case RegressionMethod::GaussianSvr: return gaussian_svr();
            case RegressionMethod::Gpr: return gpr();
        }
        return gpr();
    }

    [[nodiscard]] bool is_svr() const noexcept {
        return method == RegressionMethod::LinearSvr || method == RegressionMethod::GaussianSvr;
    }

    [[nodiscard]] Vec length_scale_vector(Eigen::Index n) const {
        if (length_scales.empty()) return Vec::Ones(n);
        if (length_scales.size() == 1) return Vec::Constant(n, length_scales.front());
        require(static_cast<Eigen::Index>(length_scales.size()) == n,
                "RegressorConfig: " + std::to_string(length_scales.size()) + " length scales for " +
                    std::to_string(n) + " features");
        return to_vec(length_scales);
    }

    void validate() const {
        switch (method) {
            case RegressionMethod::Knn: require(k >= 1, "RegressorConfig: k must be >= 1"); break;
            case RegressionMethod::GaussianSvr: require(gamma > 0.0, "RegressorConfig: gamma must be > 0"); [[fallthrough]];
            case RegressionMethod::LinearSvr:
                require(c_reg > 0.0, "RegressorConfig: C must be > 0");
                require(epsilon >= 0.0, "RegressorConfig: epsilon must be >= 0");
                require(svr_tolerance > 0.0, "RegressorConfig: SVR tolerance must be > 0");
                break;
            case RegressionMethod::Gpr:
                require(signal_variance > 0.0 && noise_variance > 0.0, "RegressorConfig: GPR variances must be > 0");
                for (double l : length_scales) require(l > 0.0, "RegressorConfig: length scales must be > 0");
                for (double l : length_scale_grid) require(l > 0.0, "RegressorConfig: length scales must be > 0");
                break;
        }
    }
};

/// Pairwise kernel. The GPR noise term is not part of it; it is added to the
/// diagonal of the training Gram matrix only.
inline double kernel_eval(const RegressorConfig& cfg, const Vec& x1, const Vec& x2) {
    require_same_size(x1, x2, "kernel_eval");
    switch (cfg.method) {
        case RegressionMethod::LinearSvr: return x1.dot(x2);
        case RegressionMethod::GaussianSvr: return std::exp(-cfg.gamma * (x1 - x2).squaredNorm());
        case RegressionMethod::Gpr: {
            const Vec l = cfg.length_scale_vector(x1.size());
            return cfg.signal_variance * std::exp(-0.5 * (x1 - x2).cwiseQuotient(l).squaredNorm());
        }
        case RegressionMethod::Knn: break;
    }
    throw InputError("kernel_eval: k-NN has no kernel");
}

// ---------------------------------------------------------------------------
// Single-output regressors

/// One fitted channel. Rows of `support` are feature vectors.
///   k-NN: support = all training features, coef = targets
///   SVR:  support = support vectors, coef = β_i − β*_i, bias = −ρ;
///         linear kernel also keeps the primal weights
///   GPR:  support = all training features, coef = (K + σn²I)⁻¹(y − ȳ), bias = ȳ,
///         plus the per-feature length scales in use
struct ChannelModel {
    bool constant = false;
    double value = 0.0;  ///< constant predictor output
    Mat support;
    Vec coef;
    double bias = 0.0;
    Vec weights;  ///< linear SVR only
    Vec length_scales;  ///< GPR only
    int iterations = 0;
};

namespace detail {

inline bool all_rows_identical(const Mat& X) {
    for (Eigen::Index r = 1; r < X.rows(); ++r)
        if (X.row(r) != X.row(0)) return false;
    return true;
}

inline double gpr_kernel(double signal_variance, const Vec& length_scales, const Vec& x1, const Vec& x2) {
    return signal_variance * std::exp(-0.5 * (x1 - x2).cwiseQuotient(length_scales).squaredNorm());
}

inline Mat gram(const RegressorConfig& cfg, const Mat& X) {
    const auto n = X.rows();
    Mat K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            K(i, j) = kernel_eval(cfg, X.row(i).transpose(), X.row(j).transpose());
            K(j, i) = K(i, j);
        }
    }
    return K;
}

/// ε-SVR dual in the 2n-variable form
///   min ½ βᵀQβ + pᵀβ,  yᵀβ = 0,  0 ≤ β ≤ C,
/// with y = (+1…, −1…), p = (ε − z, ε + z), Q_st = y_s y_t K(s mod n, t mod n).
/// SMO with the second-order working-set rule of Fan, Chen and Lin (2005).
inline ChannelModel fit_svr(const RegressorConfig& cfg, const Mat& X, const Vec& z) {
    const auto n = X.rows();
    const auto l = 2 * n;
    const double C = cfg.c_reg;
    constexpr double kTau = 1e-12;
    const Mat K = gram(cfg, X);

    auto kidx = [n](Eigen::Index t) { return t < n ? t : t - n; };
    auto ysign = [n](Eigen::Index t) { return t < n ? 1.0 : -1.0; };
    auto Q = [&](Eigen::Index s, Eigen::Index t) { return ysign(s) * ysign(t) * K(kidx(s), kidx(t)); };

    Vec beta = Vec::Zero(l);
    Vec G(l);
    for (Eigen::Index t = 0; t < n; ++t) {
        G[t] = cfg.epsilon - z[t];
        G[t + n] = cfg.epsilon + z[t];
    }
    const long max_iter = std::max<long>(10'000'000L, 100L * static_cast<long>(l));
    long iter = 0;
    for (; iter < max_iter; ++iter) {
        // i maximises −y_t ∇_t over I_up.
        double gmax = -kInf;
        Eigen::Index i = -1;
        for (Eigen::Index t = 0; t < l; ++t) {
            if (ysign(t) > 0) {
                if (beta[t] < C && -G[t] >= gmax) { gmax = -G[t]; i = t; }
            } else if (beta[t] > 0 && G[t] >= gmax) {
                gmax = G[t];
                i = t;
            }
        }
        if (i < 0) break;
        double gmax2 = -kInf;
        double best = kInf;
        Eigen::Index j = -1;
        const double qii = K(kidx(i), kidx(i));
        for (Eigen::Index t = 0; t < l; ++t) {
            const double kit = K(kidx(i), kidx(t));
            const double qtt = K(kidx(t), kidx(t));
            if (ysign(t) > 0) {
                if (beta[t] > 0) {
                    const double diff = gmax + G[t];
                    gmax2 = std::max(gmax2, G[t]);
                    if (diff > 0) {
                        double quad = qii + qtt - 2.0 * kit;
                        if (quad <= 0) quad = kTau;
                        if (-(diff * diff) / quad <= best) { best = -(diff * diff) / quad; j = t; }
                    }
                }
            } else if (beta[t] < C) {
                const double diff = gmax - G[t];
                gmax2 = std::max(gmax2, -G[t]);
                if (diff > 0) {
                    double quad = qii + qtt - 2.0 * kit;
                    if (quad <= 0) quad = kTau;
                    if (-(diff * diff) / quad <= best) { best = -(diff * diff) / quad; j = t; }
                }
            }
        }
        if (gmax + gmax2 < cfg.svr_tolerance || j < 0) break;

        const double qij = Q(i, j);
        const double qjj = K(kidx(j), kidx(j));
        const double old_i = beta[i], old_j = beta[j];
        if (ysign(i) != ysign(j)) {
            double quad = qii + qjj + 2.0 * qij;
            if (quad <= 0) quad = kTau;
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if (diff > 0) {
                if (beta[j] < 0) { beta[j] = 0; beta[i] = diff; }
            } else if (beta[i] < 0) {
                beta[i] = 0;
                beta[j] = -diff;
            }
            if (diff > 0) {
                if (beta[i] > C) { beta[i] = C; beta[j] = C - diff; }
            } else if (beta[j] > C) {
                beta[j] = C;
                beta[i] = C + diff;
            }
        } else {
            double quad = qii + qjj - 2.0 * qij;
            if (quad <= 0) quad = kTau;
            const double delta = (G[i] - G[j]) / quad;
            const double sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if (sum > C) {
                if (beta[i] > C) { beta[i] = C; beta[j] = sum - C; }
            } else if (beta[j] < 0) {
                beta[j] = 0;
                beta[i] = sum;
            }
            if (sum > C) {
                if (beta[j] > C) { beta[j] = C; beta[i] = sum - C; }
            } else if (beta[i] < 0) {
                beta[i] = 0;
                beta[j] = sum;
            }
        }
        const double di = beta[i] - old_i, dj = beta[j] - old_j;
        for (Eigen::Index t = 0; t < l; ++t) G[t] += Q(t, i) * di + Q(t, j) * dj;
    }

    // ρ from the free variables, or the midpoint of the feasible interval.
    double ub = kInf, lb = -kInf, sum_free = 0.0;
    int n_free = 0;
    for (Eigen::Index t = 0; t < l; ++t) {
        const double yg = ysign(t) * G[t];
        if (beta[t] >= C) {
            if (ysign(t) < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (beta[t] <= 0) {
            if (ysign(t) > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);

    ChannelModel out;
    out.bias = -rho;
    out.iterations = static_cast<int>(iter);
    std::vector<Eigen::Index> sv;
    for (Eigen::Index t = 0; t < n; ++t)
        if (beta[t] - beta[t + n] != 0.0) sv.push_back(t);
    out.support.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
    out.coef.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t r = 0; r < sv.size(); ++r) {
        out.support.row(static_cast<Eigen::Index>(r)) = X.row(sv[r]);
        out.coef[static_cast<Eigen::Index>(r)] = beta[sv[r]] - beta[sv[r] + n];
    }
    if (cfg.method == RegressionMethod::LinearSvr) out.weights = out.support.transpose() * out.coef;
    return out;
}

inline constexpr int kJitterEscalations = 3;

struct GprFactor {
    Eigen::LLT<Mat> llt;
    Vec alpha;
    double log_marginal_likelihood = -kInf;
};

/// Cholesky factor of K + σn²I with the jitter fallback: on failure add
/// 1e-8·mean(diag), then escalate ×10 up to kJitterEscalations times.
inline std::optional<GprFactor> factor_gpr(const RegressorConfig& cfg, const Vec& length_scales, const Mat& X,
                                           const Vec& y) {
    const auto n = X.rows();
    Mat K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            K(i, j) = gpr_kernel(cfg.signal_variance, length_scales, X.row(i).transpose(), X.row(j).transpose());
            K(j, i) = K(i, j);
        }
    }
    K.diagonal().array() += cfg.noise_variance;
    GprFactor f;
    f.llt.compute(K);
    double jitter = 1e-8 * K.diagonal().mean();
    for (int e = 0; f.llt.info() != Eigen::Success; ++e) {
        if (e > kJitterEscalations) return std::nullopt;
        Mat Kj = K;
        Kj.diagonal().array() += jitter;
        f.llt.compute(Kj);
        jitter *= 10.0;
    }
    f.alpha = f.llt.solve(y);
    const Mat L = f.llt.matrixL();
    f.log_marginal_likelihood = -0.5 * y.dot(f.alpha) - L.diagonal().array().log().sum() -
                                0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    return f;
}

inline ChannelModel fit_gpr(const RegressorConfig& cfg, const Mat& X, const Vec& z) {
    const auto d = X.cols();
    std::vector<Vec> candidates;
    if (cfg.length_scale_grid.empty()) {
        candidates.push_back(cfg.length_scale_vector(d));
    } else {
        for (double l : cfg.length_scale_grid) candidates.push_back(Vec::Constant(d, l));
    }
    ChannelModel out;
    out.bias = z.mean();
    const Vec y = z - Vec::Constant(z.size(), out.bias);
    std::optional<GprFactor> best;
    for (const auto& l : candidates) {
        auto f = factor_gpr(cfg, l, X, y);
        if (f && (!best || f->log_marginal_likelihood > best->log_marginal_likelihood)) {
            best = std::move(f);
            out.length_scales = l;
        }
    }
    if (!best) throw FitError("GPR: kernel matrix is not positive definite even with jitter");
    out.support = X;
    out.coef = best->alpha;
    return out;
}

}  // namespace detail

/// Fits one channel from feature rows X and targets z.
inline ChannelModel fit_channel(const RegressorConfig& cfg, const Mat& X, const Vec& z) {
    cfg.validate();
    require(X.rows() == z.size() && X.rows() > 0, "fit_channel: need one target per feature row");
    if (cfg.method == RegressionMethod::Knn) {
        require(cfg.k <= X.rows(), "fit_channel: k = " + std::to_string(cfg.k) + " exceeds the " +
                                       std::to_string(X.rows()) + " training samples");
        ChannelModel m;
        m.support = X;
        m.coef = z;
        return m;
    }
    if (X.rows() == 1) {
        ChannelModel m;
        m.constant = true;
        m.value = z[0];
        return m;
    }
    if (detail::all_rows_identical(X)) throw FitError("fit: all training feature vectors are identical");
    return cfg.method == RegressionMethod::Gpr ? detail::fit_gpr(cfg, X, z) : detail::fit_svr(cfg, X, z);
}

/// Inverse-distance weighted mean of the k nearest rows; if some of them sit
/// at distance zero, the plain mean of those.
inline double knn_predict(const Mat& X, const Vec& z, int k, const Vec& f) {
    const auto n = X.rows();
    std::vector<std::pair<double, Eigen::Index>> d(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) d[static_cast<std::size_t>(r)] = {(X.row(r).transpose() - f).norm(), r};
    const auto kk = static_cast<std::size_t>(std::min<Eigen::Index>(k, n));
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
    double zero_sum = 0.0, wsum = 0.0, acc = 0.0;
    int zeros = 0;
    for (std::size_t r = 0; r < kk; ++r) {
        const auto [dist, idx] = d[r];
        if (dist == 0.0) {
            zero_sum += z[idx];
            ++zeros;
        } else {
            acc += z[idx] / dist;
            wsum += 1.0 / dist;
        }
    }
    return zeros > 0 ? zero_sum / zeros : acc / wsum;
}

inline double predict_channel(const RegressorConfig& cfg, const ChannelModel& m, const Vec& f) {
    if (m.constant) return m.value;
    switch (cfg.method) {
        case RegressionMethod::Knn: return knn_predict(m.support, m.coef, cfg.k, f);
        case RegressionMethod::LinearSvr: return m.weights.dot(f) + m.bias;
        case RegressionMethod::GaussianSvr: {
            double acc = m.bias;
            for (Eigen::Index r = 0; r < m.support.rows(); ++r)
                acc += m.coef[r] * std::exp(-cfg.gamma * (m.support.row(r).transpose() - f).squaredNorm());
            return acc;
        }
        case RegressionMethod::Gpr: {
            double acc = m.bias;
            for (Eigen::Index r = 0; r < m.support.rows(); ++r)
                acc += m.coef[r] * detail::gpr_kernel(cfg.signal_variance, m.length_scales, m.support.row(r).transpose(), f);
            return acc;
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Multi-output model

/// Channel order: ωm_1..ωm_N, tf.
struct MultiOutputModel {
    RegressorConfig config;
    FeatureSpec features;
    std::vector<ChannelModel> channels;
    std::string db_hash;
    std::size_t training_size = 0;
    double fit_time = 0.0;

    [[nodiscard]] Eigen::Index dof() const noexcept { return features.dof(); }
};

/// Feature matrix and targets of one channel. Feature2 ωm channels use the
/// stored (true) tf.
inline std::pair<Mat, Vec> channel_training_data(const Database& db, const FeatureSpec& spec, Eigen::Index channel) {
    const auto n = static_cast<Eigen::Index>(db.size());
    Mat X(n, spec.feature_count(channel));
    Vec z(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& s = db.samples[static_cast<std::size_t>(r)];
        X.row(r) = spec.features(channel, s.variable, s.params.tf).transpose();
        z[r] = channel == spec.tf_channel() ? s.params.tf : s.params.omega_m[channel];
    }
    return {X, z};
}

/// Fits every channel independently. Channels may be fitted on `jobs`
/// threads; results do not depend on the thread count.
inline MultiOutputModel fit(const Database& db, const FeatureSpec& spec, const RegressorConfig& cfg,
                            unsigned jobs = 1) {
    require(!db.empty(), "fit: empty database");
    spec.validate();
    cfg.validate();
    require(db.dof() == spec.dof(), "fit: database has " + std::to_string(db.dof()) + " joints, feature spec " +
                                        std::to_string(spec.dof()));
    if (cfg.method == RegressionMethod::Knn) {
        require(static_cast<std::size_t>(cfg.k) <= db.size(),
                "fit: k = " + std::to_string(cfg.k) + " exceeds the database size " + std::to_string(db.size()));
    }
    Stopwatch clock;
    MultiOutputModel model;
    model.config = cfg;
    model.features = spec;
    model.db_hash = db.content_hash();
    model.training_size = db.size();
    model.channels.resize(static_cast<std::size_t>(spec.channels()));
    parallel_for(model.channels.size(), jobs, [&](std::size_t c) {
        auto [X, z] = channel_training_data(db, spec, static_cast<Eigen::Index>(c));
        model.channels[c] = fit_channel(cfg, X, z);
    });
    model.fit_time = clock.seconds();
    return model;
}

/// C' for a sample variable. Feature2 predicts tf first and feeds it to the
/// ωm channels.
inline TrajectoryParams predict(const MultiOutputModel& model, const SampleVariable& v) {
    require(v.dof() == model.dof() && v.omega0.size() == model.dof(), "predict: joint count mismatch");
    const auto& spec = model.features;
    TrajectoryParams c;
    c.omega_m.resize(model.dof());
    const auto tc = spec.tf_channel();
    c.tf = predict_channel(model.config, model.channels[static_cast<std::size_t>(tc)], spec.features(tc, v, 0.0));
    for (Eigen::Index i = 0; i < model.dof(); ++i)
        c.omega_m[i] = predict_channel(model.config, model.channels[static_cast<std::size_t>(i)], spec.features(i, v, c.tf));
    return c;
}

inline TrajectoryParams predict(const MultiOutputModel& model, const PlanningInput& x) {
    x.validate();
    return predict(model, SampleVariable{merge_offsets(x.q0, x.qc), x.omega0});
}

struct TimedPrediction {
    TrajectoryParams params;
    double seconds = 0.0;
};

inline TimedPrediction predict_timed(const MultiOutputModel& model, const PlanningInput& x) {
    Stopwatch clock;
    auto c = predict(model, x);
    return {std::move(c), clock.seconds()};
}

// ---------------------------------------------------------------------------
// Serialisation
//
//   {"format": "lotraj-model", "schema_version": 1,
//    "method": "gpr", "hyperparameters": {...},
//    "feature": {"variant": "feature2", "qf_scale": [...], "omega_scale": [...], "tf_scale": ..},
//    "db_hash": "...", "training_size": N, "fit_time": seconds,
//    "channels": [{"constant": false, "value": .., "support": [[...], ...],
//                  "coef": [...], "bias": .., "weights": [...]}, ...]}
//
// k-NN models carry no "channels": they are rebuilt from the database named
// by db_hash when loaded.

inline constexpr const char* kModelFormat = "lotraj-model";
inline constexpr int kModelSchemaVersion = 1;

inline Json regressor_config_to_json(const RegressorConfig& c) {
    Json j{{"method", to_string(c.method)}};
    switch (c.method) {
        case RegressionMethod::Knn: j["k"] = c.k; break;
        case RegressionMethod::GaussianSvr: j["gamma"] = c.gamma; [[fallthrough]];
        case RegressionMethod::LinearSvr:
            j["C"] = c.c_reg;
            j["epsilon"] = c.epsilon;
            j["tolerance"] = c.svr_tolerance;
            break;
        case RegressionMethod::Gpr:
            j["length_scales"] = c.length_scales;
            j["length_scale_grid"] = c.length_scale_grid;
            j["signal_variance"] = c.signal_variance;
            j["noise_variance"] = c.noise_variance;
            break;
    }
    return j;
}

inline RegressorConfig regressor_config_from_json(const Json& j) {
    auto c = RegressorConfig::defaults(regression_method_from_string(field<std::string>(j, "method", "regressor")));
    c.k = j.value("k", c.k);
    c.c_reg = j.value("C", c.c_reg);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.svr_tolerance = j.value("tolerance", c.svr_tolerance);
    c.gamma = j.value("gamma", c.gamma);
    c.length_scales = j.value("length_scales", c.length_scales);
    c.length_scale_grid = j.value("length_scale_grid", c.length_scale_grid);
    c.signal_variance = j.value("signal_variance", c.signal_variance);
    c.noise_variance = j.value("noise_variance", c.noise_variance);
    try {
        c.validate();
    } catch (const InputError& e) {
        throw SchemaError(e.what());
    }
    return c;
}

namespace detail {

inline Json mat_to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_std(m.row(r).transpose()));
    return rows;
}

inline Mat mat_from_json(const Json& j, Eigen::Index cols, std::string_view what) {
    if (!j.is_array()) throw SchemaError(std::string(what) + ": expected an array of rows");
    Mat m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Vec row = vec_from_json(j[r], what);
        if (row.size() != cols) throw SchemaError(std::string(what) + ": row has the wrong length");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

}  // namespace detail

inline Json model_to_json(const MultiOutputModel& m) {
    Json j{{"format", kModelFormat},
           {"schema_version", kModelSchemaVersion},
           {"method", to_string(m.config.method)},
           {"hyperparameters", regressor_config_to_json(m.config)},
           {"feature",
            {{"variant", to_string(m.features.variant)},
             {"qf_scale", vec_to_json(m.features.qf_scale)},
             {"omega_scale", vec_to_json(m.features.omega_scale)},
             {"tf_scale", m.features.tf_scale}}},
           {"db_hash", m.db_hash},
           {"training_size", m.training_size},
           {"fit_time", m.fit_time}};
    if (m.config.method != RegressionMethod::Knn) {
        Json channels = Json::array();
        for (const auto& c : m.channels) {
            Json cj{{"constant", c.constant}, {"value", c.value}, {"bias", c.bias}, {"iterations", c.iterations}};
            cj["support"] = detail::mat_to_json(c.support);
            cj["coef"] = vec_to_json(c.coef);
            if (c.weights.size() > 0) cj["weights"] = vec_to_json(c.weights);
            if (c.length_scales.size() > 0) cj["length_scales"] = vec_to_json(c.length_scales);
            channels.push_back(std::move(cj));
        }
        j["channels"] = std::move(channels);
    }
    return j;
}

/// `db` is required for k-NN models and optional otherwise; when given, its
/// content hash must match the one recorded at fit time.
inline MultiOutputModel model_from_json(const Json& j, const Database* db = nullptr) {
    if (j.value("format", std::string()) != kModelFormat) throw SchemaError("model: not a lotraj model file");
    if (j.value("schema_version", 0) != kModelSchemaVersion)
        throw SchemaError("model: unsupported schema_version " + j.value("schema_version", Json()).dump());
    MultiOutputModel m;
    m.config = regressor_config_from_json(j.value("hyperparameters", Json::object()));
    const auto& f = j.value("feature", Json::object());
    m.features.variant = feature_variant_from_string(field<std::string>(f, "variant", "model feature"));
    m.features.qf_scale = vec_from_json(f.value("qf_scale", Json()), "model feature qf_scale");
    m.features.omega_scale = vec_from_json(f.value("omega_scale", Json()), "model feature omega_scale");
    m.features.tf_scale = field<double>(f, "tf_scale", "model feature");
    try {
        m.features.validate();
    } catch (const InputError& e) {
        throw SchemaError(e.what());
    }
    m.db_hash = field<std::string>(j, "db_hash", "model");
    m.training_size = field<std::size_t>(j, "training_size", "model");
    m.fit_time = field<double>(j, "fit_time", "model");
    if (db != nullptr && db->content_hash() != m.db_hash) {
        throw SchemaError("model: database hash " + db->content_hash() + " does not match the model's " + m.db_hash);
    }
    if (m.config.method == RegressionMethod::Knn) {
        if (db == nullptr) throw SchemaError("model: k-NN models need their database to load");
        const double fit_time = m.fit_time;
        m = fit(*db, m.features, m.config);
        m.fit_time = fit_time;
        return m;
    }
    const auto& ch = j.value("channels", Json());
    if (!ch.is_array() || static_cast<Eigen::Index>(ch.size()) != m.features.channels())
        throw SchemaError("model: expected " + std::to_string(m.features.channels()) + " channels");
    for (std::size_t c = 0; c < ch.size(); ++c) {
        const auto& cj = ch[c];
        ChannelModel cm;
        cm.constant = field<bool>(cj, "constant", "model channel");
        cm.value = field<double>(cj, "value", "model channel");
        cm.bias = field<double>(cj, "bias", "model channel");
        cm.iterations = cj.value("iterations", 0);
        const auto cols = m.features.feature_count(static_cast<Eigen::Index>(c));
        cm.support = detail::mat_from_json(cj.value("support", Json::array()), cols, "model channel support");
        cm.coef = vec_from_json(cj.value("coef", Json::array()), "model channel coef");
        if (cm.coef.size() != cm.support.rows()) throw SchemaError("model channel: coef and support differ in length");
        if (cj.contains("weights")) cm.weights = vec_from_json(cj["weights"], "model channel weights");
        if (cj.contains("length_scales"))
            cm.length_scales = vec_from_json(cj["length_scales"], "model channel length_scales");
        if (!cm.constant && m.config.method == RegressionMethod::Gpr && cm.length_scales.size() != cols)
            throw SchemaError("model channel: GPR length scales missing or of the wrong length");
        if (!cm.constant && m.config.method == RegressionMethod::LinearSvr && cm.weights.size() != cols)
            throw SchemaError("model channel: linear SVR weights missing or of the wrong length");
        m.channels.push_back(std::move(cm));
    }
    return m;
}

inline void save_model(const MultiOutputModel& m, const std::filesystem::path& path) {
    write_file_atomic(path, model_to_json(m).dump() + "\n");
}

inline MultiOutputModel load_model(const std::filesystem::path& path, const Database* db = nullptr) {
    return model_from_json(read_json_file(path), db);
}

}  // namespace lotraj
