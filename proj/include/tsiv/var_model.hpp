#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <optional>
#include <utility>
#include <vector>

#include "tsiv/block_layout.hpp"
#include "tsiv/errors.hpp"
#include "tsiv/rng.hpp"

namespace tsiv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// VAR(p) process S_t = A_1 S_{t-1} + ... + A_p S_{t-p} + eps_t with
/// eps_t ~ N(0, diag(gamma)). Immutable after construction.
struct VarParameters {
    std::vector<MatrixXd> A;  // A[0] = A_1, ..., A[p-1] = A_p
    VectorXd gamma;           // diagonal of the noise covariance, strictly positive
    std::optional<BlockLayout> layout;

    VarParameters(std::vector<MatrixXd> coeffs, VectorXd noise_diag,
                  std::optional<BlockLayout> blocks = std::nullopt)
        : A(std::move(coeffs)), gamma(std::move(noise_diag)), layout(std::move(blocks)) {
        if (A.empty()) throw DimensionError("VarParameters: order p must be >= 1");
        const int d = dim();
        for (const auto& Ak : A)
            if (Ak.rows() != d || Ak.cols() != d)
                throw DimensionError("VarParameters: coefficient matrices must be square with equal dimension");
        if (gamma.size() != d) throw DimensionError("VarParameters: gamma size mismatch");
        for (int i = 0; i < d; ++i)
            if (!(gamma[i] > 0.0))
                throw DimensionError("VarParameters: noise variances must be strictly positive");
        if (layout) {
            layout->validate();
            if (layout->total() != d) throw DimensionError("VarParameters: layout total mismatch");
        }
    }

    int order() const { return static_cast<int>(A.size()); }
    int dim() const { return static_cast<int>(A.front().rows()); }
};

/// Companion form of the stacked state (S_t, S_{t-1}, ..., S_{t-p+1}).
inline MatrixXd companion_matrix(const VarParameters& params) {
    const int d = params.dim();
    const int p = params.order();
    MatrixXd comp = MatrixXd::Zero(p * d, p * d);
    for (int k = 0; k < p; ++k) comp.block(0, k * d, d, d) = params.A[k];
    if (p > 1) comp.block(d, 0, (p - 1) * d, (p - 1) * d).setIdentity();
    return comp;
}

inline double spectral_radius(const MatrixXd& m) {
    Eigen::EigenSolver<MatrixXd> es(m, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// True iff the companion spectral radius is < 1 - margin. margin = 0 checks
/// the stationarity assumption exactly; margin = 0.1 is the rejection rule
/// used by the simulation studies.
inline bool validate_stability(const VarParameters& params, double margin = 0.0) {
    return spectral_radius(companion_matrix(params)) < 1.0 - margin;
}

namespace detail {

/// L such that L L^T = S for symmetric PSD S. LDLT based so that the
/// companion covariance of higher-order processes (exactly singular blocks)
/// is handled; tiny negative pivots are clamped to zero.
inline MatrixXd psd_sqrt(const MatrixXd& s) {
    Eigen::LDLT<MatrixXd> ldlt(s);
    VectorXd dvec = ldlt.vectorD();
    for (int i = 0; i < dvec.size(); ++i) dvec[i] = dvec[i] > 0.0 ? std::sqrt(dvec[i]) : 0.0;
    const auto pmat = ldlt.transpositionsP().transpose();
    MatrixXd l = ldlt.matrixL();
    return pmat * (l * dvec.asDiagonal());
}

}  // namespace detail

/// Solve Sigma = Abar Sigma Abar^T + Gbar for the companion form.
/// Direct vectorized solve for pd <= 60, truncated series above.
inline MatrixXd companion_stationary_covariance(const VarParameters& params) {
    if (!validate_stability(params, 0.0))
        throw UnstableProcessError("stationary covariance requires a stable process");
    const int d = params.dim();
    const int p = params.order();
    const int n = p * d;
    const MatrixXd abar = companion_matrix(params);
    MatrixXd gbar = MatrixXd::Zero(n, n);
    gbar.topLeftCorner(d, d) = params.gamma.asDiagonal();

    MatrixXd sigma;
    if (n <= 60) {
        MatrixXd lhs = MatrixXd::Identity(n * n, n * n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                lhs.block(j * n, i * n, n, n).noalias() -= abar(j, i) * abar;  // I - Abar (x) Abar
        Eigen::Map<const VectorXd> rhs(gbar.data(), n * n);
        VectorXd vec = lhs.partialPivLu().solve(rhs);
        sigma = Eigen::Map<const MatrixXd>(vec.data(), n, n);
    } else {
        sigma = gbar;
        MatrixXd term = gbar;
        const double scale = gbar.cwiseAbs().maxCoeff();
        for (int k = 0; k < 100000; ++k) {
            term = abar * term * abar.transpose();
            sigma += term;
            if (term.cwiseAbs().maxCoeff() < 1e-14 * std::max(scale, sigma.cwiseAbs().maxCoeff())) break;
        }
    }
    sigma = 0.5 * (sigma + sigma.transpose());
    return sigma;
}

/// Lag-0 covariance E[S_t S_t^T], the d x d block of the companion solve.
inline MatrixXd stationary_covariance(const VarParameters& params) {
    return companion_stationary_covariance(params).topLeftCorner(params.dim(), params.dim());
}

/// E[S_t S_{t-h}^T] for h >= 0: the d x d top-left block of Abar^h Sigma.
inline MatrixXd cross_covariance(const VarParameters& params, int lag) {
    if (lag < 0) throw DimensionError("cross_covariance: lag must be >= 0");
    const int d = params.dim();
    MatrixXd acc = companion_stationary_covariance(params);
    const MatrixXd abar = companion_matrix(params);
    for (int h = 0; h < lag; ++h) acc = abar * acc;
    return acc.topLeftCorner(d, d);
}

/// Sample over t = 1..T (column t-1 holds S_t).
struct TimeSeriesSample {
    MatrixXd data;  // d x T
    BlockLayout layout;

    TimeSeriesSample(MatrixXd values, BlockLayout blocks)
        : data(std::move(values)), layout(blocks) {
        layout.validate();
        if (data.rows() != layout.total()) throw DimensionError("TimeSeriesSample: row count != layout total");
        if (data.cols() < 1) throw DimensionError("TimeSeriesSample: need T >= 1");
    }

    int length() const { return static_cast<int>(data.cols()); }
};

/// do(X_{t0} := value): the X block at time t0 (1-based) is overwritten
/// before it feeds the t0+1 assignment. Only X-block targets are supported.
struct InterventionSpec {
    int t0 = 1;
    VectorXd value;
};

namespace detail {

inline BlockLayout layout_or_single(const VarParameters& params) {
    if (params.layout) return *params.layout;
    // Anonymous processes without roles: expose everything as the X block.
    return BlockLayout{0, 0, params.dim(), 0};
}

inline MatrixXd simulate_impl(const VarParameters& params, int length, std::uint64_t seed,
                              const InterventionSpec* iv) {
    if (length < 1) throw DimensionError("simulate: T must be >= 1");
    if (!validate_stability(params, 0.0)) throw UnstableProcessError("simulate requires a stable process");
    const int d = params.dim();
    const int p = params.order();
    if (iv) {
        if (iv->t0 < 1 || iv->t0 > length) throw DimensionError("intervention time out of range");
        const auto lay = layout_or_single(params);
        if (iv->value.size() != lay.X().size())
            throw DimensionError("intervention value length must equal d_X");
    }

    Rng rng(seed);
    const MatrixXd root = detail::psd_sqrt(companion_stationary_covariance(params));
    VectorXd z(p * d);
    for (int i = 0; i < p * d; ++i) z[i] = rng.normal();
    VectorXd state = root * z;  // (S_1, S_0, ..., S_{2-p}) from the stationary law

    MatrixXd out(d, length);
    out.col(0) = state.head(d);
    const auto xrange = layout_or_single(params).X();
    if (iv && iv->t0 == 1) out.col(0).segment(xrange.begin, xrange.size()) = iv->value;

    // history[k] = S_{t-k-1} while generating S_t
    std::vector<VectorXd> history(p);
    for (int k = 1; k < p; ++k) history[k] = state.segment(k * d, d);
    history[0] = out.col(0);

    for (int t = 2; t <= length; ++t) {
        VectorXd next = VectorXd::Zero(d);
        for (int k = 0; k < p; ++k) next.noalias() += params.A[k] * history[k];
        for (int i = 0; i < d; ++i) next[i] += std::sqrt(params.gamma[i]) * rng.normal();
        if (iv && iv->t0 == t) next.segment(xrange.begin, xrange.size()) = iv->value;
        out.col(t - 1) = next;
        for (int k = p - 1; k > 0; --k) history[k] = history[k - 1];
        history[0] = next;
    }
    return out;
}

}  // namespace detail

/// Exact stationary initialization (no burn-in), then the recursion.
/// Bit-reproducible for a fixed seed.
inline TimeSeriesSample simulate(const VarParameters& params, int length, std::uint64_t seed) {
    return TimeSeriesSample(detail::simulate_impl(params, length, seed, nullptr),
                            detail::layout_or_single(params));
}

/// Identical noise stream as simulate(); with a matched seed, columns before
/// t0 coincide with the unintervened run.
inline TimeSeriesSample simulate_with_intervention(const VarParameters& params, int length,
                                                   const InterventionSpec& spec, std::uint64_t seed) {
    return TimeSeriesSample(detail::simulate_impl(params, length, seed, &spec),
                            detail::layout_or_single(params));
}

/// VAR(1) with the instrumental sparsity pattern (rows I and H zero outside
/// their own diagonal blocks, row Y zero in the I columns).
class InstrumentalVar1 {
public:
    InstrumentalVar1(MatrixXd a1, VectorXd gamma_diag, BlockLayout blocks)
        : params_({std::move(a1)}, std::move(gamma_diag), blocks) {
        check_pattern();
    }

    const VarParameters& params() const { return params_; }
    const BlockLayout& layout() const { return *params_.layout; }
    const MatrixXd& a1() const { return params_.A.front(); }

    MatrixXd alpha_II() const { return block(layout().I(), layout().I()); }
    MatrixXd alpha_HH() const { return block(layout().H(), layout().H()); }
    MatrixXd alpha_XI() const { return block(layout().X(), layout().I()); }
    MatrixXd alpha_XH() const { return block(layout().X(), layout().H()); }
    MatrixXd alpha_XX() const { return block(layout().X(), layout().X()); }
    MatrixXd alpha_XY() const { return block(layout().X(), layout().Y()); }
    MatrixXd alpha_YH() const { return block(layout().Y(), layout().H()); }
    MatrixXd beta() const { return block(layout().Y(), layout().X()); }
    MatrixXd alpha_YY() const { return block(layout().Y(), layout().Y()); }

private:
    MatrixXd block(IndexRange rows, IndexRange cols) const {
        return a1().block(rows.begin, cols.begin, rows.size(), cols.size());
    }

    void check_pattern() const {
        const auto& lay = layout();
        const auto& m = a1();
        auto zero = [&](IndexRange r, IndexRange c) {
            return m.block(r.begin, c.begin, r.size(), c.size()).isZero(0.0);
        };
        const bool ok = zero(lay.I(), lay.H()) && zero(lay.I(), lay.X()) && zero(lay.I(), lay.Y()) &&
                        zero(lay.H(), lay.I()) && zero(lay.H(), lay.X()) && zero(lay.H(), lay.Y()) &&
                        zero(lay.Y(), lay.I());
        if (!ok) throw DimensionError("InstrumentalVar1: coefficient matrix violates the instrumental sparsity pattern");
    }

    VarParameters params_;
};

/// Draw a random instrumental VAR(1): pattern entries +/- uniform [low, high]
/// (alpha_II and alpha_HH diagonal so instrument and confounder coordinate
/// processes are mutually independent), rejection-sampled for stability.
inline InstrumentalVar1 random_instrumental_var1(const BlockLayout& blocks, std::uint64_t seed,
                                                 double margin = 0.1, double low = 0.1,
                                                 double high = 0.9,
                                                 const MatrixXd* fixed_alpha_xx = nullptr) {
    blocks.validate();
    const int d = blocks.total();
    Rng rng(seed);
    constexpr int kBudget = 10000;
    for (int attempt = 0; attempt < kBudget; ++attempt) {
        MatrixXd a = MatrixXd::Zero(d, d);
        auto fill = [&](IndexRange r, IndexRange c) {
            for (int i = r.begin; i < r.end; ++i)
                for (int j = c.begin; j < c.end; ++j) a(i, j) = rng.signed_uniform(low, high);
        };
        auto fill_diag = [&](IndexRange r) {
            for (int i = r.begin; i < r.end; ++i) a(i, i) = rng.signed_uniform(low, high);
        };
        fill_diag(blocks.I());
        fill_diag(blocks.H());
        fill(blocks.X(), blocks.I());
        fill(blocks.X(), blocks.H());
        fill(blocks.X(), blocks.X());
        fill(blocks.X(), blocks.Y());
        fill(blocks.Y(), blocks.H());
        fill(blocks.Y(), blocks.X());
        fill(blocks.Y(), blocks.Y());
        if (fixed_alpha_xx)
            a.block(blocks.X().begin, blocks.X().begin, blocks.d_X, blocks.d_X) = *fixed_alpha_xx;
        VarParameters candidate({a}, VectorXd::Ones(d), blocks);
        if (validate_stability(candidate, margin))
            return InstrumentalVar1(a, VectorXd::Ones(d), blocks);
    }
    throw RejectionBudgetError("random_instrumental_var1: no stable draw within 10000 rejections");
}

/// Sum over compositions l_1 + ... + l_m = lag (1 <= l_r <= p) of
/// A_{l_1} ... A_{l_m}, restricted to rows `target`, columns `source`.
/// Computed by the recursion M_l = sum_k A_k M_{l-k}, M_0 = I.
inline MatrixXd total_causal_effect(const VarParameters& params, IndexRange source,
                                    IndexRange target, int lag) {
    if (lag < 1) throw DimensionError("total_causal_effect: lag must be >= 1");
    const int d = params.dim();
    const int p = params.order();
    std::vector<MatrixXd> m(lag + 1);
    m[0] = MatrixXd::Identity(d, d);
    for (int l = 1; l <= lag; ++l) {
        m[l] = MatrixXd::Zero(d, d);
        for (int k = 1; k <= std::min(p, l); ++k) m[l].noalias() += params.A[k - 1] * m[l - k];
    }
    return m[lag].block(target.begin, source.begin, target.size(), source.size());
}

}  // namespace tsiv
