#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tsiv/errors.hpp"
#include "tsiv/var_model.hpp"

namespace tsiv {

inline constexpr double kRankTolerance = 1e-10;  // relative singular-value cutoff

/// Center rows, then project out the (centered) conditioning rows.
/// With an empty B this is plain centering. Rank-deficient B is handled by
/// the pseudo-inverse, not treated as an error.
inline MatrixXd residualize(const MatrixXd& target, const MatrixXd& conditioning) {
    if (conditioning.cols() != 0 && conditioning.cols() != target.cols())
        throw DimensionError("residualize: column counts must match");
    MatrixXd r = target.colwise() - target.rowwise().mean().eval();
    if (conditioning.rows() == 0) return r;
    MatrixXd b = conditioning.colwise() - conditioning.rowwise().mean().eval();
    Eigen::JacobiSVD<MatrixXd> svd(b * b.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(kRankTolerance);
    const MatrixXd coef = svd.solve(b * r.transpose()).transpose();
    return r - coef * b;
}

enum class WeightChoice { tsls, identity, custom, efficient };

/// Aligned observation matrices for one IV fit. Z may be empty (plain CIV),
/// B may be empty (plain IV / NIV).
struct IvProblem {
    MatrixXd response;     // d_Y x n
    MatrixXd regressors;   // d_X x n
    MatrixXd nuisance;     // d_Z x n (0 rows allowed)
    MatrixXd instruments;  // d_I_total x n
    MatrixXd conditioning; // d_B x n (0 rows allowed)
    WeightChoice weight = WeightChoice::tsls;
    MatrixXd custom_weight;

    void validate() const {
        const auto n = response.cols();
        if (n < 2) throw DimensionError("IvProblem: need at least two observations");
        auto chk = [&](const MatrixXd& m, const char* what) {
            if (m.rows() > 0 && m.cols() != n) throw DimensionError(std::string("IvProblem: ") + what + " column count mismatch");
        };
        chk(regressors, "regressors");
        chk(nuisance, "nuisance");
        chk(instruments, "instruments");
        chk(conditioning, "conditioning");
        if (n <= regressors.rows() + nuisance.rows())
            throw DimensionError("IvProblem: need n > d_X + d_Z");
        if (instruments.rows() < regressors.rows() + nuisance.rows())
            throw RankDeficientError("IvProblem: fewer instruments than coefficients to identify");
    }
};

struct Diagnostics {
    long n_used = 0;
    VectorXd singular_values;  // of the instrument-regressor cross covariance, nonincreasing
    double condition_number = 0.0;
    std::string weight_used;
    bool ridge_applied = false;
    bool rank_warning = false;
};

struct Estimate {
    MatrixXd beta_hat;   // d_Y x d_X
    MatrixXd alpha_hat;  // d_Y x d_Z
    MatrixXd full_coefficients;  // d_Y x (d_X + d_Z)
    Diagnostics diagnostics;
};

namespace detail {

inline MatrixXd invert_weight(const MatrixXd& gram, Diagnostics& diag) {
    Eigen::JacobiSVD<MatrixXd> svd(gram);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    MatrixXd reg = gram;
    if (smin <= 0.0 || smax / smin > 1e12) {
        const double ridge = 1e-10 * gram.trace() / gram.rows();
        if (!(ridge > 0.0)) throw SingularWeightError("instrument covariance is singular");
        reg += ridge * MatrixXd::Identity(gram.rows(), gram.cols());
        diag.ridge_applied = true;
    }
    Eigen::LDLT<MatrixXd> ldlt(reg);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
        throw SingularWeightError("instrument covariance is singular");
    return ldlt.solve(MatrixXd::Identity(reg.rows(), reg.cols()));
}

}  // namespace detail

inline Estimate civ_fit_efficient(const IvProblem& problem, int bandwidth);

/// Closed-form weighted moment minimizer on residualized data:
/// b(W) = E[r_Y r_I^T] W E[r_I r_X~^T] (E[r_X~ r_I^T] W E[r_I r_X~^T])^{-1}
/// with X~ = [X; Z] stacked; beta_hat is the first d_X columns. The TSLS
/// weight is the inverse empirical instrument residual covariance.
inline Estimate civ_fit(const IvProblem& problem) {
    problem.validate();
    const auto n = problem.response.cols();
    MatrixXd xt(problem.regressors.rows() + problem.nuisance.rows(), n);
    xt.topRows(problem.regressors.rows()) = problem.regressors;
    if (problem.nuisance.rows() > 0) xt.bottomRows(problem.nuisance.rows()) = problem.nuisance;

    const MatrixXd ry = residualize(problem.response, problem.conditioning);
    const MatrixXd rx = residualize(xt, problem.conditioning);
    const MatrixXd ri = residualize(problem.instruments, problem.conditioning);

    const MatrixXd gxi = rx * ri.transpose() / static_cast<double>(n);
    const MatrixXd gyi = ry * ri.transpose() / static_cast<double>(n);

    Estimate est;
    est.diagnostics.n_used = n;
    Eigen::JacobiSVD<MatrixXd> svd(gxi);
    est.diagnostics.singular_values = svd.singularValues();
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    est.diagnostics.condition_number = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    if (smin < kRankTolerance * smax)
        throw RankDeficientError("civ_fit: instrument-regressor cross covariance is rank deficient");

    MatrixXd w;
    switch (problem.weight) {
        case WeightChoice::tsls:
            w = detail::invert_weight(ri * ri.transpose() / static_cast<double>(n), est.diagnostics);
            est.diagnostics.weight_used = "tsls";
            break;
        case WeightChoice::identity:
            w = MatrixXd::Identity(ri.rows(), ri.rows());
            est.diagnostics.weight_used = "identity";
            break;
        case WeightChoice::custom:
            if (problem.custom_weight.rows() != ri.rows() || problem.custom_weight.cols() != ri.rows())
                throw DimensionError("civ_fit: custom weight has wrong shape");
            w = problem.custom_weight;
            est.diagnostics.weight_used = "custom";
            break;
        case WeightChoice::efficient:
            return civ_fit_efficient(problem, -1);
    }

    const MatrixXd mid = gxi * w * gxi.transpose();
    Eigen::LDLT<MatrixXd> ldlt(mid);
    if (ldlt.info() != Eigen::Success)
        throw RankDeficientError("civ_fit: normal matrix is singular");
    est.full_coefficients = ldlt.solve((gxi * w * gyi.transpose())).transpose();
    est.beta_hat = est.full_coefficients.leftCols(problem.regressors.rows());
    est.alpha_hat = est.full_coefficients.rightCols(problem.nuisance.rows());
    return est;
}

/// Bartlett-kernel long-run covariance of a (possibly vector) moment
/// sequence: sum_{|h|<=L} (1 - |h|/(L+1)) Gamma_h, PSD by the kernel.
inline MatrixXd longrun_covariance(const MatrixXd& g, int bandwidth) {
    const long n = g.cols();
    if (bandwidth < 0) throw DimensionError("longrun_covariance: bandwidth must be >= 0");
    if (bandwidth >= n) throw DimensionError("longrun_covariance: bandwidth must be < n");
    MatrixXd centered = g.colwise() - g.rowwise().mean().eval();
    MatrixXd acc = centered * centered.transpose() / static_cast<double>(n);
    for (int h = 1; h <= bandwidth; ++h) {
        const double wgt = 1.0 - static_cast<double>(h) / (bandwidth + 1);
        const MatrixXd gh =
            centered.rightCols(n - h) * centered.leftCols(n - h).transpose() / static_cast<double>(n);
        acc += wgt * (gh + gh.transpose());
    }
    return 0.5 * (acc + acc.transpose());
}

/// Bandwidth default used when the caller does not specify one.
inline int default_bartlett_bandwidth(long n) {
    return static_cast<int>(std::floor(4.0 * std::pow(n / 100.0, 2.0 / 9.0)));
}

/// Time-series alignment of the estimation problem. CIV uses the lag-2
/// instrument with the lag-3 instrument (optionally plus X_{t-2}, Y_{t-1})
/// as conditioning; NIV stacks instrument lags 2..m+1 and folds Y_{t-1} in
/// as a nuisance regressor.
struct AlignmentSpec {
    enum class Mode { civ, niv } mode = Mode::civ;
    enum class CivConditioning { instrument_lag3, instrument_lag3_x2_y1 } conditioning =
        CivConditioning::instrument_lag3;
    int niv_lags = 1;  // m: instruments at lags 2..m+1
    std::vector<int> instrument_components;  // indices within the I block; empty = all
    WeightChoice weight = WeightChoice::tsls;
};

inline IvProblem ts_align(const TimeSeriesSample& sample, const AlignmentSpec& spec) {
    const auto& lay = sample.layout;
    const int t_len = sample.length();
    auto block_rows = [&](IndexRange r) { return sample.data.middleRows(r.begin, r.size()); };
    const auto xm = block_rows(lay.X());
    const auto ym = block_rows(lay.Y());
    MatrixXd im;
    if (spec.instrument_components.empty()) {
        im = block_rows(lay.I());
    } else {
        im.resize(spec.instrument_components.size(), t_len);
        for (std::size_t r = 0; r < spec.instrument_components.size(); ++r) {
            const int c = spec.instrument_components[r];
            if (c < 0 || c >= lay.d_I) throw DimensionError("ts_align: instrument component out of range");
            im.row(r) = sample.data.row(lay.I().begin + c);
        }
    }

    IvProblem p;
    p.weight = spec.weight;
    if (spec.mode == AlignmentSpec::Mode::civ) {
        const int deepest = 3;
        if (t_len < deepest + 1) throw DimensionError("ts_align: sample too short for the CIV lags");
        const int s = deepest + 1;  // 1-based start so all indices are positive
        const int ncols = t_len - s + 1;
        auto cols = [&](const auto& m, int lag) { return MatrixXd(m.middleCols(s - 1 - lag, ncols)); };
        p.response = cols(ym, 0);
        p.regressors = cols(xm, 1);
        p.instruments = cols(im, 2);
        if (spec.conditioning == AlignmentSpec::CivConditioning::instrument_lag3) {
            p.conditioning = cols(im, 3);
        } else {
            MatrixXd b(im.rows() + lay.d_X + lay.d_Y, ncols);
            b.topRows(im.rows()) = cols(im, 3);
            b.middleRows(im.rows(), lay.d_X) = cols(xm, 2);
            b.bottomRows(lay.d_Y) = cols(ym, 1);
            p.conditioning = b;
        }
    } else {
        const int m = spec.niv_lags;
        if (m < 1) throw DimensionError("ts_align: need at least one instrument lag");
        const int deepest = m + 1;
        if (t_len < deepest + 1) throw DimensionError("ts_align: sample too short for the NIV lags");
        const int s = deepest + 1;
        const int ncols = t_len - s + 1;
        auto cols = [&](const auto& mat, int lag) { return MatrixXd(mat.middleCols(s - 1 - lag, ncols)); };
        MatrixXd inst(im.rows() * m, ncols);
        for (int j = 0; j < m; ++j) inst.middleRows(j * im.rows(), im.rows()) = cols(im, 2 + j);
        p.instruments = inst;
        p.response = cols(ym, 0);
        p.regressors = cols(xm, 1);
        p.nuisance = cols(ym, 1);
    }
    return p;
}

/// Probability limit of the naive lag-2 IV estimator in the scalar
/// instrumental VAR(1): (1 - alpha_II alpha_YY)^{-1} beta.
inline double naive_iv_plim(const InstrumentalVar1& iv) {
    const auto& lay = iv.layout();
    if (lay.d_I != 1 || lay.d_X != 1 || lay.d_H != 1 || lay.d_Y != 1)
        throw DimensionError("naive_iv_plim: requires the scalar instrumental process");
    const double a_ii = iv.alpha_II()(0, 0);
    const double a_yy = iv.alpha_YY()(0, 0);
    if (std::abs(1.0 - a_ii * a_yy) < 1e-12)
        throw RankDeficientError("naive_iv_plim: alpha_II * alpha_YY = 1");
    const double cov_xi = cross_covariance(iv.params(), 1)(lay.X().begin, lay.I().begin);
    if (std::abs(cov_xi) < 1e-12)
        throw RankDeficientError("naive_iv_plim: instrument and regressor are uncorrelated");
    return iv.beta()(0, 0) / (1.0 - a_ii * a_yy);
}

/// Least squares of each response row on the regressor rows plus intercept.
struct OlsFit {
    MatrixXd coefficients;  // d_Y x d_R
    VectorXd intercept;     // d_Y
    bool rank_warning = false;

    MatrixXd predict(const MatrixXd& regressors) const {
        return (coefficients * regressors).colwise() + intercept;
    }
};

inline OlsFit ols_fit(const MatrixXd& response, const MatrixXd& regressors) {
    if (response.cols() != regressors.cols()) throw DimensionError("ols_fit: column counts must match");
    if (response.cols() <= regressors.rows()) throw DimensionError("ols_fit: need n > regressor rows");
    const VectorXd rmean = regressors.rowwise().mean();
    const VectorXd ymean = response.rowwise().mean();
    const MatrixXd rc = regressors.colwise() - rmean;
    const MatrixXd yc = response.colwise() - ymean;
    Eigen::JacobiSVD<MatrixXd> svd(rc * rc.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(kRankTolerance);
    OlsFit fit;
    fit.rank_warning = svd.rank() < regressors.rows();
    fit.coefficients = svd.solve(rc * yc.transpose()).transpose();
    fit.intercept = ymean - fit.coefficients * rmean;
    return fit;
}

/// Efficient-weight variant of civ_fit(): TSLS first stage, then the
/// long-run covariance of the fitted moment sequence as weight.
inline Estimate civ_fit_efficient(const IvProblem& problem, int bandwidth) {
    if (problem.response.rows() != 1)
        throw DimensionError("civ_fit_efficient: scalar response only");
    IvProblem stage = problem;
    stage.weight = WeightChoice::tsls;
    const Estimate first = civ_fit(stage);

    const auto n = problem.response.cols();
    MatrixXd xt(problem.regressors.rows() + problem.nuisance.rows(), n);
    xt.topRows(problem.regressors.rows()) = problem.regressors;
    if (problem.nuisance.rows() > 0) xt.bottomRows(problem.nuisance.rows()) = problem.nuisance;
    const MatrixXd ry = residualize(problem.response, problem.conditioning);
    const MatrixXd rx = residualize(xt, problem.conditioning);
    const MatrixXd ri = residualize(problem.instruments, problem.conditioning);
    const MatrixXd resid = ry - first.full_coefficients * rx;
    MatrixXd moments(ri.rows(), n);
    for (long t = 0; t < n; ++t) moments.col(t) = ri.col(t) * resid(0, t);
    if (bandwidth < 0) bandwidth = default_bartlett_bandwidth(n);
    const MatrixXd k = longrun_covariance(moments, bandwidth);

    IvProblem second = problem;
    second.weight = WeightChoice::custom;
    Diagnostics scratch;
    second.custom_weight = detail::invert_weight(k, scratch);
    Estimate out = civ_fit(second);
    out.diagnostics.weight_used = "efficient";
    out.diagnostics.ridge_applied = out.diagnostics.ridge_applied || scratch.ridge_applied;
    return out;
}

}  // namespace tsiv
