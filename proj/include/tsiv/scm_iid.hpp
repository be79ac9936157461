#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "tsiv/errors.hpp"
#include "tsiv/graph.hpp"
#include "tsiv/rng.hpp"

namespace tsiv {

/// Variable roles inside a finite linear SCM. y is the response index;
/// every other set may be empty.
struct ScmRoles {
    std::vector<int> instruments;
    std::vector<int> regressors;
    std::vector<int> nuisance;
    std::vector<int> conditioning;
    std::vector<int> hidden;
    int y = -1;
};

/// Finite linear SCM S = A S + eps, eps ~ N(0, diag(gamma)), acyclic.
struct LinearScm {
    MatrixXd A;
    VectorXd gamma;
    ScmRoles roles;

    LinearScm(MatrixXd coeffs, VectorXd noise_diag, ScmRoles r = {})
        : A(std::move(coeffs)), gamma(std::move(noise_diag)), roles(std::move(r)) {
        if (A.rows() != A.cols()) throw DimensionError("LinearScm: A must be square");
        if (gamma.size() != A.rows()) throw DimensionError("LinearScm: gamma size mismatch");
        for (int i = 0; i < gamma.size(); ++i)
            if (!(gamma[i] > 0.0)) throw DimensionError("LinearScm: noise variances must be positive");
        if (!acyclic()) throw DimensionError("LinearScm: coefficient matrix must induce an acyclic graph");
    }

    int size() const { return static_cast<int>(A.rows()); }

    bool acyclic() const {
        // Kahn on the nonzero pattern
        const int d = size();
        std::vector<int> indeg(d, 0);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                if (A(i, j) != 0.0) ++indeg[i];
        std::vector<int> queue;
        for (int i = 0; i < d; ++i)
            if (indeg[i] == 0) queue.push_back(i);
        int seen = 0;
        while (!queue.empty()) {
            int j = queue.back();
            queue.pop_back();
            ++seen;
            for (int i = 0; i < d; ++i)
                if (A(i, j) != 0.0 && --indeg[i] == 0) queue.push_back(i);
        }
        return seen == d;
    }

    /// DAG over the SCM variables, for the graphical condition checks.
    MarginalGraph graph() const {
        std::vector<NodeId> nodes;
        EdgeList dir;
        for (int i = 0; i < size(); ++i) nodes.push_back(NodeId{i, 0});
        for (int i = 0; i < size(); ++i)
            for (int j = 0; j < size(); ++j)
                if (A(i, j) != 0.0) dir.emplace_back(NodeId{j, 0}, NodeId{i, 0});
        return MarginalGraph(nodes, dir, {});
    }
};

/// Exact joint covariance (I - A)^{-1} Gamma (I - A)^{-T}.
inline MatrixXd scm_covariance(const LinearScm& m) {
    const int d = m.size();
    const MatrixXd ima = MatrixXd::Identity(d, d) - m.A;
    Eigen::PartialPivLU<MatrixXd> lu(ima);
    if (std::abs(lu.determinant()) < 1e-300) throw RankDeficientError("scm_covariance: I - A is singular");
    const MatrixXd minv = lu.solve(MatrixXd::Identity(d, d));
    MatrixXd sigma = minv * m.gamma.asDiagonal() * minv.transpose();
    return 0.5 * (sigma + sigma.transpose());
}

/// Conditional covariance cov(P, Q | B) by Schur complement on the exact
/// joint covariance; exact for the linear-Gaussian model, no sampling.
inline MatrixXd conditional_covariance(const MatrixXd& sigma, const std::vector<int>& p,
                                       const std::vector<int>& q, const std::vector<int>& b) {
    auto sub = [&](const std::vector<int>& rows, const std::vector<int>& cols) {
        MatrixXd out(rows.size(), cols.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = sigma(rows[i], cols[j]);
        return out;
    };
    if (b.empty()) return sub(p, q);
    const MatrixXd sbb = sub(b, b);
    Eigen::LDLT<MatrixXd> ldlt(sbb);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
        throw RankDeficientError("conditional_covariance: singular conditioning covariance");
    return sub(p, q) - sub(p, b) * ldlt.solve(sub(b, q));
}

/// Population CIV moment E[cov(Y - beta X, I | B)] evaluated exactly.
/// Zero (to tolerance) iff beta solves the moment equation.
inline MatrixXd civ_population_moment(const LinearScm& m, const MatrixXd& beta,
                                      const std::vector<int>& instruments,
                                      const std::vector<int>& regressors,
                                      const std::vector<int>& conditioning) {
    if (beta.rows() != 1 || beta.cols() != static_cast<int>(regressors.size()))
        throw DimensionError("civ_population_moment: beta must be 1 x d_X");
    const MatrixXd sigma = scm_covariance(m);
    const std::vector<int> y{m.roles.y};
    const MatrixXd cyi = conditional_covariance(sigma, y, instruments, conditioning);
    const MatrixXd cxi = conditional_covariance(sigma, regressors, instruments, conditioning);
    return cyi - beta * cxi;
}

/// Asymptotic variance of the NIV estimator (optimal weight):
/// Sigma1 = (E[X~ I^T] K^{-1} E[X~ I^T]^T)^{-1},
/// K = E[(Y - beta X - alpha Z)^2] E[I I^T], with beta, alpha the structural
/// coefficients read off the Y row of A.
struct AsymptoticVariance {
    MatrixXd full;     // (d_X + d_Z) x (d_X + d_Z) for NIV, d_X x d_X for CIV
    MatrixXd x_block;  // top-left d_X x d_X block
};

inline AsymptoticVariance asymptotic_variance_niv(const LinearScm& m) {
    const auto& r = m.roles;
    if (r.y < 0) throw DimensionError("roles: response not set");
    if (r.instruments.size() < r.regressors.size() + r.nuisance.size())
        throw RankDeficientError("asymptotic_variance_niv: underidentified");
    const MatrixXd sigma = scm_covariance(m);
    std::vector<int> xt(r.regressors);
    xt.insert(xt.end(), r.nuisance.begin(), r.nuisance.end());

    VectorXd w = VectorXd::Zero(m.size());
    w[r.y] = 1.0;
    for (int xi : r.regressors) w[xi] -= m.A(r.y, xi);
    for (int zi : r.nuisance) w[zi] -= m.A(r.y, zi);
    const double resid_var = w.dot(sigma * w);

    const MatrixXd exi = conditional_covariance(sigma, xt, r.instruments, {});
    const MatrixXd eii = conditional_covariance(sigma, r.instruments, r.instruments, {});
    const MatrixXd k = resid_var * eii;
    const MatrixXd mat = exi * k.ldlt().solve(exi.transpose());
    Eigen::FullPivLU<MatrixXd> lu(mat);
    if (!lu.isInvertible()) throw RankDeficientError("asymptotic_variance_niv: rank deficiency");
    AsymptoticVariance out;
    out.full = lu.inverse();
    out.x_block = out.full.topLeftCorner(r.regressors.size(), r.regressors.size());
    return out;
}

/// CIV analogue with conditional covariances throughout:
/// Sigma2 = (E[cov(X, I | B)] K^{-1} E[cov(X, I | B)]^T)^{-1},
/// K = Var(Y - beta X | B) E[var(I | B)].
inline AsymptoticVariance asymptotic_variance_civ(const LinearScm& m) {
    const auto& r = m.roles;
    if (r.y < 0) throw DimensionError("roles: response not set");
    if (r.instruments.size() < r.regressors.size())
        throw RankDeficientError("asymptotic_variance_civ: underidentified");
    const MatrixXd sigma = scm_covariance(m);

    std::vector<int> resid_vars(r.regressors);
    resid_vars.push_back(r.y);
    const MatrixXd joint = conditional_covariance(sigma, resid_vars, resid_vars, r.conditioning);
    VectorXd w = VectorXd::Zero(joint.rows());
    w[w.size() - 1] = 1.0;
    for (std::size_t i = 0; i < r.regressors.size(); ++i) w[i] = -m.A(r.y, r.regressors[i]);
    const double resid_var = w.dot(joint * w);

    const MatrixXd cxi = conditional_covariance(sigma, r.regressors, r.instruments, r.conditioning);
    const MatrixXd cii = conditional_covariance(sigma, r.instruments, r.instruments, r.conditioning);
    const MatrixXd k = resid_var * cii;
    const MatrixXd mat = cxi * k.ldlt().solve(cxi.transpose());
    Eigen::FullPivLU<MatrixXd> lu(mat);
    if (!lu.isInvertible()) throw RankDeficientError("asymptotic_variance_civ: rank deficiency");
    AsymptoticVariance out;
    out.full = lu.inverse();
    out.x_block = out.full;
    return out;
}

/// i.i.d. draws from the SCM, one column per observation.
inline MatrixXd simulate_scm(const LinearScm& m, int n, std::uint64_t seed) {
    if (n < 1) throw DimensionError("simulate_scm: n must be >= 1");
    const int d = m.size();
    const MatrixXd ima_inv =
        (MatrixXd::Identity(d, d) - m.A).partialPivLu().solve(MatrixXd::Identity(d, d));
    Rng rng(seed);
    MatrixXd eps(d, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < d; ++i) eps(i, j) = std::sqrt(m.gamma[i]) * rng.normal();
    return ima_inv * eps;
}

}  // namespace tsiv
