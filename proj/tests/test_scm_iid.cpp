#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"
#include "tsiv/estimators.hpp"
#include "tsiv/scm_iid.hpp"

using namespace tsiv;
using Catch::Approx;

namespace {

// Parameter pair from the CIV/NIV asymptotic-variance comparison, variable
// order H=0, I=1, X=2, Y=3, Z=4, B=5.
enum : int { vH = 0, vI = 1, vX = 2, vY = 3, vZ = 4, vB = 5 };

LinearScm model_one() {
    MatrixXd a = MatrixXd::Zero(6, 6);
    a(vI, vB) = 1.185;
    a(vX, vH) = 21.095;
    a(vX, vI) = 6.885;
    a(vX, vB) = -5.969;
    a(vY, vH) = -7.244;
    a(vY, vX) = 16.499;
    a(vY, vZ) = -1.892;
    a(vZ, vH) = 1.921;
    a(vZ, vB) = 2.62;
    VectorXd g(6);
    g << 0.2, 1.2, 2.2, 1.2, 2.2, 0.2;
    ScmRoles roles;
    roles.instruments = {vI, vB};  // NIV uses both; CIV uses {vI} with B = {vB}
    roles.regressors = {vX};
    roles.nuisance = {vZ};
    roles.conditioning = {vB};
    roles.hidden = {vH};
    roles.y = vY;
    return LinearScm(a, g, roles);
}

LinearScm model_two() {
    MatrixXd a = MatrixXd::Zero(6, 6);
    a(vI, vB) = -2.918;
    a(vX, vH) = -22.439;
    a(vX, vI) = 3.519;
    a(vX, vB) = 4.282;
    a(vY, vH) = 19.964;
    a(vY, vX) = 4.737;
    a(vY, vZ) = 4.011;
    a(vZ, vH) = 0.884;
    a(vZ, vB) = -7.97;
    VectorXd g(6);
    g << 3.2, 1.2, 3.2, 2.2, 1.2, 2.2;
    ScmRoles roles = model_one().roles;
    return LinearScm(a, g, roles);
}

LinearScm civ_view(const LinearScm& m) {
    LinearScm out = m;
    out.roles.instruments = {vI};
    out.roles.nuisance = {};
    return out;
}

/// Random acyclic SCM where (I, X, B, Y, H) satisfy the CIV conditions by
/// construction: B -> I, B -> Y, H -> B, H -> X, H -> Y, I -> X, X -> Y.
LinearScm random_civ_scm(Rng& rng) {
    // order: H=0, B=1, I=2, X=3, Y=4 (topological)
    MatrixXd a = MatrixXd::Zero(5, 5);
    auto coef = [&] { return rng.signed_uniform(0.2, 1.5); };
    a(1, 0) = coef();              // H -> B
    a(2, 1) = coef();              // B -> I
    a(3, 0) = coef();              // H -> X
    a(3, 2) = coef();              // I -> X
    a(4, 0) = coef();              // H -> Y
    a(4, 1) = coef();              // B -> Y
    a(4, 3) = coef();              // X -> Y  (the structural beta)
    VectorXd g(5);
    for (int i = 0; i < 5; ++i) g[i] = rng.uniform(0.5, 2.0);
    ScmRoles roles;
    roles.instruments = {2};
    roles.regressors = {3};
    roles.conditioning = {1};
    roles.hidden = {0};
    roles.y = 4;
    return LinearScm(a, g, roles);
}

}  // namespace

TEST_CASE("scm covariance: white noise, unit chain, symmetry") {
    LinearScm iso(MatrixXd::Zero(3, 3), VectorXd::Ones(3));
    CHECK(scm_covariance(iso).isApprox(MatrixXd::Identity(3, 3), 1e-14));

    MatrixXd a = MatrixXd::Zero(2, 2);
    a(1, 0) = 1.0;  // X -> Y with unit coefficient
    LinearScm chain(a, VectorXd::Ones(2));
    const MatrixXd s = scm_covariance(chain);
    CHECK(s(0, 1) == Approx(1.0));
    CHECK(s(1, 1) == Approx(2.0));

    const MatrixXd big = scm_covariance(model_one());
    CHECK((big - big.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(big);
    CHECK(es.eigenvalues().minCoeff() > -1e-8);
}

TEST_CASE("civ population moment vanishes at the structural coefficient") {
    auto m = civ_view(model_one());
    MatrixXd beta(1, 1);
    beta << m.A(vY, vX);
    // the conditioning set {B} satisfies the graphical conditions here
    const MatrixXd at_truth =
        civ_population_moment(m, beta, m.roles.instruments, m.roles.regressors, m.roles.conditioning);
    CHECK(at_truth.cwiseAbs().maxCoeff() < 1e-10 * scm_covariance(m).cwiseAbs().maxCoeff());

    MatrixXd off = beta;
    off(0, 0) += 1.0;
    const MatrixXd perturbed =
        civ_population_moment(m, off, m.roles.instruments, m.roles.regressors, m.roles.conditioning);
    CHECK(perturbed.cwiseAbs().maxCoeff() > 1e-3);

    // affine in beta: moment(b) = moment(0) - b * cov(X, I | B)
    const MatrixXd at_zero = civ_population_moment(m, MatrixXd::Zero(1, 1), m.roles.instruments,
                                                   m.roles.regressors, m.roles.conditioning);
    const MatrixXd slope = (at_zero - perturbed) / (off(0, 0));
    const MatrixXd again = civ_population_moment(m, MatrixXd::Constant(1, 1, 2.5), m.roles.instruments,
                                                 m.roles.regressors, m.roles.conditioning);
    CHECK((again - (at_zero - 2.5 * slope)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("unconditional moment reduces to E[(Y - beta X) I^T]") {
    auto m = civ_view(model_one());
    const MatrixXd sigma = scm_covariance(m);
    MatrixXd beta(1, 1);
    beta << 2.0;
    const MatrixXd got = civ_population_moment(m, beta, {vI}, {vX}, {});
    const double expect = sigma(vY, vI) - 2.0 * sigma(vX, vI);
    CHECK(got(0, 0) == Approx(expect).epsilon(1e-12));
}

TEST_CASE("moment-equation root recovers the structural coefficient on random SCMs") {
    Rng rng(314);
    for (int trial = 0; trial < 50; ++trial) {
        auto m = random_civ_scm(rng);
        const double beta = m.A(4, 3);
        // solve moment(b) = 0 for scalar b via the affine representation
        const MatrixXd at0 = civ_population_moment(m, MatrixXd::Zero(1, 1), m.roles.instruments,
                                                   m.roles.regressors, m.roles.conditioning);
        const MatrixXd at1 = civ_population_moment(m, MatrixXd::Ones(1, 1), m.roles.instruments,
                                                   m.roles.regressors, m.roles.conditioning);
        const double slope = at0(0, 0) - at1(0, 0);
        REQUIRE(std::abs(slope) > 1e-8);
        CHECK(at0(0, 0) / slope == Approx(beta).margin(1e-10));
    }
}

TEST_CASE("asymptotic variance formulas are self-consistent under noise scaling") {
    auto base = model_one();
    const double s1 = asymptotic_variance_niv(base).x_block(0, 0);
    const double s2 = asymptotic_variance_civ(civ_view(base)).x_block(0, 0);
    LinearScm doubled(base.A, 2.0 * base.gamma, base.roles);
    // K and the cross moments all scale linearly in Gamma, so both variances
    // scale by exactly 2
    CHECK(asymptotic_variance_niv(doubled).x_block(0, 0) == Approx(2.0 * s1).epsilon(1e-10));
    CHECK(asymptotic_variance_civ(civ_view(doubled)).x_block(0, 0) == Approx(2.0 * s2).epsilon(1e-10));
}

TEST_CASE("asymptotic variances match the Monte-Carlo estimator variance") {
    // 2,000 replicates at T = 50,000: empirical variance of sqrt(T)(beta_hat
    // - beta) within 10% of the closed forms, for both comparison models.
    const int reps = 2000, t_len = 50000;
    for (int which = 0; which < 2; ++which) {
        auto m = which == 0 ? model_one() : model_two();
        const double beta = m.A(vY, vX);
        const double sigma1 = asymptotic_variance_niv(m).x_block(0, 0);
        const double sigma2 = asymptotic_variance_civ(civ_view(m)).x_block(0, 0);

        double civ_ss = 0.0, civ_s = 0.0, niv_ss = 0.0, niv_s = 0.0;
        for (int r = 0; r < reps; ++r) {
            const MatrixXd s = simulate_scm(m, t_len, 7000 + which * 100000 + r);
            IvProblem civ;
            civ.response = s.row(vY);
            civ.regressors = s.row(vX);
            civ.instruments = s.row(vI);
            civ.conditioning = s.row(vB);
            const double bc = civ_fit(civ).beta_hat(0, 0);
            IvProblem niv;
            niv.response = s.row(vY);
            niv.regressors = s.row(vX);
            niv.nuisance = s.row(vZ);
            MatrixXd inst(2, t_len);
            inst.row(0) = s.row(vI);
            inst.row(1) = s.row(vB);
            niv.instruments = inst;
            const double bn = civ_fit(niv).beta_hat(0, 0);
            civ_s += bc - beta;
            civ_ss += (bc - beta) * (bc - beta);
            niv_s += bn - beta;
            niv_ss += (bn - beta) * (bn - beta);
        }
        const double civ_var = t_len * (civ_ss / reps - (civ_s / reps) * (civ_s / reps));
        const double niv_var = t_len * (niv_ss / reps - (niv_s / reps) * (niv_s / reps));
        CHECK(civ_var == Approx(sigma2).epsilon(0.10));
        CHECK(niv_var == Approx(sigma1).epsilon(0.10));
    }
}

TEST_CASE("construction and error paths") {
    MatrixXd cyc = MatrixXd::Zero(2, 2);
    cyc(0, 1) = 0.5;
    cyc(1, 0) = 0.5;
    CHECK_THROWS_AS(LinearScm(cyc, VectorXd::Ones(2)), DimensionError);

    auto m = civ_view(model_one());
    CHECK_THROWS_AS(civ_population_moment(m, MatrixXd::Zero(2, 1), {vI}, {vX}, {}), DimensionError);

    // underidentified NIV: one instrument, two coefficients
    LinearScm bad = model_one();
    bad.roles.instruments = {vI};
    CHECK_THROWS_AS(asymptotic_variance_niv(bad), RankDeficientError);
}

TEST_CASE("scm graph feeds the condition checker") {
    auto g = model_one().graph();
    auto rep = check_conditions(g, {NodeId{vI, 0}}, {NodeId{vX, 0}}, {NodeId{vB, 0}}, NodeId{vY, 0},
                                EdgeRemoval::direct_xy);
    CHECK(rep.c1_or_c1prime);
    CHECK(rep.c2);
}
