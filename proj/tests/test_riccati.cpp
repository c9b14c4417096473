#include <catch2/catch_amalgamated.hpp>

#include "rloft/riccati.hpp"
#include "test_support.hpp"

using namespace rloft;
using namespace rloft::testing;

namespace {

// Closed-form scalar optimum for A = 0.5, B = 1, Q = 1, Rbar = 1: the value
// kernel is the positive root of P^2 - 0.25 P - 1 = 0.
constexpr double kScalarPStar = 1.1327822185373186;
constexpr double kScalarKStar = 0.26556443707463728;

AugmentedSystem bare_system(const Matrix& a, const Matrix& b, const Matrix& c) {
    AugmentedSystem aug;
    aug.underA = a;
    aug.barB = b;
    aug.barC = c;
    aug.barG = Matrix::Zero(a.rows(), c.rows());
    aug.n_z = a.rows();
    aug.r_n = a.rows();
    aug.r_m = b.cols();
    aug.r_p = c.rows();
    return aug;
}

Weights unit_weights(Index r_p, Index r_m) {
    Weights w;
    w.Q = Matrix::Identity(r_p, r_p);
    w.Rbar = Matrix::Identity(r_m, r_m);
    return w;
}

}  // namespace

TEST_CASE("initial gain is zero for an already-Schur system") {
    const auto aug = bare_system(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0),
                                 Matrix::Constant(1, 1, 1.0));
    REQUIRE(initial_stabilizing_gain(aug, unit_weights(1, 1)).norm() == 0.0);
}

TEST_CASE("value iteration stabilizes an unstable scalar system") {
    const auto aug = bare_system(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 1.0),
                                 Matrix::Constant(1, 1, 1.0));
    const Matrix k0 = initial_stabilizing_gain(aug, unit_weights(1, 1));
    REQUIRE(std::abs(2.0 - k0(0, 0)) < 1.0);
}

TEST_CASE("value iteration reports an unstabilizable pair") {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 2.0;
    a(1, 1) = 2.0;
    const auto aug = bare_system(a, Matrix::Zero(2, 1), Matrix::Identity(2, 2));
    REQUIRE_THROWS_AS(initial_stabilizing_gain(aug, unit_weights(2, 1)), ConvergenceError);
}

TEST_CASE("policy iteration converges to the closed-form scalar optimum") {
    const auto aug = bare_system(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0),
                                 Matrix::Constant(1, 1, 1.0));
    const auto iterates = hewer_iterate(aug, unit_weights(1, 1), Matrix::Zero(1, 1));
    REQUIRE(iterates.back().P(0, 0) == Catch::Approx(kScalarPStar).epsilon(1e-12));
    REQUIRE(iterates.back().K(0, 0) == Catch::Approx(kScalarKStar).epsilon(1e-12));
}

TEST_CASE("zero state cost gives the zero kernel on a Schur system") {
    const auto aug = bare_system(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0),
                                 Matrix::Constant(1, 1, 1.0));
    Weights w = unit_weights(1, 1);
    w.Q = Matrix::Zero(1, 1);
    const auto iterates = hewer_iterate(aug, w, Matrix::Zero(1, 1));
    REQUIRE(iterates.back().P.norm() < 1e-12);
    REQUIRE(iterates.back().K.norm() < 1e-12);
}

TEST_CASE("policy iteration is monotone with a small Riccati residual") {
    auto rng = make_rng(101);
    for (int trial = 0; trial < 10; ++trial) {
        const RandomProblem problem = random_tracking_problem(rng, 3, trial % 2 == 1);
        const Matrix k0 = initial_stabilizing_gain(problem.aug, problem.weights);
        const auto iterates = hewer_iterate(problem.aug, problem.weights, k0);
        for (size_t j = 0; j + 1 < iterates.size(); ++j) {
            const Matrix diff = iterates[j].P - iterates[j + 1].P;
            REQUIRE(min_symmetric_eigenvalue(diff) >= -1e-9);
        }
        const Matrix p_star = iterates.back().P;
        REQUIRE(dare_residual(problem.aug, problem.weights, p_star) <=
                1e-8 * (1.0 + p_star.norm()));
    }
}

TEST_CASE("policy iteration reports the failing step on a non-stabilizing start") {
    const auto aug = bare_system(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 1.0),
                                 Matrix::Constant(1, 1, 1.0));
    REQUIRE_THROWS_AS(hewer_iterate(aug, unit_weights(1, 1), Matrix::Zero(1, 1)),
                      ConvergenceError);
}

TEST_CASE("regulator equations on the scalar elimination example") {
    Exosystem exo = exo_constant();
    const RegulatorSolution sol =
        solve_regulator_equations(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 0.5),
                                  Matrix::Constant(1, 1, 1.0), exo);
    REQUIRE(sol.X(0, 0) == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(sol.ok());
}

TEST_CASE("regulator equations give X = 0 for a zero reference map") {
    Exosystem exo = exo_constant();
    exo.R = Matrix::Zero(1, 1);
    const RegulatorSolution sol =
        solve_regulator_equations(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 0.5),
                                  Matrix::Constant(1, 1, 1.0), exo);
    REQUIRE(sol.X.norm() < 1e-12);
}

TEST_CASE("regulation error follows the closed-loop recursion") {
    auto rng = make_rng(103);
    const RandomProblem problem = random_tracking_problem(rng, 2, true);
    const Matrix k0 = initial_stabilizing_gain(problem.aug, problem.weights);
    const Matrix k_star = hewer_iterate(problem.aug, problem.weights, k0).back().K;
    const Matrix abar = problem.aug.underA - problem.aug.barB * k_star;
    const RegulatorSolution sol =
        solve_regulator_equations(abar, problem.aug.barG, problem.aug.barC, problem.exo);
    REQUIRE(sol.ok());

    // Simulate xbar+ = Abar xbar + barG R xd and check e = xbar - X xd obeys
    // e+ = Abar e.
    Vector xbar = random_vector(rng, problem.aug.n_z);
    Vector xd = random_vector(rng, problem.exo.n_states());
    for (int k = 0; k < 200; ++k) {
        const Vector e = xbar - sol.X * xd;
        const Vector xbar_next = abar * xbar + problem.aug.barG * problem.exo.R * xd;
        const Vector xd_next = problem.exo.S * xd;
        const Vector e_next = xbar_next - sol.X * xd_next;
        REQUIRE((e_next - abar * e).norm() <= 1e-9 * (1.0 + e.norm()));
        xbar = xbar_next;
        xd = xd_next;
    }
}

TEST_CASE("evaluate_cost matches the Stein kernel and vanishes at zero state") {
    const auto aug = bare_system(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0),
                                 Matrix::Constant(1, 1, 1.0));
    const Weights w = unit_weights(1, 1);
    const auto iterates = hewer_iterate(aug, w, Matrix::Zero(1, 1));
    const Matrix k_star = iterates.back().K;

    REQUIRE(evaluate_cost(aug, w, k_star, Vector::Zero(1)) == 0.0);

    const Vector e0 = Vector::Constant(1, 0.7);
    const double cost = evaluate_cost(aug, w, k_star, e0);
    REQUIRE(cost == Catch::Approx(0.49 * kScalarPStar).epsilon(1e-6));
}

TEST_CASE("the optimal gain minimizes the evaluated cost") {
    auto rng = make_rng(104);
    const RandomProblem problem = random_tracking_problem(rng, 2);
    const Matrix k0 = initial_stabilizing_gain(problem.aug, problem.weights);
    const Matrix k_star = hewer_iterate(problem.aug, problem.weights, k0).back().K;
    const Vector e0 = random_vector(rng, problem.aug.n_z);
    const double optimal = evaluate_cost(problem.aug, problem.weights, k_star, e0);
    int tested = 0;
    for (int trial = 0; tested < 20 && trial < 200; ++trial) {
        const Matrix k = k_star + random_matrix(rng, k_star.rows(), k_star.cols(), 0.2);
        if (spectral_radius(problem.aug.underA - problem.aug.barB * k) >= 1.0) continue;
        REQUIRE(evaluate_cost(problem.aug, problem.weights, k, e0) >= optimal - 1e-9);
        ++tested;
    }
    REQUIRE(tested == 20);
}

TEST_CASE("evaluate_cost refuses a destabilizing gain") {
    const auto aug = bare_system(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 1.0),
                                 Matrix::Constant(1, 1, 1.0));
    REQUIRE_THROWS_AS(evaluate_cost(aug, unit_weights(1, 1), Matrix::Zero(1, 1), Vector::Ones(1)),
                      std::runtime_error);
}
