#pragma once

#include <sstream>
#include <vector>

#include "rloft/errors.hpp"
#include "rloft/lti.hpp"
#include "rloft/matrix_ops.hpp"

namespace rloft {

/// State cost of the tracking problem expressed on the augmented state:
/// y_e' Q y_e = e' (barC' Q barC) e.
inline Matrix state_cost_matrix(const AugmentedSystem& aug, const Weights& weights) {
    return aug.barC.transpose() * weights.Q * aug.barC;
}

/// One accepted policy-iteration step: gain and its certified value kernel.
struct PolicyIterate {
    int j = 0;
    Matrix K;  // r_m x n_z
    Matrix P;  // n_z x n_z symmetric
};

/// Stabilizing gain by value iteration from P = 0. The recursion needs no
/// initial stabilizing policy, only stabilizability of (underA, barB).
/// Iteration continues past the first stabilizing gain until the closed
/// loop has a real margin, so the downstream Stein solves stay well
/// conditioned.
inline Matrix initial_stabilizing_gain(const AugmentedSystem& aug, const Weights& weights,
                                       int max_iterations = 10000) {
    const Matrix qbar = state_cost_matrix(aug, weights);
    const Matrix& a = aug.underA;
    const Matrix& b = aug.barB;
    Matrix p = Matrix::Zero(aug.n_z, aug.n_z);
    double best_rho = spectral_radius(a);
    if (best_rho < 1.0) return Matrix::Zero(aug.r_m, aug.n_z);
    Matrix best_gain;
    for (int it = 0; it < max_iterations; ++it) {
        const Matrix btp = b.transpose() * p;
        const Matrix gain = (weights.Rbar + btp * b).ldlt().solve(btp * a);
        const double rho = spectral_radius(a - b * gain);
        if (rho < best_rho) {
            best_rho = rho;
            best_gain = gain;
        }
        if (rho < 0.93) return gain;
        p = symmetrize(qbar + a.transpose() * p * a - a.transpose() * p * b * gain);
        if (p.norm() > 1e12) break;  // diverging: pair is not stabilizable
    }
    if (best_rho < 1.0 - 1e-9) return best_gain;
    std::ostringstream msg;
    msg << "initial_stabilizing_gain: no stabilizing gain within " << max_iterations
        << " value-iteration steps (best spectral radius " << best_rho
        << "); (underA, barB) is likely not stabilizable";
    throw ConvergenceError(msg.str());
}

/// Policy iteration alternating a Stein solve with a gain update; monotone
/// and convergent from any stabilizing start. The stop tolerance is
/// relative to the gain norm, since the floating-point floor of the
/// update scales with the kernel.
inline std::vector<PolicyIterate> hewer_iterate(const AugmentedSystem& aug, const Weights& weights,
                                                const Matrix& k0, int max_j = 200,
                                                double tol = 1e-11) {
    const Matrix qbar = state_cost_matrix(aug, weights);
    const Matrix& a = aug.underA;
    const Matrix& b = aug.barB;
    std::vector<PolicyIterate> iterates;
    Matrix k = k0;
    for (int j = 0; j < max_j; ++j) {
        Matrix p;
        try {
            p = solve_stein(a - b * k, qbar + k.transpose() * weights.Rbar * k);
        } catch (const std::runtime_error& err) {
            throw ConvergenceError("hewer_iterate: Stein solve failed at iteration " +
                                   std::to_string(j) + ": " + err.what());
        }
        iterates.push_back({j, k, p});
        const Matrix btp = b.transpose() * p;
        const Matrix k_next = (weights.Rbar + btp * b).ldlt().solve(btp * a);
        const double delta = (k_next - k).norm();
        k = k_next;
        if (delta <= tol * (1.0 + k.norm())) return iterates;
    }
    throw ConvergenceError("hewer_iterate: no convergence within " + std::to_string(max_j) +
                           " iterations");
}

/// Riccati-equation residual at kernel P for the augmented problem.
inline double dare_residual(const AugmentedSystem& aug, const Weights& weights, const Matrix& p) {
    const Matrix& a = aug.underA;
    const Matrix& b = aug.barB;
    const Matrix btp = b.transpose() * p;
    const Matrix gain = (weights.Rbar + btp * b).ldlt().solve(btp * a);
    return (state_cost_matrix(aug, weights) + a.transpose() * p * a - p -
            a.transpose() * p * b * gain)
        .norm();
}

/// Common solution X of Abar X + barG R = X S and barC X = R, solved jointly
/// as one stacked least-squares system. Large residuals signal an
/// assumption violation rather than a numerical failure.
struct RegulatorSolution {
    Matrix X;                    // n_z x dim(S)
    double residual_dynamics = 0.0;  // ||Abar X + barG R - X S||
    double residual_output = 0.0;    // ||barC X - R||

    bool ok(double tol = 1e-8) const {
        return residual_dynamics <= tol && residual_output <= tol;
    }
};

inline RegulatorSolution solve_regulator_equations(const Matrix& abar_closed, const Matrix& barG,
                                                   const Matrix& barC, const Exosystem& exo) {
    const Index n_z = abar_closed.rows();
    const Index q = exo.S.rows();
    const Index r_p = barC.rows();
    const Matrix eye_q = Matrix::Identity(q, q);
    const Matrix eye_n = Matrix::Identity(n_z, n_z);

    // vec form of Abar X - X S = -barG R stacked over barC X = R.
    Matrix lhs(n_z * q + r_p * q, n_z * q);
    lhs.topRows(n_z * q) = kron(eye_q, abar_closed) - kron(exo.S.transpose(), eye_n);
    lhs.bottomRows(r_p * q) = kron(eye_q, barC);
    Vector rhs(n_z * q + r_p * q);
    rhs.head(n_z * q) = vec(Matrix(-barG * exo.R));
    rhs.tail(r_p * q) = vec(exo.R);

    RegulatorSolution sol;
    sol.X = unvec(solve_linear_least_squares(lhs, rhs), n_z, q);
    sol.residual_dynamics = (abar_closed * sol.X + barG * exo.R - sol.X * exo.S).norm();
    sol.residual_output = (barC * sol.X - exo.R).norm();
    return sol;
}

/// Accumulated tracking cost along e+ = (underA - barB K) e from e0, summed
/// until the tail is negligible relative to the running total. Agrees with
/// e0' P_K e0 for the Stein kernel of K.
inline double evaluate_cost(const AugmentedSystem& aug, const Weights& weights, const Matrix& k,
                            const Vector& e0, Index max_horizon = 100000) {
    const Matrix acl = aug.underA - aug.barB * k;
    const double rho = spectral_radius(acl);
    if (rho >= 1.0)
        throw std::runtime_error("evaluate_cost: closed loop not Schur, spectral radius " +
                                 std::to_string(rho));
    double total = 0.0;
    Vector e = e0;
    for (Index step = 0; step < max_horizon; ++step) {
        const Vector ye = aug.barC * e;
        const Vector ue = -k * e;
        const double increment =
            ye.dot(weights.Q * ye) + ue.dot(weights.Rbar * ue);
        total += increment;
        e = acl * e;
        // Geometric tail bound: once increments fall below the target share
        // of the running sum, the remaining tail is below 1e-10 of it.
        if (step > 8 && increment <= 1e-12 * (1.0 + total) * (1.0 - rho)) break;
    }
    return total;
}

}  // namespace rloft
