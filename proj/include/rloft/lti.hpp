#pragma once

#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rloft/errors.hpp"
#include "rloft/matrix_ops.hpp"

namespace rloft {

/// Discrete-time plant x+ = A x + B u, y = C x.
struct Plant {
    Matrix A, B, C;

    Index n_states() const { return A.rows(); }
    Index n_inputs() const { return B.cols(); }
    Index n_outputs() const { return C.rows(); }

    void validate() const {
        if (A.rows() != A.cols()) throw std::invalid_argument("Plant: A must be square");
        if (B.rows() != A.rows()) throw std::invalid_argument("Plant: B row count must match A");
        if (C.cols() != A.rows()) throw std::invalid_argument("Plant: C column count must match A");
        if (A.rows() < 1 || B.cols() < 1 || C.rows() < 1)
            throw std::invalid_argument("Plant: all dimensions must be >= 1");
        if (!all_finite(A) || !all_finite(B) || !all_finite(C))
            throw std::invalid_argument("Plant: non-finite entry");
    }
};

/// Autonomous reference generator xd+ = S xd, yd = R xd, together with the
/// known minimal polynomial of S (descending coefficients, monic).
struct Exosystem {
    Matrix S, R;
    Vector minimal_poly;

    Index n_states() const { return S.rows(); }
    Index min_poly_degree() const { return minimal_poly.size() - 1; }

    void validate() const {
        if (S.rows() != S.cols()) throw std::invalid_argument("Exosystem: S must be square");
        if (R.cols() != S.rows()) throw std::invalid_argument("Exosystem: R column count must match S");
        if (minimal_poly.size() < 2) throw std::invalid_argument("Exosystem: minimal_poly degree must be >= 1");
        if (std::abs(minimal_poly(0) - 1.0) > 1e-12)
            throw std::invalid_argument("Exosystem: minimal_poly must be monic");
        const double annihilation = polynomial_of_matrix(minimal_poly, S).norm();
        if (annihilation > 1e-9 * (1.0 + S.norm()))
            throw std::invalid_argument("Exosystem: minimal_poly does not annihilate S, residual " +
                                        std::to_string(annihilation));
        const ComplexVector roots = polynomial_roots(minimal_poly);
        for (Index i = 0; i < roots.size(); ++i)
            if (std::abs(roots(i)) < 1.0 - 1e-9)
                throw std::invalid_argument("Exosystem: minimal_poly root inside the unit circle");
    }
};

/// Tracking-cost weights; both must be positive definite.
struct Weights {
    Matrix Q, Rbar;

    void validate(Index r_p, Index r_m) const {
        if (Q.rows() != r_p || Q.cols() != r_p) throw std::invalid_argument("Weights: Q must be r_p x r_p");
        if (Rbar.rows() != r_m || Rbar.cols() != r_m)
            throw std::invalid_argument("Weights: Rbar must be r_m x r_m");
        if (min_symmetric_eigenvalue(Q) <= 1e-12)
            throw std::invalid_argument("Weights: Q must be positive definite");
        if (min_symmetric_eigenvalue(Rbar) <= 1e-12)
            throw std::invalid_argument("Weights: Rbar must be positive definite");
    }
};

/// Replicated reference-dynamics block (F, G) driven by the output error:
/// one companion copy of the minimal polynomial per output channel.
struct InternalModel {
    Matrix F, G;
    Index copies = 0;
    Index block_dim = 0;

    Index dim() const { return F.rows(); }
};

inline InternalModel build_internal_model(const Exosystem& exo, Index r_p) {
    if (r_p < 1) throw std::invalid_argument("build_internal_model: r_p must be >= 1");
    if (std::abs(exo.minimal_poly(0) - 1.0) > 1e-12)
        throw std::invalid_argument("build_internal_model: minimal polynomial must be monic");
    const Matrix beta = companion(exo.minimal_poly);
    const Index d = beta.rows();
    InternalModel model;
    model.copies = r_p;
    model.block_dim = d;
    model.F = Matrix::Zero(r_p * d, r_p * d);
    model.G = Matrix::Zero(r_p * d, r_p);
    for (Index c = 0; c < r_p; ++c) {
        model.F.block(c * d, c * d, d, d) = beta;
        model.G(c * d + d - 1, c) = 1.0;
    }
    return model;
}

/// Draws a feedforward gain T (r_m x dim(F)) from a seeded uniform [-1, 1]
/// distribution until (F, T) is observable; at most ten draws. Requires at
/// least as many outputs as inputs, the condition under which an observable
/// (F, T) preserves detectability of the augmented pair.
inline Matrix choose_feedforward_gain(const InternalModel& model, Index r_m, std::uint64_t seed) {
    if (r_m < 1) throw std::invalid_argument("choose_feedforward_gain: r_m must be >= 1");
    if (model.copies < r_m)
        throw std::invalid_argument("choose_feedforward_gain: requires r_p >= r_m");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const Index n = model.dim();
    for (int attempt = 0; attempt < 10; ++attempt) {
        Matrix t(r_m, n);
        for (Index i = 0; i < r_m; ++i)
            for (Index j = 0; j < n; ++j) t(i, j) = unif(rng);
        if (svd_rank(observability_matrix(model.F, t)) == n) return t;
    }
    throw std::runtime_error("choose_feedforward_gain: no observable (F, T) after 10 draws, seed " +
                             std::to_string(seed));
}

/// The composed open-loop system acted on by the feedback gain:
///   underA = [[A, -B T], [-G C, F]],  barB = [B; 0],
///   barC = [C, 0],                    barG = [0; G].
struct AugmentedSystem {
    Matrix underA, barB, barC, barG;
    Matrix F, G, T;
    Index n_z = 0;
    Index r_n = 0, r_m = 0, r_p = 0;
    Index im_dim = 0;
};

inline AugmentedSystem build_augmented(const Plant& plant, const InternalModel& model,
                                       const Matrix& t) {
    plant.validate();
    const Index r_n = plant.n_states();
    const Index r_m = plant.n_inputs();
    const Index r_p = plant.n_outputs();
    const Index q = model.dim();
    if (model.G.cols() != r_p)
        throw std::invalid_argument("build_augmented: internal model copies must match plant outputs");
    if (t.rows() != r_m || t.cols() != q)
        throw std::invalid_argument("build_augmented: T must be r_m x dim(F)");

    AugmentedSystem aug;
    aug.r_n = r_n;
    aug.r_m = r_m;
    aug.r_p = r_p;
    aug.im_dim = q;
    aug.n_z = r_n + q;
    aug.F = model.F;
    aug.G = model.G;
    aug.T = t;

    aug.underA = Matrix::Zero(aug.n_z, aug.n_z);
    aug.underA.topLeftCorner(r_n, r_n) = plant.A;
    aug.underA.topRightCorner(r_n, q) = -plant.B * t;
    aug.underA.bottomLeftCorner(q, r_n) = -model.G * plant.C;
    aug.underA.bottomRightCorner(q, q) = model.F;

    aug.barB = Matrix::Zero(aug.n_z, r_m);
    aug.barB.topRows(r_n) = plant.B;

    aug.barC = Matrix::Zero(r_p, aug.n_z);
    aug.barC.leftCols(r_n) = plant.C;

    aug.barG = Matrix::Zero(aug.n_z, r_p);
    aug.barG.bottomRows(q) = model.G;
    return aug;
}

struct AssumptionReport {
    bool plant_minimal = false;       // (A,B) controllable and (A,C) observable
    bool reference_nondecaying = false;  // eigenvalues of S on or outside the unit circle
    bool minimal_poly_valid = false;  // supplied polynomial annihilates S
    bool no_blocking_zeros = false;   // full Rosenbrock rank at every eigenvalue of S
    std::vector<std::string> diagnostics;

    bool all_pass() const {
        return plant_minimal && reference_nondecaying && minimal_poly_valid && no_blocking_zeros;
    }
};

inline AssumptionReport check_assumptions(const Plant& plant, const Exosystem& exo) {
    plant.validate();
    AssumptionReport report;
    const Index r_n = plant.n_states();
    const Index r_m = plant.n_inputs();
    const Index r_p = plant.n_outputs();

    const Index ctrb_rank = svd_rank(controllability_matrix(plant.A, plant.B));
    const Index obsv_rank = svd_rank(observability_matrix(plant.A, plant.C));
    report.plant_minimal = (ctrb_rank == r_n) && (obsv_rank == r_n);
    if (!report.plant_minimal) {
        std::ostringstream msg;
        msg << "plant not minimal: ctrb rank " << ctrb_rank << "/" << r_n << ", obsv rank "
            << obsv_rank << "/" << r_n;
        report.diagnostics.push_back(msg.str());
    }

    const ComplexVector s_eigs = eigenvalues(exo.S);
    report.reference_nondecaying = true;
    for (Index i = 0; i < s_eigs.size(); ++i) {
        if (std::abs(s_eigs(i)) < 1.0 - 1e-9) {
            report.reference_nondecaying = false;
            std::ostringstream msg;
            msg << "reference mode inside unit circle: |" << s_eigs(i) << "| = "
                << std::abs(s_eigs(i));
            report.diagnostics.push_back(msg.str());
        }
    }

    const double annihilation = polynomial_of_matrix(exo.minimal_poly, exo.S).norm();
    report.minimal_poly_valid = annihilation <= 1e-9 * (1.0 + exo.S.norm());
    if (!report.minimal_poly_valid)
        report.diagnostics.push_back("minimal polynomial residual " + std::to_string(annihilation));

    // Rosenbrock matrix [[A - lambda I, B], [C, 0]] must keep rank r_n + r_p
    // at every reference mode; a drop means a transmission zero collides with
    // the reference dynamics.
    report.no_blocking_zeros = true;
    for (Index i = 0; i < s_eigs.size(); ++i) {
        ComplexMatrix rosen = ComplexMatrix::Zero(r_n + r_p, r_n + r_m);
        rosen.topLeftCorner(r_n, r_n) =
            plant.A.cast<std::complex<double>>() - s_eigs(i) * ComplexMatrix::Identity(r_n, r_n);
        rosen.topRightCorner(r_n, r_m) = plant.B.cast<std::complex<double>>();
        rosen.bottomLeftCorner(r_p, r_n) = plant.C.cast<std::complex<double>>();
        const Index rank = complex_rank(rosen);
        if (rank != r_n + r_p) {
            report.no_blocking_zeros = false;
            std::ostringstream msg;
            msg << "transmission zero at reference mode " << s_eigs(i) << ": Rosenbrock rank "
                << rank << " < " << (r_n + r_p);
            report.diagnostics.push_back(msg.str());
        }
    }
    return report;
}

/// Stabilizability / detectability of the augmented pair, checked by PBH
/// tests at every non-Schur eigenvalue of underA.
struct StructureReport {
    bool stabilizable = false;
    bool detectable = false;
    std::vector<std::string> diagnostics;
};

inline StructureReport check_augmented_structure(const AugmentedSystem& aug) {
    StructureReport report;
    report.stabilizable = true;
    report.detectable = true;
    const ComplexVector modes = eigenvalues(aug.underA);
    for (Index i = 0; i < modes.size(); ++i) {
        if (std::abs(modes(i)) < 1.0 - 1e-9) continue;
        if (pbh_rank_test(aug.underA, aug.barB, modes(i)) != aug.n_z) {
            report.stabilizable = false;
            std::ostringstream msg;
            msg << "uncontrollable non-Schur mode " << modes(i);
            report.diagnostics.push_back(msg.str());
        }
        if (pbh_rank_test(aug.underA.transpose(), aug.barC.transpose(), modes(i)) != aug.n_z) {
            report.detectable = false;
            std::ostringstream msg;
            msg << "unobservable non-Schur mode " << modes(i);
            report.diagnostics.push_back(msg.str());
        }
    }
    return report;
}

/// Open-loop simulation record of plant, reference, and tracking error.
struct Trajectory {
    std::vector<Index> k;
    std::vector<Vector> x, y, x_d, y_d, y_e, u;
    bool truncated = false;
    std::string diagnostic;

    Index length() const { return static_cast<Index>(k.size()); }
};

inline Trajectory simulate(const Plant& plant, const Exosystem& exo,
                           const std::function<Vector(Index)>& input_provider, const Vector& x0,
                           const Vector& xd0, Index horizon) {
    plant.validate();
    if (horizon < 1) throw std::invalid_argument("simulate: horizon must be >= 1");
    if (x0.size() != plant.n_states()) throw std::invalid_argument("simulate: x0 size mismatch");
    if (xd0.size() != exo.n_states()) throw std::invalid_argument("simulate: xd0 size mismatch");

    Trajectory traj;
    Vector x = x0;
    Vector xd = xd0;
    for (Index k = 0; k < horizon; ++k) {
        const Vector u = input_provider(k);
        const Vector y = plant.C * x;
        const Vector yd = exo.R * xd;
        if (!all_finite(x) || !all_finite(u)) {
            traj.truncated = true;
            traj.diagnostic = "non-finite state or input at step " + std::to_string(k);
            break;
        }
        traj.k.push_back(k);
        traj.x.push_back(x);
        traj.y.push_back(y);
        traj.x_d.push_back(xd);
        traj.y_d.push_back(yd);
        traj.y_e.push_back(y - yd);
        traj.u.push_back(u);
        x = plant.A * x + plant.B * u;
        xd = exo.S * xd;
    }
    return traj;
}

}  // namespace rloft
