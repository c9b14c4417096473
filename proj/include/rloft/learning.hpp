#pragma once

#include <random>
#include <sstream>
#include <vector>

#include "rloft/errors.hpp"
#include "rloft/lti.hpp"
#include "rloft/matrix_ops.hpp"
#include "rloft/reconstruction.hpp"
#include "rloft/riccati.hpp"

namespace rloft {

constexpr double kStateDivergenceBound = 1e8;

/// Sum-of-sinusoids probing signal with a small uniform noise floor.
struct ExcitationSpec {
    int n_sines = 12;
    double amp = 1.0;
    double freq_low = 0.05;  // radians per step
    double freq_high = 3.0;
    double noise_amp = 0.1;
    std::uint64_t seed = 0;
};

/// Materialized excitation: every channel precomputed over [0, length), so a
/// run is replayable from the spec alone.
class ExcitationSignal {
public:
    ExcitationSignal(const ExcitationSpec& spec, Index channels, Index length,
                     std::uint64_t stream_salt)
        : samples_(Matrix::Zero(channels, std::max<Index>(length, 1))) {
        std::mt19937_64 rng(spec.seed ^ stream_salt);
        std::uniform_real_distribution<double> freq(spec.freq_low, spec.freq_high);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
        std::uniform_real_distribution<double> noise(-1.0, 1.0);
        const double scale =
            spec.n_sines > 0 ? spec.amp / std::sqrt(static_cast<double>(spec.n_sines)) : 0.0;
        for (Index c = 0; c < channels; ++c) {
            std::vector<double> freqs(spec.n_sines), phases(spec.n_sines);
            for (int s = 0; s < spec.n_sines; ++s) {
                freqs[s] = freq(rng);
                phases[s] = phase(rng);
            }
            for (Index k = 0; k < samples_.cols(); ++k) {
                double v = 0.0;
                for (int s = 0; s < spec.n_sines; ++s)
                    v += std::sin(freqs[s] * static_cast<double>(k) + phases[s]);
                samples_(c, k) = scale * v + spec.noise_amp * noise(rng);
            }
        }
    }

    Vector at(Index k) const { return samples_.col(k); }

private:
    Matrix samples_;
};

enum class ThetaSource { kExploration, kReference };

/// Behavior-policy run configuration. The logged input is the probing
/// channel u_logged = -K_o0 zeta + xi; the plant receives u_logged - T zbar.
/// Splitting the input this way is what makes the augmented-state data
/// system hold with underA carrying the -B T block.
struct BehaviorRunConfig {
    Matrix K_o0;  // r_m x stacked filter dimension
    ThetaSource theta_source = ThetaSource::kExploration;
    Index k0 = 0;  // first logged sample
    Index kf = 0;  // last logged sample (inclusive)
    Vector x0;     // plant initial state
    Vector xd0;    // exosystem initial state
};

/// Samples collected over [k0, kf] plus the run's final states, so
/// deployment can continue without a reset. The augmented-state history is
/// kept for oracle checks only; the learner never reads it.
struct DataLog {
    Index k0 = 0, kf = 0;
    std::vector<Vector> zeta;       // stacked filter state at k
    std::vector<Vector> zeta_next;  // at k+1
    std::vector<Vector> u_logged;   // probing input at k
    std::vector<Vector> theta;      // reference-channel signal at k
    std::vector<Vector> y;          // plant output at k

    std::vector<Vector> r_state;  // [x; zbar] at k (oracle diagnostics)
    std::vector<Vector> y_d;      // reference output at k (diagnostics)

    Vector x_final, zbar_final, xd_final;
    Vector zeta_u_final, zeta_y_final, zeta_th_final;

    Index size() const { return static_cast<Index>(zeta.size()); }

    /// Augmented state one step past sample i (contiguous indexing).
    Vector r_state_next(Index i) const {
        if (i + 1 < size()) return r_state[i + 1];
        Vector r(x_final.size() + zbar_final.size());
        r << x_final, zbar_final;
        return r;
    }
};

inline DataLog run_behavior(const Plant& plant, const Exosystem& exo, const AugmentedSystem& aug,
                            const FilterSpec& spec, const ExcitationSpec& excitation,
                            const BehaviorRunConfig& run) {
    if (run.k0 >= run.kf) throw std::invalid_argument("run_behavior: need k0 < kf");
    if (run.K_o0.rows() != aug.r_m ||
        run.K_o0.cols() != spec.order() * (aug.r_m + 2 * aug.r_p))
        throw std::invalid_argument("run_behavior: K_o0 dimension mismatch");
    if (run.x0.size() != plant.n_states() || run.xd0.size() != exo.n_states())
        throw std::invalid_argument("run_behavior: initial state dimension mismatch");

    FilterBank bank(spec, aug.r_m, aug.r_p);
    const Index horizon = run.kf + 1;
    ExcitationSignal xi(excitation, aug.r_m, horizon, /*stream_salt=*/0x9e3779b97f4a7c15ull);
    ExcitationSignal th_probe(excitation, aug.r_p, horizon, /*stream_salt=*/0xc2b2ae3d27d4eb4full);

    DataLog log;
    log.k0 = run.k0;
    log.kf = run.kf;

    Vector x = run.x0;
    Vector zbar = Vector::Zero(aug.im_dim);
    Vector xd = run.xd0;

    for (Index k = 0; k <= run.kf; ++k) {
        const Vector y = plant.C * x;
        const Vector y_d = exo.R * xd;
        const Vector theta =
            run.theta_source == ThetaSource::kExploration ? th_probe.at(k) : y_d;
        const Vector zeta = bank.stacked();
        const Vector u_logged = -run.K_o0 * zeta + xi.at(k);
        const Vector u_plant = u_logged - aug.T * zbar;

        if (x.lpNorm<Eigen::Infinity>() > kStateDivergenceBound ||
            zbar.lpNorm<Eigen::Infinity>() > kStateDivergenceBound ||
            zeta.lpNorm<Eigen::Infinity>() > kStateDivergenceBound)
            throw InstabilityError("run_behavior: state norm exceeded divergence bound at step " +
                                   std::to_string(k) + "; behavior policy is not stabilizing");

        Vector r(aug.n_z);
        r << x, zbar;

        const Vector x_next = plant.A * x + plant.B * u_plant;
        const Vector zbar_next = aug.F * zbar - aug.G * y + aug.G * theta;
        bank.step(u_logged, y, theta);

        if (k >= run.k0) {
            log.zeta.push_back(zeta);
            log.zeta_next.push_back(bank.stacked());
            log.u_logged.push_back(u_logged);
            log.theta.push_back(theta);
            log.y.push_back(y);
            log.r_state.push_back(r);
            log.y_d.push_back(y_d);
        }

        x = x_next;
        zbar = zbar_next;
        xd = exo.S * xd;
    }

    log.x_final = x;
    log.zbar_final = zbar;
    log.xd_final = xd;
    log.zeta_u_final = bank.zeta_u();
    log.zeta_y_final = bank.zeta_y();
    log.zeta_th_final = bank.zeta_th();
    return log;
}

/// Column layout of the stacked unknown-kernel vector
/// [vecs(L_P), vec(L_1), vecs(L_2), vec(L_3), vec(L_4), vecs(L_5)].
struct KernelLayout {
    Index n_zeta = 0, r_m = 0, r_p = 0;

    Index size_P() const { return n_zeta * (n_zeta + 1) / 2; }
    Index size_1() const { return n_zeta * r_m; }
    Index size_2() const { return r_m * (r_m + 1) / 2; }
    Index size_3() const { return n_zeta * r_p; }
    Index size_4() const { return r_p * r_m; }
    Index size_5() const { return r_p * (r_p + 1) / 2; }

    Index off_P() const { return 0; }
    Index off_1() const { return size_P(); }
    Index off_2() const { return off_1() + size_1(); }
    Index off_3() const { return off_2() + size_2(); }
    Index off_4() const { return off_3() + size_3(); }
    Index off_5() const { return off_4() + size_4(); }
    Index total() const { return off_5() + size_5(); }
};

/// Quadratic value kernels expressed in measurable coordinates, plus the
/// output-feedback gain induced by them.
struct LearnedKernels {
    Matrix L_P;  // n_zeta x n_zeta symmetric (min-norm representative)
    Matrix L_1;  // n_zeta x r_m
    Matrix L_2;  // r_m x r_m symmetric
    Matrix L_3;  // n_zeta x r_p
    Matrix L_4;  // r_p x r_m
    Matrix L_5;  // r_p x r_p symmetric
    Matrix K_o;  // r_m x n_zeta, empty until a policy update

    Vector packed(const KernelLayout& layout) const {
        Vector v(layout.total());
        v.segment(layout.off_P(), layout.size_P()) = vecs(L_P);
        v.segment(layout.off_1(), layout.size_1()) = vec(L_1);
        v.segment(layout.off_2(), layout.size_2()) = vecs(L_2);
        v.segment(layout.off_3(), layout.size_3()) = vec(L_3);
        v.segment(layout.off_4(), layout.size_4()) = vec(L_4);
        v.segment(layout.off_5(), layout.size_5()) = vecs(L_5);
        return v;
    }

    static LearnedKernels unpack(const Vector& v, const KernelLayout& layout) {
        if (v.size() != layout.total())
            throw std::invalid_argument("LearnedKernels::unpack: length mismatch");
        LearnedKernels k;
        k.L_P = vecs_inverse(v.segment(layout.off_P(), layout.size_P()), layout.n_zeta);
        k.L_1 = unvec(v.segment(layout.off_1(), layout.size_1()), layout.n_zeta, layout.r_m);
        k.L_2 = vecs_inverse(v.segment(layout.off_2(), layout.size_2()), layout.r_m);
        k.L_3 = unvec(v.segment(layout.off_3(), layout.size_3()), layout.n_zeta, layout.r_p);
        k.L_4 = unvec(v.segment(layout.off_4(), layout.size_4()), layout.r_p, layout.r_m);
        k.L_5 = vecs_inverse(v.segment(layout.off_5(), layout.size_5()), layout.r_p);
        return k;
    }
};

/// One linear equation per sample in the stacked kernel unknowns, together
/// with the raw excitation-richness blocks used by the rank check.
struct RegressorSystem {
    Matrix rho;
    Vector nu;
    KernelLayout layout;
    Matrix data_blocks;  // [zeta (x) zeta | u (x) zeta | vecv(u) | th (x) zeta | u (x) th | vecv(th)]
};

/// Builds the measurable linear system satisfied by the kernels of the
/// policy with output-feedback gain K_oj. Per sample, with w = u + K_oj zeta:
///
///   (vecv(zeta+) - vecv(zeta))' vecs(L_P)
///     - 2 (w (x) zeta)' vec(L_1)
///     + (vecv(K_oj zeta) - vecv(u))' vecs(L_2)
///     - 2 (th (x) zeta)' vec(L_3)
///     - 2 (u (x) th)' vec(L_4)
///     - vecv(th)' vecs(L_5)
///   = -y' Q y - (K_oj zeta)' Rbar (K_oj zeta)
///
/// which the model-based kernels satisfy exactly once the reconstruction
/// error has died out.
inline RegressorSystem assemble_regressors(const DataLog& log, const Matrix& k_oj,
                                           const Weights& weights) {
    const Index n = log.size();
    if (n == 0) throw std::invalid_argument("assemble_regressors: empty data log");
    KernelLayout layout;
    layout.n_zeta = log.zeta[0].size();
    layout.r_m = log.u_logged[0].size();
    layout.r_p = log.theta[0].size();
    if (k_oj.rows() != layout.r_m || k_oj.cols() != layout.n_zeta)
        throw std::invalid_argument("assemble_regressors: gain dimension mismatch");
    if (n < layout.total())
        throw std::invalid_argument("assemble_regressors: " + std::to_string(n) +
                                    " samples for " + std::to_string(layout.total()) +
                                    " unknowns");

    RegressorSystem reg;
    reg.layout = layout;
    reg.rho = Matrix(n, layout.total());
    reg.nu = Vector(n);
    const Index data_cols = layout.n_zeta * layout.n_zeta + layout.n_zeta * layout.r_m +
                            layout.size_2() + layout.n_zeta * layout.r_p +
                            layout.r_m * layout.r_p + layout.size_5();
    reg.data_blocks = Matrix(n, data_cols);

    for (Index i = 0; i < n; ++i) {
        const Vector& zeta = log.zeta[i];
        const Vector& zeta_next = log.zeta_next[i];
        const Vector& u = log.u_logged[i];
        const Vector& th = log.theta[i];
        const Vector& y = log.y[i];
        const Vector kz = k_oj * zeta;
        const Vector w = u + kz;

        reg.rho.block(i, layout.off_P(), 1, layout.size_P()) =
            (vecv(zeta_next) - vecv(zeta)).transpose();
        reg.rho.block(i, layout.off_1(), 1, layout.size_1()) =
            -2.0 * kron_vec(w, zeta).transpose();
        reg.rho.block(i, layout.off_2(), 1, layout.size_2()) = (vecv(kz) - vecv(u)).transpose();
        reg.rho.block(i, layout.off_3(), 1, layout.size_3()) =
            -2.0 * kron_vec(th, zeta).transpose();
        reg.rho.block(i, layout.off_4(), 1, layout.size_4()) =
            -2.0 * kron_vec(u, th).transpose();
        reg.rho.block(i, layout.off_5(), 1, layout.size_5()) = -vecv(th).transpose();

        reg.nu(i) = -y.dot(weights.Q * y) - kz.dot(weights.Rbar * kz);

        Index c = 0;
        reg.data_blocks.block(i, c, 1, layout.n_zeta * layout.n_zeta) =
            kron_vec(zeta, zeta).transpose();
        c += layout.n_zeta * layout.n_zeta;
        reg.data_blocks.block(i, c, 1, layout.n_zeta * layout.r_m) =
            kron_vec(u, zeta).transpose();
        c += layout.n_zeta * layout.r_m;
        reg.data_blocks.block(i, c, 1, layout.size_2()) = vecv(u).transpose();
        c += layout.size_2();
        reg.data_blocks.block(i, c, 1, layout.n_zeta * layout.r_p) =
            kron_vec(th, zeta).transpose();
        c += layout.n_zeta * layout.r_p;
        reg.data_blocks.block(i, c, 1, layout.r_m * layout.r_p) = kron_vec(u, th).transpose();
        c += layout.r_m * layout.r_p;
        reg.data_blocks.block(i, c, 1, layout.size_5()) = vecv(th).transpose();
    }
    return reg;
}

struct RankConditionReport {
    Index rank = 0;
    Index required = 0;
    bool ok = false;
};

/// Excitation-richness check: the raw data blocks must reach the unknown
/// count, which is also the largest rank they can attain.
inline RankConditionReport check_rank_condition(const RegressorSystem& reg) {
    RankConditionReport report;
    report.required = reg.layout.total();
    report.rank = svd_rank(reg.data_blocks);
    report.ok = report.rank == report.required;
    return report;
}

/// Minimum-norm least-squares kernel solve. The blocks L_1 ... L_5 are
/// uniquely determined under the rank condition; L_P is the min-norm
/// representative of its equivalence class.
inline LearnedKernels solve_kernels_direct(const RegressorSystem& reg) {
    const RankConditionReport rank = check_rank_condition(reg);
    if (!rank.ok)
        throw RankConditionError("solve_kernels_direct: data rank " + std::to_string(rank.rank) +
                                 " below required " + std::to_string(rank.required));
    return LearnedKernels::unpack(solve_linear_least_squares(reg.rho, reg.nu), reg.layout);
}

/// Gradient iteration v(s+1) = v(s) - eps rho'(rho v(s) - nu) from v(0) = 0
/// with eps a fraction of the 2 / rho(rho' rho) divergence bound; stops at
/// the first iterate with ||v(s+1) - v(s)|| <= tol.
///
/// The recursion is linear, so the s-th iterate is evaluated in closed form
/// through the eigendecomposition of rho' rho: with c = U' rho' nu and
/// t_i = 1 - eps lambda_i,
///
///   v(s) = U diag((1 - t_i^s) / lambda_i) c,
///   ||v(s+1) - v(s)|| = eps ||diag(t_i^s) c||,
///
/// which reproduces the exact iterate sequence without the per-step
/// round-off of running the recursion, and reaches the large s demanded by
/// ill-conditioned data in constant time.
inline LearnedKernels solve_kernels_gradient(const RegressorSystem& reg, double eps_fraction,
                                             long max_s, double tol) {
    if (eps_fraction <= 0.0 || eps_fraction >= 1.0)
        throw std::invalid_argument(
            "solve_kernels_gradient: eps_fraction must lie in (0, 1); step sizes at or above "
            "2 / rho(rho' rho) are divergent");
    const RankConditionReport rank = check_rank_condition(reg);
    if (!rank.ok)
        throw RankConditionError("solve_kernels_gradient: data rank " + std::to_string(rank.rank) +
                                 " below required " + std::to_string(rank.required));

    const Matrix gram = reg.rho.transpose() * reg.rho;
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("solve_kernels_gradient: eigendecomposition failed");
    const Vector lambda = es.eigenvalues();
    const double gram_radius = lambda.maxCoeff();
    if (gram_radius <= 0.0)
        throw std::invalid_argument("solve_kernels_gradient: zero regressor matrix");
    const double eps = eps_fraction * 2.0 / gram_radius;
    const Vector c = es.eigenvectors().transpose() * (reg.rho.transpose() * reg.nu);

    const auto step_norm = [&](double s) {
        double sum = 0.0;
        for (Index i = 0; i < lambda.size(); ++i) {
            const double t = std::abs(1.0 - eps * std::max(lambda(i), 0.0));
            if (t <= 0.0) continue;
            const double term = std::exp(s * std::log(t)) * c(i);
            sum += term * term;
        }
        return eps * std::sqrt(sum);
    };

    // First s with ||v(s+1) - v(s)|| <= tol, by doubling then bisection.
    long s_stop = 0;
    if (step_norm(0.0) > tol) {
        long lo = 0, hi = 1;
        while (step_norm(static_cast<double>(hi)) > tol) {
            lo = hi;
            hi *= 2;
            if (hi > max_s)
                throw ConvergenceError("solve_kernels_gradient: no convergence within " +
                                       std::to_string(max_s) + " iterations");
        }
        while (lo + 1 < hi) {
            const long mid = lo + (hi - lo) / 2;
            if (step_norm(static_cast<double>(mid)) > tol)
                lo = mid;
            else
                hi = mid;
        }
        s_stop = hi;
    }

    // The accepted iterate is v(s_stop + 1).
    const double s_final = static_cast<double>(s_stop) + 1.0;
    Vector coeff(lambda.size());
    for (Index i = 0; i < lambda.size(); ++i) {
        const double li = std::max(lambda(i), 0.0);
        const double t = 1.0 - eps * li;
        if (li <= gram_radius * 1e-15) {
            coeff(i) = eps * s_final;  // limit of (1 - t^s) / lambda as lambda -> 0
        } else if (t > 0.0) {
            coeff(i) = -std::expm1(s_final * std::log1p(-eps * li)) / li;
        } else {
            coeff(i) = (1.0 - std::pow(t, s_final)) / li;
        }
    }
    const Vector v = es.eigenvectors() * coeff.cwiseProduct(c).matrix();
    return LearnedKernels::unpack(v, reg.layout);
}

/// Policy improvement from learned kernels: K_o+ = (Rbar + L_2)^{-1} L_1'.
inline Matrix policy_update(const LearnedKernels& kernels, const Matrix& rbar) {
    const Matrix m = symmetrize(rbar + kernels.L_2);
    if (min_symmetric_eigenvalue(m) <= 1e-12)
        throw ConvergenceError(
            "policy_update: Rbar + L_2 is not positive definite; kernels are corrupted");
    return m.ldlt().solve(kernels.L_1.transpose());
}

/// Model-based counterpart of the learned kernels for a given value kernel
/// P, used only to certify the learner.
inline LearnedKernels model_based_kernels(const AugmentedSystem& aug, const Matrix& mbar,
                                          const Matrix& p) {
    LearnedKernels k;
    const Matrix atp = aug.underA.transpose() * p;
    k.L_P = symmetrize(mbar.transpose() * p * mbar);
    k.L_1 = mbar.transpose() * atp * aug.barB;
    k.L_2 = symmetrize(aug.barB.transpose() * p * aug.barB);
    k.L_3 = mbar.transpose() * atp * aug.barG;
    k.L_4 = aug.barG.transpose() * p * aug.barB;
    k.L_5 = symmetrize(aug.barG.transpose() * p * aug.barG);
    return k;
}

enum class KernelSolver { kDirect, kGradient };

struct LearnOptions {
    double stop_tol = 1e-6;
    int max_policy_iterations = 50;
    KernelSolver solver = KernelSolver::kDirect;
    double gradient_eps_fraction = 0.99;
    long gradient_max_s = 1000000000000;
    double gradient_tol = 1e-13;
};

struct LearnTraceEntry {
    int j = 0;
    double gain_delta = 0.0;
    LearnedKernels kernels;
    Matrix K_o;  // gain after this update
};

struct LearnResult {
    Matrix K_o_star;
    std::vector<LearnTraceEntry> trace;
    DataLog log;
    int iterations = 0;
};

/// Full learning loop: one behavior run, then repeated kernel solves and
/// policy updates against the same fixed log until the gain settles.
inline LearnResult learn(const Plant& plant, const Exosystem& exo, const AugmentedSystem& aug,
                         const FilterSpec& spec, const Weights& weights,
                         const ExcitationSpec& excitation, const BehaviorRunConfig& run,
                         const LearnOptions& options = {}) {
    LearnResult result;
    result.log = run_behavior(plant, exo, aug, spec, excitation, run);

    Matrix k_o = run.K_o0;
    for (int j = 0; j < options.max_policy_iterations; ++j) {
        const RegressorSystem reg = assemble_regressors(result.log, k_o, weights);
        LearnedKernels kernels =
            options.solver == KernelSolver::kDirect
                ? solve_kernels_direct(reg)
                : solve_kernels_gradient(reg, options.gradient_eps_fraction,
                                         options.gradient_max_s, options.gradient_tol);
        const Matrix k_next = policy_update(kernels, weights.Rbar);
        kernels.K_o = k_next;
        const double delta = (k_next - k_o).norm();
        result.trace.push_back({j, delta, std::move(kernels), k_next});
        k_o = k_next;
        result.iterations = j + 1;
        if (delta <= options.stop_tol) {
            result.K_o_star = k_o;
            return result;
        }
    }
    throw ConvergenceError("learn: gain did not settle within " +
                           std::to_string(options.max_policy_iterations) +
                           " policy iterations");
}

/// Closed-loop state needed to continue from a finished behavior run.
struct DeployState {
    Vector x, zbar, xd;
    Vector zeta_u, zeta_y, zeta_th;

    static DeployState from_log(const DataLog& log) {
        return {log.x_final, log.zbar_final, log.xd_final,
                log.zeta_u_final, log.zeta_y_final, log.zeta_th_final};
    }
};

/// Runs the learned controller u = -K_o zeta - T zbar with the reference
/// output driving both the error integrator and the reference filter
/// channel. Filters and zbar continue from the supplied state; nothing is
/// reset.
inline Trajectory deploy(const Plant& plant, const Exosystem& exo, const AugmentedSystem& aug,
                         const FilterSpec& spec, const Matrix& k_o_star, DeployState state,
                         Index horizon) {
    FilterBank bank(spec, aug.r_m, aug.r_p);
    bank.set_states(state.zeta_u, state.zeta_y, state.zeta_th);

    Trajectory traj;
    Vector x = state.x;
    Vector zbar = state.zbar;
    Vector xd = state.xd;
    for (Index k = 0; k < horizon; ++k) {
        const Vector y = plant.C * x;
        const Vector y_d = exo.R * xd;
        const Vector theta = y_d;
        const Vector zeta = bank.stacked();
        const Vector u_logged = -k_o_star * zeta;
        const Vector u = u_logged - aug.T * zbar;

        if (x.lpNorm<Eigen::Infinity>() > kStateDivergenceBound ||
            zbar.lpNorm<Eigen::Infinity>() > kStateDivergenceBound)
            throw InstabilityError("deploy: state norm exceeded divergence bound at step " +
                                   std::to_string(k));

        traj.k.push_back(k);
        traj.x.push_back(x);
        traj.y.push_back(y);
        traj.x_d.push_back(xd);
        traj.y_d.push_back(y_d);
        traj.y_e.push_back(y - y_d);
        traj.u.push_back(u);

        x = plant.A * x + plant.B * u;
        zbar = aug.F * zbar - aug.G * y + aug.G * theta;
        xd = exo.S * xd;
        bank.step(u_logged, y, theta);
    }
    return traj;
}

}  // namespace rloft
