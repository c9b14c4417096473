#pragma once

#include <random>
#include <sstream>
#include <vector>

#include "rloft/errors.hpp"
#include "rloft/lti.hpp"
#include "rloft/matrix_ops.hpp"

namespace rloft {

/// Companion-form filter shared by the input, output, and reference
/// channels. `d` holds the non-leading coefficients of the monic Schur
/// polynomial z^n + d1 z^{n-1} + ... + dn; state slot p of each channel
/// carries the signal z^{p-1} / d(z) applied to that channel.
struct FilterSpec {
    Vector d;        // d1 ... dn
    Matrix A_zeta;   // companion matrix, last row = -[dn ... d1]
    Vector b;        // [0, ..., 0, 1]'

    Index order() const { return A_zeta.rows(); }

    Vector monic_coeffs() const {
        Vector coeffs(d.size() + 1);
        coeffs(0) = 1.0;
        coeffs.tail(d.size()) = d;
        return coeffs;
    }

    void validate() const {
        const ComplexVector roots = polynomial_roots(monic_coeffs());
        for (Index i = 0; i < roots.size(); ++i)
            if (std::abs(roots(i)) >= 1.0)
                throw std::invalid_argument("FilterSpec: root on or outside the unit circle");
    }
};

inline FilterSpec make_filter_spec(const Vector& d) {
    FilterSpec spec;
    spec.d = d;
    spec.A_zeta = companion(spec.monic_coeffs());
    spec.b = Vector::Zero(d.size());
    spec.b(d.size() - 1) = 1.0;
    spec.validate();
    return spec;
}

/// Deadbeat filter z^n: the filter state is exactly the last n samples of
/// the channel, and the reconstruction error vanishes after n steps.
inline FilterSpec make_deadbeat_filter(Index n) {
    if (n < 1) throw std::invalid_argument("make_deadbeat_filter: order must be >= 1");
    return make_filter_spec(Vector::Zero(n));
}

/// Filter with all n roots at modulus rho: distinct conjugate pairs (plus one
/// real root when n is odd), so the decay rate of the reconstruction error
/// is rho per step without repeated-root growth.
inline FilterSpec make_radius_filter(Index n, double rho) {
    if (n < 1) throw std::invalid_argument("make_radius_filter: order must be >= 1");
    if (rho <= 0.0 || rho >= 1.0)
        throw std::invalid_argument("make_radius_filter: rho must lie in (0, 1)");
    std::vector<Vector> factors;
    const Index pairs = n / 2;
    for (Index j = 0; j < pairs; ++j) {
        const double theta = M_PI * static_cast<double>(2 * j + 1) /
                             static_cast<double>(2 * pairs + 1);
        Vector quad(3);
        quad << 1.0, -2.0 * rho * std::cos(theta), rho * rho;
        factors.push_back(quad);
    }
    if (n % 2 == 1) {
        Vector lin(2);
        lin << 1.0, -rho;
        factors.push_back(lin);
    }
    const Vector poly = poly_from_real_quadratic_factors(factors);
    return make_filter_spec(poly.tail(n));
}

/// Per-channel filter states for the logged input, measured output, and
/// reference channel, all zero-initialized. Owned by a single run.
class FilterBank {
public:
    FilterBank(FilterSpec spec, Index r_m, Index r_p)
        : spec_(std::move(spec)),
          r_m_(r_m),
          r_p_(r_p),
          zeta_u_(Vector::Zero(spec_.order() * r_m)),
          zeta_y_(Vector::Zero(spec_.order() * r_p)),
          zeta_th_(Vector::Zero(spec_.order() * r_p)) {}

    void step(const Vector& u, const Vector& y, const Vector& th) {
        if (u.size() != r_m_ || y.size() != r_p_ || th.size() != r_p_)
            throw std::invalid_argument("FilterBank::step: channel dimension mismatch");
        step_channel(zeta_u_, u);
        step_channel(zeta_y_, y);
        step_channel(zeta_th_, th);
        ++k_;
    }

    Vector stacked() const {
        Vector z(zeta_u_.size() + zeta_y_.size() + zeta_th_.size());
        z << zeta_u_, zeta_y_, zeta_th_;
        return z;
    }

    /// Restores channel states, e.g. to continue from a finished run.
    void set_states(const Vector& zeta_u, const Vector& zeta_y, const Vector& zeta_th) {
        if (zeta_u.size() != zeta_u_.size() || zeta_y.size() != zeta_y_.size() ||
            zeta_th.size() != zeta_th_.size())
            throw std::invalid_argument("FilterBank::set_states: dimension mismatch");
        zeta_u_ = zeta_u;
        zeta_y_ = zeta_y;
        zeta_th_ = zeta_th;
    }

    const Vector& zeta_u() const { return zeta_u_; }
    const Vector& zeta_y() const { return zeta_y_; }
    const Vector& zeta_th() const { return zeta_th_; }
    const FilterSpec& spec() const { return spec_; }
    Index time() const { return k_; }
    Index stacked_dim() const { return spec_.order() * (r_m_ + 2 * r_p_); }

private:
    void step_channel(Vector& state, const Vector& input) {
        const Index n = spec_.order();
        for (Index c = 0; c < input.size(); ++c) {
            auto seg = state.segment(c * n, n);
            seg = (spec_.A_zeta * seg + input(c) * spec_.b).eval();
        }
    }

    FilterSpec spec_;
    Index r_m_, r_p_;
    Vector zeta_u_, zeta_y_, zeta_th_;
    Index k_ = 0;
};

/// Places the spectrum of underA - L barC at the filter roots by solving the
/// dual Sylvester equation underA' X - X A_zeta = barC' W for a random W and
/// reading the gain off the inverse. Retries with fresh W when X is
/// ill-conditioned; certifies the result through the characteristic
/// polynomial, which stays well conditioned even for repeated deadbeat
/// roots.
inline Matrix observer_gain(const AugmentedSystem& aug, const FilterSpec& spec,
                            std::uint64_t seed) {
    if (spec.order() != aug.n_z)
        throw std::invalid_argument("observer_gain: filter order must equal n_z");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const Index n = aug.n_z;
    const Vector target = spec.monic_coeffs();
    double last_cond = 0.0;
    double last_residual = 0.0;
    for (int attempt = 0; attempt < 10; ++attempt) {
        Matrix w(aug.r_p, n);
        for (Index i = 0; i < aug.r_p; ++i)
            for (Index j = 0; j < n; ++j) w(i, j) = unif(rng);
        const Matrix x =
            solve_sylvester(aug.underA.transpose(), spec.A_zeta, aug.barC.transpose() * w);
        Eigen::JacobiSVD<Matrix> svd(x);
        const double smin = svd.singularValues().minCoeff();
        const double smax = svd.singularValues().maxCoeff();
        last_cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
        if (smin <= 1e-12 * std::max(1.0, smax)) continue;
        const Matrix gain = x.transpose().partialPivLu().solve(w.transpose());
        const Matrix a_obs = aug.underA - gain * aug.barC;
        const CharPoly cp = faddeev_leverrier(a_obs);
        last_residual = (cp.coeffs - target).norm();
        if (last_residual <= 1e-6 * (1.0 + target.norm())) return gain;
    }
    std::ostringstream msg;
    msg << "observer_gain: placement failed after 10 attempts (seed " << seed
        << ", last condition number " << last_cond << ", last coefficient residual "
        << last_residual << "); pair may be unobservable or filter roots collide with "
        << "fixed modes";
    throw ConvergenceError(msg.str());
}

/// Constant map from stacked filter states to the augmented state, built
/// from the adjugate coefficients of (zI - A_obs): channel j of a source
/// column v contributes columns [B_{n-1} v, ..., B_0 v], matching the
/// ascending-power ordering of the filter state.
struct Parameterization {
    Matrix Mbar;                      // n_z x (n_z (r_m + 2 r_p))
    Matrix L_obs;                     // n_z x r_p observer gain
    std::vector<Matrix> resolvent_coeffs;  // B_0 ... B_{n-1}
};

inline Parameterization parameterization_matrix(const AugmentedSystem& aug,
                                                const FilterSpec& spec, const Matrix& l_obs) {
    if (spec.order() != aug.n_z)
        throw std::invalid_argument("parameterization_matrix: filter order must equal n_z");
    const Index n = aug.n_z;
    const Matrix a_obs = aug.underA - l_obs * aug.barC;

    // The placement contract: char(A_obs) must equal the filter polynomial.
    const CharPoly cp = faddeev_leverrier(a_obs);
    const Vector target = spec.monic_coeffs();
    if ((cp.coeffs - target).norm() > 1e-6 * (1.0 + target.norm()))
        throw std::invalid_argument(
            "parameterization_matrix: observer gain does not realize the filter polynomial");

    Parameterization param;
    param.L_obs = l_obs;
    param.resolvent_coeffs = cp.adjugate;

    const auto source_block = [&](const Matrix& src) {
        Matrix block(n, n * src.cols());
        for (Index j = 0; j < src.cols(); ++j)
            for (Index p = 0; p < n; ++p)
                block.col(j * n + p) = param.resolvent_coeffs[n - 1 - p] * src.col(j);
        return block;
    };

    param.Mbar = Matrix(n, n * (aug.r_m + 2 * aug.r_p));
    param.Mbar.leftCols(n * aug.r_m) = source_block(aug.barB);
    param.Mbar.middleCols(n * aug.r_m, n * aug.r_p) = source_block(l_obs);
    param.Mbar.rightCols(n * aug.r_p) = source_block(aug.barG);
    return param;
}

/// Rank identity linking the parameterization matrix to the three
/// controllability matrices of its source columns.
struct RankIdentityReport {
    Index rank_parameterization = 0;
    Index rank_controllability_concat = 0;
    bool equal = false;
};

inline RankIdentityReport parameterization_rank_check(const AugmentedSystem& aug,
                                                      const Matrix& l_obs, const Matrix& mbar) {
    RankIdentityReport report;
    report.rank_parameterization = svd_rank(mbar);
    Matrix concat(aug.n_z, aug.n_z * (aug.r_m + 2 * aug.r_p));
    concat.leftCols(aug.n_z * aug.r_m) = controllability_matrix(aug.underA, aug.barB);
    concat.middleCols(aug.n_z * aug.r_m, aug.n_z * aug.r_p) =
        controllability_matrix(aug.underA, l_obs);
    concat.rightCols(aug.n_z * aug.r_p) = controllability_matrix(aug.underA, aug.barG);
    report.rank_controllability_concat = svd_rank(concat);
    report.equal = report.rank_parameterization == report.rank_controllability_concat;
    return report;
}

}  // namespace rloft
