#pragma once

#include <Eigen/Dense>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace rloft {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Index = Eigen::Index;

constexpr double kDefaultRankTol = 1e-10;

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Half-vectorization of a symmetric matrix: diagonal entries once, each
/// off-diagonal pair folded into a single doubled entry, row by row.
inline Vector vecs(const Matrix& w) {
    if (w.rows() != w.cols())
        throw std::invalid_argument("vecs: matrix must be square, got " +
                                    std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    const Matrix s = symmetrize(w);
    const Index n = s.rows();
    Vector out(n * (n + 1) / 2);
    Index k = 0;
    for (Index i = 0; i < n; ++i) {
        out(k++) = s(i, i);
        for (Index j = i + 1; j < n; ++j) out(k++) = 2.0 * s(i, j);
    }
    return out;
}

/// Quadratic-monomial vector of t, ordered to pair with vecs so that
/// dot(vecv(t), vecs(W)) == t' W t.
inline Vector vecv(const Vector& t) {
    const Index n = t.size();
    Vector out(n * (n + 1) / 2);
    Index k = 0;
    for (Index i = 0; i < n; ++i) {
        out(k++) = t(i) * t(i);
        for (Index j = i + 1; j < n; ++j) out(k++) = t(i) * t(j);
    }
    return out;
}

/// Inverse of vecs: rebuild the symmetric n-by-n matrix.
inline Matrix vecs_inverse(const Vector& v, Index n) {
    if (v.size() != n * (n + 1) / 2)
        throw std::invalid_argument("vecs_inverse: length mismatch");
    Matrix w(n, n);
    Index k = 0;
    for (Index i = 0; i < n; ++i) {
        w(i, i) = v(k++);
        for (Index j = i + 1; j < n; ++j) {
            w(i, j) = 0.5 * v(k);
            w(j, i) = 0.5 * v(k);
            ++k;
        }
    }
    return w;
}

/// Column-major vectorization.
inline Vector vec(const Matrix& m) {
    return Eigen::Map<const Vector>(m.data(), m.size());
}

inline Matrix unvec(const Vector& v, Index rows, Index cols) {
    if (v.size() != rows * cols) throw std::invalid_argument("unvec: length mismatch");
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Vector kron_vec(const Vector& a, const Vector& b) {
    Vector out(a.size() * b.size());
    for (Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

/// Numerical rank: singular values above tol * max(rows, cols) * sigma_max.
inline Index svd_rank(const Matrix& m, double tol = kDefaultRankTol) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    if (smax <= 0.0) return 0;
    const double thresh = tol * static_cast<double>(std::max(m.rows(), m.cols())) * smax;
    Index r = 0;
    for (Index i = 0; i < sv.size(); ++i)
        if (sv(i) > thresh) ++r;
    return r;
}

inline ComplexVector eigenvalues(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("eigenvalues: matrix must be square");
    if (m.size() == 0) return ComplexVector(0);
    Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigenvalues: solver failed");
    return es.eigenvalues();
}

inline double spectral_radius(const Matrix& m) {
    const ComplexVector ev = eigenvalues(m);
    double rho = 0.0;
    for (Index i = 0; i < ev.size(); ++i) rho = std::max(rho, std::abs(ev(i)));
    return rho;
}

/// Solves P - Acl' P Acl = Qrhs for symmetric P via Kronecker vectorization.
/// Requires Acl Schur; sized for small dense problems.
inline Matrix solve_stein(const Matrix& acl, const Matrix& qrhs) {
    if (acl.rows() != acl.cols() || qrhs.rows() != qrhs.cols() || acl.rows() != qrhs.rows())
        throw std::invalid_argument("solve_stein: dimension mismatch");
    const double rho = spectral_radius(acl);
    if (rho >= 1.0) {
        std::ostringstream msg;
        msg << "solve_stein: closed-loop matrix is not Schur, spectral radius = " << rho;
        throw std::runtime_error(msg.str());
    }
    const Index n = acl.rows();
    const Matrix at = acl.transpose();
    const Matrix lhs = Matrix::Identity(n * n, n * n) - kron(at, at);
    const Eigen::PartialPivLU<Matrix> lu(lhs);
    const Vector rhs = vec(symmetrize(qrhs));
    Vector p_vec = lu.solve(rhs);
    for (int pass = 0; pass < 2; ++pass) p_vec -= lu.solve(Vector(lhs * p_vec - rhs));
    const Matrix p = symmetrize(unvec(p_vec, n, n));
    const double resid = (p - acl.transpose() * p * acl - symmetrize(qrhs)).norm();
    if (resid > 1e-9 * (1.0 + p.norm()))
        throw std::runtime_error("solve_stein: residual " + std::to_string(resid) +
                                 " above tolerance");
    return p;
}

/// Minimum-norm least-squares solution via SVD with relative rank threshold.
inline Vector solve_linear_least_squares(const Matrix& a, const Vector& b,
                                         double tol = kDefaultRankTol) {
    if (a.rows() != b.size()) throw std::invalid_argument("least_squares: dimension mismatch");
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(tol * static_cast<double>(std::max(a.rows(), a.cols())));
    return svd.solve(b);
}

/// Solves A X - X B = C. Falls back to a least-squares solution, so callers
/// must certify the result when the spectra of A and B may intersect.
/// Two rounds of iterative refinement sharpen the solution well past the
/// raw factorization accuracy.
inline Matrix solve_sylvester(const Matrix& a, const Matrix& b, const Matrix& c) {
    if (a.rows() != a.cols() || b.rows() != b.cols() || c.rows() != a.rows() ||
        c.cols() != b.rows())
        throw std::invalid_argument("solve_sylvester: dimension mismatch");
    const Index n = a.rows();
    const Index m = b.rows();
    const Matrix lhs =
        kron(Matrix::Identity(m, m), a) - kron(b.transpose(), Matrix::Identity(n, n));
    Eigen::BDCSVD<Matrix> svd(lhs, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(kDefaultRankTol * static_cast<double>(std::max(lhs.rows(), lhs.cols())));
    const Vector rhs = vec(c);
    Vector x = svd.solve(rhs);
    for (int pass = 0; pass < 2; ++pass) x -= svd.solve(Vector(lhs * x - rhs));
    return unvec(x, n, m);
}

/// Rank of a complex matrix through its real embedding [[Re,-Im],[Im,Re]],
/// whose real rank is exactly twice the complex rank.
inline Index complex_rank(const ComplexMatrix& m, double tol = kDefaultRankTol) {
    Matrix embed(2 * m.rows(), 2 * m.cols());
    embed.topLeftCorner(m.rows(), m.cols()) = m.real();
    embed.topRightCorner(m.rows(), m.cols()) = -m.imag();
    embed.bottomLeftCorner(m.rows(), m.cols()) = m.imag();
    embed.bottomRightCorner(m.rows(), m.cols()) = m.real();
    return svd_rank(embed, tol) / 2;
}

/// Complex rank of [A - lambda I, Bcols].
inline Index pbh_rank_test(const Matrix& a, const Matrix& bcols, std::complex<double> lambda,
                           double tol = kDefaultRankTol) {
    if (a.rows() != a.cols() || bcols.rows() != a.rows())
        throw std::invalid_argument("pbh_rank_test: dimension mismatch");
    const Index n = a.rows();
    ComplexMatrix pencil(n, n + bcols.cols());
    pencil.leftCols(n) = a.cast<std::complex<double>>();
    pencil.leftCols(n) -= lambda * ComplexMatrix::Identity(n, n);
    pencil.rightCols(bcols.cols()) = bcols.cast<std::complex<double>>();
    return complex_rank(pencil, tol);
}

inline Matrix controllability_matrix(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols() || b.rows() != a.rows())
        throw std::invalid_argument("controllability_matrix: dimension mismatch");
    const Index n = a.rows();
    const Index m = b.cols();
    Matrix ctrb(n, n * m);
    Matrix block = b;
    for (Index i = 0; i < n; ++i) {
        ctrb.middleCols(i * m, m) = block;
        block = a * block;
    }
    return ctrb;
}

inline Matrix observability_matrix(const Matrix& a, const Matrix& c) {
    return controllability_matrix(a.transpose(), c.transpose()).transpose();
}

/// Characteristic polynomial with the adjugate coefficient matrices of
/// (zI - A), computed by the Faddeev-LeVerrier recursion.
/// coeffs = [1, c1, ..., cn] descending; adjugate = [B0, ..., B_{n-1}] with
/// adj(zI - A) = B0 z^{n-1} + ... + B_{n-1}.
struct CharPoly {
    Vector coeffs;
    std::vector<Matrix> adjugate;
    /// Cayley-Hamilton closure ||B_{n-1} A + cn I||; near zero for exact data.
    double closure_residual = 0.0;
};

inline CharPoly faddeev_leverrier(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("faddeev_leverrier: square input required");
    const Index n = a.rows();
    CharPoly out;
    out.coeffs = Vector(n + 1);
    out.coeffs(0) = 1.0;
    Matrix m = Matrix::Identity(n, n);
    out.adjugate.push_back(m);
    for (Index k = 1; k <= n; ++k) {
        const Matrix am = a * m;
        const double ck = -am.trace() / static_cast<double>(k);
        out.coeffs(k) = ck;
        m = am + ck * Matrix::Identity(n, n);
        if (k < n) out.adjugate.push_back(m);
    }
    out.closure_residual = m.norm();  // m is now B_{n-1} A + cn I
    return out;
}

/// Companion matrix of a monic polynomial given by descending coefficients
/// [1, c1, ..., cd]: ones on the superdiagonal, negated coefficients in the
/// last row.
inline Matrix companion(const Vector& monic_desc) {
    if (monic_desc.size() < 2) throw std::invalid_argument("companion: degree must be >= 1");
    if (std::abs(monic_desc(0) - 1.0) > 1e-12)
        throw std::invalid_argument("companion: polynomial must be monic");
    const Index d = monic_desc.size() - 1;
    Matrix f = Matrix::Zero(d, d);
    for (Index i = 0; i + 1 < d; ++i) f(i, i + 1) = 1.0;
    for (Index j = 0; j < d; ++j) f(d - 1, j) = -monic_desc(d - j);
    return f;
}

/// Evaluates a polynomial (descending coefficients) at a square matrix.
inline Matrix polynomial_of_matrix(const Vector& coeffs_desc, const Matrix& s) {
    if (s.rows() != s.cols()) throw std::invalid_argument("polynomial_of_matrix: square input");
    const Index n = s.rows();
    Matrix acc = Matrix::Zero(n, n);
    for (Index k = 0; k < coeffs_desc.size(); ++k) acc = acc * s + coeffs_desc(k) * Matrix::Identity(n, n);
    return acc;
}

/// Roots of a monic polynomial as eigenvalues of its companion matrix.
inline ComplexVector polynomial_roots(const Vector& monic_desc) {
    if (monic_desc.size() < 2) return ComplexVector(0);
    return eigenvalues(companion(monic_desc));
}

/// Monic polynomial (descending coefficients) with the given real-or-paired
/// complex roots, assembled from real linear and quadratic factors.
inline Vector poly_from_real_quadratic_factors(const std::vector<Vector>& factors) {
    Vector p(1);
    p << 1.0;
    for (const Vector& f : factors) {
        Vector q = Vector::Zero(p.size() + f.size() - 1);
        for (Index i = 0; i < p.size(); ++i)
            for (Index j = 0; j < f.size(); ++j) q(i + j) += p(i) * f(j);
        p = q;
    }
    return p;
}

inline double min_symmetric_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
    return es.eigenvalues().minCoeff();
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace rloft
