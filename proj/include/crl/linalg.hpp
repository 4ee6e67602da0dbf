#pragma once

// Dense symmetric spectral primitives: eigendecomposition with a fixed sign
// convention, rank detection, orthogonal projectors, projector products and
// the symmetric-definite generalized eigenproblem.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "crl/error.hpp"

namespace crl {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace linalg {

/// Default relative eigenvalue threshold for rank detection.
inline constexpr double kDefaultRankTol = 1e-8;
/// Spectra whose top eigenvalue is at or below this are treated as zero.
inline constexpr double kZeroFloor = 1e-12;
/// Slack allowed on eigenvalues of a projector product outside [0, 1].
inline constexpr double kUnitSlack = 1e-10;

/// Copies the upper triangle onto the lower one so the matrix is exactly
/// symmetric.
template <typename Scalar>
void mirror_upper(MatrixX<Scalar>& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = j + 1; i < m.rows(); ++i) m(i, j) = m(j, i);
  }
}

/// Eigenvalues sorted descending; column i of `eigenvectors` pairs with
/// eigenvalue i.
template <typename Scalar>
struct SymSpectrum {
  VectorX<Scalar> eigenvalues;
  MatrixX<Scalar> eigenvectors;

  Eigen::Index size() const { return eigenvalues.size(); }
};

/// Orthogonal projector onto a subspace, stored exactly symmetric.
template <typename Scalar>
struct Projector {
  MatrixX<Scalar> matrix;
  Eigen::Index rank = 0;

  /// Projector onto the span of an orthonormal column set.
  template <typename Derived>
  static Projector onto(const Eigen::MatrixBase<Derived>& basis) {
    Projector p;
    p.matrix = basis * basis.transpose();
    mirror_upper(p.matrix);
    p.rank = basis.cols();
    return p;
  }

  Eigen::Index dim() const { return matrix.rows(); }
};

/// Projectors keyed by environment index, kept in strictly ascending order so
/// the product is well defined.
template <typename Scalar>
class ProjectorChain {
 public:
  void push_back(int environment, Projector<Scalar> projector) {
    if (!entries_.empty() && environment <= entries_.back().first) {
      throw Error(ErrorKind::InvalidInput,
                  "projector chain must be strictly ascending in environment index");
    }
    entries_.emplace_back(environment, std::move(projector));
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<int, Projector<Scalar>>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<int, Projector<Scalar>>> entries_;
};

namespace detail {

template <typename Derived>
void require_square_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + " must be square");
  }
  if (!m.allFinite()) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + " has non-finite entries");
  }
}

template <typename Derived>
void require_symmetric(const Eigen::MatrixBase<Derived>& m, const char* what) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return;
  const Scalar scale = m.cwiseAbs().maxCoeff();
  const Scalar asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > Scalar(1e-10) * scale) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + " is not symmetric");
  }
}

// Flip v so that its largest-magnitude coordinate is positive (first index on ties).
template <typename Vec>
void canonicalize_sign(Vec&& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  }
  if (v.size() > 0 && v(best) < 0) v = -v;
}

}  // namespace detail

/// Symmetric eigendecomposition with descending eigenvalues and a
/// deterministic per-vector sign.
template <typename Derived>
SymSpectrum<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  detail::require_square_finite(m, "sym_eig input");
  detail::require_symmetric(m, "sym_eig input");

  const Eigen::Index n = m.rows();
  SymSpectrum<Scalar> out;
  if (n == 0) return out;

  const MatrixX<Scalar> sym = (m + m.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::InvalidInput, "symmetric eigensolver did not converge");
  }

  MatrixX<Scalar> vecs = solver.eigenvectors();
  for (Eigen::Index j = 0; j < n; ++j) detail::canonicalize_sign(vecs.col(j));
  const VectorX<Scalar>& vals = solver.eigenvalues();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (vals(a) != vals(b)) return vals(a) > vals(b);
    // exact ties: lexicographically larger eigenvector first
    for (Eigen::Index i = 0; i < n; ++i) {
      if (vecs(i, a) != vecs(i, b)) return vecs(i, a) > vecs(i, b);
    }
    return false;
  });

  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    out.eigenvalues(j) = vals(order[static_cast<std::size_t>(j)]);
    out.eigenvectors.col(j) = vecs.col(order[static_cast<std::size_t>(j)]);
  }
  return out;
}

/// Number of eigenvalues at or above rel_tol times the largest one.
template <typename Scalar>
Eigen::Index numerical_rank(const SymSpectrum<Scalar>& spectrum, double rel_tol) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
    throw Error(ErrorKind::InvalidInput, "rank tolerance must lie in (0,1)");
  }
  if (spectrum.size() == 0) return 0;
  const Scalar top = spectrum.eigenvalues(0);
  const Scalar bottom = spectrum.eigenvalues(spectrum.size() - 1);
  if (bottom < -Scalar(1e-10) * std::max(Scalar(1), std::abs(top))) {
    throw Error(ErrorKind::NotPSD, "matrix has a negative eigenvalue below tolerance");
  }
  if (top <= Scalar(kZeroFloor)) return 0;
  const Scalar cut = Scalar(rel_tol) * top;
  Eigen::Index rank = 0;
  while (rank < spectrum.size() && spectrum.eigenvalues(rank) >= cut) ++rank;
  return rank;
}

/// Projector onto the numerically significant eigenspace of a PSD matrix.
template <typename Derived>
Projector<typename Derived::Scalar> orth_projector(const Eigen::MatrixBase<Derived>& m,
                                                   double rel_tol = kDefaultRankTol) {
  const auto spectrum = sym_eig(m);
  const Eigen::Index rank = numerical_rank(spectrum, rel_tol);
  return Projector<typename Derived::Scalar>::onto(spectrum.eigenvectors.leftCols(rank));
}

/// Q = M·Mᵀ where M is the ascending-ordered product of the chain.
template <typename Scalar>
MatrixX<Scalar> projector_product(const ProjectorChain<Scalar>& chain) {
  if (chain.empty()) {
    throw Error(ErrorKind::InvalidInput, "projector chain is empty");
  }
  const Eigen::Index p = chain.entries().front().second.dim();
  MatrixX<Scalar> prod = MatrixX<Scalar>::Identity(p, p);
  for (const auto& [env, proj] : chain.entries()) {
    if (proj.matrix.rows() != p || proj.matrix.cols() != p) {
      throw Error(ErrorKind::InvalidInput, "projector dimension mismatch in chain");
    }
    prod = prod * proj.matrix;
  }
  MatrixX<Scalar> q = prod * prod.transpose();
  mirror_upper(q);
  return q;
}

/// Spectrum of a projector product, validated to lie in [0,1] and clamped.
template <typename Derived>
SymSpectrum<typename Derived::Scalar> unit_interval_spectrum(const Eigen::MatrixBase<Derived>& q) {
  using Scalar = typename Derived::Scalar;
  auto spectrum = sym_eig(q);
  if (spectrum.size() > 0) {
    if (spectrum.eigenvalues(0) > Scalar(1 + kUnitSlack) ||
        spectrum.eigenvalues(spectrum.size() - 1) < Scalar(-kUnitSlack)) {
      throw Error(ErrorKind::InvalidInput, "projector product eigenvalues outside [0,1]");
    }
  }
  spectrum.eigenvalues = spectrum.eigenvalues.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  return spectrum;
}

/// |{i : λ_i(Q) ≥ rho}|.
template <typename Derived>
Eigen::Index eigen_count(const Eigen::MatrixBase<Derived>& q, double rho) {
  const auto spectrum = unit_interval_spectrum(q);
  return (spectrum.eigenvalues.array() >= typename Derived::Scalar(rho)).count();
}

/// Orthonormal basis of the eigenspace of Q with eigenvalues ≥ rho; may have
/// zero columns.
template <typename Derived>
MatrixX<typename Derived::Scalar> intersection_basis(const Eigen::MatrixBase<Derived>& q,
                                                     double rho) {
  const auto spectrum = unit_interval_spectrum(q);
  const Eigen::Index k =
      (spectrum.eigenvalues.array() >= typename Derived::Scalar(rho)).count();
  return spectrum.eigenvectors.leftCols(k);
}

template <typename Scalar>
struct GeneralizedSpectrum {
  VectorX<Scalar> eigenvalues;   // descending
  MatrixX<Scalar> eigenvectors;  // column m pairs with eigenvalue m
};

/// Solves S1·t = λ·S2·t for symmetric S1 and positive definite S2 by
/// Cholesky whitening of S2. Eigenvectors come out S2-orthonormal.
template <typename Derived1, typename Derived2>
GeneralizedSpectrum<typename Derived1::Scalar> generalized_sym_eig(
    const Eigen::MatrixBase<Derived1>& s1, const Eigen::MatrixBase<Derived2>& s2,
    double pd_floor = 1e-10) {
  using Scalar = typename Derived1::Scalar;
  detail::require_square_finite(s1, "pencil S1");
  detail::require_square_finite(s2, "pencil S2");
  if (s1.rows() != s2.rows()) {
    throw Error(ErrorKind::InvalidInput, "pencil matrices differ in size");
  }
  detail::require_symmetric(s1, "pencil S1");
  detail::require_symmetric(s2, "pencil S2");

  const MatrixX<Scalar> b = (s2 + s2.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> floor_check(b, Eigen::EigenvaluesOnly);
  if (b.rows() > 0 && floor_check.eigenvalues()(0) < Scalar(pd_floor)) {
    throw Error(ErrorKind::NotPD, "pencil S2 smallest eigenvalue below the PD floor");
  }
  Eigen::LLT<MatrixX<Scalar>> llt(b);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPD, "Cholesky factorization of pencil S2 failed");
  }

  const auto lower = llt.matrixL();
  MatrixX<Scalar> whitened = lower.solve(MatrixX<Scalar>((s1 + s1.transpose()) / Scalar(2)));
  whitened = lower.solve(MatrixX<Scalar>(whitened.transpose()));
  whitened = (whitened + whitened.transpose()) / Scalar(2);

  auto spectrum = sym_eig(whitened);
  GeneralizedSpectrum<Scalar> out;
  out.eigenvalues = std::move(spectrum.eigenvalues);
  out.eigenvectors = llt.matrixU().solve(spectrum.eigenvectors);
  for (Eigen::Index j = 0; j < out.eigenvectors.cols(); ++j) {
    detail::canonicalize_sign(out.eigenvectors.col(j));
  }
  return out;
}

}  // namespace linalg
}  // namespace crl
