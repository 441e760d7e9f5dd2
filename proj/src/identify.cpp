#include "jnirm/identify.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace jnirm {

FactorEstimate svd_identify(const MatrixXd& P, int rank) {
  const Eigen::Index lim = std::min(P.rows(), P.cols());
  if (rank < 1 || rank > lim) throw std::invalid_argument("rank must lie in [1, min(rows, cols)]");
  Eigen::JacobiSVD<MatrixXd> svd(P, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double scale = std::max(1.0, s(0));
  if (!(s(rank - 1) > 1e-12 * scale)) throw NumericalError("zero singular value at the requested rank");

  FactorEstimate f;
  f.singular_values = s.head(rank);
  if (rank < lim && std::abs(s(rank - 1) - s(rank)) <= 1e-10 * scale) f.subspace_ill_determined = true;
  const VectorXd root = f.singular_values.cwiseSqrt();
  f.left = svd.matrixU().leftCols(rank) * root.asDiagonal();
  f.right = svd.matrixV().leftCols(rank) * root.asDiagonal();
  for (int k = 0; k < rank; ++k) {
    Eigen::Index at = 0;
    f.left.col(k).cwiseAbs().maxCoeff(&at);
    if (f.left(at, k) < 0) {
      f.left.col(k) *= -1.0;
      f.right.col(k) *= -1.0;
    }
  }
  return f;
}

double rotation_criterion(const MatrixXd& L, const MatrixXd& target, const BoolMatrix& mask) {
  double f = 0;
  for (Eigen::Index j = 0; j < L.cols(); ++j)
    for (Eigen::Index i = 0; i < L.rows(); ++i)
      if (mask(i, j)) f += (L(i, j) - target(i, j)) * (L(i, j) - target(i, j));
  return f;
}

namespace {

MatrixXd criterion_gradient(const MatrixXd& L, const MatrixXd& target, const BoolMatrix& mask) {
  MatrixXd G = MatrixXd::Zero(L.rows(), L.cols());
  for (Eigen::Index j = 0; j < L.cols(); ++j)
    for (Eigen::Index i = 0; i < L.rows(); ++i)
      if (mask(i, j)) G(i, j) = 2.0 * (L(i, j) - target(i, j));
  return G;
}

MatrixXd normalize_columns(const MatrixXd& X) {
  MatrixXd out = X;
  for (Eigen::Index j = 0; j < X.cols(); ++j) out.col(j) /= X.col(j).norm();
  return out;
}

}  // namespace

RotationResult target_rotate(const MatrixXd& A, const MatrixXd& target, const BoolMatrix& mask,
                             const RotationOptions& opt) {
  const Eigen::Index D = A.cols();
  if (D < 2) throw std::invalid_argument("target rotation needs at least two factors");
  if (target.rows() != A.rows() || target.cols() != D || mask.rows() != A.rows() || mask.cols() != D)
    throw std::invalid_argument("target and mask must match the loadings");

  RotationResult r;
  r.target = target;
  r.target_mask = mask;
  MatrixXd T = MatrixXd::Identity(D, D);

  auto loadings_for = [&](const MatrixXd& Tm) -> MatrixXd {
    if (opt.oblique) return A * Tm.inverse().transpose();
    return A * Tm;
  };
  auto gradient_T = [&](const MatrixXd& Tm, const MatrixXd& L) -> MatrixXd {
    const MatrixXd Gq = criterion_gradient(L, target, mask);
    if (opt.oblique) return -(L.transpose() * Gq * Tm.inverse()).transpose();
    return A.transpose() * Gq;
  };

  MatrixXd L = loadings_for(T);
  double f = rotation_criterion(L, target, mask);
  MatrixXd G = gradient_T(T, L);
  r.criterion_trace.push_back(f);
  double step = 1.0;

  for (r.iterations = 0; r.iterations < opt.max_iterations; ++r.iterations) {
    MatrixXd Gp;
    if (opt.oblique) {
      Gp = G - T * (T.cwiseProduct(G).colwise().sum()).asDiagonal();
    } else {
      const MatrixXd M = T.transpose() * G;
      Gp = G - T * (0.5 * (M + M.transpose()));
    }
    const double s = Gp.norm();
    if (s < opt.tolerance) {
      r.converged = true;
      break;
    }
    step *= 2.0;
    MatrixXd Tn, best_T;
    double fn = f, best_f = f;
    bool improved = false;
    for (int half = 0; half <= 40; ++half) {
      const MatrixXd X = T - step * Gp;
      if (opt.oblique) {
        Tn = normalize_columns(X);
      } else {
        Eigen::JacobiSVD<MatrixXd> svd(X, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Tn = svd.matrixU() * svd.matrixV().transpose();
      }
      if (Eigen::FullPivLU<MatrixXd>(Tn).isInvertible()) {
        fn = rotation_criterion(loadings_for(Tn), target, mask);
        if (fn < best_f) {
          best_f = fn;
          best_T = Tn;
        }
        if (f - fn > 0.5 * s * s * step) {
          improved = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!improved) {
      // Line search exhausted: keep only a strictly better iterate, then stop.
      if (best_f < f) {
        T = best_T;
        f = best_f;
        r.criterion_trace.push_back(f);
      }
      r.converged = s < 1e-6;
      break;
    }
    T = Tn;
    f = fn;
    L = loadings_for(T);
    G = gradient_T(T, L);
    r.criterion_trace.push_back(f);
  }

  r.rotation_matrix = opt.oblique ? MatrixXd(T.inverse().transpose()) : T;
  r.rotated_loadings = A * r.rotation_matrix;
  r.factor_correlation = opt.oblique ? MatrixXd(T.transpose() * T) : MatrixXd::Identity(D, D);
  r.criterion = rotation_criterion(r.rotated_loadings, target, mask);
  return r;
}

RotationResult target_rotate(const MatrixXd& loadings, const std::vector<int>& subscale,
                             const RotationOptions& options) {
  if (static_cast<Eigen::Index>(subscale.size()) != loadings.rows())
    throw std::invalid_argument("one subscale per item required");
  BoolMatrix mask = BoolMatrix::Constant(loadings.rows(), loadings.cols(), true);
  for (std::size_t i = 0; i < subscale.size(); ++i) {
    if (subscale[i] < 0 || subscale[i] >= loadings.cols()) throw std::invalid_argument("subscale out of range");
    mask(static_cast<Eigen::Index>(i), subscale[i]) = false;
  }
  return target_rotate(loadings, MatrixXd::Zero(loadings.rows(), loadings.cols()), mask, options);
}

MatrixXd congruence(const MatrixXd& A, const MatrixXd& B) {
  if (A.rows() != B.rows()) throw std::invalid_argument("congruence needs equal row counts");
  MatrixXd C(A.cols(), B.cols());
  for (Eigen::Index i = 0; i < A.cols(); ++i) {
    const double na = A.col(i).norm();
    if (na == 0) throw std::invalid_argument("zero column in congruence input");
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
      const double nb = B.col(j).norm();
      if (nb == 0) throw std::invalid_argument("zero column in congruence input");
      C(i, j) = std::clamp(A.col(i).dot(B.col(j)) / (na * nb), -1.0, 1.0);
    }
  }
  return C;
}

VectorXd variance_explained(const MatrixXd& P, int max_rank) {
  if (max_rank < 1) throw std::invalid_argument("max_rank must be positive");
  const VectorXd s = Eigen::JacobiSVD<MatrixXd>(P).singularValues();
  const double total = s.squaredNorm();
  if (!(total > 0)) throw std::invalid_argument("zero matrix has no variance to explain");
  VectorXd out = VectorXd::Zero(max_rank);
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(max_rank, s.size()); ++k) out(k) = s(k) * s(k) / total;
  return out;
}

}  // namespace jnirm
