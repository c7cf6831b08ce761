#pragma once

// Dense linear algebra shared by every stage of the pipeline: 2 x n matrices,
// phase points, the minor map J, ranks, adjugates and finite differences.

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace ocn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A real 2 x n matrix.
using SpaceMatrix = Eigen::Matrix<double, 2, Eigen::Dynamic>;

/// Row-major flattening of a 2 x n matrix: (a11..a1n, a21..a2n).
Vec flatten(const SpaceMatrix& a);
SpaceMatrix unflatten(const Eigen::Ref<const Vec>& v, int n);

/// A point (A, B) of R^{2xn} x R^{2xn}.
///
/// The canonical flattening to R^{4n} is row-major A followed by row-major B.
struct PhasePoint {
  SpaceMatrix first;
  SpaceMatrix second;

  static PhasePoint zero(int n);
  int n() const { return static_cast<int>(first.cols()); }

  Vec vectorize() const;
  static PhasePoint devectorize(const Eigen::Ref<const Vec>& v, int n);

  PhasePoint operator+(const PhasePoint& o) const { return {first + o.first, second + o.second}; }
  PhasePoint operator-(const PhasePoint& o) const { return {first - o.first, second - o.second}; }
  PhasePoint operator*(double s) const { return {first * s, second * s}; }
  double norm() const;
};

inline PhasePoint operator*(double s, const PhasePoint& p) { return p * s; }

/// Number of 2x2 minors of a 2 x n matrix, n(n-1)/2.
int minor_count(int n);

/// J(A): minors ordered lexicographically by column pair (j, q), j < q, with
/// J_(j,q)(A) = a_1j a_2q - a_1q a_2j.
Vec minor_vector(const SpaceMatrix& a);

/// DJ(A) as a d x 2n matrix acting on the row-major flattening of A.
Mat minor_jacobian(const SpaceMatrix& a);

/// The constant Hessian of the k-th minor, a symmetric 2n x 2n matrix.
Mat minor_hessian(int n, int k);

/// sum_k w_k D^2 J_k.
Mat weighted_minor_hessian(int n, const Eigen::Ref<const Vec>& w);

/// sum_k w_k grad J_k(A) reshaped to 2 x n.
SpaceMatrix weighted_minor_gradient(const SpaceMatrix& a, const Eigen::Ref<const Vec>& w);

struct RankReport {
  int rank = 0;
  /// Last accepted singular value over the first rejected one (floored at
  /// eps * sigma_max); for full rank, last accepted over the threshold.
  double gap = 0.0;
  double tolerance = 0.0;
  Vec singular_values;
};

/// Rank = number of singular values above tol * sigma_max.
RankReport numeric_rank(const Mat& m, double tol = 1e-8);

/// adj(S) through the SVD, valid for singular S.
Mat adjugate(const Mat& s);

/// Extended-precision matrices for checks whose conditioning defeats double.
using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
MatL adjugate(const MatL& s);

/// Product of the column norms; the natural scale of det(S).
double hadamard_bound(const Mat& s);

/// Diagonal similarity balancing (Parlett-Reinsch); preserves the spectrum
/// and the characteristic polynomial.
Mat balance(const Mat& m);

struct FiniteJacobian {
  Mat jacobian;
  /// Max-norm disagreement between the step-h and step-h/2 levels.
  double error_estimate = 0.0;
};

using VectorFunction = std::function<Vec(const Vec&)>;

/// Central differences at h and h/2 combined by one Richardson step.
FiniteJacobian finite_jacobian(const VectorFunction& f, const Vec& x, double h);

}  // namespace ocn
