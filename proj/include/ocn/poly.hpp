#pragma once

#include "ocn/linalg.hpp"

#include <complex>
#include <vector>

namespace ocn {

/// Real polynomial with coefficients in descending degree.
class Poly {
 public:
  Poly() = default;
  /// Leading zeros are stripped; an empty list is the zero polynomial.
  explicit Poly(std::vector<double> coeffs);

  static Poly monomial(int degree, double coeff = 1.0);
  /// prod_k (x - roots[k]).
  static Poly from_roots(const std::vector<double>& roots);

  const std::vector<double>& coeffs() const { return coeffs_; }
  /// -1 for the zero polynomial.
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  bool is_zero() const { return coeffs_.empty(); }
  double leading() const { return coeffs_.empty() ? 0.0 : coeffs_.front(); }
  /// Coefficient of x^k.
  double coeff(int k) const;

  double operator()(double x) const;
  std::complex<double> operator()(std::complex<double> x) const;
  Poly derivative() const;
  double norm() const;

  /// Roots from the companion matrix.
  std::vector<std::complex<double>> roots() const;

  friend Poly operator*(const Poly& a, const Poly& b);
  friend Poly operator+(const Poly& a, const Poly& b);
  friend Poly operator-(const Poly& a, const Poly& b);

 private:
  std::vector<double> coeffs_;
};

struct PolyDivision {
  Poly quotient;
  Poly remainder;
  double remainder_norm = 0.0;
};

/// Long division p = q * quotient + remainder, deg remainder < deg q.
PolyDivision poly_divide(const Poly& p, const Poly& q);

/// disc(Q) = (-1)^{k(k-1)/2} Res(Q, Q') / lead(Q), k = deg Q, with the
/// resultant taken as the Sylvester determinant.
double discriminant(const Poly& q);

/// Sylvester-matrix resultant.
double resultant(const Poly& p, const Poly& q);

struct FaddeevLeverrier {
  /// det(xI - M).
  Poly charpoly;
  /// B_0..B_{s-1} with adj(xI - M) = sum_k x^k B_k.
  std::vector<Mat> adj_coeffs;
  /// Max relative residual of (xI - M) adj(xI - M) = det(xI - M) I over
  /// three probe points.
  double identity_residual = 0.0;
  bool ill_conditioned = false;

  /// adj(xI - M) from the stored coefficients.
  Mat adjugate_at(double x) const;
};

/// Faddeev-LeVerrier recurrence. Flags ill-conditioning when the internal
/// identity check exceeds 1e-9 or intermediate traces pass trace_bound.
FaddeevLeverrier faddeev_leverrier(const Mat& m, double trace_bound = 1e200);

}  // namespace ocn
