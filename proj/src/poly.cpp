#include "ocn/poly.hpp"

#include "ocn/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ocn {

Poly::Poly(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
  auto first = std::find_if(coeffs_.begin(), coeffs_.end(), [](double c) { return c != 0.0; });
  coeffs_.erase(coeffs_.begin(), first);
}

Poly Poly::monomial(int degree, double coeff) {
  std::vector<double> c(degree + 1, 0.0);
  c[0] = coeff;
  return Poly(std::move(c));
}

Poly Poly::from_roots(const std::vector<double>& roots) {
  Poly p({1.0});
  for (double r : roots) p = p * Poly({1.0, -r});
  return p;
}

double Poly::coeff(int k) const {
  const int deg = degree();
  if (k < 0 || k > deg) return 0.0;
  return coeffs_[deg - k];
}

double Poly::operator()(double x) const {
  double acc = 0.0;
  for (double c : coeffs_) acc = acc * x + c;
  return acc;
}

std::complex<double> Poly::operator()(std::complex<double> x) const {
  std::complex<double> acc = 0.0;
  for (double c : coeffs_) acc = acc * x + c;
  return acc;
}

Poly Poly::derivative() const {
  const int deg = degree();
  if (deg < 1) return Poly();
  std::vector<double> d(deg);
  for (int i = 0; i < deg; ++i) d[i] = coeffs_[i] * (deg - i);
  return Poly(std::move(d));
}

double Poly::norm() const {
  double s = 0.0;
  for (double c : coeffs_) s += c * c;
  return std::sqrt(s);
}

std::vector<std::complex<double>> Poly::roots() const {
  const int deg = degree();
  if (deg < 1) return {};
  Mat companion = Mat::Zero(deg, deg);
  for (int j = 0; j < deg; ++j) companion(0, j) = -coeffs_[j + 1] / coeffs_[0];
  for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Mat> es(balance(companion), false);
  std::vector<std::complex<double>> out(es.eigenvalues().data(), es.eigenvalues().data() + deg);
  std::sort(out.begin(), out.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return out;
}

Poly operator*(const Poly& a, const Poly& b) {
  if (a.is_zero() || b.is_zero()) return Poly();
  std::vector<double> c(a.coeffs_.size() + b.coeffs_.size() - 1, 0.0);
  for (size_t i = 0; i < a.coeffs_.size(); ++i)
    for (size_t j = 0; j < b.coeffs_.size(); ++j) c[i + j] += a.coeffs_[i] * b.coeffs_[j];
  return Poly(std::move(c));
}

namespace {

std::vector<double> aligned(const Poly& p, size_t len) {
  std::vector<double> c(len, 0.0);
  std::copy(p.coeffs().begin(), p.coeffs().end(), c.end() - static_cast<long>(p.coeffs().size()));
  return c;
}

}  // namespace

Poly operator+(const Poly& a, const Poly& b) {
  const size_t len = std::max(a.coeffs_.size(), b.coeffs_.size());
  auto ca = aligned(a, len), cb = aligned(b, len);
  for (size_t i = 0; i < len; ++i) ca[i] += cb[i];
  return Poly(std::move(ca));
}

Poly operator-(const Poly& a, const Poly& b) { return a + b * Poly({-1.0}); }

PolyDivision poly_divide(const Poly& p, const Poly& q) {
  if (q.is_zero()) throw InvalidArgument("poly_divide: zero divisor");
  const int dp = p.degree(), dq = q.degree();
  PolyDivision out;
  if (dp < dq) {
    out.remainder = p;
    out.remainder_norm = p.norm();
    return out;
  }
  std::vector<double> rem = p.coeffs();
  std::vector<double> quot(dp - dq + 1, 0.0);
  const auto& qc = q.coeffs();
  for (int i = 0; i <= dp - dq; ++i) {
    const double factor = rem[i] / qc[0];
    quot[i] = factor;
    rem[i] = 0.0;
    for (int j = 1; j <= dq; ++j) rem[i + j] -= factor * qc[j];
  }
  out.quotient = Poly(std::move(quot));
  out.remainder = Poly(std::vector<double>(rem.end() - dq, rem.end()));
  out.remainder_norm = out.remainder.norm();
  return out;
}

double resultant(const Poly& p, const Poly& q) {
  const int m = p.degree(), k = q.degree();
  if (m < 0 || k < 0) return 0.0;
  const int size = m + k;
  if (size == 0) return 1.0;
  Mat syl = Mat::Zero(size, size);
  for (int r = 0; r < k; ++r)
    for (int j = 0; j <= m; ++j) syl(r, r + j) = p.coeffs()[j];
  for (int r = 0; r < m; ++r)
    for (int j = 0; j <= k; ++j) syl(k + r, r + j) = q.coeffs()[j];
  return syl.fullPivLu().determinant();
}

double discriminant(const Poly& q) {
  const int k = q.degree();
  if (k < 1) throw InvalidArgument("discriminant: degree must be at least 1");
  const double sign = ((k * (k - 1) / 2) % 2 == 0) ? 1.0 : -1.0;
  return sign * resultant(q, q.derivative()) / q.leading();
}

Mat FaddeevLeverrier::adjugate_at(double x) const {
  Mat acc = Mat::Zero(adj_coeffs.front().rows(), adj_coeffs.front().cols());
  for (auto it = adj_coeffs.rbegin(); it != adj_coeffs.rend(); ++it) acc = acc * x + *it;
  return acc;
}

FaddeevLeverrier faddeev_leverrier(const Mat& m, double trace_bound) {
  const Eigen::Index s = m.rows();
  if (s < 1 || m.cols() != s) throw InvalidArgument("faddeev_leverrier: need a nonempty square matrix");
  FaddeevLeverrier out;
  // c[k] is the coefficient of x^k in det(xI - M); c[s] = 1.
  std::vector<double> c(s + 1, 0.0);
  c[s] = 1.0;
  out.adj_coeffs.assign(s, Mat());
  Mat nk = Mat::Identity(s, s);
  for (Eigen::Index k = 1; k <= s; ++k) {
    if (k > 1) nk = m * nk + c[s - k + 1] * Mat::Identity(s, s);
    out.adj_coeffs[s - k] = nk;
    const double tr = (m * nk).trace();
    if (!std::isfinite(tr) || std::abs(tr) > trace_bound) out.ill_conditioned = true;
    c[s - k] = -tr / static_cast<double>(k);
  }
  out.charpoly = Poly(std::vector<double>(c.rbegin(), c.rend()));

  const double scale = std::max(1.0, m.norm() / std::sqrt(static_cast<double>(s)));
  for (double t : {0.37, -1.21, 2.03}) {
    const double x = t * scale;
    const Mat shifted = x * Mat::Identity(s, s) - m;
    const Mat adj = out.adjugate_at(x);
    const double px = out.charpoly(x);
    const double res = (shifted * adj - px * Mat::Identity(s, s)).norm();
    const double denom = shifted.norm() * adj.norm() + std::abs(px) * std::sqrt(static_cast<double>(s));
    const double rel = denom > 0 ? res / denom : res;
    out.identity_residual = std::max(out.identity_residual, rel);
  }
  if (!(out.identity_residual <= 1e-9)) out.ill_conditioned = true;
  return out;
}

}  // namespace ocn
