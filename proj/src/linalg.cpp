#include "ocn/linalg.hpp"

#include "ocn/errors.hpp"

#include <cmath>
#include <limits>

namespace ocn {

Vec flatten(const SpaceMatrix& a) {
  const int n = static_cast<int>(a.cols());
  Vec v(2 * n);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < n; ++c) v(r * n + c) = a(r, c);
  return v;
}

SpaceMatrix unflatten(const Eigen::Ref<const Vec>& v, int n) {
  if (v.size() != 2 * n) throw InvalidArgument("unflatten: expected length 2n");
  SpaceMatrix a(2, n);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < n; ++c) a(r, c) = v(r * n + c);
  return a;
}

PhasePoint PhasePoint::zero(int n) { return {SpaceMatrix::Zero(2, n), SpaceMatrix::Zero(2, n)}; }

Vec PhasePoint::vectorize() const {
  const int nn = n();
  Vec v(4 * nn);
  v.head(2 * nn) = flatten(first);
  v.tail(2 * nn) = flatten(second);
  return v;
}

PhasePoint PhasePoint::devectorize(const Eigen::Ref<const Vec>& v, int n) {
  if (v.size() != 4 * n) throw InvalidArgument("devectorize: expected length 4n");
  return {unflatten(v.head(2 * n), n), unflatten(v.tail(2 * n), n)};
}

double PhasePoint::norm() const { return std::sqrt(first.squaredNorm() + second.squaredNorm()); }

int minor_count(int n) { return n * (n - 1) / 2; }

Vec minor_vector(const SpaceMatrix& a) {
  const int n = static_cast<int>(a.cols());
  Vec out(minor_count(n));
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int q = j + 1; q < n; ++q) out(k++) = a(0, j) * a(1, q) - a(0, q) * a(1, j);
  return out;
}

Mat minor_jacobian(const SpaceMatrix& a) {
  const int n = static_cast<int>(a.cols());
  Mat out = Mat::Zero(minor_count(n), 2 * n);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    for (int q = j + 1; q < n; ++q, ++k) {
      out(k, j) += a(1, q);
      out(k, n + q) += a(0, j);
      out(k, q) -= a(1, j);
      out(k, n + j) -= a(0, q);
    }
  }
  return out;
}

Mat minor_hessian(int n, int k) {
  Mat h = Mat::Zero(2 * n, 2 * n);
  int idx = 0;
  for (int j = 0; j < n; ++j) {
    for (int q = j + 1; q < n; ++q, ++idx) {
      if (idx != k) continue;
      h(j, n + q) = h(n + q, j) = 1.0;
      h(q, n + j) = h(n + j, q) = -1.0;
      return h;
    }
  }
  throw InvalidArgument("minor_hessian: index out of range");
}

Mat weighted_minor_hessian(int n, const Eigen::Ref<const Vec>& w) {
  Mat h = Mat::Zero(2 * n, 2 * n);
  int k = 0;
  for (int j = 0; j < n; ++j) {
    for (int q = j + 1; q < n; ++q, ++k) {
      h(j, n + q) += w(k);
      h(n + q, j) += w(k);
      h(q, n + j) -= w(k);
      h(n + j, q) -= w(k);
    }
  }
  return h;
}

SpaceMatrix weighted_minor_gradient(const SpaceMatrix& a, const Eigen::Ref<const Vec>& w) {
  const int n = static_cast<int>(a.cols());
  return unflatten(minor_jacobian(a).transpose() * w, n);
}

RankReport numeric_rank(const Mat& m, double tol) {
  if (m.size() == 0) throw InvalidArgument("numeric_rank: empty matrix");
  if (!(tol > 0)) throw InvalidArgument("numeric_rank: tolerance must be positive");
  Eigen::JacobiSVD<Mat> svd(m);
  RankReport r;
  r.tolerance = tol;
  r.singular_values = svd.singularValues();
  const auto& s = r.singular_values;
  const double smax = s.size() ? s(0) : 0.0;
  if (smax == 0.0) {
    r.rank = 0;
    r.gap = 0.0;
    return r;
  }
  const double cut = tol * smax;
  int rank = 0;
  while (rank < s.size() && s(rank) > cut) ++rank;
  r.rank = rank;
  if (rank < s.size()) {
    const double floor = smax * std::numeric_limits<double>::epsilon();
    r.gap = s(rank - 1) / std::max(s(rank), floor);
  } else {
    r.gap = s(rank - 1) / cut;
  }
  return r;
}

namespace {

template <class M>
M adjugate_svd(const M& s) {
  using Scalar = typename M::Scalar;
  const Eigen::Index k = s.rows();
  if (k != s.cols()) throw InvalidArgument("adjugate: matrix must be square");
  if (k == 1) return M::Ones(1, 1);
  Eigen::JacobiSVD<M> svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> cof(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Scalar p = 1;
    for (Eigen::Index j = 0; j < k; ++j)
      if (j != i) p *= sv(j);
    cof(i) = p;
  }
  const Scalar sign = svd.matrixU().determinant() * svd.matrixV().determinant();
  return sign * svd.matrixV() * cof.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace

Mat adjugate(const Mat& s) { return adjugate_svd(s); }

MatL adjugate(const MatL& s) { return adjugate_svd(s); }

double hadamard_bound(const Mat& s) {
  double p = 1.0;
  for (Eigen::Index c = 0; c < s.cols(); ++c) p *= s.col(c).norm();
  return p;
}

Mat balance(const Mat& m) {
  Mat a = m;
  const Eigen::Index k = a.rows();
  constexpr double radix = 2.0;
  bool done = false;
  for (int sweep = 0; sweep < 100 && !done; ++sweep) {
    done = true;
    for (Eigen::Index i = 0; i < k; ++i) {
      double c = 0.0, r = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (j == i) continue;
        c += std::abs(a(j, i));
        r += std::abs(a(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix, f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= radix * radix;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= radix * radix;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        a.row(i) /= f;
        a.col(i) *= f;
      }
    }
  }
  return a;
}

FiniteJacobian finite_jacobian(const VectorFunction& f, const Vec& x, double h) {
  if (!(h > 0)) throw InvalidArgument("finite_jacobian: step must be positive");
  const Eigen::Index dim = x.size();
  auto eval = [&](const Vec& at, Eigen::Index coord) {
    Vec y = f(at);
    if (!y.allFinite()) throw NonFiniteValue("finite_jacobian: non-finite function value", static_cast<int>(coord));
    return y;
  };
  FiniteJacobian out;
  Vec probe = x;
  for (Eigen::Index k = 0; k < dim; ++k) {
    auto central = [&](double step) {
      probe(k) = x(k) + step;
      Vec fp = eval(probe, k);
      probe(k) = x(k) - step;
      Vec fm = eval(probe, k);
      probe(k) = x(k);
      return Vec((fp - fm) / (2.0 * step));
    };
    Vec coarse = central(h);
    Vec fine = central(0.5 * h);
    if (k == 0) out.jacobian.resize(coarse.size(), dim);
    out.jacobian.col(k) = (4.0 * fine - coarse) / 3.0;
    if (coarse.size()) out.error_estimate = std::max(out.error_estimate, (fine - coarse).cwiseAbs().maxCoeff());
  }
  return out;
}

}  // namespace ocn
