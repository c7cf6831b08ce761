#include "doctest.h"
#include "ocn/errors.hpp"
#include "ocn/linalg.hpp"
#include "ocn/rng.hpp"

#include <cmath>

using namespace ocn;

namespace {

SpaceMatrix random_space(int n, Rng& rng) {
  SpaceMatrix a(2, n);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < n; ++c) a(r, c) = rng.gaussian();
  return a;
}

Mat random_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.gaussian();
  return m;
}

// Plain cofactor expansion, independent of the SVD route.
double cofactor_det(const Mat& m) {
  const Eigen::Index k = m.rows();
  if (k == 1) return m(0, 0);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    Mat minor(k - 1, k - 1);
    for (Eigen::Index r = 1; r < k; ++r)
      for (Eigen::Index c = 0, cc = 0; c < k; ++c)
        if (c != j) minor(r - 1, cc++) = m(r, c);
    acc += ((j % 2) ? -1.0 : 1.0) * m(0, j) * cofactor_det(minor);
  }
  return acc;
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("minor_vector of a 2x2 matrix") {
  SpaceMatrix a(2, 2);
  a << 1, 2, 3, 4;
  CHECK(minor_vector(a)(0) == doctest::Approx(-2.0));
}

TEST_CASE("minor_vector vanishes when the second row is zero") {
  Rng rng(1);
  for (int n = 2; n <= 6; ++n) {
    SpaceMatrix a = random_space(n, rng);
    a.row(1).setZero();
    CHECK(minor_vector(a).norm() == 0.0);
    CHECK(minor_vector(a).size() == n * (n - 1) / 2);
  }
}

TEST_CASE("minor_vector components are column-pair determinants") {
  Rng rng(2);
  SpaceMatrix a = random_space(4, rng);
  const Vec j = minor_vector(a);
  int k = 0;
  for (int c = 0; c < 4; ++c)
    for (int q = c + 1; q < 4; ++q, ++k) {
      Eigen::Matrix2d sub;
      sub << a(0, c), a(0, q), a(1, c), a(1, q);
      CHECK(j(k) == doctest::Approx(sub.determinant()).epsilon(1e-13));
    }
}

TEST_CASE("quadratic minor identity over random pairs") {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 6;
    const SpaceMatrix a = random_space(n, rng), b = random_space(n, rng);
    const Vec lhs = minor_vector(a) - minor_vector(b) - minor_jacobian(b) * flatten(a - b);
    const Vec rhs = minor_vector(a - b);
    const double scale = std::max(1.0, minor_vector(a).norm() + minor_vector(b).norm());
    worst = std::max(worst, (lhs - rhs).norm() / scale);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("minor_jacobian against central differences") {
  Rng rng(4);
  SpaceMatrix zero = SpaceMatrix::Zero(2, 3);
  CHECK(minor_jacobian(zero).norm() == 0.0);
  for (int n = 2; n <= 5; ++n) {
    const SpaceMatrix a = random_space(n, rng), v = random_space(n, rng);
    const double h = 1e-5;
    const Vec fd = (minor_vector(a + h * v) - minor_vector(a - h * v)) / (2 * h);
    CHECK((fd - minor_jacobian(a) * flatten(v)).norm() < 1e-9);
  }
}

TEST_CASE("minor_jacobian is affine in A") {
  Rng rng(5);
  const SpaceMatrix a = random_space(4, rng), b = random_space(4, rng);
  const Mat diff = minor_jacobian(a) - minor_jacobian(b);
  CHECK((diff - minor_jacobian(a - b)).norm() < 1e-12);
}

TEST_CASE("minor Hessians reproduce the minors") {
  Rng rng(6);
  const int n = 4;
  const SpaceMatrix a = random_space(n, rng);
  const Vec v = flatten(a);
  const Vec j = minor_vector(a);
  for (int k = 0; k < minor_count(n); ++k) CHECK(0.5 * v.dot(minor_hessian(n, k) * v) == doctest::Approx(j(k)));
  Vec w(minor_count(n));
  for (int k = 0; k < w.size(); ++k) w(k) = rng.gaussian();
  Mat sum = Mat::Zero(2 * n, 2 * n);
  for (int k = 0; k < w.size(); ++k) sum += w(k) * minor_hessian(n, k);
  CHECK((sum - weighted_minor_hessian(n, w)).norm() < 1e-13);
  CHECK((flatten(weighted_minor_gradient(a, w)) - minor_jacobian(a).transpose() * w).norm() < 1e-13);
}

TEST_CASE("phase point flattening round-trips bit-exactly") {
  Rng rng(7);
  PhasePoint p{random_space(3, rng), random_space(3, rng)};
  const PhasePoint back = PhasePoint::devectorize(p.vectorize(), 3);
  CHECK(back.first == p.first);
  CHECK(back.second == p.second);
  CHECK(p.vectorize()(1) == p.first(0, 1));
  CHECK(p.vectorize()(3) == p.first(1, 0));
  CHECK(p.vectorize()(6) == p.second(0, 0));
}

TEST_CASE("numeric_rank basics") {
  CHECK(numeric_rank(Mat::Identity(4, 4), 1e-8).rank == 4);
  Vec u(5), v(3);
  u << 1, 2, 3, 4, 5;
  v << -1, 0.5, 2;
  CHECK(numeric_rank(u * v.transpose(), 1e-8).rank == 1);
  CHECK_THROWS_AS(numeric_rank(Mat(0, 0), 1e-8), InvalidArgument);
}

TEST_CASE("numeric_rank of constructed low-rank matrices") {
  Rng rng(8);
  for (int r = 1; r <= 6; ++r) {
    Mat m = Mat::Zero(9, 7);
    for (int k = 0; k < r; ++k) m += random_mat(9, 1, rng) * random_mat(1, 7, rng);
    const RankReport rep = numeric_rank(m, 1e-8);
    CHECK(rep.rank == r);
    CHECK(rep.gap > 1e6);
  }
}

TEST_CASE("numeric_rank is invariant under orthogonal transforms") {
  Rng rng(9);
  Mat m = random_mat(6, 3, rng) * random_mat(3, 5, rng);
  const Mat qa = random_mat(6, 6, rng).householderQr().householderQ();
  const Mat qb = random_mat(5, 5, rng).householderQr().householderQ();
  CHECK(numeric_rank(qa * m * qb, 1e-8).rank == numeric_rank(m, 1e-8).rank);
}

TEST_CASE("adjugate agrees with cofactors, also when singular") {
  Rng rng(10);
  for (int k = 2; k <= 5; ++k) {
    Mat m = random_mat(k, k, rng);
    if (k >= 4) m.col(k - 1) = m.col(0) + 2.0 * m.col(1);
    const Mat adj = adjugate(m);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        Mat minor(k - 1, k - 1);
        for (int r = 0, rr = 0; r < k; ++r) {
          if (r == j) continue;
          for (int c = 0, cc = 0; c < k; ++c)
            if (c != i) minor(rr, cc++) = m(r, c);
          ++rr;
        }
        const double cof = (((i + j) % 2) ? -1.0 : 1.0) * cofactor_det(minor);
        CHECK(adj(i, j) == doctest::Approx(cof).epsilon(1e-9).scale(1.0));
      }
  }
}

TEST_CASE("balance preserves the spectrum") {
  Rng rng(11);
  Mat m = random_mat(6, 6, rng);
  m.row(2) *= 1e4;
  m.col(2) /= 1e4;
  const Mat b = balance(m);
  CHECK(b.trace() == doctest::Approx(m.trace()));
  CHECK(b.determinant() == doctest::Approx(m.determinant()).epsilon(1e-8));
  CHECK(b.norm() < m.norm());
}

TEST_CASE("finite_jacobian on linear and quadratic maps") {
  Rng rng(12);
  const Mat a = random_mat(4, 3, rng);
  const Vec x = random_mat(3, 1, rng);
  const FiniteJacobian lin = finite_jacobian([&](const Vec& v) { return Vec(a * v); }, x, 1.0);
  CHECK((lin.jacobian - a).norm() < 1e-12);

  Vec three(1);
  three << 3.0;
  const FiniteJacobian sq = finite_jacobian([](const Vec& v) { return Vec(v.array().square()); }, three, 1e-4);
  CHECK(std::abs(sq.jacobian(0, 0) - 6.0) < 1e-9);

  const SpaceMatrix s = random_space(4, rng);
  const FiniteJacobian mj =
      finite_jacobian([](const Vec& v) { return minor_vector(unflatten(v, 4)); }, flatten(s), 1e-3);
  CHECK((mj.jacobian - minor_jacobian(s)).norm() < 1e-8);
}

TEST_CASE("finite_jacobian names the non-finite coordinate") {
  Vec x = Vec::Zero(3);
  auto f = [](const Vec& v) {
    Vec y = v;
    if (v(2) > 0) y(0) = std::log(-1.0);
    return y;
  };
  try {
    finite_jacobian(f, x, 1e-3);
    FAIL("expected NonFiniteValue");
  } catch (const NonFiniteValue& e) {
    CHECK(e.coordinate() == 2);
  }
}

}
