#include "doctest.h"
#include "ocn/embedder.hpp"
#include "ocn/errors.hpp"

#include <cmath>
#include <string>

using namespace ocn;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.gaussian();
  return m;
}

ParamU admissible(int n, std::uint64_t stream) {
  for (std::uint64_t k = 0;; ++k) {
    Rng rng(90, stream * 1000 + k);
    ParamU u = ParamU::sample(n, rng);
    if (check_setV(u.P, u.X).ok) return u;
  }
}

std::vector<Vec> random_d(int N, int d, Rng& rng) {
  std::vector<Vec> out;
  for (int i = 0; i < N; ++i) out.push_back(random_mat(d, 1, rng));
  return out;
}

}  // namespace

TEST_SUITE("embedder") {

TEST_CASE("pairings vanish at zero (Y, Z) and superpose") {
  Rng rng(51);
  const ParamU u = admissible(4, 1);
  const PairingForms f = pairing_forms(u);
  CHECK(f.S.rows() == 72);
  CHECK(f.S.cols() == 24);
  CHECK(f.J.cols() == 6);

  ParamU zero = u;
  zero.Y.setZero();
  zero.Z.setZero();
  const TauConfig t0 = build_tau(zero, PhasePoint::zero(4));
  for (const auto& [j, i] : f.pairs)
    CHECK(std::abs((t0.eta[i].second.array() * (t0.eta[j].first - t0.eta[i].first).array()).sum()) == 0.0);

  const Mat y1 = random_mat(3, 4, rng), y2 = random_mat(3, 4, rng), z1 = random_mat(3, 4, rng),
            z2 = random_mat(3, 4, rng);
  ParamU w = u;
  w.Y = y1 + y2;
  w.Z = z1 + z2;
  const TauConfig t = build_tau(w, PhasePoint::zero(4));
  Vec direct(f.pairs.size());
  for (size_t r = 0; r < f.pairs.size(); ++r) {
    const auto [j, i] = f.pairs[r];
    direct(r) = (t.eta[i].second.array() * (t.eta[j].first - t.eta[i].first).array()).sum();
  }
  const Vec sum = f.pairing(y1, z1) + f.pairing(y2, z2);
  CHECK((direct - sum).norm() < 1e-10 * (1.0 + direct.norm()));
}

TEST_CASE("minor rows are quadratic in P") {
  const ParamU u = admissible(4, 2);
  ParamU doubled = u, zero = u;
  doubled.P *= 2.0;
  zero.P.setZero();
  const PairingForms f = pairing_forms(u), f2 = pairing_forms(doubled);
  CHECK((f2.J - 4.0 * f.J).norm() < 1e-10 * f2.J.norm());
  // P = 0 leaves the first components at zero; frames would be inadmissible,
  // so evaluate the minors of the scaled configuration directly.
  ParamU tiny = u;
  tiny.P *= 1e-8;
  CHECK(pairing_forms(tiny).J.norm() < 1e-15 * f.J.norm() * 1e2);
}

TEST_CASE("small n is refused with the system shape") {
  Rng rng(52);
  for (int n : {2, 3}) {
    const ParamU u = ParamU::sample(n, rng);
    try {
      solve_embedding(Vec::Zero(2 * n + 1), u);
      FAIL("expected InfeasibleShape");
    } catch (const InfeasibleShape& e) {
      const std::string what = e.what();
      CHECK(what.find(n == 2 ? "20×14" : "42×40") != std::string::npos);
    }
  }
}

TEST_CASE("endpoint relations span the left null space") {
  for (int n : {4, 5}) {
    const ParamU u = admissible(n, 3 + n);
    const int N = 2 * n + 1;
    const EmbedSystem sys = assemble_embedding(pairing_forms(u), Vec::Zero(N));
    Eigen::JacobiSVD<Mat> svd(sys.M.transpose(), Eigen::ComputeFullV);
    const Vec& s = svd.singularValues();
    REQUIRE(s.size() == N * (N - 1));
    CHECK(s(s.size() - 3) > 1e-8 * s(0));
    CHECK(s(s.size() - 2) < 1e-12 * s(0));
    const Mat null = svd.matrixV().rightCols(2);
    for (int i : {0, N - 1}) {
      const Vec v = endpoint_relation(u.kappa, i);
      Vec full = Vec::Zero(sys.M.rows());
      for (size_t r = 0; r < sys.pairs.size(); ++r)
        if (sys.pairs[r].second == i) full(r) = v(sys.pairs[r].first);
      full.normalize();
      // the closed-form weights lie in the numerical left null space
      CHECK((full - null * (null.transpose() * full)).norm() < 1e-8);
      CHECK((v.array() >= 0).all());
    }
  }
}

TEST_CASE("endpoint relation fixes the weighted sum of margins") {
  Rng rng(53);
  const int n = 4, N = 9;
  const ParamU u = admissible(n, 9);
  for (int trial = 0; trial < 20; ++trial) {
    ParamU w = u;
    w.Y = random_mat(3, 4, rng);
    w.Z = random_mat(3, 4, rng);
    const Vec c = random_mat(N, 1, rng);
    const std::vector<Vec> d = random_d(N, 6, rng);
    const Emb2Report rep = check_emb2(build_tau(w, PhasePoint::zero(n)), c, d);
    for (int i : {0, N - 1}) {
      const Vec v = endpoint_relation(u.kappa, i);
      double lhs = 0.0, rhs = 0.0;
      for (int j = 0; j < N; ++j) {
        if (j == i) continue;
        lhs += v(j) * rep.margins(j, i);
        rhs += v(j) * (c(j) - c(i));
      }
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("equal c values cannot satisfy the endpoint rows") {
  const ParamU u = admissible(4, 10);
  CHECK_THROWS_AS(solve_embedding(Vec::Constant(9, 0.3), u), NonPositiveMargin);
}

TEST_CASE("balanced c gives unit margins everywhere") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const ParamU u = admissible(4, 20 + s);
    const Vec c = balanced_c(u.kappa);
    const EmbedData e = solve_embedding(c, u);
    CHECK(e.rank.rank == 70);
    CHECK(e.expected_rank == 70);
    CHECK(e.relation_residual < 1e-12);
    CHECK(e.residual < 1e-9);
    CHECK((e.target_margins - (Mat::Ones(9, 9) - Mat::Identity(9, 9))).norm() < 1e-12);
    for (int j = 0; j < 9; ++j)
      for (int i = 0; i < 9; ++i)
        if (i != j) CHECK(std::abs(e.emb2.margins(j, i) - 1.0) < 1e-8);
    CHECK(e.emb2.min_margin > 1.0 - 1e-6);
  }
}

TEST_CASE("emb2 margins detect a bad d_i and persist near U0") {
  Rng rng(54);
  const ParamU u = admissible(4, 30);
  const EmbedData e = solve_embedding(balanced_c(u.kappa), u);
  const TauConfig t = build_tau(e.u0, PhasePoint::zero(4));
  std::vector<Vec> bad = e.d;
  bad[3] += 1e3 * random_mat(6, 1, rng);
  CHECK(check_emb2(t, e.c, bad).min_margin < 0.0);

  const Vec base = e.u0.to_vector();
  int kept = 0;
  for (int k = 0; k < 50; ++k) {
    const Vec dir = random_mat(base.size(), 1, rng);
    const Vec moved = base + 1e-4 * base.norm() * dir / dir.norm();
    const ParamU w = ParamU::from_vector(moved, 4);
    if (check_emb2(build_tau(w, PhasePoint::zero(4)), e.c, e.d).min_margin > 0.5) ++kept;
  }
  CHECK(kept == 50);
}

TEST_CASE("Q_i reduces to eta_i^2 without epsilon and d") {
  const ParamU u = admissible(3, 40);
  const TauConfig t = build_tau(u, PhasePoint::zero(3));
  const std::vector<Vec> d(7, Vec::Zero(3));
  const auto q = q_from_emb1(t, d, 0.0);
  for (int i = 0; i < 7; ++i) CHECK((q[i] - t.eta[i].second).norm() == 0.0);
}

TEST_CASE("dominance margins equal emb2 margins plus the epsilon term") {
  Rng rng(55);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 4, N = 2 * n + 1;
    const ParamU u = admissible(n, 100 + trial);
    const TauConfig t = build_tau(u, PhasePoint::zero(n));
    const Vec c = random_mat(N, 1, rng);
    const std::vector<Vec> d = random_d(N, minor_count(n), rng);
    const double eps = std::abs(rng.gaussian());
    const Emb2Report cx = check_cx0(t, c, d, q_from_emb1(t, d, eps));
    const Emb2Report em = check_emb2(t, c, d);
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        if (i == j) continue;
        const SpaceMatrix& ai = t.eta[i].first;
        const double extra = eps * (ai.array() * (t.eta[j].first - ai).array()).sum();
        const double scale = 1.0 + std::abs(cx.margins(j, i)) + std::abs(em.margins(j, i));
        worst = std::max(worst, std::abs(cx.margins(j, i) - em.margins(j, i) - extra) / scale);
      }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("epsilon sweep converges to the emb2 margins") {
  const ParamU u = admissible(4, 50);
  const EmbedData e = solve_embedding(balanced_c(u.kappa), u);
  const TauConfig t = build_tau(e.u0, PhasePoint::zero(4));
  double slope = 0.0;
  for (int j = 0; j < 9; ++j)
    for (int i = 0; i < 9; ++i)
      if (i != j)
        slope = std::max(slope, std::abs((t.eta[i].first.array() * (t.eta[j].first - t.eta[i].first).array()).sum()));
  double prev = INFINITY;
  for (double eps = 1e-1; eps > 1e-7; eps *= 0.1) {
    const Emb2Report cx = check_cx0(t, e.c, e.d, q_from_emb1(t, e.d, eps));
    const double err = (cx.margins - e.emb2.margins).cwiseAbs().maxCoeff();
    CHECK(err <= prev);
    CHECK(err <= slope * eps * (1.0 + 1e-9) + 1e-12);
    prev = err;
  }
  const EpsilonChoice ch = choose_epsilon(t, e.c, e.d);
  CHECK(ch.epsilon <= 1e-3);
  CHECK(ch.cx0.min_margin > 0.5 * e.emb2.min_margin);
}

}
