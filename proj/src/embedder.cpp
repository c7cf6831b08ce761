#include "ocn/embedder.hpp"

#include "ocn/errors.hpp"

#include <cmath>
#include <sstream>

namespace ocn {

std::vector<std::pair<int, int>> ordered_pairs(int N) {
  std::vector<std::pair<int, int>> out;
  out.reserve(N * (N - 1));
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i)
      if (i != j) out.emplace_back(j, i);
  return out;
}

Vec stack_yz(const Mat& Y, const Mat& Z) {
  Vec v(Y.size() + Z.size());
  v.head(Y.size()) = Eigen::Map<const Vec>(Y.data(), Y.size());
  v.tail(Z.size()) = Eigen::Map<const Vec>(Z.data(), Z.size());
  return v;
}

namespace {

Vec pairings_of(const TauConfig& tau, const std::vector<std::pair<int, int>>& pairs) {
  Vec out(pairs.size());
  for (size_t r = 0; r < pairs.size(); ++r) {
    const auto [j, i] = pairs[r];
    out(r) = (tau.eta[i].second.array() * (tau.eta[j].first - tau.eta[i].first).array()).sum();
  }
  return out;
}

}  // namespace

Vec PairingForms::pairing(const Mat& Y, const Mat& Z) const { return S * stack_yz(Y, Z); }

PairingForms pairing_forms(const ParamU& u) {
  PairingForms f;
  f.n = u.n;
  f.N = 2 * u.n + 1;
  f.pairs = ordered_pairs(f.N);
  const int d = minor_count(f.n);

  ParamU probe = u;
  probe.Y.setZero();
  probe.Z.setZero();
  const TauConfig base = build_tau(probe, PhasePoint::zero(f.n));
  for (const auto& e : base.eta) f.eta1.push_back(e.first);
  f.J.resize(f.pairs.size(), d);
  for (size_t r = 0; r < f.pairs.size(); ++r) {
    const auto [j, i] = f.pairs[r];
    f.J.row(r) = minor_vector(f.eta1[j] - f.eta1[i]).transpose();
  }

  const Eigen::Index ny = u.Y.size(), nz = u.Z.size();
  f.S.resize(f.pairs.size(), ny + nz);
  for (Eigen::Index k = 0; k < ny + nz; ++k) {
    probe.Y.setZero();
    probe.Z.setZero();
    if (k < ny)
      probe.Y.data()[k] = 1.0;
    else
      probe.Z.data()[k - ny] = 1.0;
    f.S.col(k) = pairings_of(build_tau(probe, PhasePoint::zero(f.n)), f.pairs);
  }
  return f;
}

EmbedSystem assemble_embedding(const PairingForms& forms, const Vec& c) {
  const int N = forms.N;
  if (c.size() != N) throw InvalidArgument("assemble_embedding: c must have N entries");
  const int d = static_cast<int>(forms.J.cols());
  EmbedSystem sys;
  sys.pairs = forms.pairs;
  sys.M = Mat::Zero(forms.pairs.size(), N * d + forms.S.cols());
  sys.rhs.resize(forms.pairs.size());
  for (size_t r = 0; r < forms.pairs.size(); ++r) {
    const auto [j, i] = forms.pairs[r];
    sys.M.block(r, i * d, 1, d) = forms.J.row(r);
    sys.M.block(r, N * d, 1, forms.S.cols()) = forms.S.row(r);
    sys.rhs(r) = -1.0 - c(i) + c(j);
  }
  return sys;
}

Vec endpoint_relation(const Vec& kappa, int i) {
  const int N = static_cast<int>(kappa.size());
  Vec v = Vec::Zero(N);
  int prev = (i + 1) % N;
  v(prev) = 1.0;
  for (int step = 2; step < N; ++step) {
    const int k = (i + step) % N;
    v(k) = v(prev) * kappa(prev) / (kappa(k) - 1.0);
    prev = k;
  }
  return v;
}

Vec balanced_c(const Vec& kappa) {
  const int N = static_cast<int>(kappa.size());
  const int last = N - 1;
  const Vec v = endpoint_relation(kappa, 0), w = endpoint_relation(kappa, last);
  // sum_j v_j (c_j - c_0) = sum_j v_j and sum_j w_j (c_j - c_last) = sum_j w_j
  Eigen::Matrix2d a;
  a << -v.sum(), v(last), w(0), -w.sum();
  const Eigen::Vector2d sol = a.fullPivLu().solve(Eigen::Vector2d(v.sum(), w.sum()));
  Vec c = Vec::Zero(N);
  c(0) = sol(0);
  c(last) = sol(1);
  return c;
}

EmbedData solve_embedding(const Vec& c, const ParamU& u, double rank_tol) {
  const int n = u.n;
  if (n < 4) {
    const DimSummary ds = dims(n);
    std::ostringstream msg;
    msg << "embedding system for n=" << n << " is a " << ds.embed_equations << "×" << ds.embed_unknowns
        << " system and cannot be solved for arbitrary right-hand sides";
    throw InfeasibleShape(msg.str());
  }
  const int N = 2 * n + 1;
  const int d = minor_count(n);
  const PairingForms forms = pairing_forms(u);
  EmbedSystem sys = assemble_embedding(forms, c);

  EmbedData out;
  out.c = c;
  out.target_margins = Mat::Ones(N, N) - Mat::Identity(N, N);
  const double mnorm = sys.M.norm();
  for (int i : {0, N - 1}) {
    const Vec v = endpoint_relation(u.kappa, i);
    double mu = 0.0;
    for (int j = 0; j < N; ++j) mu += v(j) * (c(j) - c(i));
    mu /= v.sum();
    if (!(mu > 0)) throw NonPositiveMargin("solve_embedding: c is incompatible with the endpoint relation", i, -1);
    Vec full = Vec::Zero(sys.M.rows());
    for (size_t r = 0; r < sys.pairs.size(); ++r) {
      const auto [j, ii] = sys.pairs[r];
      if (ii != i) continue;
      full(r) = v(j);
      out.target_margins(j, i) = mu;
      sys.rhs(r) = c(j) - c(i) - mu;
    }
    out.relation_residual = std::max(out.relation_residual, (full.transpose() * sys.M).norm() / (full.norm() * mnorm));
  }

  out.expected_rank = static_cast<int>(sys.M.rows()) - 2;
  out.rank = numeric_rank(sys.M, rank_tol);
  if (out.rank.rank < out.expected_rank)
    throw RankDeficient("solve_embedding: embedding matrix", out.rank.rank, out.expected_rank);

  const Vec x = sys.M.completeOrthogonalDecomposition().solve(sys.rhs);
  out.residual = (sys.M * x - sys.rhs).lpNorm<Eigen::Infinity>();
  for (int i = 0; i < N; ++i) out.d.push_back(x.segment(i * d, d));
  out.u0 = u;
  const Eigen::Index ny = u.Y.size();
  out.u0.Y = Eigen::Map<const Mat>(x.data() + N * d, u.Y.rows(), u.Y.cols());
  out.u0.Z = Eigen::Map<const Mat>(x.data() + N * d + ny, u.Z.rows(), u.Z.cols());
  out.emb2 = check_emb2(build_tau(out.u0, PhasePoint::zero(n)), c, out.d);
  return out;
}

namespace {

Emb2Report finish_report(Mat margins) {
  Emb2Report r;
  r.min_margin = INFINITY;
  for (Eigen::Index j = 0; j < margins.rows(); ++j)
    for (Eigen::Index i = 0; i < margins.cols(); ++i) {
      if (i == j) continue;
      if (margins(j, i) < r.min_margin) {
        r.min_margin = margins(j, i);
        r.argmin_j = static_cast<int>(j);
        r.argmin_i = static_cast<int>(i);
      }
    }
  r.margins = std::move(margins);
  return r;
}

double frob(const SpaceMatrix& a, const SpaceMatrix& b) { return (a.array() * b.array()).sum(); }

}  // namespace

Emb2Report check_emb2(const TauConfig& tau, const Vec& c, const std::vector<Vec>& d) {
  const int N = static_cast<int>(tau.eta.size());
  Mat m = Mat::Zero(N, N);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      if (i == j) continue;
      const SpaceMatrix diff = tau.eta[j].first - tau.eta[i].first;
      m(j, i) = c(j) - c(i) - frob(tau.eta[i].second, diff) - d[i].dot(minor_vector(diff));
    }
  return finish_report(std::move(m));
}

std::vector<SpaceMatrix> q_from_emb1(const TauConfig& tau, const std::vector<Vec>& d, double eps) {
  std::vector<SpaceMatrix> q;
  for (size_t i = 0; i < tau.eta.size(); ++i) {
    const SpaceMatrix& a = tau.eta[i].first;
    q.push_back(tau.eta[i].second - eps * a - weighted_minor_gradient(a, d[i]));
  }
  return q;
}

Emb2Report check_cx0(const TauConfig& tau, const Vec& c, const std::vector<Vec>& d,
                     const std::vector<SpaceMatrix>& Q) {
  const int N = static_cast<int>(tau.eta.size());
  Mat m = Mat::Zero(N, N);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      if (i == j) continue;
      const SpaceMatrix& ai = tau.eta[i].first;
      const SpaceMatrix& aj = tau.eta[j].first;
      const double li = c(i) + frob(Q[i], aj - ai) + d[i].dot(minor_vector(aj) - minor_vector(ai));
      m(j, i) = c(j) - li;
    }
  return finish_report(std::move(m));
}

EpsilonChoice choose_epsilon(const TauConfig& tau, const Vec& c, const std::vector<Vec>& d, double eps0,
                             int max_halvings) {
  const Emb2Report emb2 = check_emb2(tau, c, d);
  if (!(emb2.min_margin > 0))
    throw NonPositiveMargin("choose_epsilon: emb2 margin not positive", emb2.argmin_i, emb2.argmin_j);
  EpsilonChoice out;
  out.epsilon = eps0;
  for (out.halvings = 0; out.halvings <= max_halvings; ++out.halvings) {
    out.Q = q_from_emb1(tau, d, out.epsilon);
    out.cx0 = check_cx0(tau, c, d, out.Q);
    if (((out.cx0.margins - 0.5 * emb2.margins).array() > 0 || Mat::Identity(c.size(), c.size()).array() > 0).all())
      return out;
    out.epsilon *= 0.5;
  }
  throw NonPositiveMargin("choose_epsilon: dominance margins stay below half the emb2 margins", out.cx0.argmin_i,
                          out.cx0.argmin_j);
}

}  // namespace ocn
