#include "ocn/tau_config.hpp"

#include "ocn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace ocn {

DimSummary dims(int n) {
  if (n < 2) throw InvalidArgument("dims: n must be at least 2");
  DimSummary s;
  s.n = n;
  s.N = 2 * n + 1;
  s.d = minor_count(n);
  s.D = 3 * n * s.N - 2 * n * n - n;
  s.embed_equations = s.N * (s.N - 1);
  const int yz = 2 * (s.N - n - 1) * (n - 1);
  s.embed_unknowns = s.N * (1 + s.d) + yz;
  s.solve_unknowns = s.N * s.d + yz;
  s.underdetermined = s.embed_unknowns > s.embed_equations;
  return s;
}

ParamLayout::ParamLayout(int n_) : n(n_), N(2 * n_ + 1) {
  if (n < 2) throw InvalidArgument("ParamLayout: n must be at least 2");
  p = 0;
  x = p + 2 * (N - n);
  y = x + N * (n - 1);
  z = y + (N - n - 1) * (n - 1);
  b = z + (N - n - 1) * (n - 1);
  kappa = b + (n - 2);
  total = kappa + N;
}

ParamU ParamU::zeros(int n) {
  const ParamLayout l(n);
  ParamU u;
  u.n = n;
  u.P = Mat::Zero(2, l.N - n);
  u.X = Mat::Zero(n - 1, l.N);
  u.Y = Mat::Zero(n - 1, l.N - n - 1);
  u.Z = Mat::Zero(n - 1, l.N - n - 1);
  u.b = Vec::Zero(n - 2);
  u.kappa = Vec::Constant(l.N, 2.0);
  return u;
}

ParamU ParamU::sample(int n, Rng& rng) {
  ParamU u = zeros(n);
  auto fill = [&](auto& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.gaussian();
  };
  fill(u.P);
  fill(u.X);
  fill(u.Y);
  fill(u.Z);
  fill(u.b);
  for (Eigen::Index i = 0; i < u.kappa.size(); ++i) u.kappa(i) = 1.5 + std::abs(rng.gaussian());
  return u;
}

Vec ParamU::to_vector() const {
  const ParamLayout l(n);
  Vec v(l.total);
  v.segment(l.p, P.size()) = Eigen::Map<const Vec>(P.data(), P.size());
  v.segment(l.x, X.size()) = Eigen::Map<const Vec>(X.data(), X.size());
  v.segment(l.y, Y.size()) = Eigen::Map<const Vec>(Y.data(), Y.size());
  v.segment(l.z, Z.size()) = Eigen::Map<const Vec>(Z.data(), Z.size());
  v.segment(l.b, b.size()) = b;
  v.segment(l.kappa, kappa.size()) = kappa;
  return v;
}

ParamU ParamU::from_vector(const Eigen::Ref<const Vec>& v, int n) {
  const ParamLayout l(n);
  if (v.size() != l.total) throw InvalidArgument("ParamU::from_vector: wrong length");
  ParamU u = zeros(n);
  u.P = Eigen::Map<const Mat>(v.data() + l.p, 2, l.N - n);
  u.X = Eigen::Map<const Mat>(v.data() + l.x, n - 1, l.N);
  u.Y = Eigen::Map<const Mat>(v.data() + l.y, n - 1, l.N - n - 1);
  u.Z = Eigen::Map<const Mat>(v.data() + l.z, n - 1, l.N - n - 1);
  u.b = v.segment(l.b, n - 2);
  u.kappa = v.segment(l.kappa, l.N);
  return u;
}

Vec frame_alpha(int slot, const Vec& x) {
  const int n = static_cast<int>(x.size()) + 1;
  if (slot < 0 || slot >= n) throw InvalidArgument("frame_alpha: pivot slot out of range");
  Vec a(n);
  a.head(slot) = x.head(slot);
  a(slot) = 1.0;
  a.tail(n - 1 - slot) = x.tail(n - 1 - slot);
  return a;
}

Eigen::RowVectorXd frame_b(int slot, const Vec& x, const Vec& y) {
  const int n = static_cast<int>(x.size()) + 1;
  if (slot < 0 || slot >= n) throw InvalidArgument("frame_b: pivot slot out of range");
  Eigen::RowVectorXd b(n);
  b.head(slot) = y.head(slot).transpose();
  b(slot) = -x.dot(y);
  b.tail(n - 1 - slot) = y.tail(n - 1 - slot).transpose();
  return b;
}

FrameVectors frame_vectors(int slot, const Vec& x, const Vec& y, const Vec& z) {
  FrameVectors f;
  f.alpha = frame_alpha(slot, x);
  f.b_row = frame_b(slot, x, y);
  f.beta.resize(2, x.size() + 1);
  f.beta.row(0) = f.b_row;
  f.beta.row(1) = frame_b(slot, x, z);
  return f;
}

namespace {

Mat alpha_matrix(const Mat& X) {
  const int n = static_cast<int>(X.rows()) + 1;
  Mat a(n, n);
  for (int i = 0; i < n; ++i) a.col(i) = frame_alpha(i, X.col(i));
  return a;
}

double relative_det(const Mat& m, double* det_out = nullptr) {
  const double det = m.fullPivLu().determinant();
  if (det_out) *det_out = det;
  const double h = hadamard_bound(m);
  return h > 0 ? std::abs(det) / h : 0.0;
}

// Flattened n x n entries without (0, 0).
Vec traceless_entries(const Mat& m) {
  const Eigen::Index n = m.rows();
  Vec v(n * n - 1);
  Eigen::Index idx = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k)
      if (j != 0 || k != 0) v(idx++) = m(j, k);
  return v;
}

}  // namespace

double delta_det(const Mat& X) { return alpha_matrix(X).fullPivLu().determinant(); }

Mat solve_p(const Mat& P, const Mat& X, double tol) {
  const int n = static_cast<int>(X.rows()) + 1;
  const int N = static_cast<int>(X.cols());
  const Mat amat = alpha_matrix(X);
  double delta = 0.0;
  if (relative_det(amat, &delta) <= tol) throw SingularConfiguration("solve_p: Delta vanishes", delta);
  Mat rhs = Mat::Zero(2, n);
  for (int j = n; j < N; ++j) rhs += P.col(j - n) * frame_alpha(pivot_slot(j, n), X.col(j)).transpose();
  return Mat(amat.partialPivLu().solve(-rhs.transpose()).transpose());
}

TSystem assemble_T(const Mat& X) {
  const int n = static_cast<int>(X.rows()) + 1;
  const int m = n * n - 1;
  TSystem sys;
  sys.matrix = Mat::Zero(m, m);
  for (int i = 0; i <= n; ++i) {
    const int slot = pivot_slot(i, n);
    const Vec x = X.col(i);
    const Vec alpha = frame_alpha(slot, x);
    for (int l = 0; l < n - 1; ++l) {
      // derivative of b_slot(x, y) with respect to y_l
      Eigen::RowVectorXd db = Eigen::RowVectorXd::Zero(n);
      db(slot) = -x(l);
      db(l < slot ? l : l + 1) = 1.0;
      sys.matrix.col(i * (n - 1) + l) = traceless_entries(db.transpose() * alpha.transpose());
    }
  }
  sys.T = sys.matrix.fullPivLu().determinant();
  return sys;
}

YZSolution solve_yz(const Mat& X, const Mat& Y, const Mat& Z, double tol) {
  const int n = static_cast<int>(X.rows()) + 1;
  const int N = static_cast<int>(X.cols());
  const TSystem sys = assemble_T(X);
  const double h = hadamard_bound(sys.matrix);
  if (h == 0.0 || std::abs(sys.T) / h <= tol) throw SingularConfiguration("solve_yz: T vanishes", sys.T);
  Mat rhs(n * n - 1, 2);
  Mat sum_y = Mat::Zero(n, n), sum_z = Mat::Zero(n, n);
  for (int j = n + 1; j < N; ++j) {
    const int slot = pivot_slot(j, n);
    const Vec x = X.col(j);
    const Vec alpha = frame_alpha(slot, x);
    sum_y += frame_b(slot, x, Y.col(j - n - 1)).transpose() * alpha.transpose();
    sum_z += frame_b(slot, x, Z.col(j - n - 1)).transpose() * alpha.transpose();
  }
  rhs.col(0) = -traceless_entries(sum_y);
  rhs.col(1) = -traceless_entries(sum_z);
  const Mat sol = sys.matrix.fullPivLu().solve(rhs);
  YZSolution out;
  out.y = Eigen::Map<const Mat>(sol.col(0).data(), n - 1, n + 1);
  out.z = Eigen::Map<const Mat>(sol.col(1).data(), n - 1, n + 1);
  return out;
}

SetVReport check_setV(const Mat& P, const Mat& X, double tol) {
  const int n = static_cast<int>(X.rows()) + 1;
  SetVReport r;
  const Mat amat = alpha_matrix(X);
  const double rel_delta = relative_det(amat);
  r.margins[0] = rel_delta;
  {
    const TSystem sys = assemble_T(X);
    const double h = hadamard_bound(sys.matrix);
    r.margins[1] = h > 0 ? std::abs(sys.T) / h : 0.0;
  }
  double pscale = 0.0, pmin = INFINITY;
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    pscale = std::max(pscale, P.col(j).norm());
    pmin = std::min(pmin, P.col(j).norm());
  }
  r.margins[2] = pscale > 0 ? pmin / pscale : 0.0;
  r.margins[3] = 0.0;
  if (rel_delta > tol && pscale > 0) {
    const Mat pn = solve_p(P, X, tol);
    double m = INFINITY;
    for (int i = 0; i < n; ++i) m = std::min(m, pn.col(i).norm());
    r.margins[3] = rel_delta * m / pscale;
  }
  r.ok = std::all_of(r.margins.begin(), r.margins.end(), [&](double v) { return v > tol; });
  return r;
}

double FrameData::max_sum_residual() const { return std::max({sum_pa, sum_Ba, sum_sp, sum_sB}); }

FrameData build_frames(const ParamU& u, double tol) {
  const int n = u.n;
  const int N = 2 * n + 1;
  if ((u.kappa.array() <= 1.0).any()) throw InvalidArgument("build_frames: every kappa_i must exceed 1");
  const SetVReport setv = check_setV(u.P, u.X, tol);
  if (!setv.ok) {
    const char* names[] = {"Delta", "T", "p_j (j > n)", "sum_j S_ij p_j"};
    for (int k = 0; k < 4; ++k)
      if (!(setv.margins[k] > tol))
        throw SingularConfiguration(std::string("build_frames: admissibility fails on ") + names[k], setv.margins[k]);
  }
  const Mat pn = solve_p(u.P, u.X, tol);
  const YZSolution yz = solve_yz(u.X, u.Y, u.Z, tol);

  FrameData fd;
  fd.q = Vec::Ones(n);
  fd.q.tail(n - 2) = u.b;
  fd.frames.resize(N);
  for (int k = 0; k < N; ++k) {
    Frame& f = fd.frames[k];
    const int slot = pivot_slot(k, n);
    const Vec x = u.X.col(k);
    const Vec y = k <= n ? Vec(yz.y.col(k)) : Vec(u.Y.col(k - n - 1));
    const Vec z = k <= n ? Vec(yz.z.col(k)) : Vec(u.Z.col(k - n - 1));
    const FrameVectors fv = frame_vectors(slot, x, y, z);
    f.a = fv.alpha;
    f.B = fv.beta;
    f.p = k < n ? Eigen::Vector2d(pn.col(k)) : Eigen::Vector2d(u.P.col(k - n));
    f.s = f.a.dot(fd.q);
    f.gamma = {f.p * f.a.transpose(), f.s * f.B};
  }

  Mat s_pa = Mat::Zero(2, n), s_By = Mat::Zero(n, n), s_Bz = Mat::Zero(n, n);
  Vec s_sp = Vec::Zero(2);
  Mat s_sB = Mat::Zero(2, n);
  double n_pa = 0, n_Ba = 0, n_sp = 0, n_sB = 0;
  for (const Frame& f : fd.frames) {
    const Mat pa = f.p * f.a.transpose();
    const Mat by = f.B.row(0).transpose() * f.a.transpose();
    const Mat bz = f.B.row(1).transpose() * f.a.transpose();
    s_pa += pa;
    s_By += by;
    s_Bz += bz;
    s_sp += f.s * f.p;
    s_sB += f.s * f.B;
    n_pa += pa.norm();
    n_Ba += std::sqrt(by.squaredNorm() + bz.squaredNorm());
    n_sp += std::abs(f.s) * f.p.norm();
    n_sB += std::abs(f.s) * f.B.norm();
    const double scale = f.B.norm() * f.a.norm();
    if (scale > 0) fd.max_Ba = std::max(fd.max_Ba, (f.B * f.a).norm() / scale);
  }
  auto rel = [](double num, double den) { return den > 0 ? num / den : num; };
  fd.sum_pa = rel(s_pa.norm(), n_pa);
  fd.sum_Ba = rel(std::sqrt(s_By.squaredNorm() + s_Bz.squaredNorm()), n_Ba);
  fd.sum_sp = rel(s_sp.norm(), n_sp);
  fd.sum_sB = rel(s_sB.norm(), n_sB);
  return fd;
}

TauConfig build_tau(const ParamU& u, const PhasePoint& rho) {
  const int n = u.n;
  const int N = 2 * n + 1;
  TauConfig t;
  t.frames = build_frames(u);
  t.eta.resize(N);
  t.pi.resize(N);
  t.xi.resize(N);
  t.zeta.resize(N);
  t.chi.resize(N);
  PhasePoint partial = PhasePoint::zero(n);
  double scale = rho.norm();
  for (int i = 0; i < N; ++i) {
    const PhasePoint& g = t.frames.frames[i].gamma;
    const double kappa = u.kappa(i);
    t.zeta[i] = kappa * g;
    t.eta[i] = partial + t.zeta[i];
    t.pi[i] = rho + partial;
    t.xi[i] = rho + t.eta[i];
    t.chi[i] = 1.0 / kappa;
    partial = partial + g;
    scale += g.norm();

    Eigen::JacobiSVD<Mat> svd(Mat(g.first));
    const auto& sv = svd.singularValues();
    if (sv(0) > 0) t.rank_one_ratio = std::max(t.rank_one_ratio, sv(1) / sv(0));
  }
  if (scale == 0.0) scale = 1.0;
  for (int i = 0; i + 1 < N; ++i) {
    const PhasePoint& g = t.frames.frames[i].gamma;
    const double r1 = (t.pi[i + 1] - t.pi[i] - g).norm();
    const double r2 = (t.pi[i + 1] - (t.chi[i] * t.xi[i] + (1.0 - t.chi[i]) * t.pi[i])).norm();
    t.recursion_residual = std::max({t.recursion_residual, r1 / scale, r2 / scale});
  }
  // pi_{N+1} = pi_N + gamma_N must return to pi_1.
  const PhasePoint wrap = t.pi[N - 1] + t.frames.frames[N - 1].gamma;
  t.closure_residual = (wrap - t.pi[0]).norm() / scale;
  return t;
}

namespace {

Vec stacked_tau(const Vec& uvec, int n) {
  const int N = 2 * n + 1;
  const ParamU u = ParamU::from_vector(uvec, n);
  const FrameData fd = build_frames(u);
  const int block = 4 * n;
  Vec out(3 * N * block);
  PhasePoint partial = PhasePoint::zero(n);
  for (int i = 0; i < N; ++i) {
    const PhasePoint& g = fd.frames[i].gamma;
    const PhasePoint z = u.kappa(i) * g;
    out.segment(i * block, block) = (partial + z).vectorize();
    out.segment((N + i) * block, block) = g.vectorize();
    out.segment((2 * N + i) * block, block) = z.vectorize();
    partial = partial + g;
  }
  return out;
}

// The same map as stacked_tau, written once more over a generic scalar so it
// can be evaluated at complex arguments. Admissibility is checked on the real
// point beforehand.
template <class S>
using VecT = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
VecT<S> alpha_t(int slot, const VecT<S>& x) {
  const int n = static_cast<int>(x.size()) + 1;
  VecT<S> a(n);
  a.head(slot) = x.head(slot);
  a(slot) = S(1.0);
  a.tail(n - 1 - slot) = x.tail(n - 1 - slot);
  return a;
}

template <class S>
VecT<S> b_t(int slot, const VecT<S>& x, const VecT<S>& y) {
  const int n = static_cast<int>(x.size()) + 1;
  VecT<S> b(n);
  b.head(slot) = y.head(slot);
  b(slot) = -(x.transpose() * y)(0, 0);
  b.tail(n - 1 - slot) = y.tail(n - 1 - slot);
  return b;
}

template <class S>
VecT<S> traceless_t(const MatT<S>& m) {
  const Eigen::Index n = m.rows();
  VecT<S> v(n * n - 1);
  Eigen::Index idx = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k)
      if (j != 0 || k != 0) v(idx++) = m(j, k);
  return v;
}

template <class S>
VecT<S> stacked_tau_t(const VecT<S>& v, int n) {
  const ParamLayout l(n);
  const int N = l.N;
  const MatT<S> P = Eigen::Map<const MatT<S>>(v.data() + l.p, 2, N - n);
  const MatT<S> X = Eigen::Map<const MatT<S>>(v.data() + l.x, n - 1, N);
  const MatT<S> Y = Eigen::Map<const MatT<S>>(v.data() + l.y, n - 1, N - n - 1);
  const MatT<S> Z = Eigen::Map<const MatT<S>>(v.data() + l.z, n - 1, N - n - 1);
  const VecT<S> bq = v.segment(l.b, n - 2);
  const VecT<S> kappa = v.segment(l.kappa, N);

  MatT<S> amat(n, n);
  for (int i = 0; i < n; ++i) amat.col(i) = alpha_t<S>(i, X.col(i));
  MatT<S> rhs = MatT<S>::Zero(2, n);
  for (int j = n; j < N; ++j) rhs += P.col(j - n) * alpha_t<S>(pivot_slot(j, n), X.col(j)).transpose();
  const MatT<S> pn = amat.partialPivLu().solve(MatT<S>(-rhs.transpose())).transpose();

  const int m = n * n - 1;
  MatT<S> T = MatT<S>::Zero(m, m);
  for (int i = 0; i <= n; ++i) {
    const int slot = pivot_slot(i, n);
    const VecT<S> x = X.col(i);
    const VecT<S> alpha = alpha_t<S>(slot, x);
    for (int q = 0; q < n - 1; ++q) {
      VecT<S> db = VecT<S>::Zero(n);
      db(slot) = -x(q);
      db(q < slot ? q : q + 1) = S(1.0);
      T.col(i * (n - 1) + q) = traceless_t<S>(db * alpha.transpose());
    }
  }
  MatT<S> sum_y = MatT<S>::Zero(n, n), sum_z = MatT<S>::Zero(n, n);
  for (int j = n + 1; j < N; ++j) {
    const int slot = pivot_slot(j, n);
    const VecT<S> x = X.col(j);
    const VecT<S> alpha = alpha_t<S>(slot, x);
    sum_y += b_t<S>(slot, x, Y.col(j - n - 1)) * alpha.transpose();
    sum_z += b_t<S>(slot, x, Z.col(j - n - 1)) * alpha.transpose();
  }
  MatT<S> yz_rhs(m, 2);
  yz_rhs.col(0) = -traceless_t<S>(sum_y);
  yz_rhs.col(1) = -traceless_t<S>(sum_z);
  const MatT<S> sol = T.fullPivLu().solve(yz_rhs);
  const MatT<S> ys = Eigen::Map<const MatT<S>>(sol.col(0).data(), n - 1, n + 1);
  const MatT<S> zs = Eigen::Map<const MatT<S>>(sol.col(1).data(), n - 1, n + 1);

  VecT<S> q = VecT<S>::Ones(n);
  q.tail(n - 2) = bq;
  const int block = 4 * n;
  VecT<S> out(3 * N * block);
  VecT<S> partial = VecT<S>::Zero(block);
  for (int k = 0; k < N; ++k) {
    const int slot = pivot_slot(k, n);
    const VecT<S> x = X.col(k);
    const VecT<S> y = k <= n ? VecT<S>(ys.col(k)) : VecT<S>(Y.col(k - n - 1));
    const VecT<S> z = k <= n ? VecT<S>(zs.col(k)) : VecT<S>(Z.col(k - n - 1));
    const VecT<S> a = alpha_t<S>(slot, x);
    const VecT<S> p = k < n ? VecT<S>(pn.col(k)) : VecT<S>(P.col(k - n));
    const S s = (a.transpose() * q)(0, 0);
    const VecT<S> by = b_t<S>(slot, x, y), bz = b_t<S>(slot, x, z);
    VecT<S> g(block);
    for (int c = 0; c < n; ++c) {
      g(c) = p(0) * a(c);
      g(n + c) = p(1) * a(c);
      g(2 * n + c) = s * by(c);
      g(3 * n + c) = s * bz(c);
    }
    const VecT<S> zeta = kappa(k) * g;
    out.segment(k * block, block) = partial + zeta;
    out.segment((N + k) * block, block) = g;
    out.segment((2 * N + k) * block, block) = zeta;
    partial += g;
  }
  return out;
}

}  // namespace

Mat stacked_tau_complex_step(const ParamU& u) {
  build_frames(u);
  const int n = u.n;
  const Vec base = u.to_vector();
  const double h = 1e-30;
  const int D = static_cast<int>(base.size());
  Mat jac(3 * (2 * n + 1) * 4 * n, D);
  VecT<std::complex<double>> z = base.cast<std::complex<double>>();
  for (int k = 0; k < D; ++k) {
    z(k) += std::complex<double>(0.0, h);
    jac.col(k) = stacked_tau_t(z, n).imag() / h;
    z(k) = base(k);
  }
  return jac;
}

TauJacobians tau_jacobians(const ParamU& u, double h) {
  const int n = u.n;
  const int N = 2 * n + 1;
  const int block = 4 * n;
  Mat jac;
  TauJacobians out;
  if (h > 0) {
    const FiniteJacobian fj = finite_jacobian([n](const Vec& v) { return stacked_tau(v, n); }, u.to_vector(), h);
    out.error_estimate = fj.error_estimate;
    jac = fj.jacobian;
  } else {
    jac = stacked_tau_complex_step(u);
  }
  for (int i = 0; i < N; ++i) {
    out.eta.push_back(jac.middleRows(i * block, block));
    out.gamma.push_back(jac.middleRows((N + i) * block, block));
    out.zeta.push_back(jac.middleRows((2 * N + i) * block, block));
  }
  return out;
}

std::vector<RankReport> rank_zeta(const ParamU& u, double tol, double h) {
  const TauJacobians jac = tau_jacobians(u, h);
  std::vector<RankReport> out;
  for (const Mat& dz : jac.zeta) out.push_back(numeric_rank(dz, tol));
  return out;
}

}  // namespace ocn
