#include "ocn/convex_model.hpp"

#include "ocn/errors.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace ocn {

namespace {

// Kernel k(x) = 315/256 (1 - x^2)^4 on [-1, 1]; P is an antiderivative of
// (1 - x^2)^4 with P(0) = 0.
constexpr double kKernelScale = 315.0 / 256.0;

double kernel_antiderivative(double x) {
  const double x2 = x * x;
  return x * (1.0 + x2 * (-4.0 / 3.0 + x2 * (6.0 / 5.0 + x2 * (-4.0 / 7.0 + x2 / 9.0))));
}

}  // namespace

Vec lift(const SpaceMatrix& a) {
  const int n = static_cast<int>(a.cols());
  const int d = minor_count(n);
  Vec w(2 * n + d);
  w.head(2 * n) = flatten(a);
  w.tail(d) = minor_vector(a);
  return w;
}

SmoothAbs smooth_abs(double t, double mu) {
  SmoothAbs s;
  if (!(mu > 0)) throw InvalidArgument("smooth_abs: mu must be positive");
  if (!std::isfinite(t)) throw NonFiniteValue("smooth_abs: non-finite argument", 0);
  if (std::abs(t) >= mu) {
    s.h = std::abs(t);
    s.dh = t > 0 ? 1.0 : -1.0;
    return s;
  }
  const double u = t / mu;
  const double w = 1.0 - u * u;
  const double w4 = w * w * w * w;
  s.dh = 2.0 * kKernelScale * kernel_antiderivative(u);
  s.h = t * s.dh + mu * kKernelScale * w4 * w / 5.0;
  s.d2h = 2.0 * kKernelScale * w4 / mu;
  return s;
}

ConvexG::ConvexG(std::vector<AffinePiece> pieces, double mu, double delta_dom, double min_margin)
    : pieces_(std::move(pieces)), mu_(mu), delta_dom_(delta_dom), min_margin_(min_margin) {}

GEval ConvexG::eval(const Vec& w, bool want_hess) const {
  if (pieces_.empty()) throw InvalidArgument("ConvexG::eval: no pieces");
  const Eigen::Index dim = w.size();
  GEval out;
  out.value = pieces_[0](w);
  out.grad = pieces_[0].grad;
  if (want_hess) out.hess = Mat::Zero(dim, dim);
  std::vector<double> levels(pieces_.size());
  for (size_t k = 0; k < pieces_.size(); ++k) levels[k] = pieces_[k](w);
  for (size_t k = 1; k < pieces_.size(); ++k) {
    const AffinePiece& piece = pieces_[k];
    const double lk = piece(w);
    const double t = out.value - lk;
    const SmoothAbs s = smooth_abs(t, mu_);
    const double wa = 0.5 * (1.0 + s.dh), wb = 0.5 * (1.0 - s.dh);
    if (want_hess) {
      const Vec diff = out.grad - piece.grad;
      out.hess = wa * out.hess + (0.5 * s.d2h) * (diff * diff.transpose()).eval();
    }
    out.grad = wa * out.grad + wb * piece.grad;
    out.value = 0.5 * (out.value + lk + s.h);
  }
  const size_t top = std::max_element(levels.begin(), levels.end()) - levels.begin();
  double second = -INFINITY;
  for (size_t k = 0; k < levels.size(); ++k)
    if (k != top) second = std::max(second, levels[k]);
  if (levels[top] - second >= static_cast<double>(pieces_.size()) * mu_) out.exact_piece = static_cast<int>(top);
  return out;
}

ConvexG build_G(std::vector<AffinePiece> pieces, double mu) {
  const int N = static_cast<int>(pieces.size());
  if (N == 0) throw InvalidArgument("build_G: no pieces");
  double delta = INFINITY, m_min = INFINITY;
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      if (i == j) continue;
      const double m = pieces[j].value - pieces[i](pieces[j].base);
      if (!(m > 0)) throw NonPositiveMargin("build_G: piece i reaches the value at base j", i, j);
      m_min = std::min(m_min, m);
      const double slope = (pieces[j].grad - pieces[i].grad).norm();
      if (slope > 0) delta = std::min(delta, m / (2.0 * slope));
    }
  if (N == 1) {
    return ConvexG(std::move(pieces), mu > 0 ? mu : 1.0, INFINITY, INFINITY);
  }
  if (mu > 0) {
    if (!(mu < delta / 4 && mu <= m_min / (2.0 * N))) throw InvalidArgument("build_G: smoothing radius too large");
  } else {
    mu = std::min(delta / 8.0, m_min / (4.0 * N));
  }
  return ConvexG(std::move(pieces), mu, delta, m_min);
}

std::vector<AffinePiece> pieces_from_jets(const TauConfig& tau, const Vec& c, const std::vector<Vec>& d,
                                          const std::vector<SpaceMatrix>& Q) {
  std::vector<AffinePiece> out;
  for (size_t i = 0; i < tau.eta.size(); ++i) {
    AffinePiece p;
    p.base = lift(tau.eta[i].first);
    p.value = c(i);
    p.grad.resize(p.base.size());
    p.grad.head(Q[i].size()) = flatten(Q[i]);
    p.grad.tail(d[i].size()) = d[i];
    out.push_back(std::move(p));
  }
  return out;
}

double F0Model::F0(const SpaceMatrix& a) const { return 0.5 * epsilon_ * a.squaredNorm() + g_.value(lift(a)); }

SpaceMatrix F0Model::DF0(const SpaceMatrix& a) const {
  const GEval e = g_.eval(lift(a), false);
  const int d = minor_count(n_);
  return epsilon_ * a + unflatten(e.grad.head(2 * n_), n_) + weighted_minor_gradient(a, e.grad.tail(d));
}

Mat F0Model::D2F0(const SpaceMatrix& a) const {
  const GEval e = g_.eval(lift(a), true);
  const int d = minor_count(n_);
  Mat chain(2 * n_ + d, 2 * n_);
  chain.topRows(2 * n_) = Mat::Identity(2 * n_, 2 * n_);
  chain.bottomRows(d) = minor_jacobian(a);
  Mat h = epsilon_ * Mat::Identity(2 * n_, 2 * n_) + chain.transpose() * e.hess * chain +
          weighted_minor_hessian(n_, e.grad.tail(d));
  return 0.5 * (h + h.transpose());
}

Profile cutoff_profile(double t) {
  Profile p;
  if (t >= 1.0) return p;
  const double s = 1.0 - t;
  p.f = std::exp(1.0 - 1.0 / s);
  p.df = -p.f / (s * s);
  p.d2f = p.f * (1.0 / std::pow(s, 4) - 2.0 / std::pow(s, 3));
  return p;
}

CutoffEval cutoff_V(const Mat& H, double r, const Vec& x) {
  if (!(r > 0)) throw InvalidArgument("cutoff_V: radius must be positive");
  const Eigen::Index k = x.size();
  CutoffEval out;
  out.grad = Vec::Zero(k);
  out.hess = Mat::Zero(k, k);
  const double r2 = r * r;
  const double t = x.squaredNorm() / r2;
  if (t >= 1.0) return out;
  const Profile p = cutoff_profile(t);
  const Vec hx = H * x;
  const double q = 0.5 * x.dot(hx);
  out.value = p.f * q;
  out.grad = p.df * (2.0 / r2) * q * x + p.f * hx;
  out.hess = p.d2f * (4.0 / (r2 * r2)) * q * x * x.transpose() + p.df * (2.0 / r2) * q * Mat::Identity(k, k) +
             p.df * (2.0 / r2) * (x * hx.transpose() + hx * x.transpose()) + p.f * H;
  return out;
}

double cutoff_constant() {
  static const double c0 = [] {
    auto bound = [](double t) {
      const Profile p = cutoff_profile(t);
      return p.f + 5.0 * t * std::abs(p.df) + 2.0 * t * t * std::abs(p.d2f);
    };
    const int grid = 20000;
    double best_t = 0.0, best = bound(0.0);
    for (int k = 1; k < grid; ++k) {
      const double t = static_cast<double>(k) / grid;
      const double v = bound(t);
      if (v > best) {
        best = v;
        best_t = t;
      }
    }
    const double lo = std::max(0.0, best_t - 1.0 / grid), hi = std::min(1.0, best_t + 1.0 / grid);
    const auto refined =
        boost::math::tools::brent_find_minima([&](double t) { return -bound(t); }, lo, hi, 50);
    return std::max(best, -refined.second) * (1.0 + 1e-6);
  }();
  return c0;
}

int FluxModel::zone_of(const SpaceMatrix& a) const {
  for (size_t i = 0; i < centers_.size(); ++i)
    if ((a - centers_[i]).norm() <= zone_radius_) return static_cast<int>(i);
  return -1;
}

double SigmaModel::F(const SpaceMatrix& a) const {
  double v = f0_.F0(a);
  for (size_t j = 0; j < centers_.size(); ++j) v += cutoff_V(h_tilde_[j], r_cut_, flatten(a - centers_[j])).value;
  return v;
}

SpaceMatrix SigmaModel::DF(const SpaceMatrix& a) const {
  SpaceMatrix out = f0_.DF0(a);
  for (size_t j = 0; j < centers_.size(); ++j)
    out += unflatten(cutoff_V(h_tilde_[j], r_cut_, flatten(a - centers_[j])).grad, n_);
  return out;
}

Mat SigmaModel::D2F(const SpaceMatrix& a) const {
  Mat out = f0_.D2F0(a);
  for (size_t j = 0; j < centers_.size(); ++j) out += cutoff_V(h_tilde_[j], r_cut_, flatten(a - centers_[j])).hess;
  return out;
}

double SigmaModel::g(const SpaceMatrix& a) const {
  double v = 0.25 * epsilon() * a.squaredNorm();
  for (size_t j = 0; j < centers_.size(); ++j) v += cutoff_V(h_tilde_[j], r_cut_, flatten(a - centers_[j])).value;
  return v;
}

double SigmaModel::G_tilde(const SpaceMatrix& a, const Vec& j) const {
  Vec w(2 * n_ + j.size());
  w.head(2 * n_) = flatten(a);
  w.tail(j.size()) = j;
  return g(a) + f0_.G().value(w);
}

SigmaModel build_F(const F0Model& f0, const std::vector<SpaceMatrix>& centers, const std::vector<Mat>& H0) {
  const int N = static_cast<int>(centers.size());
  const int n = f0.n();
  if (static_cast<int>(H0.size()) != N) throw InvalidArgument("build_F: one H0 per center");
  SigmaModel m;
  m.n_ = n;
  m.f0_ = f0;
  m.centers_ = centers;
  m.h0_ = H0;
  m.c0_ = cutoff_constant();
  m.budget_ = f0.epsilon() / (2.0 * m.c0_);

  m.r0_ = INFINITY;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) m.r0_ = std::min(m.r0_, (centers[i] - centers[j]).norm());
  if (!(m.r0_ > 0)) throw OverlappingSupports("build_F: two centers coincide");
  m.r_cut_ = 0.5 * m.r0_;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j)
      if ((centers[i] - centers[j]).norm() < 2.0 * m.r_cut_) throw OverlappingSupports("build_F: supports overlap");

  for (int j = 0; j < N; ++j) {
    Mat h = H0[j] - f0.D2F0(centers[j]);
    h = (0.5 * (h + h.transpose())).eval();
    m.budget_used_ += Eigen::JacobiSVD<Mat>(h).singularValues()(0);
    m.h_tilde_.push_back(std::move(h));
  }
  if (!(m.budget_used_ < m.budget_))
    throw ConvexityBudgetExceeded("build_F: sum of |H~_j| = " + std::to_string(m.budget_used_) +
                                  " is not below eps/(2 C0) = " + std::to_string(m.budget_));

  // zone radius: keep the lifted point within delta_dom / 2 of w_j and the
  // matrix within r0 / 4 of A_j.
  double lip = 0.0;
  for (const auto& c : centers) lip = std::max(lip, Eigen::JacobiSVD<Mat>(minor_jacobian(c)).singularValues()(0));
  const double target = 0.5 * f0.G().delta_dom();
  double radius = 0.25 * m.r0_;
  if (std::isfinite(target)) {
    auto excess = [&](double r) {
      const double dj = lip * r + 0.5 * r * r;
      return std::sqrt(r * r + dj * dj) - target;
    };
    if (excess(radius) > 0) {
      boost::math::tools::eps_tolerance<double> tol(40);
      const auto bracket = boost::math::tools::bisect(excess, 0.0, radius, tol);
      radius = bracket.first;
    }
  }
  m.zone_radius_ = radius;
  return m;
}

std::vector<Mat> sample_H_tilde(int n, int N, double epsilon, double fraction, Rng& rng) {
  const int k = 2 * n;
  std::vector<Mat> out;
  double total = 0.0;
  for (int j = 0; j < N; ++j) {
    Mat h(k, k);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) h(a, b) = rng.gaussian();
    h = (0.5 * (h + h.transpose())).eval();
    total += Eigen::JacobiSVD<Mat>(h).singularValues()(0);
    out.push_back(std::move(h));
  }
  const double scale = fraction * epsilon / (2.0 * cutoff_constant()) / total;
  for (Mat& h : out) h *= scale;
  return out;
}

JetModel::JetModel(const std::vector<PhasePoint>& base, std::vector<Mat> hessians) : hessians_(std::move(hessians)) {
  if (base.empty() || base.size() != hessians_.size()) throw InvalidArgument("JetModel: one Hessian per base point");
  n_ = base.front().n();
  double r0 = INFINITY;
  for (size_t i = 0; i < base.size(); ++i) {
    centers_.push_back(base[i].first);
    values_.push_back(base[i].second);
    for (size_t j = 0; j < i; ++j) r0 = std::min(r0, (base[i].first - base[j].first).norm());
  }
  zone_radius_ = 0.25 * r0;
}

SpaceMatrix JetModel::DF(const SpaceMatrix& a) const {
  const int i = zone_of(a);
  if (i < 0) throw ZoneViolation("JetModel::DF: point outside every working zone; shrink the rho-ball");
  return values_[i] + unflatten(hessians_[i] * flatten(a - centers_[i]), n_);
}

Mat JetModel::D2F(const SpaceMatrix& a) const {
  const int i = zone_of(a);
  if (i < 0) throw ZoneViolation("JetModel::D2F: point outside every working zone; shrink the rho-ball");
  return hessians_[i];
}

namespace {

SpaceMatrix gaussian_space(int n, Rng& rng) {
  SpaceMatrix a(2, n);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < n; ++c) a(r, c) = rng.gaussian();
  return a;
}

// Endpoints near a random center, at a scale drawn from the support radius
// up to the spread of the configuration.
SpaceMatrix probe_point(const SigmaModel& m, Rng& rng) {
  const auto& centers = m.centers();
  const int i = static_cast<int>(rng.uniform() * centers.size()) % static_cast<int>(centers.size());
  const double scale = m.r_cut() * std::pow(8.0, 2.0 * rng.uniform() - 1.0);
  return centers[i] + scale * gaussian_space(m.n(), rng) / std::sqrt(2.0 * m.n());
}

void record(ConvexityProbe& p, double gap, double len2) {
  p.min_midpoint_gap = std::min(p.min_midpoint_gap, gap);
  if (len2 > 0) p.min_curvature = std::min(p.min_curvature, gap / (0.25 * len2));
}

ConvexityProbe fresh(int segments) {
  ConvexityProbe p;
  p.segments = segments;
  p.min_midpoint_gap = INFINITY;
  p.min_curvature = INFINITY;
  return p;
}

}  // namespace

ConvexityProbe probe_G_tilde(const SigmaModel& m, int segments, Rng& rng) {
  ConvexityProbe p = fresh(segments);
  const int d = minor_count(m.n());
  for (int s = 0; s < segments; ++s) {
    const SpaceMatrix a = probe_point(m, rng), b = probe_point(m, rng);
    Vec ja = minor_vector(a), jb = minor_vector(b);
    for (int k = 0; k < d; ++k) {
      ja(k) += m.r_cut() * rng.gaussian();
      jb(k) += m.r_cut() * rng.gaussian();
    }
    const SpaceMatrix mid_a = 0.5 * (a + b);
    const Vec mid_j = 0.5 * (ja + jb);
    const double gap = 0.5 * (m.G_tilde(a, ja) + m.G_tilde(b, jb)) - m.G_tilde(mid_a, mid_j);
    record(p, gap, (a - b).squaredNorm() + (ja - jb).squaredNorm());
  }
  return p;
}

ConvexityProbe probe_rank_one(const SigmaModel& m, int segments, Rng& rng) {
  ConvexityProbe p = fresh(segments);
  const int n = m.n();
  for (int s = 0; s < segments; ++s) {
    const SpaceMatrix mid = probe_point(m, rng);
    Eigen::Vector2d u(rng.gaussian(), rng.gaussian());
    Vec v(n);
    for (int k = 0; k < n; ++k) v(k) = rng.gaussian();
    SpaceMatrix h = u * v.transpose();
    h *= m.r_cut() * std::pow(8.0, 2.0 * rng.uniform() - 1.0) / h.norm();
    const double gap = 0.5 * (m.F(mid + h) + m.F(mid - h)) - m.F(mid);
    record(p, gap, 4.0 * h.squaredNorm());
  }
  return p;
}

ConvexityProbe probe_segments(const SigmaModel& m, int segments, Rng& rng) {
  ConvexityProbe p = fresh(segments);
  for (int s = 0; s < segments; ++s) {
    const SpaceMatrix a = probe_point(m, rng), b = probe_point(m, rng);
    const double gap = 0.5 * (m.F(a) + m.F(b)) - m.F(0.5 * (a + b));
    record(p, gap, (a - b).squaredNorm());
  }
  return p;
}

}  // namespace ocn
