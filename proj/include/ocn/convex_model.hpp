#pragma once

// The polyconvex energy F(A) = eps/2 |A|^2 + G(A, J(A)) + sum_j V_j(A - A_j)
// with a convex G built from affine pieces, and its flux DF.

#include "ocn/embedder.hpp"
#include "ocn/rng.hpp"

#include <memory>
#include <vector>

namespace ocn {

/// l(w) = value + <grad, w - base> on R^{2n} x R^d, with w = (flatten(A), J).
struct AffinePiece {
  Vec base;
  double value = 0.0;
  Vec grad;
  double operator()(const Vec& w) const { return value + grad.dot(w - base); }
};

/// Lifted point (flatten(A), J(A)).
Vec lift(const SpaceMatrix& a);

/// |t| convolved with the kernel 315/(256 mu) (1 - (s/mu)^2)^4 supported on
/// [-mu, mu], and its first two derivatives (C^5 in t). Equals |t| exactly
/// for |t| >= mu.
struct SmoothAbs {
  double h = 0.0, dh = 0.0, d2h = 0.0;
};
SmoothAbs smooth_abs(double t, double mu);

struct GEval {
  double value = 0.0;
  Vec grad;
  Mat hess;
  /// Index of the piece G coincides with near w, or -1.
  int exact_piece = -1;
};

/// Nested smooth maximum smax(...smax(l_1, l_2)..., l_N) with
/// smax(a, b) = (a + b + h_mu(a - b)) / 2. Convex, and equal to l_i wherever
/// l_i exceeds every other piece by N mu.
class ConvexG {
 public:
  ConvexG() = default;
  ConvexG(std::vector<AffinePiece> pieces, double mu, double delta_dom, double min_margin);

  GEval eval(const Vec& w, bool want_hess = true) const;
  double value(const Vec& w) const { return eval(w, false).value; }

  const std::vector<AffinePiece>& pieces() const { return pieces_; }
  double mu() const { return mu_; }
  /// G equals l_i on the ball of this radius around w_i.
  double delta_dom() const { return delta_dom_; }
  /// min over i != j of c_j - l_i(w_j).
  double min_margin() const { return min_margin_; }

 private:
  std::vector<AffinePiece> pieces_;
  double mu_ = 0.0, delta_dom_ = 0.0, min_margin_ = 0.0;
};

/// Checks the dominance margins and picks mu = min(delta_dom / 8,
/// min_margin / (4N)) unless mu > 0 is given, in which case it must satisfy
/// mu < delta_dom / 4 and mu <= min_margin / (2N).
ConvexG build_G(std::vector<AffinePiece> pieces, double mu = 0.0);

std::vector<AffinePiece> pieces_from_jets(const TauConfig& tau, const Vec& c, const std::vector<Vec>& d,
                                          const std::vector<SpaceMatrix>& Q);

/// F0(A) = eps/2 |A|^2 + G(A, J(A)).
class F0Model {
 public:
  F0Model() = default;
  F0Model(int n, double epsilon, ConvexG g) : n_(n), epsilon_(epsilon), g_(std::move(g)) {}

  double F0(const SpaceMatrix& a) const;
  SpaceMatrix DF0(const SpaceMatrix& a) const;
  /// 2n x 2n on the row-major flattening.
  Mat D2F0(const SpaceMatrix& a) const;

  int n() const { return n_; }
  double epsilon() const { return epsilon_; }
  const ConvexG& G() const { return g_; }

 private:
  int n_ = 0;
  double epsilon_ = 0.0;
  ConvexG g_;
};

/// Cutoff profile f(t) = exp(1 - 1/(1 - t)) for t < 1, else 0, with
/// zeta(A) = f(|A|^2).
struct Profile {
  double f = 0.0, df = 0.0, d2f = 0.0;
};
Profile cutoff_profile(double t);

struct CutoffEval {
  double value = 0.0;
  Vec grad;
  Mat hess;
};

/// V_{H,r}(x) = 1/2 zeta(x / r) x^T H x on the flattened matrix x.
CutoffEval cutoff_V(const Mat& H, double r, const Vec& x);

/// Certified sup_t [f + 5 t |f'| + 2 t^2 |f''|], so that
/// |D^2 V_{H,r}| <= C0 |H| in the spectral norm for all H, r.
double cutoff_constant();

/// Anything that provides the flux DF near the base points.
class FluxModel {
 public:
  virtual ~FluxModel() = default;

  virtual SpaceMatrix DF(const SpaceMatrix& a) const = 0;
  virtual Mat D2F(const SpaceMatrix& a) const = 0;

  int n() const { return n_; }
  const std::vector<SpaceMatrix>& centers() const { return centers_; }
  /// Radius of the balls around the centers where DF is certified.
  double zone_radius() const { return zone_radius_; }
  /// Index of the zone containing a, or -1.
  int zone_of(const SpaceMatrix& a) const;

  /// Phi(A, B) = DF(A) - B.
  SpaceMatrix phi(const PhasePoint& x) const { return DF(x.first) - x.second; }

 protected:
  int n_ = 0;
  std::vector<SpaceMatrix> centers_;
  double zone_radius_ = 0.0;
};

/// F = F0 + sum_j V_{H~_j, r_cut}(A - A_j).
class SigmaModel : public FluxModel {
 public:
  double F(const SpaceMatrix& a) const;
  SpaceMatrix DF(const SpaceMatrix& a) const override;
  Mat D2F(const SpaceMatrix& a) const override;

  /// g(A) = eps/4 |A|^2 + sum_j V_j and G~(A, J) = g(A) + G(A, J).
  double g(const SpaceMatrix& a) const;
  double G_tilde(const SpaceMatrix& a, const Vec& j) const;

  const F0Model& base() const { return f0_; }
  double epsilon() const { return f0_.epsilon(); }
  const std::vector<Mat>& H_tilde() const { return h_tilde_; }
  const std::vector<Mat>& H0() const { return h0_; }
  double r0() const { return r0_; }
  double r_cut() const { return r_cut_; }
  double C0() const { return c0_; }
  /// sum_j |H~_j| and the allowed eps / (2 C0).
  double budget_used() const { return budget_used_; }
  double budget() const { return budget_; }

  friend SigmaModel build_F(const F0Model& f0, const std::vector<SpaceMatrix>& centers, const std::vector<Mat>& H0);

 private:
  F0Model f0_;
  std::vector<Mat> h0_, h_tilde_;
  double r0_ = 0.0, r_cut_ = 0.0, c0_ = 0.0, budget_used_ = 0.0, budget_ = 0.0;
};

/// H~_j = H0_j - D^2F0(A_j), checked against the budget eps / (2 C0).
/// Supports have radius r0 / 2, r0 being the least distance between centers.
SigmaModel build_F(const F0Model& f0, const std::vector<SpaceMatrix>& centers, const std::vector<Mat>& H0);

/// Random symmetric perturbations with sum_j |H~_j| = fraction * eps / (2 C0).
std::vector<Mat> sample_H_tilde(int n, int N, double epsilon, double fraction, Rng& rng);

/// DF(A) = B_i + H_i (A - A_i) in zone i, for the pipeline without an
/// embedding.
class JetModel : public FluxModel {
 public:
  JetModel(const std::vector<PhasePoint>& base, std::vector<Mat> hessians);

  SpaceMatrix DF(const SpaceMatrix& a) const override;
  Mat D2F(const SpaceMatrix& a) const override;

  const std::vector<Mat>& hessians() const { return hessians_; }

 private:
  std::vector<SpaceMatrix> values_;
  std::vector<Mat> hessians_;
};

struct ConvexityProbe {
  int segments = 0;
  /// min over segments of (f(a) + f(b)) / 2 - f((a + b) / 2).
  double min_midpoint_gap = 0.0;
  /// min over segments of the gap divided by |b - a|^2 / 4.
  double min_curvature = 0.0;
};

/// Midpoint probes of G~ on random segments in (A, J) around the centers.
ConvexityProbe probe_G_tilde(const SigmaModel& m, int segments, Rng& rng);
/// Midpoint probes of F along rank-one segments A +- t p (x) a.
ConvexityProbe probe_rank_one(const SigmaModel& m, int segments, Rng& rng);
/// Midpoint probes of F on unrestricted segments (F is polyconvex, not
/// convex, so this is expected to go negative).
ConvexityProbe probe_segments(const SigmaModel& m, int segments, Rng& rng);

}  // namespace ocn
