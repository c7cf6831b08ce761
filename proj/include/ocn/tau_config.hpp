#pragma once

// Parametrized family of special tau_N-configurations in R^{2xn} x R^{2xn}.
//
// Frames are indexed 0..N-1 here; frame k uses the pivot slot k mod n, i.e.
// the 1-based rule r_i = i mod n with representative n.

#include "ocn/linalg.hpp"
#include "ocn/rng.hpp"

#include <array>
#include <vector>

namespace ocn {

struct DimSummary {
  int n = 0;
  int N = 0;  ///< 2n + 1
  int d = 0;  ///< number of 2x2 minors
  int D = 0;  ///< dimension of the parameter chart, 3nN - 2n^2 - n
  int embed_equations = 0;  ///< N(N-1) strict inequalities
  /// Variables of the homogeneous inequality system, c_i and d_i and (Y, Z):
  /// N(1 + d) + 2(N - n - 1)(n - 1).
  int embed_unknowns = 0;
  /// Columns of the linear system solved once the c_i are fixed:
  /// N d + 2(N - n - 1)(n - 1).
  int solve_unknowns = 0;
  bool underdetermined = false;
};

DimSummary dims(int n);

/// Offsets of the blocks of a flattened parameter vector.
struct ParamLayout {
  int n = 0, N = 0;
  int p = 0, x = 0, y = 0, z = 0, b = 0, kappa = 0, total = 0;
  explicit ParamLayout(int n);
};

/// Coordinates U = (P, X, Y, Z, b, kappa) of the chart.
///
/// P holds p_{n+1..N} as columns, X holds x_1..x_N, Y and Z hold
/// y_{n+2..N} and z_{n+2..N}. Flattening is block by block in that order,
/// each matrix column-major (one frame vector after another).
struct ParamU {
  int n = 0;
  Mat P;  ///< 2 x (N - n)
  Mat X;  ///< (n - 1) x N
  Mat Y;  ///< (n - 1) x (N - n - 1)
  Mat Z;  ///< (n - 1) x (N - n - 1)
  Vec b;  ///< n - 2
  Vec kappa;  ///< N, each > 1

  static ParamU zeros(int n);
  /// Standard Gaussian coordinates, kappa_i = 1.5 + |gaussian|.
  static ParamU sample(int n, Rng& rng);

  int size() const { return ParamLayout(n).total; }
  Vec to_vector() const;
  static ParamU from_vector(const Eigen::Ref<const Vec>& v, int n);
};

struct FrameVectors {
  Vec alpha;  ///< alpha_r(x): 1 inserted at the pivot slot
  Eigen::RowVectorXd b_row;  ///< b_r(x, y): -(x . y) inserted at the pivot slot
  SpaceMatrix beta;  ///< rows b_r(x, y) and b_r(x, z)
};

/// slot is the 0-based pivot position.
FrameVectors frame_vectors(int slot, const Vec& x, const Vec& y, const Vec& z);
Vec frame_alpha(int slot, const Vec& x);
Eigen::RowVectorXd frame_b(int slot, const Vec& x, const Vec& y);

/// 0-based pivot slot of 0-based frame k.
inline int pivot_slot(int k, int n) { return k % n; }

/// det[alpha_1(x_1) ... alpha_n(x_n)] over the first n columns of X.
double delta_det(const Mat& X);

/// p_1..p_n (columns of a 2 x n matrix) solving sum_i p_i (x) a_i = 0.
/// Throws SingularConfiguration when |Delta| is below tol times its
/// Hadamard bound.
Mat solve_p(const Mat& P, const Mat& X, double tol = 1e-10);

struct TSystem {
  /// (n^2 - 1) square; rows are the entries (j, k) != (1, 1) of an n x n
  /// matrix in row-major order, columns follow y' = (y_1; ...; y_{n+1}).
  Mat matrix;
  double T = 0.0;
};

TSystem assemble_T(const Mat& X);

struct YZSolution {
  Mat y;  ///< (n - 1) x (n + 1), columns y_1..y_{n+1}
  Mat z;
};

/// Solves both halves of sum_i B_i (x) a_i = 0 for y', z'.
YZSolution solve_yz(const Mat& X, const Mat& Y, const Mat& Z, double tol = 1e-10);

struct SetVReport {
  bool ok = false;
  /// Normalized magnitudes of Delta, T, min_j |p_j| (j > n) and
  /// min_i |sum_j S_ij p_j| (i <= n).
  std::array<double, 4> margins{};
};

SetVReport check_setV(const Mat& P, const Mat& X, double tol = 1e-10);

struct Frame {
  Vec a;
  Eigen::Vector2d p;
  SpaceMatrix B;
  double s = 0.0;
  PhasePoint gamma;  ///< (p (x) a, s B)
};

struct FrameData {
  std::vector<Frame> frames;
  Vec q;  ///< (1, 1, b_1, ..., b_{n-2})
  /// Relative residuals of the four vanishing sums.
  double sum_pa = 0.0, sum_Ba = 0.0, sum_sp = 0.0, sum_sB = 0.0;
  /// max_i |B_i a_i| / (|B_i| |a_i|).
  double max_Ba = 0.0;
  double max_sum_residual() const;
};

FrameData build_frames(const ParamU& u, double tol = 1e-10);

struct TauConfig {
  std::vector<PhasePoint> eta;
  std::vector<PhasePoint> pi;
  std::vector<PhasePoint> xi;
  std::vector<PhasePoint> zeta;
  std::vector<double> chi;
  FrameData frames;
  /// max over i of the two recursion identities relative to |rho| + sum |gamma|,
  /// closing index excluded.
  double recursion_residual = 0.0;
  /// |pi_{N+1} - pi_1| on the same scale.
  double closure_residual = 0.0;
  /// max_i sigma_2 / sigma_1 of the first component of gamma_i.
  double rank_one_ratio = 0.0;
};

TauConfig build_tau(const ParamU& u, const PhasePoint& rho);

/// Derivatives of eta_i, gamma_i, zeta_i with respect to the flattened
/// chart, each 4n x D.
struct TauJacobians {
  std::vector<Mat> eta;
  std::vector<Mat> gamma;
  std::vector<Mat> zeta;
  /// Richardson level disagreement; zero for complex-step derivatives.
  double error_estimate = 0.0;
};

/// h = 0 differentiates by complex step (exact to rounding); h > 0 uses
/// Richardson-extrapolated central differences with step h.
TauJacobians tau_jacobians(const ParamU& u, double h = 0.0);

/// The stacked (eta, gamma, zeta) Jacobian by complex step, 3N 4n x D.
Mat stacked_tau_complex_step(const ParamU& u);

std::vector<RankReport> rank_zeta(const ParamU& u, double tol = 1e-8, double h = 0.0);

}  // namespace ocn
