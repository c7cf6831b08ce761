#pragma once

// Jet data {c_i, d_i, Q_i} that embeds a tau_N-configuration into the graph
// of a polyconvex gradient, and the strict inequalities that certify it.

#include "ocn/tau_config.hpp"

#include <utility>
#include <vector>

namespace ocn {

/// Row order of every pairwise quantity: (j, i), i != j, lexicographic.
std::vector<std::pair<int, int>> ordered_pairs(int N);

/// The pairings <eta_i^2, eta_j^1 - eta_i^1> and J(eta_j^1 - eta_i^1) as
/// functions of (Y, Z) at fixed (P, X, b, kappa).
struct PairingForms {
  int n = 0, N = 0;
  std::vector<std::pair<int, int>> pairs;
  /// Row (j, i) holds the coefficients of <eta_i^2, eta_j^1 - eta_i^1> in
  /// the flattened (Y, Z).
  Mat S;
  /// Row (j, i) holds J(eta_j^1 - eta_i^1).
  Mat J;
  std::vector<SpaceMatrix> eta1;

  /// <eta_i^2, eta_j^1 - eta_i^1> at the given (Y, Z).
  Vec pairing(const Mat& Y, const Mat& Z) const;
};

PairingForms pairing_forms(const ParamU& u);

/// Flattened (Y, Z): Y column-major, then Z column-major.
Vec stack_yz(const Mat& Y, const Mat& Z);

struct EmbedSystem {
  /// N(N-1) x (N d + 2(N-n-1)(n-1)); the d_1..d_N blocks come first, then (Y, Z).
  Mat M;
  Vec rhs;
  std::vector<std::pair<int, int>> pairs;
};

EmbedSystem assemble_embedding(const PairingForms& forms, const Vec& c);

/// Weights of the linear relation among the rows (j, i), j != i, that holds
/// whenever eta_i is a multiple of a single gamma_i (i = first or last
/// index). Along the cycle after i: v_{i+1} = 1 and
/// v_k = v_{k-1} kappa_{k-1} / (kappa_k - 1). Entry i is zero.
Vec endpoint_relation(const Vec& kappa, int i);

/// c with c_i = 0 except at the two endpoint indices, chosen so that both
/// endpoint relations are compatible with every margin equal to one.
Vec balanced_c(const Vec& kappa);

struct Emb2Report {
  /// margins(j, i) for i != j; the diagonal is zero and ignored.
  Mat margins;
  double min_margin = 0.0;
  int argmin_j = -1, argmin_i = -1;
};

struct EmbedData {
  Vec c;
  /// Prescribed margin per row; one except possibly on the endpoint rows.
  Mat target_margins;
  std::vector<Vec> d;
  /// The chart point with the solved (Y, Z).
  ParamU u0;
  RankReport rank;
  /// Rank forced by the two endpoint relations, N(N-1) - 2.
  int expected_rank = 0;
  /// max over the two endpoint relations of |v^T M| / (|v| |M|).
  double relation_residual = 0.0;
  /// max |M x - rhs|.
  double residual = 0.0;
  Emb2Report emb2;
};

/// Minimum-norm solution of the embedding system with unit margins away
/// from the endpoint rows. On the rows of endpoint i the margins are the
/// constant sum_j v_j (c_j - c_i) / sum_j v_j, which must be positive
/// (NonPositiveMargin otherwise). Throws InfeasibleShape for n < 4 and
/// RankDeficient when rank M < N(N-1) - 2.
EmbedData solve_embedding(const Vec& c, const ParamU& u, double rank_tol = 1e-8);

/// margin(j, i) = c_j - c_i - <eta_i^2, eta_j^1 - eta_i^1> - d_i . J(eta_j^1 - eta_i^1).
Emb2Report check_emb2(const TauConfig& tau, const Vec& c, const std::vector<Vec>& d);

/// Q_i = eta_i^2 - eps eta_i^1 - DJ(eta_i^1)^T d_i.
std::vector<SpaceMatrix> q_from_emb1(const TauConfig& tau, const std::vector<Vec>& d, double eps);

/// Dominance margins c_j - l_i(w_j) of the affine pieces
/// l_i(A, J) = c_i + <Q_i, A - eta_i^1> + d_i . (J - J(eta_i^1)).
Emb2Report check_cx0(const TauConfig& tau, const Vec& c, const std::vector<Vec>& d,
                     const std::vector<SpaceMatrix>& Q);

struct EpsilonChoice {
  double epsilon = 0.0;
  int halvings = 0;
  std::vector<SpaceMatrix> Q;
  Emb2Report cx0;
};

/// Halves eps from eps0 until every dominance margin exceeds half of the
/// corresponding emb2 margin.
EpsilonChoice choose_epsilon(const TauConfig& tau, const Vec& c, const std::vector<Vec>& d, double eps0 = 1e-3,
                             int max_halvings = 60);

}  // namespace ocn
