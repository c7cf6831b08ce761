#pragma once

// Certification of the openness condition for a flux model: the implicit
// solve U(rho), the determinant and rank conditions, the eigenstructure of
// M_i, the lambda-sweep, and the seeded search producing a certificate.

#include "ocn/convex_model.hpp"
#include "ocn/errors.hpp"
#include "ocn/poly.hpp"

#include <json.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ocn {

struct NewtonConfig {
  int max_iters = 40;
  /// Absolute bound on |Psi|.
  double tolerance = 1e-11;
  /// 0 differentiates eta by complex step; a positive value selects
  /// Richardson differences with that step.
  double fd_step = 0.0;
  /// Equal steps of the homotopy t rho, t in [0, 1].
  int continuation_steps = 4;
  /// Halvings of a Newton or continuation step that left a working zone.
  int max_step_halvings = 12;
};

/// Psi(rho, U) = (Phi(rho + eta_1(U)), ..., Phi(rho + eta_N(U))), each block
/// the row-major flattening of a 2 x n matrix. Throws ZoneViolation when
/// rho^1 + eta_i^1(U) leaves zone i.
Vec psi(const PhasePoint& rho, const ParamU& u, const FluxModel& model);

struct PsiJacobian {
  /// dPsi/dU, 2nN x D, block row i = DPhi(xi_i) D eta_i.
  Mat dU;
  /// dPsi/drho, 2nN x 4n, block row i = DPhi(xi_i) = [D^2F(A_i), -I].
  Mat drho;
  double log10_abs_det = 0.0;
  int det_sign = 0;
  /// sigma_min / sigma_max.
  double rcond = 0.0;
  TauJacobians tau;
};

PsiJacobian jac_psi(const PhasePoint& rho, const ParamU& u, const FluxModel& model, double fd_step = 0.0);

struct ImplicitSolution {
  ParamU u;
  PsiJacobian jac;
  /// DU = -(dPsi/dU)^{-1} dPsi/drho, D x 4n.
  Mat DU;
  double residual = 0.0;
  int newton_steps = 0;
  /// |Psi| before each Newton step and at the end, along the last segment.
  std::vector<double> residuals;
};

/// Newton with continuation in |rho| from U0. Throws NonConvergence (with the
/// residual trace) and JacobianSingular.
ImplicitSolution solve_U_of_rho(const PhasePoint& rho, const ParamU& u0, const FluxModel& model,
                                const NewtonConfig& cfg = {});

/// Everything the eigen and sweep checks need at one rho.
struct RhoAnalysis {
  PhasePoint rho;
  ImplicitSolution sol;
  TauConfig tau;
  /// D pi_i, D z_i, M_i = D pi_i^{-1} D z_i, all 4n x 4n, and z_i = zeta_i.
  std::vector<Mat> Dpi, Dz, M;
  std::vector<Vec> z;
};

RhoAnalysis analyze_rho(const PhasePoint& rho, const ParamU& u0, const FluxModel& model,
                        const NewtonConfig& cfg = {});

struct DetReport {
  double log10_abs_det = 0.0;
  int sign = 0;
  double rcond = 0.0;
};
DetReport det_report(const Mat& m);

struct EigenReport {
  std::vector<std::complex<double>> eigenvalues;
  int zero_count = 0;
  int minus_one_count = 0;
  /// Some eigenvalue sits between tol and 100 tol of 0 or -1.
  bool near_tolerance = false;
  /// det(xI - M) from the computed eigenvalues.
  Poly charpoly;
  /// Relative distance of the Faddeev-LeVerrier coefficients to charpoly.
  double leverrier_discrepancy = 0.0;
  /// charpoly / (x^{n+1} (x+1)^{2n}).
  Poly Q;
  double remainder_ratio = 0.0;
  std::vector<std::complex<double>> q_roots;
  double discriminant = 0.0;
  /// min pairwise distance of the roots of Q over 1 + max |root|; 1 for deg Q <= 1.
  double root_separation = 0.0;
  double q_at_minus_one = 0.0;
  /// min |root + 1| / (1 + |root|) over the roots of Q.
  double minus_one_margin = 0.0;
  /// Real roots of Q below -1, ascending.
  std::vector<double> E;
  /// Largest |imag| among roots accepted as real.
  double max_imag_accepted = 0.0;
};

EigenReport eigen_report(const Mat& M, int n, double tol = 1e-6);
/// Same report for M = Dpi^{-1} Dz, with the eigenvalues taken from the QZ
/// decomposition of the pencil (Dz, Dpi) instead of the formed product.
EigenReport eigen_report(const Mat& Dz, const Mat& Dpi, int n, double tol = 1e-6);

struct Need2Entry {
  double x = 0.0;
  /// |adj(xI - M) Dpi z| / (|adj| |Dpi| |z|).
  double margin_dpi = 0.0;
  /// |adj(xI - M) adj(Dpi) z| / (|adj| |adj Dpi| |z|).
  double margin_adj_dpi = 0.0;
  /// |adj(S) S| / (|adj S| |S|) at S = xI - M.
  double identity_residual = 0.0;
};

/// Both vectors are evaluated for each x in E (the lemma's proof uses
/// adj(D pi), its display D pi), with M = Dpi^{-1} Dz and the adjugates in
/// extended precision.
std::vector<Need2Entry> check_need2(const Mat& Dpi, const Mat& Dz, const Vec& z, const std::vector<double>& E);

/// Tolerances of the search; each has a CLI flag --tol-<name>.
struct Thresholds {
  double setv = 1e-6;
  double emb = 0.5;
  double jacobian = 1e-12;
  double du_gap = 1e3;
  double dpi = 1e-12;
  double eig = 1e-6;
  double deflation = 1e-7;
  double disc = 1e-6;
  double minus_one = 1e-6;
  double need2 = 1e-10;
  double sweep_adj = 1e-10;
  double sweep_det = 1e-12;
  double recursion = 1e-10;

  std::map<std::string, double*> named();
};

struct VerifyConfig {
  Thresholds tol;
  NewtonConfig newton;
  /// fraction of the convexity budget used by the random H~.
  double budget_fraction = 0.5;
  int random_directions = 32;
  int lambda_grid = 64;
  int max_radius_halvings = 40;
  int probe_segments = 2000;
};

struct SweepReport {
  std::vector<double> grid;
  /// min over i and samples of rcond(I + lambda M_i(rho)) per grid point.
  std::vector<double> min_rcond;
  /// min over i and samples of prod_j |1 + lambda x_j| / (1 + lambda |x_j|)
  /// over the roots x_j of Q, i.e. det(I + lambda M) without its
  /// (1 - lambda)^{2n} factor, normalized to [0, 1].
  std::vector<double> det_margin;
  /// max relative error of det(D pi + lambda D z) = det(D pi) det(I + lambda M),
  /// both sides in extended precision, over grid points with
  /// rcond(I + lambda M) > 1e-10.
  double factorization_error = 0.0;
  int near_singular_points = 0;
  double min_adj_margin = INFINITY;
  /// Relative mismatch of the adjugate relation at lambda = -1/x_j(rho).
  double adjugate_relation_error = 0.0;
  int adjugate_relation_checks = 0;
  std::optional<double> x0;
  double delta1 = 0.5;
  double min_det_margin_above_delta1 = INFINITY;
  double disjoint_margin_above_delta1 = INFINITY;
  bool pass = false;
};

SweepReport lambda_sweep(const std::vector<RhoAnalysis>& samples, const VerifyConfig& cfg, double radius);

/// A candidate failed the named predicate.
struct CandidateFailure : Error {
  CandidateFailure(std::string predicate, const std::string& what) : Error(what), predicate(std::move(predicate)) {}
  std::string predicate;
};

/// Flux model of one candidate, before any openness check.
struct CandidateSetup {
  ParamU u;
  /// u itself for n < 4, the embedding solution otherwise.
  ParamU u0;
  /// SigmaModel when true, JetModel otherwise.
  bool full = false;
  std::shared_ptr<FluxModel> model;
  std::vector<Mat> H0;
  /// Least distance between the centers eta_i^1(U0).
  double r0 = 0.0;
};

/// Samples U from Rng(seed, index) and builds the model; the set-V,
/// embedding and convexity predicates are written to *predicates. Throws
/// CandidateFailure.
CandidateSetup setup_candidate(int n, std::uint64_t seed, std::uint64_t index, const VerifyConfig& cfg,
                               nlohmann::json* predicates = nullptr);

/// Outcome of one candidate of the search.
struct CandidateResult {
  std::uint64_t index = 0;
  bool accepted = false;
  /// Name of the first failing predicate.
  std::string failure;
  std::string detail;
  nlohmann::json certificate;
};

CandidateResult evaluate_candidate(int n, std::uint64_t seed, std::uint64_t index, const VerifyConfig& cfg);

struct SearchResult {
  bool found = false;
  std::uint64_t tried = 0;
  CandidateResult accepted;
  std::map<std::string, int> failures;
  /// Certificate on success, otherwise an exhaustion report with the
  /// failure counts per predicate and the first 100 rejections.
  nlohmann::json report;
};

/// Candidates are indices 0, 1, ... of Rng(seed, index); the lowest accepted
/// index wins regardless of the worker count.
SearchResult search_nondegenerate(int n, std::uint64_t seed, std::uint64_t budget, const VerifyConfig& cfg,
                                  int threads = 1);

nlohmann::json config_json(int n, std::uint64_t seed, std::uint64_t budget, const VerifyConfig& cfg);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace ocn
