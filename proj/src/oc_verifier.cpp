#include "ocn/oc_verifier.hpp"

#include "ocn/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

namespace ocn {

using nlohmann::json;

namespace {

double spectral_norm(const Mat& m) { return Eigen::JacobiSVD<Mat>(m).singularValues()(0); }

double rcond_of(const Mat& m) {
  const Vec s = Eigen::BDCSVD<Mat>(m).singularValues();
  return s(0) > 0 ? s(s.size() - 1) / s(0) : 0.0;
}

PhasePoint zero_rho(int n) { return PhasePoint::zero(n); }

json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

json to_json(const ParamU& u) {
  return json{{"P", to_json(u.P)}, {"X", to_json(u.X)}, {"Y", to_json(u.Y)},
              {"Z", to_json(u.Z)}, {"b", to_json(u.b)}, {"kappa", to_json(u.kappa)}};
}

json to_json(const DetReport& d) {
  return json{{"log10_abs_det", d.log10_abs_det}, {"sign", d.sign}, {"rcond", d.rcond}};
}

std::string sci(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

namespace {

struct LogDet {
  long double log_abs = 0.0L;
  int sign = 0;
};

LogDet log_det(const MatL& m) {
  Eigen::PartialPivLU<MatL> lu(m);
  LogDet d;
  d.sign = static_cast<int>(std::lround(static_cast<double>(lu.permutationP().determinant())));
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    const long double u = lu.matrixLU()(k, k);
    if (u == 0.0L) {
      d.sign = 0;
      return d;
    }
    if (u < 0) d.sign = -d.sign;
    d.log_abs += std::log(std::abs(u));
  }
  return d;
}

}  // namespace

DetReport det_report(const Mat& m) {
  DetReport d;
  Eigen::PartialPivLU<Mat> lu(m);
  const Mat& f = lu.matrixLU();
  int sign = static_cast<int>(std::lround(lu.permutationP().determinant()));
  double log10 = 0.0;
  for (Eigen::Index k = 0; k < f.rows(); ++k) {
    const double u = f(k, k);
    if (u == 0.0) {
      d.sign = 0;
      d.log10_abs_det = -INFINITY;
      return d;
    }
    if (u < 0) sign = -sign;
    log10 += std::log10(std::abs(u));
  }
  d.sign = sign;
  d.log10_abs_det = log10;
  d.rcond = rcond_of(m);
  return d;
}

Vec psi(const PhasePoint& rho, const ParamU& u, const FluxModel& model) {
  const int n = u.n;
  const TauConfig t = build_tau(u, rho);
  Vec out(2 * n * static_cast<int>(t.xi.size()));
  for (size_t i = 0; i < t.xi.size(); ++i) {
    const SpaceMatrix& a = t.xi[i].first;
    if (model.zone_of(a) != static_cast<int>(i))
      throw ZoneViolation("psi: xi_" + std::to_string(i) + " left its working zone; use a smaller rho-ball");
    out.segment(2 * n * i, 2 * n) = flatten(model.DF(a) - t.xi[i].second);
  }
  return out;
}

PsiJacobian jac_psi(const PhasePoint& rho, const ParamU& u, const FluxModel& model, double fd_step) {
  const int n = u.n;
  const int N = 2 * n + 1;
  const int B = 2 * n;
  PsiJacobian out;
  out.tau = tau_jacobians(u, fd_step);
  const TauConfig t = build_tau(u, rho);
  out.dU.resize(B * N, u.size());
  out.drho.resize(B * N, 4 * n);
  for (int i = 0; i < N; ++i) {
    Mat dphi(B, 4 * n);
    dphi.leftCols(B) = model.D2F(t.xi[i].first);
    dphi.rightCols(B) = -Mat::Identity(B, B);
    out.dU.middleRows(B * i, B) = dphi * out.tau.eta[i];
    out.drho.middleRows(B * i, B) = dphi;
  }
  const DetReport d = det_report(out.dU);
  out.log10_abs_det = d.log10_abs_det;
  out.det_sign = d.sign;
  out.rcond = d.rcond;
  return out;
}

namespace {

ParamU shifted(const ParamU& u, const Vec& step) { return ParamU::from_vector(u.to_vector() + step, u.n); }

std::string trace_text(const std::vector<double>& r) {
  std::ostringstream s;
  s << "residuals:";
  for (double v : r) s << ' ' << v;
  return s.str();
}

// Damped Newton at fixed rho; returns the solution and its residual trace.
ParamU newton(const PhasePoint& rho, const ParamU& start, const FluxModel& model, const NewtonConfig& cfg,
              std::vector<double>& trace, int& steps) {
  ParamU cur = start;
  Vec r = psi(rho, cur, model);
  trace.assign(1, r.norm());
  steps = 0;
  while (trace.back() > cfg.tolerance) {
    if (steps >= cfg.max_iters) throw NonConvergence("Newton: iteration limit; " + trace_text(trace));
    const PsiJacobian j = jac_psi(rho, cur, model, cfg.fd_step);
    if (!(j.rcond > 1e-15)) throw JacobianSingular("Newton: dPsi/dU is singular (rcond " + std::to_string(j.rcond) + ")");
    const Vec step = -j.dU.partialPivLu().solve(r);
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h <= cfg.max_step_halvings && !accepted; ++h, alpha *= 0.5) {
      try {
        const ParamU trial = shifted(cur, alpha * step);
        const Vec rt = psi(rho, trial, model);
        if (rt.norm() < trace.back()) {
          cur = trial;
          r = rt;
          accepted = true;
        }
      } catch (const Error&) {
      }
    }
    if (!accepted) throw NonConvergence("Newton: no decrease along the step; " + trace_text(trace));
    ++steps;
    trace.push_back(r.norm());
  }
  return cur;
}

}  // namespace

ImplicitSolution solve_U_of_rho(const PhasePoint& rho, const ParamU& u0, const FluxModel& model,
                                const NewtonConfig& cfg) {
  ImplicitSolution out;
  ParamU cur = u0;
  double t = 0.0;
  double dt = 1.0 / std::max(1, cfg.continuation_steps);
  int halvings = 0;
  int total_steps = 0;
  if (rho.norm() == 0.0) t = 1.0 - dt;
  while (t < 1.0) {
    const double tn = std::min(1.0, t + dt);
    try {
      int steps = 0;
      std::vector<double> trace;
      cur = newton(tn * rho, cur, model, cfg, trace, steps);
      total_steps += steps;
      out.residuals = std::move(trace);
      t = tn;
    } catch (const Error& e) {
      if (++halvings > cfg.max_step_halvings)
        throw NonConvergence(std::string("continuation: step halving limit; last error: ") + e.what());
      dt *= 0.5;
    }
  }
  out.u = cur;
  out.newton_steps = total_steps;
  out.residual = out.residuals.empty() ? 0.0 : out.residuals.back();
  out.jac = jac_psi(rho, cur, model, cfg.fd_step);
  if (!(out.jac.rcond > 1e-15)) throw JacobianSingular("solve_U_of_rho: dPsi/dU is singular at the solution");
  out.DU = -out.jac.dU.partialPivLu().solve(out.jac.drho);
  return out;
}

RhoAnalysis analyze_rho(const PhasePoint& rho, const ParamU& u0, const FluxModel& model, const NewtonConfig& cfg) {
  RhoAnalysis a;
  a.rho = rho;
  a.sol = solve_U_of_rho(rho, u0, model, cfg);
  a.tau = build_tau(a.sol.u, rho);
  const int n = u0.n;
  const int N = 2 * n + 1;
  Mat sum_gamma = Mat::Zero(4 * n, u0.size());
  for (int i = 0; i < N; ++i) {
    const Mat dpi = Mat::Identity(4 * n, 4 * n) + sum_gamma * a.sol.DU;
    const Mat dz = a.sol.jac.tau.zeta[i] * a.sol.DU;
    a.Dpi.push_back(dpi);
    a.Dz.push_back(dz);
    // D pi is poorly conditioned; the extended solve keeps M accurate to the data
    const MatL ml = dpi.cast<long double>().partialPivLu().solve(dz.cast<long double>());
    a.M.push_back(ml.cast<double>());
    a.z.push_back(a.tau.zeta[i].vectorize());
    sum_gamma += a.sol.jac.tau.gamma[i];
  }
  return a;
}

namespace {

EigenReport report_from_eigenvalues(const Eigen::VectorXcd& ev, const Mat& M, int n, double tol) {
  EigenReport r;
  r.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  for (const auto& l : r.eigenvalues) {
    const double d0 = std::abs(l), d1 = std::abs(l + 1.0);
    if (d0 < tol) ++r.zero_count;
    if (d1 < tol) ++r.minus_one_count;
    if ((d0 >= tol && d0 < 100 * tol) || (d1 >= tol && d1 < 100 * tol)) r.near_tolerance = true;
  }

  // det(xI - M) = prod (x - l_k), accumulated in complex arithmetic
  std::vector<std::complex<double>> c{1.0};
  for (const auto& l : r.eigenvalues) {
    std::vector<std::complex<double>> next(c.size() + 1, 0.0);
    for (size_t k = 0; k < c.size(); ++k) {
      next[k] += c[k];
      next[k + 1] -= l * c[k];
    }
    c = std::move(next);
  }
  std::vector<double> real(c.size());
  for (size_t k = 0; k < c.size(); ++k) real[k] = c[k].real();
  r.charpoly = Poly(real);

  const FaddeevLeverrier fl = faddeev_leverrier(balance(M));
  r.leverrier_discrepancy = (fl.charpoly - r.charpoly).norm() / r.charpoly.norm();

  const Poly base = Poly::monomial(n + 1) * Poly::from_roots(std::vector<double>(2 * n, -1.0));
  const PolyDivision div = poly_divide(r.charpoly, base);
  r.Q = div.quotient;
  r.remainder_ratio = div.remainder_norm / r.charpoly.norm();
  r.q_roots = r.Q.roots();
  r.discriminant = r.Q.degree() >= 2 ? discriminant(r.Q) : 1.0;
  r.q_at_minus_one = r.Q(-1.0);

  double max_abs = 0.0;
  for (const auto& x : r.q_roots) max_abs = std::max(max_abs, std::abs(x));
  r.root_separation = 1.0;
  for (size_t a = 0; a < r.q_roots.size(); ++a)
    for (size_t b = a + 1; b < r.q_roots.size(); ++b)
      r.root_separation = std::min(r.root_separation, std::abs(r.q_roots[a] - r.q_roots[b]) / (1.0 + max_abs));
  r.minus_one_margin = INFINITY;
  for (const auto& x : r.q_roots) {
    r.minus_one_margin = std::min(r.minus_one_margin, std::abs(x + 1.0) / (1.0 + std::abs(x)));
    // simple real roots of a real polynomial come out with tiny imaginary parts
    if (std::abs(x.imag()) <= 1e-9 * (1.0 + std::abs(x.real())) && x.real() < -1.0) {
      r.E.push_back(x.real());
      r.max_imag_accepted = std::max(r.max_imag_accepted, std::abs(x.imag()));
    }
  }
  if (r.q_roots.empty()) r.minus_one_margin = 1.0;
  std::sort(r.E.begin(), r.E.end());
  return r;
}

}  // namespace

EigenReport eigen_report(const Mat& M, int n, double tol) {
  return report_from_eigenvalues(Eigen::EigenSolver<Mat>(balance(M), false).eigenvalues(), M, n, tol);
}

EigenReport eigen_report(const Mat& Dz, const Mat& Dpi, int n, double tol) {
  const Eigen::GeneralizedEigenSolver<Mat> qz(Dz, Dpi, false);
  return report_from_eigenvalues(qz.eigenvalues(), Dpi.partialPivLu().solve(Dz), n, tol);
}

std::vector<Need2Entry> check_need2(const Mat& Dpi, const Mat& Dz, const Vec& z, const std::vector<double>& E) {
  std::vector<Need2Entry> out;
  const Eigen::Index k = Dpi.rows();
  const MatL dpi = Dpi.cast<long double>();
  const MatL m = dpi.partialPivLu().solve(Dz.cast<long double>());
  const MatL adj_dpi = adjugate(dpi);
  const Eigen::Matrix<long double, Eigen::Dynamic, 1> zl = z.cast<long double>();
  const long double zn = zl.norm();
  for (double x : E) {
    Need2Entry e;
    e.x = x;
    const MatL s = static_cast<long double>(x) * MatL::Identity(k, k) - m;
    const MatL adj = adjugate(s);
    const long double an = adj.norm();
    e.margin_dpi = static_cast<double>((adj * (dpi * zl)).norm() / (an * dpi.norm() * zn));
    e.margin_adj_dpi = static_cast<double>((adj * (adj_dpi * zl)).norm() / (an * adj_dpi.norm() * zn));
    e.identity_residual = static_cast<double>((adj * s).norm() / (an * s.norm()));
    out.push_back(e);
  }
  return out;
}

std::map<std::string, double*> Thresholds::named() {
  return {{"setv", &setv},         {"emb", &emb},
          {"jacobian", &jacobian}, {"du-gap", &du_gap},
          {"dpi", &dpi},           {"eig", &eig},
          {"deflation", &deflation}, {"disc", &disc},
          {"minus-one", &minus_one}, {"need2", &need2},
          {"sweep-adj", &sweep_adj}, {"sweep-det", &sweep_det},
          {"recursion", &recursion}};
}

SweepReport lambda_sweep(const std::vector<RhoAnalysis>& samples, const VerifyConfig& cfg, double radius) {
  SweepReport rep;
  if (samples.empty()) throw InvalidArgument("lambda_sweep: no samples");
  const int L = cfg.lambda_grid;
  for (int g = 1; g <= L; ++g) rep.grid.push_back(static_cast<double>(g) / (L + 1));
  rep.min_rcond.assign(L, INFINITY);
  rep.det_margin.assign(L, INFINITY);
  const int N = static_cast<int>(samples.front().M.size());
  const Eigen::Index k = samples.front().M.front().rows();
  const Mat I = Mat::Identity(k, k);
  const double near_singular = 1e-8;

  for (const auto& s : samples) {
    for (int i = 0; i < N; ++i) {
      const MatL dpi_l = s.Dpi[i].cast<long double>();
      const MatL dz_l = s.Dz[i].cast<long double>();
      const MatL m_l = dpi_l.partialPivLu().solve(dz_l);
      const MatL I_l = MatL::Identity(k, k);
      const LogDet dp = log_det(dpi_l);
      const EigenReport er = eigen_report(s.Dz[i], s.Dpi[i], static_cast<int>(k / 4), cfg.tol.eig);
      for (int g = 0; g < L; ++g) {
        const double lam = rep.grid[g];
        double margin = 1.0;
        for (const auto& x : er.q_roots) margin *= std::abs(1.0 + lam * x) / (1.0 + lam * std::abs(x));
        rep.det_margin[g] = std::min(rep.det_margin[g], margin);
        const Mat im = I + lam * s.M[i];
        const Mat a = s.Dpi[i] + lam * s.Dz[i];
        const double im_rcond = rcond_of(im);
        rep.min_rcond[g] = std::min(rep.min_rcond[g], im_rcond);
        if (im_rcond > 1e-10) {
          const LogDet da = log_det(MatL(dpi_l + static_cast<long double>(lam) * dz_l));
          const LogDet di = log_det(MatL(I_l + static_cast<long double>(lam) * m_l));
          const long double ratio = std::exp(da.log_abs - dp.log_abs - di.log_abs);
          const double err = da.sign == dp.sign * di.sign ? static_cast<double>(std::abs(ratio - 1.0L)) : 2.0;
          rep.factorization_error = std::max(rep.factorization_error, err);
        }
        if (rcond_of(a) < near_singular) {
          ++rep.near_singular_points;
          const Mat adj = adjugate(a);
          rep.min_adj_margin = std::min(rep.min_adj_margin, (adj * s.z[i]).norm() / (adj.norm() * s.z[i].norm()));
        }
      }
      const MatL adj_dpi = adjugate(dpi_l);
      for (double x : er.E) {
        rep.x0 = rep.x0 ? std::max(*rep.x0, x) : x;
        const double lam = -1.0 / x;
        const Mat adj_a = adjugate(Mat(s.Dpi[i] + lam * s.Dz[i]));
        const Vec lhs = adj_a * s.z[i];
        const MatL adj_s = adjugate(MatL(static_cast<long double>(x) * I_l - m_l));
        const Vec rhs = std::pow(-lam, static_cast<double>(k - 1)) *
                        (adj_s * (adj_dpi * s.z[i].cast<long double>())).cast<double>();
        const double scale = std::max(lhs.norm(), rhs.norm());
        rep.adjugate_relation_error = std::max(rep.adjugate_relation_error, scale > 0 ? (lhs - rhs).norm() / scale : 0.0);
        ++rep.adjugate_relation_checks;
        rep.min_adj_margin = std::min(rep.min_adj_margin, lhs.norm() / (adj_a.norm() * s.z[i].norm()));
      }
    }
  }

  // disjointness of S_i(lambda) = (pi_i + lambda z_i)(B_r), by bounding balls
  auto disjoint_margin = [&](double lam) {
    std::vector<Vec> centers(N);
    std::vector<double> radii(N, 0.0);
    for (int i = 0; i < N; ++i) {
      const auto& base = samples.front();
      centers[i] = base.tau.pi[i].vectorize() + lam * base.z[i];
      radii[i] = spectral_norm(base.Dpi[i] + lam * base.Dz[i]) * radius;
      for (const auto& s : samples)
        radii[i] = std::max(radii[i], (s.tau.pi[i].vectorize() + lam * s.z[i] - centers[i]).norm());
    }
    double m = INFINITY;
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j) m = std::min(m, (centers[i] - centers[j]).norm() - radii[i] - radii[j]);
    return m;
  };

  rep.delta1 = rep.x0 ? 0.5 * (-1.0 / *rep.x0 + 1.0) : 0.5;
  int first = 0;
  while (first < L && rep.grid[first] < rep.delta1) ++first;
  for (int g = first; g < L; ++g) {
    const double dm = disjoint_margin(rep.grid[g]);
    if (!(rep.det_margin[g] > cfg.tol.sweep_det) || !(dm > 0)) {
      // move delta_1 past the failing grid point, towards 1
      rep.delta1 = g + 1 < L ? rep.grid[g + 1] : 1.0;
      rep.min_det_margin_above_delta1 = INFINITY;
      rep.disjoint_margin_above_delta1 = INFINITY;
      continue;
    }
    rep.min_det_margin_above_delta1 = std::min(rep.min_det_margin_above_delta1, rep.det_margin[g]);
    rep.disjoint_margin_above_delta1 = std::min(rep.disjoint_margin_above_delta1, dm);
  }
  const bool adj_ok = rep.near_singular_points + rep.adjugate_relation_checks == 0 || rep.min_adj_margin > cfg.tol.sweep_adj;
  rep.pass = rep.factorization_error < 1e-8 && rep.adjugate_relation_error < 1e-6 && adj_ok && rep.delta1 < 1.0 &&
             std::isfinite(rep.min_det_margin_above_delta1);
  return rep;
}

namespace {

[[noreturn]] void fail(const std::string& predicate, const std::string& what) {
  throw CandidateFailure(predicate, what);
}

json eigen_json(const EigenReport& e) {
  json roots = json::array();
  for (const auto& x : e.q_roots) roots.push_back({x.real(), x.imag()});
  return json{{"zero_count", e.zero_count},
              {"minus_one_count", e.minus_one_count},
              {"near_tolerance", e.near_tolerance},
              {"Q", e.Q.coeffs()},
              {"Q_roots", roots},
              {"remainder_ratio", e.remainder_ratio},
              {"leverrier_discrepancy", e.leverrier_discrepancy},
              {"discriminant", e.discriminant},
              {"root_separation", e.root_separation},
              {"Q_at_minus_one", e.q_at_minus_one},
              {"minus_one_margin", finite_or_null(e.minus_one_margin)},
              {"E", e.E}};
}

struct BallResult {
  double r = 0.0;
  int halvings = 0;
  std::vector<RhoAnalysis> samples;
  json report;
};

// The ball radius: start at r0/8 and halve until every sampled check passes.
BallResult certify_ball(const RhoAnalysis& at0, const std::vector<EigenReport>& eig0, const ParamU& u0,
                        const FluxModel& model, double r0, const VerifyConfig& cfg, Rng rng) {
  const int n = u0.n;
  const int N = 2 * n + 1;
  const int dim = 4 * n;
  std::vector<Vec> dirs;
  for (int k = 0; k < dim; ++k) {
    dirs.push_back(Vec::Unit(dim, k));
    dirs.push_back(-Vec::Unit(dim, k));
  }
  for (int k = 0; k < cfg.random_directions; ++k) {
    Vec v(dim);
    for (int c = 0; c < dim; ++c) v(c) = rng.gaussian();
    dirs.push_back(v / v.norm());
  }
  std::vector<double> dpi_sign0(N);
  for (int i = 0; i < N; ++i) dpi_sign0[i] = det_report(at0.Dpi[i]).sign;

  double base_xi = INFINITY, base_pi = INFINITY;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) {
      base_xi = std::min(base_xi, (at0.tau.xi[i].first - at0.tau.xi[j].first).norm());
      base_pi = std::min(base_pi, (at0.tau.pi[i].first - at0.tau.pi[j].first).norm());
    }

  std::string last_failure = "none";
  double r = r0 / 8.0;
  for (int h = 0; h <= cfg.max_radius_halvings; ++h, r *= 0.5) {
    // first-order prediction of the displacement of xi_i^1 against the zone
    bool predicted = true;
    for (int i = 0; i < N && predicted; ++i) {
      const Mat dxi = (at0.Dpi[i] + at0.Dz[i]).topRows(2 * n);
      if (spectral_norm(dxi) * r > 0.5 * model.zone_radius()) predicted = false;
    }
    if (!predicted) {
      last_failure = "zone prediction";
      continue;
    }
    BallResult out;
    out.r = r;
    out.halvings = h;
    out.samples.push_back(at0);
    double worst_rec = 0.0, worst_pi1 = 0.0, min_rcond = INFINITY, worst_rem = 0.0, max_resid = 0.0;
    double chi_lo = INFINITY, chi_hi = 0.0, min_sep = INFINITY, min_m1 = INFINITY, min_need2 = INFINITY;
    int min_zero = 4 * n, min_m1count = 4 * n;
    bool ok = true;
    for (const Vec& d : dirs) {
      RhoAnalysis a;
      try {
        a = analyze_rho(PhasePoint::devectorize(r * d, n), u0, model, cfg.newton);
      } catch (const Error& e) {
        last_failure = std::string("newton: ") + e.what();
        ok = false;
        break;
      }
      max_resid = std::max(max_resid, a.sol.residual);
      worst_rec = std::max({worst_rec, a.tau.recursion_residual, a.tau.closure_residual});
      worst_pi1 = std::max(worst_pi1, (a.tau.pi[0] - a.rho).norm());
      for (int i = 0; i < N; ++i) {
        const double chi = a.tau.chi[i];
        chi_lo = std::min(chi_lo, chi);
        chi_hi = std::max(chi_hi, chi);
        const DetReport dr = det_report(a.Dpi[i]);
        min_rcond = std::min(min_rcond, dr.rcond);
        if (dr.sign != dpi_sign0[i]) ok = false;
        const EigenReport er = eigen_report(a.Dz[i], a.Dpi[i], n, cfg.tol.eig);
        min_zero = std::min(min_zero, er.zero_count);
        min_m1count = std::min(min_m1count, er.minus_one_count);
        worst_rem = std::max(worst_rem, er.remainder_ratio);
        min_sep = std::min(min_sep, er.root_separation);
        min_m1 = std::min(min_m1, er.minus_one_margin);
        if (er.E.size() != eig0[i].E.size()) {
          last_failure = "E_i(rho) changed size";
          ok = false;
        }
        for (const auto& e : check_need2(a.Dpi[i], a.Dz[i], a.z[i], er.E)) min_need2 = std::min(min_need2, e.margin_adj_dpi);
      }
      out.samples.push_back(std::move(a));
      if (!ok) break;
    }
    if (!ok) continue;
    auto fails = [&](bool bad, const char* what) {
      if (bad) last_failure = what;
      return bad;
    };
    if (fails(max_resid > cfg.newton.tolerance, "residual") || fails(worst_rec > cfg.tol.recursion, "recursion") ||
        fails(worst_pi1 > 1e-12 * (1.0 + r), "pi_1 = rho") || fails(!(chi_lo > 0.0 && chi_hi < 1.0), "chi range") ||
        fails(!(min_rcond > cfg.tol.dpi), "det D pi") || fails(min_zero < n + 1 || min_m1count < 2 * n, "multiplicity") ||
        fails(worst_rem > cfg.tol.deflation, "deflation") || fails(!(min_sep > cfg.tol.disc), "discriminant") ||
        fails(!(min_m1 > cfg.tol.minus_one), "Q(-1)") ||
        fails(std::isfinite(min_need2) && !(min_need2 > cfg.tol.need2), "need-2 on the ball"))
      continue;

    // sampled separation of the images of the ball
    double sep_xi = INFINITY, sep_pi = INFINITY;
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j)
        for (const auto& s : out.samples)
          for (const auto& t : out.samples) {
            sep_xi = std::min(sep_xi, (s.tau.xi[i].first - t.tau.xi[j].first).norm());
            sep_pi = std::min(sep_pi, (s.tau.pi[i].first - t.tau.pi[j].first).norm());
          }
    if (fails(!(sep_xi > 0.5 * base_xi && sep_pi > 0.5 * base_pi), "separation")) continue;

    out.report = json{{"radius", r},
                      {"halvings", h},
                      {"r0", r0},
                      {"sampling", "rho = +-r e_k for k < 4n, plus " + std::to_string(cfg.random_directions) +
                                       " seeded random unit directions scaled to r"},
                      {"samples", static_cast<int>(out.samples.size())},
                      {"max_newton_residual", max_resid},
                      {"recursion_residual", worst_rec},
                      {"pi1_minus_rho", worst_pi1},
                      {"chi_range", {chi_lo, chi_hi}},
                      {"min_dpi_rcond", min_rcond},
                      {"min_zero_multiplicity", min_zero},
                      {"min_minus_one_multiplicity", min_m1count},
                      {"max_remainder_ratio", worst_rem},
                      {"min_root_separation", min_sep},
                      {"min_minus_one_margin", min_m1},
                      {"min_need2_margin", finite_or_null(min_need2)},
                      {"xi_separation", sep_xi},
                      {"xi_base_distance", base_xi},
                      {"pi_separation", sep_pi},
                      {"pi_base_distance", base_pi}};
    return out;
  }
  fail("radius", "no radius passed after " + std::to_string(cfg.max_radius_halvings) +
                     " halvings; last failure: " + last_failure);
}

}  // namespace

nlohmann::json config_json(int n, std::uint64_t seed, std::uint64_t budget, const VerifyConfig& cfg) {
  json tol;
  VerifyConfig copy = cfg;
  for (const auto& [name, ptr] : copy.tol.named()) tol[name] = *ptr;
  return json{{"n", n},
              {"seed", seed},
              {"budget", budget},
              {"tolerances", tol},
              {"newton",
               {{"max_iters", cfg.newton.max_iters},
                {"tolerance", cfg.newton.tolerance},
                {"fd_step", cfg.newton.fd_step},
                {"continuation_steps", cfg.newton.continuation_steps},
                {"max_step_halvings", cfg.newton.max_step_halvings}}},
              {"budget_fraction", cfg.budget_fraction},
              {"random_directions", cfg.random_directions},
              {"lambda_grid", cfg.lambda_grid},
              {"max_radius_halvings", cfg.max_radius_halvings},
              {"probe_segments", cfg.probe_segments}};
}

CandidateSetup setup_candidate(int n, std::uint64_t seed, std::uint64_t index, const VerifyConfig& cfg,
                               nlohmann::json* predicates) {
  if (n < 2) throw InvalidArgument("n must be at least 2");
  const int N = 2 * n + 1;
  const int B = 2 * n;
  Rng rng(seed, index);
  json local;
  json& pred = predicates ? *predicates : local;
  const ParamU u = ParamU::sample(n, rng);
  const SetVReport sv = check_setV(u.P, u.X);
  const double sv_min = *std::min_element(sv.margins.begin(), sv.margins.end());
  pred["set_v"] = {{"pass", sv.ok}, {"margins", sv.margins}};
  if (!sv.ok || !(sv_min > cfg.tol.setv)) fail("set_v", "U outside the admissible set V");

  ParamU u0 = u;
  std::shared_ptr<FluxModel> model;
  std::vector<Mat> H0;
  double r0 = 0.0;
  if (n >= 4) {
    EmbedData emb;
    try {
      emb = solve_embedding(balanced_c(u.kappa), u);
    } catch (const Error& e) {
      fail("embedding", e.what());
    }
    pred["embedding"] = {{"status", "PASS"},
                         {"rank", emb.rank.rank},
                         {"expected_rank", emb.expected_rank},
                         {"equations", N * (N - 1)},
                         {"rank_gap", emb.rank.gap},
                         {"relation_residual", emb.relation_residual},
                         {"residual", emb.residual},
                         {"c", to_json(emb.c)},
                         {"min_margin", emb.emb2.min_margin}};
    if (!(emb.emb2.min_margin > cfg.tol.emb)) fail("embedding", "emb-2 margin below threshold");
    u0 = emb.u0;
    const TauConfig tau0 = build_tau(u0, zero_rho(n));
    const EpsilonChoice ec = choose_epsilon(tau0, emb.c, emb.d);
    pred["embedding"]["epsilon"] = ec.epsilon;
    pred["embedding"]["cx0_min_margin"] = ec.cx0.min_margin;
    F0Model f0(n, ec.epsilon, build_G(pieces_from_jets(tau0, emb.c, emb.d, ec.Q)));
    std::vector<SpaceMatrix> centers;
    for (const auto& e : tau0.eta) centers.push_back(e.first);
    Rng hr = rng.split(1);
    const std::vector<Mat> tilde = sample_H_tilde(n, N, ec.epsilon, cfg.budget_fraction, hr);
    for (int j = 0; j < N; ++j) H0.push_back(f0.D2F0(centers[j]) + tilde[j]);
    auto sigma = std::make_unique<SigmaModel>(build_F(f0, centers, H0));
    r0 = sigma->r0();
    Rng pr = rng.split(4);
    const ConvexityProbe pg = probe_G_tilde(*sigma, cfg.probe_segments, pr);
    const ConvexityProbe p1 = probe_rank_one(*sigma, cfg.probe_segments, pr);
    pred["convexity"] = {{"C0", sigma->C0()},
                         {"budget_used", sigma->budget_used()},
                         {"budget", sigma->budget()},
                         {"mu", f0.G().mu()},
                         {"delta_dom", f0.G().delta_dom()},
                         {"r_cut", sigma->r_cut()},
                         {"zone_radius", sigma->zone_radius()},
                         {"lifted_probe_min_gap", pg.min_midpoint_gap},
                         {"rank_one_probe_min_curvature", p1.min_curvature},
                         {"segments", cfg.probe_segments}};
    if (!(pg.min_midpoint_gap >= -1e-9) || !(p1.min_curvature >= 0.25 * ec.epsilon * (1 - 1e-6)))
      fail("convexity", "midpoint convexity probe failed");
    model = std::move(sigma);
  } else {
    std::string reason;
    try {
      solve_embedding(Vec::Zero(N), u);
    } catch (const InfeasibleShape& e) {
      reason = e.what();
    }
    pred["embedding"] = {{"status", "SKIPPED"}, {"reason", reason}};
    const TauConfig tau0 = build_tau(u0, zero_rho(n));
    Rng hr = rng.split(1);
    for (int j = 0; j < N; ++j) {
      Mat h(B, B);
      for (int a = 0; a < B; ++a)
        for (int b = 0; b < B; ++b) h(a, b) = hr.gaussian();
      H0.push_back((0.5 * (h + h.transpose())).eval());
    }
    auto jet = std::make_unique<JetModel>(tau0.eta, H0);
    r0 = INFINITY;
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j) r0 = std::min(r0, (tau0.eta[i].first - tau0.eta[j].first).norm());
    pred["model"] = {{"kind", "jet"}, {"zone_radius", jet->zone_radius()}};
    model = std::move(jet);
  }
  CandidateSetup out;
  out.u = u;
  out.u0 = u0;
  out.full = n >= 4;
  out.model = std::move(model);
  out.H0 = std::move(H0);
  out.r0 = r0;
  return out;
}

CandidateResult evaluate_candidate(int n, std::uint64_t seed, std::uint64_t index, const VerifyConfig& cfg) {
  CandidateResult res;
  res.index = index;
  const int N = 2 * n + 1;
  Rng rng(seed, index);
  json cert;
  try {
    if (n < 2) throw InvalidArgument("n must be at least 2");
    const DimSummary dm = dims(n);
    cert["tool"] = {{"name", "ocn"}, {"version", kToolVersion}};
    cert["dims"] = {{"n", dm.n},
                    {"N", dm.N},
                    {"d", dm.d},
                    {"D", dm.D},
                    {"embed_equations", dm.embed_equations},
                    {"embed_unknowns", dm.embed_unknowns},
                    {"solve_unknowns", dm.solve_unknowns}};
    cert["search"] = {{"seed", seed}, {"candidate_index", index}};
    json& pred = cert["predicates"];

    cert["pipeline"] = n >= 4 ? "full" : "partial";
    const CandidateSetup setup = setup_candidate(n, seed, index, cfg, &pred);
    const ParamU& u0 = setup.u0;
    const std::vector<Mat>& H0 = setup.H0;
    const FluxModel* model = setup.model.get();
    const double r0 = setup.r0;
    cert["U0"] = to_json(u0);
    json h0 = json::array();
    for (const Mat& h : H0) h0.push_back(to_json(h));
    cert["H0"] = h0;

    const TauConfig tau0 = build_tau(u0, zero_rho(n));
    double graph = 0.0;
    for (int i = 0; i < N; ++i) graph = std::max(graph, model->phi(tau0.eta[i]).norm());
    pred["graph_membership"] = {{"max_residual", graph}};
    if (!(graph < 1e-9)) fail("graph_membership", "Phi(eta_i(U0)) is not zero");

    RhoAnalysis at0;
    try {
      at0 = analyze_rho(zero_rho(n), u0, *model, cfg.newton);
    } catch (const Error& e) {
      fail("jacobian", e.what());
    }
    pred["jacobian"] = {{"log10_abs_det", at0.sol.jac.log10_abs_det},
                        {"sign", at0.sol.jac.det_sign},
                        {"rcond", at0.sol.jac.rcond},
                        {"newton_steps_at_zero", at0.sol.newton_steps}};
    if (!(at0.sol.jac.rcond > cfg.tol.jacobian)) fail("jacobian", "J(H0, U0) is numerically zero");

    const RankReport du = numeric_rank(at0.sol.DU, 1e-8);
    pred["du_rank"] = {{"rank", du.rank}, {"expected", 4 * n}, {"gap", du.gap}};
    if (du.rank != 4 * n || !(du.gap > cfg.tol.du_gap)) fail("du_rank", "DU(0) is not of full rank 4n");

    json dpis = json::array();
    double dpi_min = INFINITY;
    for (int i = 0; i < N; ++i) {
      const DetReport d = det_report(at0.Dpi[i]);
      dpis.push_back(to_json(d));
      dpi_min = std::min(dpi_min, d.rcond);
    }
    pred["det_dpi"] = {{"values", dpis}, {"min_rcond", dpi_min}};
    if (!(dpi_min > cfg.tol.dpi)) fail("det_dpi", "det D pi_i(0) is numerically zero");

    std::vector<EigenReport> eig0;
    json eigs = json::array(), need1 = json::array(), need2 = json::array();
    for (int i = 0; i < N; ++i) {
      eig0.push_back(eigen_report(at0.Dz[i], at0.Dpi[i], n, cfg.tol.eig));
      const EigenReport& e = eig0.back();
      eigs.push_back(eigen_json(e));
      need1.push_back({{"i", i},
                       {"discriminant", e.discriminant},
                       {"root_separation", e.root_separation},
                       {"Q_at_minus_one", e.q_at_minus_one},
                       {"minus_one_margin", finite_or_null(e.minus_one_margin)}});
      json entries = json::array();
      for (const auto& v : check_need2(at0.Dpi[i], at0.Dz[i], at0.z[i], e.E))
        entries.push_back({{"x", v.x},
                           {"margin_dpi", v.margin_dpi},
                           {"margin_adj_dpi", v.margin_adj_dpi},
                           {"identity_residual", v.identity_residual}});
      need2.push_back({{"i", i}, {"status", e.E.empty() ? "empty" : "checked"}, {"entries", entries}});
    }
    pred["eigen"] = eigs;
    pred["need1"] = need1;
    pred["need2"] = need2;
    for (int i = 0; i < N; ++i) {
      const EigenReport& e = eig0[i];
      if (e.zero_count < n + 1 || e.minus_one_count < 2 * n)
        fail("eigen_multiplicity", "eigenvalue multiplicities below n+1 at 0 or 2n at -1 for i=" + std::to_string(i));
      if (!(e.remainder_ratio < cfg.tol.deflation)) fail("deflation", "deflation remainder " + sci(e.remainder_ratio) + " for i=" + std::to_string(i));
      if (!(e.root_separation > cfg.tol.disc) || !(e.minus_one_margin > cfg.tol.minus_one))
        fail("need1", "D(0) or Q(0)(-1) numerically zero for i=" + std::to_string(i));
      for (const auto& v : need2[i]["entries"])
        if (!(v["margin_dpi"].get<double>() > cfg.tol.need2) || !(v["margin_adj_dpi"].get<double>() > cfg.tol.need2))
          fail("need2", "adjugate vector numerically zero for i=" + std::to_string(i));
    }
    if (n == 2) {
      double worst = 0.0;
      for (int i = 0; i < N; ++i)
        for (double x : eig0[i].E) worst = std::max(worst, std::abs(x - (4.0 + at0.M[i].trace())));
      pred["trace_formula"] = {{"max_abs_difference", worst}};
    }

    BallResult ball = certify_ball(at0, eig0, u0, *model, r0, cfg, rng.split(2));
    pred["p1_p2"] = ball.report;

    const SweepReport sw = lambda_sweep(ball.samples, cfg, ball.r);
    pred["lambda_sweep"] = {{"grid_points", cfg.lambda_grid},
                            {"factorization_error", sw.factorization_error},
                            {"near_singular_points", sw.near_singular_points},
                            {"adjugate_relation_checks", sw.adjugate_relation_checks},
                            {"adjugate_relation_error", sw.adjugate_relation_error},
                            {"min_adj_margin", finite_or_null(sw.min_adj_margin)},
                            {"x0", sw.x0 ? json(*sw.x0) : json(nullptr)},
                            {"delta1", sw.delta1},
                            {"min_det_margin_above_delta1", finite_or_null(sw.min_det_margin_above_delta1)},
                            {"det_margin", sw.det_margin},
                            {"disjoint_margin_above_delta1", finite_or_null(sw.disjoint_margin_above_delta1)},
                            {"min_rcond", sw.min_rcond},
                            {"pass", sw.pass}};
    if (!sw.pass) {
      std::ostringstream why;
      why << "lambda-sweep failed: factorization error " << sw.factorization_error << ", adjugate relation error "
          << sw.adjugate_relation_error << ", min adjugate margin " << sw.min_adj_margin << ", delta1 " << sw.delta1;
      fail("sweep", why.str());
    }

    json xi = json::array(), pi = json::array();
    for (int i = 0; i < N; ++i) {
      xi.push_back(to_json(tau0.xi[i].vectorize()));
      pi.push_back(to_json(tau0.pi[i].vectorize()));
    }
    cert["configuration"] = {{"xi", xi}, {"pi", pi}};
    cert["surrogates"] = {
        {"P1", "images of the ball separated on samples; D pi_i nonsingular on samples (inverse-function witness)"},
        {"P3", "det[D pi_i + lambda D z_i] and adj[D pi_i + lambda D z_i] z_i checked on a lambda-grid and at "
               "lambda = -1/x_j(rho) on samples; openness for all lambda in [0,1] is not machine-checked"}};
    cert["status"] = "CERTIFIED";
    res.accepted = true;
  } catch (const CandidateFailure& s) {
    res.failure = s.predicate;
    res.detail = s.what();
  } catch (const SingularConfiguration& e) {
    res.failure = "set_v";
    res.detail = e.what();
  } catch (const Error& e) {
    res.failure = "internal";
    res.detail = e.what();
  }
  if (!res.accepted) {
    cert["status"] = "REJECTED";
    cert["failure"] = {{"predicate", res.failure}, {"detail", res.detail}};
  }
  res.certificate = std::move(cert);
  return res;
}

namespace {
constexpr std::size_t kMaxListedRejections = 100;
}

SearchResult search_nondegenerate(int n, std::uint64_t seed, std::uint64_t budget, const VerifyConfig& cfg,
                                  int threads) {
  SearchResult out;
  threads = std::max(1, threads);
  std::uint64_t next = 0;
  json rejections = json::array();
  while (next < budget && !out.found) {
    const std::uint64_t batch = std::min<std::uint64_t>(threads, budget - next);
    std::vector<CandidateResult> results(batch);
    std::vector<std::thread> pool;
    for (std::uint64_t w = 1; w < batch; ++w)
      pool.emplace_back([&, w] { results[w] = evaluate_candidate(n, seed, next + w, cfg); });
    results[0] = evaluate_candidate(n, seed, next, cfg);
    for (auto& t : pool) t.join();
    for (auto& r : results) {
      ++out.tried;
      if (r.accepted) {
        out.found = true;
        out.accepted = std::move(r);
        break;
      }
      ++out.failures[r.failure];
      if (rejections.size() < kMaxListedRejections)
        rejections.push_back({{"index", r.index}, {"predicate", r.failure}, {"detail", r.detail}});
    }
    next += batch;
  }
  if (out.found) {
    out.report = out.accepted.certificate;
    out.report["search"]["candidates_tried"] = out.tried;
  } else {
    out.report = json{{"tool", {{"name", "ocn"}, {"version", kToolVersion}}},
                      {"status", "EXHAUSTED"},
                      {"search", {{"seed", seed}, {"candidates_tried", out.tried}}},
                      {"failure", {{"predicate_counts", out.failures}, {"rejections", rejections}}}};
  }
  out.report["config"] = config_json(n, seed, budget, cfg);
  return out;
}

}  // namespace ocn
