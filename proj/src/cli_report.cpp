#include "ocn/cli_report.hpp"

#include "ocn/errors.hpp"
#include "ocn/tau_config.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ocn {

using nlohmann::json;

namespace {

int as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw InvalidArgument("config: '" + key + "' must be an integer");
  return v.get<int>();
}

std::uint64_t as_u64(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) throw InvalidArgument("config: '" + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw InvalidArgument("config: '" + key + "' must be a number");
  return v.get<double>();
}

double as_positive(const json& v, const std::string& key) {
  const double x = as_double(v, key);
  if (!(x > 0) || !std::isfinite(x)) throw InvalidArgument("config: '" + key + "' must be positive");
  return x;
}

void require_object(const json& v, const std::string& key) {
  if (!v.is_object()) throw InvalidArgument("config: '" + key + "' must be an object");
}

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw InvalidArgument("certificate: missing " + where + key);
  return j.at(key);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path);
}

std::pair<int, int> parse_range(const std::string& s, int N) {
  if (s.empty()) return {0, N - 1};
  const auto colon = s.find(':');
  auto num = [&](std::string_view t) {
    int v = 0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw InvalidArgument("bad --i-range '" + s + "'");
    return v;
  };
  const std::string_view all(s);
  if (colon == std::string::npos) {
    const int i = num(all);
    return {i, i};
  }
  return {num(all.substr(0, colon)), num(all.substr(colon + 1))};
}

}  // namespace

void apply_config_json(const json& j, RunConfig& cfg) {
  require_object(j, "config");
  VerifyConfig& v = cfg.verify;
  auto names = v.tol.named();
  for (const auto& [key, val] : j.items()) {
    if (key == "n") {
      cfg.n = as_int(val, key);
    } else if (key == "seed") {
      cfg.seed = as_u64(val, key);
    } else if (key == "budget") {
      cfg.budget = as_u64(val, key);
    } else if (key == "out") {
      if (!val.is_string()) throw InvalidArgument("config: 'out' must be a string");
      cfg.out = val.get<std::string>();
    } else if (key == "tolerances") {
      require_object(val, key);
      for (const auto& [name, t] : val.items()) {
        auto it = names.find(name);
        if (it == names.end()) throw InvalidArgument("config: unknown tolerance '" + name + "'");
        *it->second = as_positive(t, name);
      }
    } else if (key == "newton") {
      require_object(val, key);
      for (const auto& [name, x] : val.items()) {
        if (name == "max_iters")
          v.newton.max_iters = as_int(x, name);
        else if (name == "tolerance")
          v.newton.tolerance = as_positive(x, name);
        else if (name == "fd_step")
          v.newton.fd_step = as_double(x, name);
        else if (name == "continuation_steps")
          v.newton.continuation_steps = as_int(x, name);
        else if (name == "max_step_halvings")
          v.newton.max_step_halvings = as_int(x, name);
        else
          throw InvalidArgument("config: unknown key 'newton." + name + "'");
      }
    } else if (key == "budget_fraction") {
      v.budget_fraction = as_positive(val, key);
      if (v.budget_fraction >= 1.0) throw InvalidArgument("config: 'budget_fraction' must be below 1");
    } else if (key == "random_directions") {
      v.random_directions = as_int(val, key);
    } else if (key == "lambda_grid") {
      v.lambda_grid = as_int(val, key);
    } else if (key == "max_radius_halvings") {
      v.max_radius_halvings = as_int(val, key);
    } else if (key == "probe_segments") {
      v.probe_segments = as_int(val, key);
    } else {
      throw InvalidArgument("config: unknown key '" + key + "'");
    }
  }
  if (v.newton.fd_step < 0) throw InvalidArgument("config: 'fd_step' must be non-negative");
  if (v.newton.max_iters < 1 || v.newton.continuation_steps < 1 || v.newton.max_step_halvings < 0 ||
      v.random_directions < 0 || v.lambda_grid < 1 || v.max_radius_halvings < 0 || v.probe_segments < 1)
    throw InvalidArgument("config: iteration counts out of range");
}

std::string dims_table(const std::vector<int>& ns) {
  std::ostringstream os;
  os << std::left << std::setw(4) << "n" << std::setw(5) << "N" << std::setw(5) << "d" << std::setw(6) << "D"
     << std::setw(11) << "equations" << std::setw(10) << "unknowns" << std::setw(16) << "solve_unknowns"
     << "shape\n";
  for (int n : ns) {
    const DimSummary d = dims(n);
    os << std::setw(4) << d.n << std::setw(5) << d.N << std::setw(5) << d.d << std::setw(6) << d.D << std::setw(11)
       << d.embed_equations << std::setw(10) << d.embed_unknowns << std::setw(16) << d.solve_unknowns
       << (d.underdetermined ? "UNDERDETERMINED" : "OVERDETERMINED") << "\n";
  }
  return os.str();
}

std::string plot_csv(const json& cert, int cu, int cv, int first, int last) {
  const json& conf = field(cert, "configuration", "");
  const json& xi = field(conf, "xi", "configuration.");
  const json& pi = field(conf, "pi", "configuration.");
  if (!xi.is_array() || !pi.is_array() || xi.size() != pi.size() || xi.empty())
    throw InvalidArgument("certificate: configuration.xi and configuration.pi must be arrays of equal length");
  const int N = static_cast<int>(xi.size());
  if (first < 0 || last >= N || first > last) throw InvalidArgument("index range outside 0.." + std::to_string(N - 1));
  auto coord = [&](const json& pts, int i, int c) {
    const json& p = pts.at(i);
    if (!p.is_array() || c < 0 || c >= static_cast<int>(p.size()) || !p.at(c).is_number())
      throw InvalidArgument("certificate: coordinate " + std::to_string(c) + " missing in point " + std::to_string(i));
    return p.at(c).get<double>();
  };
  std::ostringstream os;
  os << std::setprecision(17) << "kind,index,u,v\n";
  for (int i = first; i <= last; ++i) os << "xi," << i << ',' << coord(xi, i, cu) << ',' << coord(xi, i, cv) << '\n';
  for (int i = first; i <= last; ++i) os << "pi," << i << ',' << coord(pi, i, cu) << ',' << coord(pi, i, cv) << '\n';
  for (int i = first; i <= last; ++i) {
    const int j = (i + 1) % N;
    os << "edge," << i << ',' << coord(pi, j, cu) - coord(pi, i, cu) << ',' << coord(pi, j, cv) - coord(pi, i, cv)
       << '\n';
  }
  return os.str();
}

std::string sweep_csv(const json& cert) {
  const json& sw = field(field(cert, "predicates", ""), "lambda_sweep", "predicates.");
  const json& rc = field(sw, "min_rcond", "lambda_sweep.");
  const json& dm = field(sw, "det_margin", "lambda_sweep.");
  const double delta1 = field(sw, "delta1", "lambda_sweep.").get<double>();
  if (!rc.is_array() || !dm.is_array() || rc.size() != dm.size())
    throw InvalidArgument("certificate: lambda_sweep grids have different lengths");
  const std::size_t L = rc.size();
  std::ostringstream os;
  os << std::setprecision(17) << "lambda,min_rcond,det_margin,above_delta1\n";
  for (std::size_t g = 0; g < L; ++g) {
    const double lam = static_cast<double>(g + 1) / static_cast<double>(L + 1);
    os << lam << ',' << rc[g].get<double>() << ',' << dm[g].get<double>() << ',' << (lam >= delta1 ? 1 : 0) << '\n';
  }
  return os.str();
}

int threads_from_env() {
  const char* s = std::getenv("OCN_THREADS");
  if (!s || !*s) return 1;
  const std::string_view v(s);
  int t = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), t);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || t < 1)
    throw InvalidArgument("OCN_THREADS must be a positive integer, got '" + std::string(v) + "'");
  return t;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Special tau_N-configurations, polyconvex flux models and Condition (OC)_N certificates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::vector<int> dims_n;
  auto* dims_cmd = app.add_subcommand("dims", "Print the dimension counts for each n");
  dims_cmd->add_option("--n", dims_n, "n >= 2 (repeatable)")->required();

  RunConfig rc;
  std::string config_path;
  int n = 4;
  std::uint64_t seed = 1, budget = 10000;
  std::string out_path;
  auto* cert_cmd = app.add_subcommand("certify", "Search for a nondegenerate point and write its certificate");
  cert_cmd->add_option("--config", config_path, "JSON run configuration (layout of the certificate's config)");
  auto* n_opt = cert_cmd->add_option("--n", n, "n >= 2 (default 4)");
  auto* seed_opt = cert_cmd->add_option("--seed", seed, "64-bit seed (default 1)");
  auto* budget_opt = cert_cmd->add_option("--budget", budget, "candidates to try (default 10000)");
  auto* out_opt = cert_cmd->add_option("--out", out_path, "certificate path (default stdout)");
  std::map<std::string, double> tol_values;
  std::map<std::string, CLI::Option*> tol_opts;
  for (const auto& [name, ptr] : rc.verify.tol.named()) {
    tol_values[name] = *ptr;
    tol_opts[name] = cert_cmd->add_option("--tol-" + name, tol_values[name], "threshold '" + name + "'");
  }

  std::string plot_cert, plot_range, plot_out;
  int cu = 0, cv = 1;
  auto* plot_cmd = app.add_subcommand("plot", "CSV of xi_i, pi_i and recursion edges projected on two coordinates");
  plot_cmd->add_option("--cert", plot_cert, "certificate JSON")->required();
  plot_cmd->add_option("--u", cu, "first coordinate of R^{4n} (default 0)");
  plot_cmd->add_option("--v", cv, "second coordinate of R^{4n} (default 1)");
  plot_cmd->add_option("--i-range", plot_range, "lo:hi or i, 0-based inclusive (default all)");
  plot_cmd->add_option("--out", plot_out, "CSV path (default stdout)");

  std::string sweep_cert, sweep_out;
  bool sweep_verify = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "CSV of the lambda-sweep of a certificate");
  sweep_cmd->add_option("--cert", sweep_cert, "certificate JSON")->required();
  sweep_cmd->add_flag("--verify", sweep_verify, "re-evaluate the candidate and compare with the stored sweep");
  sweep_cmd->add_option("--out", sweep_out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? exit_code::ok : exit_code::usage;
  }

  try {
    if (*dims_cmd) {
      for (int k : dims_n)
        if (k < 2) throw InvalidArgument("n must be at least 2, got " + std::to_string(k));
      out << dims_table(dims_n);
      return exit_code::ok;
    }
    if (*plot_cmd) {
      const json cert = read_json_file(plot_cert);
      const json& xi = field(field(cert, "configuration", ""), "xi", "configuration.");
      const auto [lo, hi] = parse_range(plot_range, static_cast<int>(xi.size()));
      write_text(plot_out, plot_csv(cert, cu, cv, lo, hi), out);
      return exit_code::ok;
    }
    if (*sweep_cmd) {
      const json cert = read_json_file(sweep_cert);
      const std::string csv = sweep_csv(cert);
      if (sweep_verify) {
        RunConfig stored;
        apply_config_json(field(cert, "config", ""), stored);
        const auto index = field(field(cert, "search", ""), "candidate_index", "search.").get<std::uint64_t>();
        const CandidateResult r = evaluate_candidate(stored.n, stored.seed, index, stored.verify);
        const json& again = r.certificate["predicates"]["lambda_sweep"];
        if (!r.accepted || again.dump() != cert["predicates"]["lambda_sweep"].dump()) {
          err << "sweep: re-evaluation does not reproduce the stored lambda-sweep\n";
          return exit_code::internal;
        }
      }
      write_text(sweep_out, csv, out);
      return exit_code::ok;
    }
    if (*cert_cmd) {
      if (!config_path.empty()) apply_config_json(read_json_file(config_path), rc);
      if (n_opt->count()) rc.n = n;
      if (seed_opt->count()) rc.seed = seed;
      if (budget_opt->count()) rc.budget = budget;
      if (out_opt->count()) rc.out = out_path;
      auto names = rc.verify.tol.named();
      for (const auto& [name, opt] : tol_opts)
        if (opt->count()) {
          if (!(tol_values[name] > 0)) throw InvalidArgument("--tol-" + name + " must be positive");
          *names.at(name) = tol_values[name];
        }
      if (rc.n < 2) throw InvalidArgument("n must be at least 2, got " + std::to_string(rc.n));
      if (rc.budget < 1) throw InvalidArgument("budget must be at least 1");
      const int threads = threads_from_env();

      SearchResult res;
      try {
        res = search_nondegenerate(rc.n, rc.seed, rc.budget, rc.verify, threads);
      } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return exit_code::internal;
      }
      const std::string status = res.report.value("status", "");
      if (res.found != (status == "CERTIFIED")) {
        err << "internal error: search outcome and certificate status disagree\n";
        return exit_code::internal;
      }
      try {
        write_text(rc.out, res.report.dump(2) + "\n", out);
      } catch (const Error& e) {
        err << e.what() << "\n";
        return exit_code::internal;
      }
      if (res.found) {
        err << "CERTIFIED n=" << rc.n << " seed=" << rc.seed << " candidate " << res.accepted.index << " ("
            << res.tried << " tried)\n";
        return exit_code::ok;
      }
      err << "EXHAUSTED n=" << rc.n << " seed=" << rc.seed << " after " << res.tried << " candidates;";
      for (const auto& [name, count] : res.failures) err << ' ' << name << '=' << count;
      err << "\n";
      return exit_code::exhausted;
    }
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::usage;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::usage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return exit_code::internal;
  }
  return exit_code::usage;
}

}  // namespace ocn
