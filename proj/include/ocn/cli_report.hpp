#pragma once

// Command-line front end: run configuration, certificate output, plot data.

#include "ocn/oc_verifier.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ocn {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 2;
inline constexpr int exhausted = 3;
inline constexpr int internal = 4;
}  // namespace exit_code

struct RunConfig {
  std::string command;
  int n = 4;
  std::uint64_t seed = 1;
  std::uint64_t budget = 10000;
  /// Empty writes to stdout.
  std::string out;
  VerifyConfig verify;
};

/// Applies an object in the layout of config_json (plus an optional "out").
/// Unknown keys and ill-typed values throw InvalidArgument.
void apply_config_json(const nlohmann::json& j, RunConfig& cfg);

std::string dims_table(const std::vector<int>& ns);

/// Rows kind,index,u,v for i in [first, last]: xi_i and pi_i projected on
/// coordinates (cu, cv) of R^{4n}, and edge i carrying the projection of
/// pi_{i+1} - pi_i (indices mod N), the step of the recursion from pi_i
/// towards xi_i. Throws InvalidArgument on missing fields or bad ranges.
std::string plot_csv(const nlohmann::json& cert, int cu, int cv, int first, int last);

/// Grid of the lambda-sweep stored in a certificate, one row per lambda.
std::string sweep_csv(const nlohmann::json& cert);

/// Worker count from OCN_THREADS (default 1); throws InvalidArgument when
/// it is not a positive integer.
int threads_from_env();

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ocn
