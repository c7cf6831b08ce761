#pragma once

#include <stdexcept>
#include <string>

namespace ocn {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A determinant that must be nonzero (Delta, T, Jacobians) fell below its
/// admissibility margin.
class SingularConfiguration : public Error {
 public:
  SingularConfiguration(const std::string& what, double value)
      : Error(what + " (value " + std::to_string(value) + ")"), value_(value) {}
  double value() const { return value_; }

 private:
  double value_;
};

class RankDeficient : public Error {
 public:
  RankDeficient(const std::string& what, int rank, int expected)
      : Error(what + ": rank " + std::to_string(rank) + " < " + std::to_string(expected)),
        rank_(rank),
        expected_(expected) {}
  int rank() const { return rank_; }
  int expected() const { return expected_; }

 private:
  int rank_;
  int expected_;
};

/// The embedding system is overdetermined for this n.
class InfeasibleShape : public Error {
 public:
  using Error::Error;
};

class ConvexityBudgetExceeded : public Error {
 public:
  using Error::Error;
};

class OverlappingSupports : public Error {
 public:
  using Error::Error;
};

class NonPositiveMargin : public Error {
 public:
  NonPositiveMargin(const std::string& what, int i, int j)
      : Error(what + " for pair (" + std::to_string(i) + "," + std::to_string(j) + ")"),
        i_(i),
        j_(j) {}
  int i() const { return i_; }
  int j() const { return j_; }

 private:
  int i_;
  int j_;
};

/// A point handed to the flux evaluator left the region where its closed
/// form is certified.
class ZoneViolation : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  using Error::Error;
};

class JacobianSingular : public Error {
 public:
  using Error::Error;
};

class NonFiniteValue : public Error {
 public:
  NonFiniteValue(const std::string& what, int coordinate)
      : Error(what + " at coordinate " + std::to_string(coordinate)), coordinate_(coordinate) {}
  int coordinate() const { return coordinate_; }

 private:
  int coordinate_;
};

class RepeatedRoot : public Error {
 public:
  using Error::Error;
};

}  // namespace ocn
