#pragma once

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace debye {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr cplx I{0.0, 1.0};
inline constexpr double PI = 3.141592653589793238462643383279502884;

// Bilinear (unconjugated) products; Eigen's cross() conjugates complex results.
inline CVec3 cross(const CVec3& a, const CVec3& b) {
  return {a(1) * b(2) - a(2) * b(1), a(2) * b(0) - a(0) * b(2), a(0) * b(1) - a(1) * b(0)};
}
inline cplx bdot(const CVec3& a, const CVec3& b) { return a(0) * b(0) + a(1) * b(1) + a(2) * b(2); }

struct FieldEH {
  CVec3 E;
  CVec3 H;
};
using FieldFn = std::function<FieldEH(const Vec3&)>;

// Error categories surfaced to the CLI as exit codes.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class SingularMultiplierError : public std::runtime_error {
 public:
  SingularMultiplierError(const std::string& what, cplx k, int l)
      : std::runtime_error(what), k_(k), l_(l) {}
  cplx k() const { return k_; }
  int l() const { return l_; }

 private:
  cplx k_;
  int l_;
};

class MeanZeroError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConditioningError : public std::runtime_error {
 public:
  ConditioningError(const std::string& what, double cond)
      : std::runtime_error(what), cond_(cond) {}
  double condition() const { return cond_; }

 private:
  double cond_;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankError : public std::runtime_error {
 public:
  RankError(const std::string& what, int found, int expected)
      : std::runtime_error(what), found_(found), expected_(expected) {}
  int found() const { return found_; }
  int expected() const { return expected_; }

 private:
  int found_, expected_;
};

class NearSurfaceError : public std::domain_error {
 public:
  NearSurfaceError(const std::string& what, double dist)
      : std::domain_error(what), dist_(dist) {}
  double distance() const { return dist_; }

 private:
  double dist_;
};

}  // namespace debye
