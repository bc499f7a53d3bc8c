#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "debye/types.hpp"

namespace debye::sphere {

// Triangular table a_{lm}, 0 <= l <= lmax, |m| <= l, stored at l*l + l + m.
class SphHarmCoeffs {
 public:
  SphHarmCoeffs() = default;
  explicit SphHarmCoeffs(int lmax) : lmax_(lmax), data_(size_t(lmax + 1) * (lmax + 1), cplx(0.0, 0.0)) {}

  int lmax() const { return lmax_; }
  size_t size() const { return data_.size(); }
  static size_t index(int l, int m) { return size_t(l) * l + l + m; }

  cplx& operator()(int l, int m) { return data_[index(l, m)]; }
  cplx operator()(int l, int m) const { return data_[index(l, m)]; }
  cplx& at(size_t i) { return data_[i]; }
  cplx at(size_t i) const { return data_[i]; }

  double max_abs() const;
  SphHarmCoeffs operator-(const SphHarmCoeffs& o) const;

 private:
  int lmax_ = 0;
  std::vector<cplx> data_;
};

// m_n(k, l) = k h_l(k) ((i + k) j_l(k) + i k j_l'(k)), evaluated as
// 1 + ik j h + ik^2 j h' + k^2 j h. At k = 0 returns (l+1)/(2l+1).
cplx multiplier_normal(cplx k, int l);

// m_t(k, l); at k = 0 returns the limit -l(l+1)/(2l+1)^2.
cplx multiplier_tangential(cplx k, int l);

// Outside-limit traces on the unit sphere of the layer potentials applied to
// Y, grad Y and n x grad Y (componentwise vector single layer).
struct ModeSymbols {
  cplx s0;   // S[Y] = s0 Y
  cplx sN;   // n . S[grad Y] = sN Y
  cplx sT;   // (S[grad Y])_tan = sT grad Y
  cplx cN;   // n . curl S[n x grad Y] = cN Y
  cplx cT;   // (curl S[n x grad Y])_tan = cT grad Y
  cplx cT2;  // (curl S[grad Y])_tan = cT2 n x grad Y
  cplx dN;   // n . grad S[Y] = dN Y   (outside)
};
ModeSymbols mode_symbols(cplx k, int l);

struct SphereDebyeSolution {
  cplx k;
  SphHarmCoeffs a;  // r coefficients
  SphHarmCoeffs b;  // q coefficients

  // Current coefficients j = sum alpha grad Y + beta n x grad Y.
  SphHarmCoeffs alpha() const;
  SphHarmCoeffs beta() const;
};

// c = m_n a, d = m_n b.
SphereDebyeSolution solve_normal_sphere(cplx k, const SphHarmCoeffs& c, const SphHarmCoeffs& d);

// PEC data: E_tan^in = sum (p grad Y + q n x grad Y) / sqrt(l(l+1)).
SphereDebyeSolution solve_hybrid_sphere(cplx k, const SphHarmCoeffs& p, const SphHarmCoeffs& q);

struct MieCoeffs {
  cplx k;
  SphHarmCoeffs v;  // E = curl curl (x v) + ik curl (x u)
  SphHarmCoeffs u;  // H = curl curl (x u) - ik curl (x v)
};
// Radial functions normalized as h_l(kr)/h_l(k), so v_{lm} = c_{lm}/(l(l+1)).
MieCoeffs debye_to_mie(const SphereDebyeSolution& sol);

struct SphereTraces {
  SphHarmCoeffs c, d;            // n.E, n.H
  SphHarmCoeffs e_grad, e_star;  // E_tan = sum e_grad grad Y + e_star n x grad Y
  SphHarmCoeffs h_grad, h_star;
};
SphereTraces eval_traces_sphere(const SphereDebyeSolution& sol);


// Requires |x| >= 1 + eps.
FieldEH eval_field_sphere(const MieCoeffs& mie, const Vec3& x, double eps = 1e-8);
FieldEH eval_field_sphere(const SphereDebyeSolution& sol, const Vec3& x, double eps = 1e-8);


// Project E_tan and n.H of a field on the unit sphere onto the bases used by
// solve_hybrid_sphere (p, q) and on Y (h) by Gauss-Legendre quadrature.
struct ProjectedData {
  SphHarmCoeffs p, q, h;
};
ProjectedData project_incident(const FieldFn& field, int lmax, int ntheta = 0);

// Spectral PEC solve for an incident field, with the total-field residuals
// |n x E|, |n . H| at random boundary points relative to max |E_in|, |H_in|.
struct SpherePec {
  SphereDebyeSolution solution;
  double tangential_E = 0.0, normal_H = 0.0;
};
SpherePec solve_pec_sphere(const FieldFn& incident, cplx k, int lmax, int npoints = 64, unsigned seed = 1);

}  // namespace debye::sphere
