#pragma once

#include <array>
#include <vector>

#include "debye/types.hpp"

namespace debye::specfun {

// Complex number with an explicit binary exponent, value = m * 2^e.
// Needed because h_l overflows and j_l underflows long before their
// products do (h_400(1) is about 1e990).
struct Scaled {
  cplx m{0.0, 0.0};
  int e = 0;

  Scaled() = default;
  Scaled(cplx mant, int ex) : m(mant), e(ex) { normalize(); }
  explicit Scaled(cplx v) : m(v), e(0) { normalize(); }

  void normalize();
  cplx value() const;  // may overflow to inf / underflow to 0
  bool is_zero() const { return m == cplx(0.0, 0.0); }
};

Scaled operator*(const Scaled& a, const Scaled& b);
Scaled operator*(const Scaled& a, cplx s);
Scaled operator+(const Scaled& a, const Scaled& b);
Scaled operator-(const Scaled& a, const Scaled& b);
Scaled operator/(const Scaled& a, const Scaled& b);

// Arrays of j_l(z), h_l(z) for l = 0..lmax in scaled form.
std::vector<Scaled> sph_bessel_j_array(int lmax, cplx z);
std::vector<Scaled> sph_hankel_h1_array(int lmax, cplx z);

cplx sph_bessel_j(int l, cplx z);
cplx sph_hankel_h1(int l, cplx z);

// Ascending series for j_l, used for small |z| and as a test oracle.
Scaled sph_bessel_j_series(int l, cplx z);

struct BesselDerivs {
  cplx dj;
  cplx dh;
};
// z_l'(z) = z_{l-1}(z) - (l+1) z_l(z) / z ; j_0' = -j_1, h_0' = -h_1.
BesselDerivs sph_bessel_derivs(int l, cplx z);

// j_l and h_l for one argument, l = 0..lmax+1, with products formed
// in scaled arithmetic so that j_a h_b stays finite for large degrees.
class BesselTable {
 public:
  BesselTable(int lmax, cplx z);

  cplx z() const { return z_; }
  int lmax() const { return lmax_; }

  Scaled j(int l) const { return j_[l]; }
  Scaled h(int l) const { return h_[l]; }
  Scaled dj(int l) const;
  Scaled dh(int l) const;

  // (j_a or j_a') * (h_b or h_b')
  cplx prod(int a, bool da, int b, bool db) const;

 private:
  int lmax_;
  cplx z_;
  std::vector<Scaled> j_, h_;
};

// Coefficients (ascending powers of k) of p_l with h_l(k) = p_l(k) e^{ik} / k^{l+1}.
// Built from p_{l+1} = (2l+1) p_l - k^2 p_{l-1}, p_0 = -i, p_1 = -(k + i).
std::vector<cplx> hankel_poly_coeffs(int l);
cplx poly_eval(const std::vector<cplx>& c, cplx z);

// Orthonormal associated Legendre values Pbar_l^m(cos theta) (Condon-Shortley
// phase included) and their theta derivatives for 0 <= m <= l <= lmax.
struct LegendreTable {
  int lmax;
  std::vector<double> p;     // index l*(l+1)/2 + m
  std::vector<double> dp;    // d/dtheta
  std::vector<double> p_s;   // m * Pbar / sin(theta), finite at the poles
  double operator()(int l, int m) const { return p[l * (l + 1) / 2 + m]; }
  double d(int l, int m) const { return dp[l * (l + 1) / 2 + m]; }
  double msin(int l, int m) const { return p_s[l * (l + 1) / 2 + m]; }
};
LegendreTable legendre_table(int lmax, double theta);

cplx sph_harm_Y(int l, int m, double theta, double phi);

enum class VshKind { Grad, StarGrad };

// Contravariant (theta, phi) chart components of grad Y or n x grad Y on the
// unit sphere; divided by sqrt(l(l+1)) when normalized is set.
std::array<cplx, 2> vec_sph_harm(int l, int m, VshKind kind, double theta,
                                 double phi, bool normalized = false);

// Cartesian components of grad Y (unit sphere) at (theta, phi).
CVec3 grad_Y_cart(int l, int m, double theta, double phi);

}  // namespace debye::specfun
