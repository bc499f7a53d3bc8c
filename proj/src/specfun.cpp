#include "debye/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace debye::specfun {

void Scaled::normalize() {
  double a = std::max(std::abs(m.real()), std::abs(m.imag()));
  if (a == 0.0) {
    e = 0;
    return;
  }
  if (!std::isfinite(a)) return;
  int ex = 0;
  std::frexp(a, &ex);
  m = cplx(std::ldexp(m.real(), -ex), std::ldexp(m.imag(), -ex));
  e += ex;
}

cplx Scaled::value() const {
  return {std::ldexp(m.real(), e), std::ldexp(m.imag(), e)};
}

Scaled operator*(const Scaled& a, const Scaled& b) { return Scaled(a.m * b.m, a.e + b.e); }

Scaled operator*(const Scaled& a, cplx s) {
  Scaled t(s);
  return a * t;
}

Scaled operator/(const Scaled& a, const Scaled& b) {
  if (b.is_zero()) throw DomainError("scaled division by zero");
  return Scaled(a.m / b.m, a.e - b.e);
}

static cplx shift(cplx v, int d) { return {std::ldexp(v.real(), d), std::ldexp(v.imag(), d)}; }

Scaled operator+(const Scaled& a, const Scaled& b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  int e = std::max(a.e, b.e);
  return Scaled(shift(a.m, a.e - e) + shift(b.m, b.e - e), e);
}

Scaled operator-(const Scaled& a, const Scaled& b) { return a + b * cplx(-1.0, 0.0); }

// Series only where its terms decrease monotonically; for |z| < l/2 but
// |z|^2 > 2l the terms grow before cancelling and lose digits.
static bool use_series(int l, cplx z) {
  double a = std::abs(z);
  return a < 0.5 * l && a * a < 0.5 * (2.0 * l + 3.0);
}

Scaled sph_bessel_j_series(int l, cplx z) {
  // j_l(z) = z^l/(2l+1)!! * sum_n (-z^2/2)^n / (n! (2l+3)(2l+5)...(2l+2n+1))
  Scaled pre(cplx(1.0, 0.0));
  for (int i = 1; i <= l; ++i) pre = pre * (z / double(2 * i + 1));
  cplx w = -0.5 * z * z;
  cplx term = 1.0, sum = 1.0;
  for (int n = 1; n < 500; ++n) {
    term *= w / (double(n) * double(2 * l + 2 * n + 1));
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return pre * sum;
}

std::vector<Scaled> sph_hankel_h1_array(int lmax, cplx z) {
  if (z == cplx(0.0, 0.0)) throw DomainError("spherical Hankel function undefined at z = 0");
  std::vector<Scaled> h(lmax + 1);
  cplx e = std::exp(I * z);
  h[0] = Scaled(-I * e / z);
  if (lmax >= 1) h[1] = Scaled(-e * (z + I) / (z * z));
  for (int l = 1; l < lmax; ++l) h[l + 1] = h[l] * (double(2 * l + 1) / z) - h[l - 1];
  return h;
}

std::vector<Scaled> sph_bessel_j_array(int lmax, cplx z) {
  std::vector<Scaled> j(lmax + 1);
  if (z == cplx(0.0, 0.0)) {
    j[0] = Scaled(cplx(1.0, 0.0));
    return j;
  }
  double az = std::abs(z);
  if (!std::isfinite(az) || az > 1e7) throw DomainError("sph_bessel_j: argument not finite or too large");
  if (az < 1e-3) {
    for (int l = 0; l <= lmax; ++l) j[l] = sph_bessel_j_series(l, z);
    return j;
  }
  // Miller: start well above both lmax and |z|, recur downward, normalize.
  int start = std::max(lmax, int(std::ceil(az))) + 30 + int(std::ceil(3.0 * std::cbrt(az + 1.0) * 4.0));
  Scaled fp1(cplx(0.0, 0.0), 0), f(cplx(1e-30, 0.0));
  std::vector<Scaled> buf(start + 1);
  buf[start] = f;
  for (int l = start; l >= 1; --l) {
    Scaled fm1 = f * (double(2 * l + 1) / z) - fp1;
    fp1 = f;
    f = fm1;
    buf[l - 1] = f;
  }
  cplx j0 = std::sin(z) / z;
  cplx j1 = std::sin(z) / (z * z) - std::cos(z) / z;
  Scaled scale = (std::abs(j0) >= std::abs(j1)) ? Scaled(j0) / buf[0] : Scaled(j1) / buf[1];
  for (int l = 0; l <= lmax; ++l) j[l] = buf[l] * scale;
  return j;
}

cplx sph_bessel_j(int l, cplx z) {
  if (l < 0) throw DomainError("negative degree");
  if (z == cplx(0.0, 0.0)) return l == 0 ? 1.0 : 0.0;
  if (use_series(l, z)) return sph_bessel_j_series(l, z).value();
  return sph_bessel_j_array(l, z)[l].value();
}

cplx sph_hankel_h1(int l, cplx z) {
  if (l < 0) throw DomainError("negative degree");
  return sph_hankel_h1_array(l, z)[l].value();
}

BesselDerivs sph_bessel_derivs(int l, cplx z) {
  if (z == cplx(0.0, 0.0)) throw DomainError("derivative of h_l undefined at z = 0");
  BesselTable t(l, z);
  return {t.dj(l).value(), t.dh(l).value()};
}

BesselTable::BesselTable(int lmax, cplx z) : lmax_(lmax), z_(z) {
  j_ = sph_bessel_j_array(lmax + 1, z);
  h_ = sph_hankel_h1_array(lmax + 1, z);
  // Small-argument entries from the series are more accurate than Miller
  // normalization when j_0 and j_1 are both tiny relative to j_l.
  for (int l = 0; l <= lmax + 1; ++l)
    if (use_series(l, z)) j_[l] = sph_bessel_j_series(l, z);
}

Scaled BesselTable::dj(int l) const {
  if (l == 0) return j_[1] * cplx(-1.0, 0.0);
  return j_[l - 1] - j_[l] * (double(l + 1) / z_);
}

Scaled BesselTable::dh(int l) const {
  if (l == 0) return h_[1] * cplx(-1.0, 0.0);
  return h_[l - 1] - h_[l] * (double(l + 1) / z_);
}

cplx BesselTable::prod(int a, bool da, int b, bool db) const {
  Scaled x = da ? dj(a) : j_[a];
  Scaled y = db ? dh(b) : h_[b];
  return (x * y).value();
}

std::vector<cplx> hankel_poly_coeffs(int l) {
  std::vector<cplx> pm1{-I};
  if (l == 0) return pm1;
  std::vector<cplx> p{-I, cplx(-1.0, 0.0)};
  for (int n = 1; n < l; ++n) {
    std::vector<cplx> next(n + 2, cplx(0.0, 0.0));
    for (size_t i = 0; i < p.size(); ++i) next[i] += double(2 * n + 1) * p[i];
    for (size_t i = 0; i < pm1.size(); ++i) next[i + 2] -= pm1[i];
    pm1 = p;
    p = next;
  }
  return p;
}

cplx poly_eval(const std::vector<cplx>& c, cplx z) {
  cplx s = 0.0;
  for (size_t i = c.size(); i-- > 0;) s = s * z + c[i];
  return s;
}

LegendreTable legendre_table(int lmax, double theta) {
  LegendreTable t;
  t.lmax = lmax;
  size_t n = size_t(lmax + 1) * size_t(lmax + 2) / 2;
  t.p.assign(n, 0.0);
  t.dp.assign(n, 0.0);
  t.p_s.assign(n, 0.0);
  double x = std::cos(theta), s = std::sin(theta);
  auto idx = [](int l, int m) { return size_t(l) * size_t(l + 1) / 2 + size_t(m); };

  // Pbar_m^m / sin(theta) built alongside so that m Pbar / sin stays finite.
  double pmm = 1.0 / std::sqrt(4.0 * PI);
  double pmm_s = 0.0;
  for (int m = 0; m <= lmax; ++m) {
    if (m > 0) {
      double f = -std::sqrt((2.0 * m + 1.0) / (2.0 * m));
      pmm_s = f * pmm;  // Pbar_m^m / sin
      pmm = f * s * pmm;
    }
    t.p[idx(m, m)] = pmm;
    t.p_s[idx(m, m)] = m * pmm_s;
    if (m + 1 <= lmax) {
      double c = std::sqrt(2.0 * m + 3.0);
      t.p[idx(m + 1, m)] = c * x * pmm;
      t.p_s[idx(m + 1, m)] = c * x * m * pmm_s;
    }
    for (int l = m + 2; l <= lmax; ++l) {
      double a = std::sqrt((4.0 * l * l - 1.0) / (double(l) * l - double(m) * m));
      double b = std::sqrt((double(l - 1) * (l - 1) - double(m) * m) / (4.0 * (l - 1) * (l - 1) - 1.0));
      t.p[idx(l, m)] = a * (x * t.p[idx(l - 1, m)] - b * t.p[idx(l - 2, m)]);
      t.p_s[idx(l, m)] = a * (x * t.p_s[idx(l - 1, m)] - b * t.p_s[idx(l - 2, m)]);
    }
  }
  // With the Condon-Shortley phase folded into Pbar:
  // dPbar_l^m/dtheta = (1/2)[c2 Pbar_l^{m+1} - c1 Pbar_l^{m-1}],
  // dPbar_l^0/dtheta = sqrt(l(l+1)) Pbar_l^1.
  for (int l = 0; l <= lmax; ++l) {
    for (int m = 0; m <= l; ++m) {
      double d;
      if (m == 0) {
        d = l > 0 ? std::sqrt(double(l) * (l + 1)) * t.p[idx(l, 1)] : 0.0;
      } else {
        double c1 = std::sqrt(double(l + m) * (l - m + 1));
        double c2 = std::sqrt(double(l - m) * (l + m + 1));
        double up = (m + 1 <= l) ? t.p[idx(l, m + 1)] : 0.0;
        d = 0.5 * (c2 * up - c1 * t.p[idx(l, m - 1)]);
      }
      t.dp[idx(l, m)] = d;
    }
  }
  return t;
}

cplx sph_harm_Y(int l, int m, double theta, double phi) {
  if (l < 0 || std::abs(m) > l) throw DomainError("spherical harmonic index out of range");
  LegendreTable t = legendre_table(l, theta);
  int am = std::abs(m);
  cplx v = t(l, am) * std::exp(I * double(am) * phi);
  if (m < 0) v = ((am % 2) ? -1.0 : 1.0) * std::conj(v);
  return v;
}

namespace {
// (Y, dY/dtheta, (1/sin) dY/dphi) at one point.
std::array<cplx, 3> y_parts(int l, int m, double theta, double phi) {
  LegendreTable t = legendre_table(l, theta);
  int am = std::abs(m);
  cplx e = std::exp(I * double(am) * phi);
  cplx y = t(l, am) * e;
  cplx yt = t.d(l, am) * e;
  cplx yps = I * t.msin(l, am) * e;
  if (m < 0) {
    double sg = (am % 2) ? -1.0 : 1.0;
    y = sg * std::conj(y);
    yt = sg * std::conj(yt);
    yps = sg * std::conj(yps);
  }
  return {y, yt, yps};
}
}  // namespace

std::array<cplx, 2> vec_sph_harm(int l, int m, VshKind kind, double theta, double phi,
                                 bool normalized) {
  if (l < 1 || std::abs(m) > l) throw DomainError("vector spherical harmonic needs l >= 1, |m| <= l");
  auto [y, yt, yps] = y_parts(l, m, theta, phi);
  double s = std::sin(theta);
  double scale = normalized ? 1.0 / std::sqrt(double(l) * (l + 1)) : 1.0;
  // grad Y = Y_theta e_theta + yps e_phi; x_theta = e_theta, x_phi = sin e_phi.
  // n x e_theta = e_phi, n x e_phi = -e_theta.
  if (kind == VshKind::Grad) return {scale * yt, scale * yps / s};
  return {-scale * yps, scale * yt / s};
}

CVec3 grad_Y_cart(int l, int m, double theta, double phi) {
  auto [y, yt, yps] = y_parts(l, m, theta, phi);
  (void)y;
  Vec3 et(std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta));
  Vec3 ep(-std::sin(phi), std::cos(phi), 0.0);
  return yt * et.cast<cplx>() + yps * ep.cast<cplx>();
}

}  // namespace debye::specfun
