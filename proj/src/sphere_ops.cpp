#include "debye/sphere_ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "debye/quadrature.hpp"
#include "debye/specfun.hpp"

namespace debye::sphere {

using specfun::BesselTable;

double SphHarmCoeffs::max_abs() const {
  double m = 0.0;
  for (const auto& v : data_) m = std::max(m, std::abs(v));
  return m;
}

SphHarmCoeffs SphHarmCoeffs::operator-(const SphHarmCoeffs& o) const {
  int L = std::max(lmax_, o.lmax_);
  SphHarmCoeffs r(L);
  for (int l = 0; l <= L; ++l)
    for (int m = -l; m <= l; ++m) {
      cplx x = l <= lmax_ ? (*this)(l, m) : cplx(0.0);
      cplx y = l <= o.lmax_ ? o(l, m) : cplx(0.0);
      r(l, m) = x - y;
    }
  return r;
}

cplx multiplier_normal(cplx k, int l) {
  if (l < 1) throw DomainError("multiplier_normal needs l >= 1");
  if (k == cplx(0.0, 0.0)) return double(l + 1) / double(2 * l + 1);
  BesselTable t(l, k);
  cplx jh = t.prod(l, false, l, false);
  cplx jdh = t.prod(l, false, l, true);
  return 1.0 + I * k * jh + I * k * k * jdh + k * k * jh;
}

cplx multiplier_tangential(cplx k, int l) {
  if (l < 1) throw DomainError("multiplier_tangential needs l >= 1");
  double L = double(l) * (l + 1), tl = 2.0 * l + 1.0;
  if (k == cplx(0.0, 0.0)) return -L / (tl * tl);
  BesselTable t(l + 1, k);
  cplx jh = t.prod(l, false, l, false);
  cplx jhm = t.prod(l, false, l - 1, false);
  cplx jhm1 = t.prod(l - 1, false, l - 1, false);
  cplx jhp1 = t.prod(l + 1, false, l + 1, false);
  cplx br = I * L * jh - k * (k * jhm - double(l) * jh) -
            I * k * k * (double(l + 1) * jhm1 + double(l) * jhp1) / tl;
  return (-k / tl) * br;
}

ModeSymbols mode_symbols(cplx k, int l) {
  if (k == cplx(0.0, 0.0)) throw DomainError("mode_symbols: k = 0 is handled by the static path");
  BesselTable t(l + 1, k);
  double L = double(l) * (l + 1), tl = 2.0 * l + 1.0;
  cplx jh = t.prod(l, false, l, false);
  cplx jdh = t.prod(l, false, l, true);
  cplx jhm1 = l >= 1 ? t.prod(l - 1, false, l - 1, false) : cplx(0.0);
  cplx jdhm1 = l >= 1 ? t.prod(l - 1, false, l - 1, true) : cplx(0.0);
  cplx jhp1 = t.prod(l + 1, false, l + 1, false);
  cplx jdhp1 = t.prod(l + 1, false, l + 1, true);
  ModeSymbols s;
  s.s0 = I * k * jh;
  s.sN = I * k * L / tl * (jhm1 - jhp1);
  s.sT = I * k / tl * (double(l + 1) * jhm1 + double(l) * jhp1);
  s.cN = -I * k * L * jh;
  s.cT = -I * k * (jh + k * jdh);
  s.cT2 = I * k / tl *
          (double(l) * (l + 2) * jhp1 - double(l - 1) * (l + 1) * jhm1 +
           k * (double(l + 1) * jdhm1 + double(l) * jdhp1));
  s.dN = I * k * k * jdh;
  return s;
}

SphHarmCoeffs SphereDebyeSolution::alpha() const {
  SphHarmCoeffs r(a.lmax());
  for (int l = 1; l <= a.lmax(); ++l)
    for (int m = -l; m <= l; ++m) r(l, m) = -I * k * a(l, m) / (double(l) * (l + 1));
  return r;
}

SphHarmCoeffs SphereDebyeSolution::beta() const {
  SphHarmCoeffs r(b.lmax());
  for (int l = 1; l <= b.lmax(); ++l)
    for (int m = -l; m <= l; ++m) r(l, m) = I * k * b(l, m) / (double(l) * (l + 1));
  return r;
}

namespace {
void check_zero_mode(const SphHarmCoeffs& c, const char* name) {
  if (c.size() > 0 && std::abs(c(0, 0)) > 1e-12) {
    std::ostringstream os;
    os << name << " has a nonzero l = 0 mode (mean-zero condition violated)";
    throw MeanZeroError(os.str());
  }
}

void check_multiplier(cplx mult, cplx k, int l, const char* which) {
  if (std::abs(mult) < 1e-13) {
    std::ostringstream os;
    os << which << " multiplier vanishes at k = " << k << ", l = " << l;
    throw SingularMultiplierError(os.str(), k, l);
  }
}
}  // namespace

SphereDebyeSolution solve_normal_sphere(cplx k, const SphHarmCoeffs& c, const SphHarmCoeffs& d) {
  check_zero_mode(c, "c");
  check_zero_mode(d, "d");
  int L = std::max(c.lmax(), d.lmax());
  SphereDebyeSolution s{k, SphHarmCoeffs(L), SphHarmCoeffs(L)};
  for (int l = 1; l <= L; ++l) {
    cplx mn = multiplier_normal(k, l);
    check_multiplier(mn, k, l, "normal");
    for (int m = -l; m <= l; ++m) {
      if (l <= c.lmax()) s.a(l, m) = c(l, m) / mn;
      if (l <= d.lmax()) s.b(l, m) = d(l, m) / mn;
    }
  }
  return s;
}

SphereDebyeSolution solve_hybrid_sphere(cplx k, const SphHarmCoeffs& p, const SphHarmCoeffs& q) {
  if (k == cplx(0.0, 0.0)) throw DomainError("solve_hybrid_sphere: k = 0 is handled by the static path");
  check_zero_mode(p, "p");
  check_zero_mode(q, "q");
  int L = std::max(p.lmax(), q.lmax());
  SphereDebyeSolution s{k, SphHarmCoeffs(L), SphHarmCoeffs(L)};
  for (int l = 1; l <= L; ++l) {
    cplx mt = multiplier_tangential(k, l);
    cplx mn = multiplier_normal(k, l);
    check_multiplier(mt, k, l, "tangential");
    check_multiplier(mn, k, l, "normal");
    double sl = std::sqrt(double(l) * (l + 1));
    for (int m = -l; m <= l; ++m) {
      if (l <= p.lmax()) s.a(l, m) = -sl * p(l, m) / ((2.0 * l + 1.0) * mt);
      if (l <= q.lmax()) s.b(l, m) = sl * q(l, m) / (I * k * mn);
    }
  }
  return s;
}

SphereTraces eval_traces_sphere(const SphereDebyeSolution& sol) {
  int L = std::max(sol.a.lmax(), sol.b.lmax());
  SphereTraces t{SphHarmCoeffs(L), SphHarmCoeffs(L), SphHarmCoeffs(L),
                 SphHarmCoeffs(L), SphHarmCoeffs(L), SphHarmCoeffs(L)};
  cplx k = sol.k;
  SphHarmCoeffs al = sol.alpha(), be = sol.beta();
  for (int l = 1; l <= L; ++l) {
    ModeSymbols s = mode_symbols(k, l);
    for (int m = -l; m <= l; ++m) {
      cplx a = l <= sol.a.lmax() ? sol.a(l, m) : cplx(0.0);
      cplx b = l <= sol.b.lmax() ? sol.b(l, m) : cplx(0.0);
      cplx A = l <= al.lmax() ? al(l, m) : cplx(0.0);
      cplx B = l <= be.lmax() ? be(l, m) : cplx(0.0);
      // j = A grad Y + B n x grad Y, m = A n x grad Y - B grad Y.
      t.c(l, m) = I * k * A * s.sN - a * s.dN - A * s.cN;
      t.d(l, m) = B * s.cN - I * k * B * s.sN - b * s.dN;
      t.e_grad(l, m) = I * k * A * s.sT - a * s.s0 - A * s.cT;
      t.e_star(l, m) = I * k * B * s.s0 + B * s.cT2;
      t.h_grad(l, m) = B * s.cT - I * k * B * s.sT - b * s.s0;
      t.h_star(l, m) = A * s.cT2 + I * k * A * s.s0;
    }
  }
  return t;
}

MieCoeffs debye_to_mie(const SphereDebyeSolution& sol) {
  SphereTraces t = eval_traces_sphere(sol);
  int L = t.c.lmax();
  MieCoeffs mie{sol.k, SphHarmCoeffs(L), SphHarmCoeffs(L)};
  for (int l = 1; l <= L; ++l) {
    double ll = double(l) * (l + 1);
    for (int m = -l; m <= l; ++m) {
      mie.v(l, m) = t.c(l, m) / ll;
      mie.u(l, m) = t.d(l, m) / ll;
    }
  }
  return mie;
}

FieldEH eval_field_sphere(const MieCoeffs& mie, const Vec3& x, double eps) {
  double r = x.norm();
  if (r < 1.0 + eps) throw NearSurfaceError("eval_field_sphere: point too close to the sphere", r - 1.0);
  int L = mie.v.lmax();
  cplx k = mie.k;
  double theta = std::acos(std::clamp(x.z() / r, -1.0, 1.0));
  double phi = std::atan2(x.y(), x.x());
  Vec3 rh = x / r;
  Vec3 et(std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta));
  Vec3 ep(-std::sin(phi), std::cos(phi), 0.0);

  auto h1 = specfun::sph_hankel_h1_array(L + 1, k);
  auto hr = specfun::sph_hankel_h1_array(L + 1, k * r);
  specfun::LegendreTable P = specfun::legendre_table(L, theta);

  CVec3 E = CVec3::Zero(), H = CVec3::Zero();
  for (int l = 1; l <= L; ++l) {
    double ll = double(l) * (l + 1);
    specfun::Scaled dhr = hr[l - 1] - hr[l] * (double(l + 1) / (k * r));
    cplx f = (hr[l] / h1[l]).value();
    cplx fp = (dhr / h1[l]).value() * k;
    cplx rfp = f + r * fp;  // (r f)'
    for (int m = -l; m <= l; ++m) {
      cplx v = mie.v(l, m), u = mie.u(l, m);
      if (v == cplx(0.0) && u == cplx(0.0)) continue;
      int am = std::abs(m);
      cplx e = std::exp(I * double(am) * phi);
      cplx Y = P(l, am) * e, Yt = P.d(l, am) * e, Yp = I * P.msin(l, am) * e;
      if (m < 0) {
        double sg = (am % 2) ? -1.0 : 1.0;
        Y = sg * std::conj(Y);
        Yt = sg * std::conj(Yt);
        Yp = sg * std::conj(Yp);
      }
      CVec3 gY = Yt * et.cast<cplx>() + Yp * ep.cast<cplx>();
      CVec3 rxg = Yt * ep.cast<cplx>() - Yp * et.cast<cplx>();  // rhat x grad Y
      CVec3 cc = (ll * f / r) * Y * rh.cast<cplx>() + (rfp / r) * gY;
      CVec3 c1 = -f * rxg;  // curl(x psi)
      E += v * cc + I * k * u * c1;
      H += u * cc - I * k * v * c1;
    }
  }
  return {E, H};
}

FieldEH eval_field_sphere(const SphereDebyeSolution& sol, const Vec3& x, double eps) {
  return eval_field_sphere(debye_to_mie(sol), x, eps);
}

ProjectedData project_incident(const FieldFn& field, int lmax, int ntheta) {
  if (ntheta <= 0) ntheta = lmax + 12;
  int nphi = 2 * ntheta;
  quad::Rule gl = quad::gauss_legendre(ntheta);
  ProjectedData out{SphHarmCoeffs(lmax), SphHarmCoeffs(lmax), SphHarmCoeffs(lmax)};
  for (int i = 0; i < ntheta; ++i) {
    double theta = std::acos(-gl.x[i]);
    specfun::LegendreTable P = specfun::legendre_table(lmax, theta);
    for (int j = 0; j < nphi; ++j) {
      double phi = 2.0 * PI * j / nphi;
      double w = gl.w[i] * 2.0 * PI / nphi;
      Vec3 n(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
      Vec3 et(std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta));
      Vec3 ep(-std::sin(phi), std::cos(phi), 0.0);
      FieldEH f = field(n);
      cplx Et = et.cast<cplx>().dot(f.E);
      cplx Ep = ep.cast<cplx>().dot(f.E);
      cplx Hn = n.cast<cplx>().dot(f.H);
      for (int l = 1; l <= lmax; ++l) {
        double sl = std::sqrt(double(l) * (l + 1));
        for (int m = -l; m <= l; ++m) {
          int am = std::abs(m);
          cplx e = std::exp(I * double(am) * phi);
          cplx Y = P(l, am) * e, Yt = P.d(l, am) * e, Yp = I * P.msin(l, am) * e;
          if (m < 0) {
            double sg = (am % 2) ? -1.0 : 1.0;
            Y = sg * std::conj(Y);
            Yt = sg * std::conj(Yt);
            Yp = sg * std::conj(Yp);
          }
          // <E_tan, grad Y> and <E_tan, n x grad Y>; n x grad Y = Yt e_phi - Yp e_theta.
          out.p(l, m) += w * (Et * std::conj(Yt) + Ep * std::conj(Yp)) / sl;
          out.q(l, m) += w * (Ep * std::conj(Yt) - Et * std::conj(Yp)) / sl;
          out.h(l, m) += w * Hn * std::conj(Y);
        }
      }
    }
  }
  return out;
}

SpherePec solve_pec_sphere(const FieldFn& incident, cplx k, int lmax, int npoints, unsigned seed) {
  ProjectedData d = project_incident(incident, lmax);
  SpherePec out{solve_hybrid_sphere(k, d.p, d.q)};
  MieCoeffs mie = debye_to_mie(out.solution);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double et = 0.0, hn = 0.0, es = 0.0, hs = 0.0;
  for (int i = 0; i < npoints; ++i) {
    double th = std::acos(1.0 - 2.0 * u(rng)), ph = 2.0 * PI * u(rng);
    Vec3 x(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
    FieldEH sc = eval_field_sphere(mie, x, -1e-12), in = incident(x);
    CVec3 n = x.cast<cplx>();
    et = std::max(et, cross(n, sc.E + in.E).norm());
    hn = std::max(hn, std::abs(bdot(n, sc.H + in.H)));
    es = std::max(es, in.E.norm());
    hs = std::max(hs, in.H.norm());
  }
  out.tangential_E = es > 0.0 ? et / es : et;
  out.normal_H = hs > 0.0 ? hn / hs : hn;
  return out;
}

}  // namespace debye::sphere
