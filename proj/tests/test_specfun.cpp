#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "debye/quadrature.hpp"
#include "debye/specfun.hpp"

using namespace debye;
using namespace debye::specfun;

namespace {

// Defining series j_l(z) = sum_n (-1)^n z^{l+2n} / (2^n n! (2l+2n+1)!!), summed in long double.
std::complex<long double> j_series_oracle(int l, std::complex<long double> z) {
  std::complex<long double> zl = 1.0L;
  long double dfact = 1.0L;  // (2l+1)!!
  for (int i = 1; i <= l; ++i) {
    zl *= z;
    dfact *= (2.0L * i + 1.0L);
  }
  std::complex<long double> sum = 0.0L, term = zl / dfact;
  for (int n = 0; n < 200; ++n) {
    sum += term;
    term *= -z * z / (2.0L * (n + 1) * (2.0L * l + 2.0L * n + 3.0L));
  }
  return sum;
}

// Explicit finite sum h_l(z) = (-i)^{l+1} e^{iz}/z sum_s i^s (l+s)! / (s! (l-s)! (2z)^s).
cplx h_closed_oracle(int l, cplx z) {
  cplx sum = 0.0;
  for (int s = 0; s <= l; ++s) {
    double c = std::tgamma(l + s + 1.0) / (std::tgamma(s + 1.0) * std::tgamma(l - s + 1.0));
    sum += std::pow(I, s) * c / std::pow(2.0 * z, s);
  }
  return std::pow(-I, l + 1) * std::exp(I * z) / z * sum;
}

double wronskian_defect(int l, cplx k) {
  BesselTable t(l, k);
  cplx w = t.prod(l, false, l, true) - t.prod(l, true, l, false);
  return std::abs(w - I / (k * k)) * std::abs(k * k);
}

}  // namespace

TEST_CASE("j0 closed form and zero limit") {
  CHECK(std::abs(sph_bessel_j(0, 1.0) - 0.8414709848078965) < 1e-15);
  CHECK(sph_bessel_j(0, 0.0) == cplx(1.0));
  for (int l = 1; l < 6; ++l) CHECK(sph_bessel_j(l, 0.0) == cplx(0.0));
}

TEST_CASE("j_l against the defining series") {
  for (auto [l, z] : std::vector<std::pair<int, cplx>>{{5, {2.0, 1.0}}, {0, {0.3, -0.2}}, {3, {4.0, 0.5}},
                                                        {12, {1.5, 2.0}}, {30, {3.0, -1.0}}}) {
    std::complex<long double> o = j_series_oracle(l, {z.real(), z.imag()});
    cplx ref(double(o.real()), double(o.imag()));
    CHECK(std::abs(sph_bessel_j(l, z) - ref) < 1e-12 * std::max(1.0, std::abs(ref)));
    CHECK(std::abs(BesselTable(l, z).j(l).value() - ref) < 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("h0 closed form and domain error at zero") {
  cplx z = 1.5;
  CHECK(std::abs(sph_hankel_h1(0, z) - (-I * std::exp(I * z) / z)) < 1e-15);
  CHECK_THROWS_AS(sph_hankel_h1(2, 0.0), DomainError);
}

TEST_CASE("h_l against the explicit finite sum and the polynomial factorization") {
  for (int l = 0; l <= 10; ++l) {
    for (cplx z : {cplx(2.0, 0.0), cplx(0.7, 0.3), cplx(5.0, -1.0)}) {
      cplx ref = h_closed_oracle(l, z);
      CHECK(std::abs(sph_hankel_h1(l, z) - ref) < 1e-12 * std::abs(ref));
      auto p = hankel_poly_coeffs(l);
      REQUIRE(int(p.size()) == l + 1);
      cplx fac = poly_eval(p, z) * std::exp(I * z) / std::pow(z, l + 1);
      CHECK(std::abs(fac - ref) < 1e-12 * std::abs(ref));
    }
  }
  cplx z = 2.0;
  auto p3 = hankel_poly_coeffs(3);
  CHECK(std::abs(sph_hankel_h1(3, z) - poly_eval(p3, z) * std::exp(2.0 * I) / 16.0) < 1e-13);
}

TEST_CASE("Wronskian identity") {
  for (auto [l, k] : std::vector<std::pair<int, double>>{{1, 1.0}, {7, 3.5}, {20, 10.0}}) {
    BesselTable t(l, k);
    cplx w = t.prod(l, false, l, true) - t.prod(l, true, l, false) - I / (k * k);
    CHECK(std::abs(w) < 1e-12);
  }
  double worst = 0.0;
  for (double k : {0.5, 1.0, 10.0, 50.0})
    for (int l = 1; l <= 200; ++l) worst = std::max(worst, wronskian_defect(l, k));
  CHECK(worst < 1e-11);
}

TEST_CASE("large degree and argument stay finite in products") {
  for (int l : {400, 1000}) {
    for (cplx k : {cplx(1.0), cplx(200.0), cplx(30.0, 5.0)}) {
      double d = wronskian_defect(l, k);
      CHECK(d < 1e-9);
    }
  }
}

TEST_CASE("derivatives") {
  auto d = sph_bessel_derivs(0, 1.0);
  CHECK(std::abs(d.dj - (-0.3011686789397568)) < 1e-15);
  CHECK(std::abs(d.dj + sph_bessel_j(1, 1.0)) < 1e-15);
  // three-term recurrence residual
  double worst = 0.0;
  for (cplx z : {cplx(0.8), cplx(3.0, 0.4), cplx(9.0, -2.0), cplx(25.0)}) {
    BesselTable t(30, z);
    for (int l = 1; l < 30; ++l) {
      cplx rj = (2.0 * l + 1.0) * t.j(l).value() / z - t.j(l - 1).value() - t.j(l + 1).value();
      cplx rh = (2.0 * l + 1.0) * t.h(l).value() / z - t.h(l - 1).value() - t.h(l + 1).value();
      worst = std::max(worst, std::abs(rj) / std::max(1.0, std::abs(t.j(l - 1).value())));
      worst = std::max(worst, std::abs(rh) / std::max(1.0, std::abs(t.h(l - 1).value())));
    }
  }
  CHECK(worst < 1e-12);
  // product recurrence linking neighbouring degrees
  int l = 4;
  double k = 2.0;
  BesselTable t(l + 1, k);
  cplx lhs = k * (t.prod(l - 1, false, l - 1, false) - t.prod(l + 1, false, l + 1, false)) / (2.0 * l + 1.0);
  cplx rhs = t.prod(l, false, l, false) / k + t.prod(l, false, l, true) + t.prod(l, true, l, false);
  CHECK(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("reflection symmetry z_l(-conj k) = (-1)^l conj z_l(k)") {
  for (cplx k : {cplx(1.3, 0.2), cplx(4.0, 1.0), cplx(0.4, 0.05), cplx(12.0, 0.0)}) {
    cplx kr = -std::conj(k);
    for (int l = 0; l <= 15; ++l) {
      double s = (l % 2) ? -1.0 : 1.0;
      cplx j1 = sph_bessel_j(l, k), j2 = sph_bessel_j(l, kr);
      cplx h1 = sph_hankel_h1(l, k), h2 = sph_hankel_h1(l, kr);
      CHECK(std::abs(j2 - s * std::conj(j1)) < 1e-13 * std::max(1.0, std::abs(j1)));
      CHECK(std::abs(h2 - s * std::conj(h1)) < 1e-13 * std::max(1.0, std::abs(h1)));
    }
  }
}

TEST_CASE("spherical harmonics") {
  CHECK(std::abs(sph_harm_Y(0, 0, 0.3, 1.2) - 1.0 / std::sqrt(4.0 * PI)) < 1e-15);
  CHECK_THROWS_AS(sph_harm_Y(2, 3, 0.1, 0.1), DomainError);
  CHECK_THROWS_AS(vec_sph_harm(0, 0, VshKind::Grad, 0.1, 0.1), DomainError);

  // quadrature orthonormality up to l = 20
  const int L = 20, nt = L + 2, np = 2 * L + 2;
  auto gl = quad::gauss_legendre(nt);
  int nY = (L + 1) * (L + 1);
  CMatrix G = CMatrix::Zero(nY, nY), V = CMatrix::Zero(nY, nY);
  for (int i = 0; i < nt; ++i) {
    double th = std::acos(gl.x[i]);
    for (int j = 0; j < np; ++j) {
      double ph = 2.0 * PI * j / np, w = gl.w[i] * 2.0 * PI / np;
      CVector y(nY);
      Eigen::MatrixXcd g(2, nY);
      for (int l = 0; l <= L; ++l)
        for (int m = -l; m <= l; ++m) {
          int id = l * l + l + m;
          y(id) = sph_harm_Y(l, m, th, ph);
          if (l > 0) {
            auto v = vec_sph_harm(l, m, VshKind::Grad, th, ph);
            g(0, id) = v[0];
            g(1, id) = v[1] * std::sin(th);  // orthonormal frame components
          } else {
            g.col(id).setZero();
          }
        }
      G += w * y.conjugate() * y.transpose();
      V += w * g.adjoint() * g;
    }
  }
  CHECK((G - CMatrix::Identity(nY, nY)).cwiseAbs().maxCoeff() < 1e-12);
  double worst = 0.0;
  for (int l = 1; l <= L; ++l)
    for (int m = -l; m <= l; ++m) {
      int id = l * l + l + m;
      worst = std::max(worst, std::abs(V(id, id) - double(l * (l + 1))));
    }
  CHECK(worst < 1e-10);
}

TEST_CASE("GRAD and STAR_GRAD are pointwise orthogonal with equal length") {
  for (double th : {0.2, 1.0, 2.5})
    for (int l = 1; l <= 6; ++l)
      for (int m = -l; m <= l; ++m) {
        auto a = vec_sph_harm(l, m, VshKind::Grad, th, 0.7, true);
        auto b = vec_sph_harm(l, m, VshKind::StarGrad, th, 0.7, true);
        double s2 = std::sin(th) * std::sin(th);
        // real inner product of the two complex tangent vectors, metric diag(1, sin^2)
        cplx d = a[0] * b[0] + s2 * a[1] * b[1];
        CHECK(std::abs(d) < 1e-14);
        cplx na = a[0] * a[0] + s2 * a[1] * a[1], nb = b[0] * b[0] + s2 * b[1] * b[1];
        CHECK(std::abs(na - nb) < 1e-14);
      }
}

TEST_CASE("Cartesian gradient agrees with chart components") {
  double th = 0.9, ph = -0.4;
  for (int l = 1; l <= 5; ++l)
    for (int m = -l; m <= l; ++m) {
      auto v = vec_sph_harm(l, m, VshKind::Grad, th, ph);
      Vec3 xt(std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th));
      Vec3 xp(-std::sin(th) * std::sin(ph), std::sin(th) * std::cos(ph), 0.0);
      CVec3 g = v[0] * xt.cast<cplx>() + v[1] * xp.cast<cplx>();
      CHECK((g - grad_Y_cart(l, m, th, ph)).norm() < 1e-13);
    }
}
