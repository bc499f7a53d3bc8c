#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "debye/specfun.hpp"
#include "debye/surface.hpp"

using namespace debye;
using namespace debye::surf;

namespace {

// Real field from complex Y_l^m: Re Y on the grid.
RVector sphere_Y(const Surface& s, int l, int m) {
  RVector f(s.size());
  for (int i = 0; i < s.size(); ++i) f(i) = specfun::sph_harm_Y(l, m, s.chart(i)[0], s.chart(i)[1]).real();
  return f;
}

RVector random_sphere_field(const SphereSurface& s, int lmax, std::mt19937& rng, bool mean_zero = true) {
  std::normal_distribution<double> g;
  RVector a = RVector::Zero((lmax + 1) * (lmax + 1));
  for (int i = mean_zero ? 1 : 0; i < a.size(); ++i) a(i) = g(rng);
  return s.synthesis(a);
}

RVector random_torus_field(const Surface& s, int band, std::mt19937& rng, bool mean_zero = true) {
  std::normal_distribution<double> g;
  RVector f = RVector::Zero(s.size());
  for (int n = -band; n <= band; ++n)
    for (int m = -band; m <= band; ++m) {
      double a = g(rng), b = g(rng);
      for (int i = 0; i < s.size(); ++i) {
        double ph = n * s.chart(i)[0] + m * s.chart(i)[1];
        f(i) += a * std::cos(ph) + b * std::sin(ph);
      }
    }
  if (mean_zero) f = mean_zero_project(s, f.cast<cplx>()).real();
  return f;
}

RVector random_tangent(const Surface& s, const RVector& a, const RVector& b, const RVector& c) {
  // grad a + n x grad b + c n x grad(a b)-like mix is still a generic tangent field
  RMatrix v = s.grad(a) + s.rot90(s.grad(b));
  RVector w = c;
  const int n = s.size();
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) v(d * n + i, 0) += w(i) * s.xu()[i](d) / s.xu()[i].norm();
  return v.col(0);
}

double wnorm(const Surface& s, const CVector& v) { return std::sqrt(std::abs(s.inner_tangent(v, v))); }
double wnorm_s(const Surface& s, const CVector& v) { return std::sqrt(std::abs(s.inner(v, v))); }

}  // namespace

TEST_CASE("grid invariants: area, unit normals, orientation") {
  auto sp = make_sphere(24);
  CHECK(std::abs(sp->area() - 4.0 * PI) < 1e-10);
  auto to = make_torus(2.0, 0.5, 32, 32);
  CHECK(std::abs(to->area() - 4.0 * PI * PI * 2.0 * 0.5) < 1e-10);
  for (auto s : {sp, to})
    for (int i = 0; i < s->size(); ++i) {
      CHECK(std::abs(s->normals()[i].norm() - 1.0) < 1e-14);
      // outward: normal agrees with xu x xv
      CHECK(s->normals()[i].dot(s->xu()[i].cross(s->xv()[i])) > 0.0);
    }
  // torus normal points away from the core circle
  auto t = as_torus(*to);
  for (int i = 0; i < t->size(); i += 37) {
    Vec3 x = t->points()[i];
    Vec3 core(2.0 * x(0) / std::hypot(x(0), x(1)), 2.0 * x(1) / std::hypot(x(0), x(1)), 0.0);
    CHECK(t->normals()[i].dot(x - core) > 0.0);
  }
  CHECK_THROWS_AS(make_torus(0.5, 2.0, 16, 16), DomainError);
  CHECK_THROWS_AS(make_torus(2.0, 0.5, 15, 16), DomainError);
}

TEST_CASE("grad of a constant vanishes; Stokes on closed surfaces") {
  std::mt19937 rng(1);
  for (auto s : {make_sphere(20), make_torus(2.0, 0.5, 32, 32)}) {
    RMatrix one = RMatrix::Ones(s->size(), 1);
    CHECK(s->grad(one).cwiseAbs().maxCoeff() < 1e-11);
    RVector a = s->kind() == "sphere" ? random_sphere_field(*as_sphere(*s), 8, rng)
                                      : random_torus_field(*s, 4, rng);
    RVector b = s->kind() == "sphere" ? random_sphere_field(*as_sphere(*s), 8, rng)
                                      : random_torus_field(*s, 4, rng);
    RVector v = random_tangent(*s, a, b, a.cwiseProduct(b));
    RVector d = s->div(v);
    CHECK(std::abs(s->inner(d, RVector::Ones(s->size()))) < 1e-10 * std::max(1.0, d.norm()));
  }
}

TEST_CASE("div is the negative adjoint of grad") {
  std::mt19937 rng(2);
  for (auto s : {make_sphere(20), make_torus(2.0, 0.5, 40, 32)}) {
    for (int trial = 0; trial < 3; ++trial) {
      RVector f = s->kind() == "sphere" ? random_sphere_field(*as_sphere(*s), 10, rng, false)
                                        : random_torus_field(*s, 6, rng, false);
      RVector a = s->kind() == "sphere" ? random_sphere_field(*as_sphere(*s), 10, rng)
                                        : random_torus_field(*s, 6, rng);
      RVector v = random_tangent(*s, a, f, a);
      double lhs = s->inner_tangent(s->grad(f).col(0), v) + s->inner(f, s->div(v).col(0));
      double scale = std::sqrt(s->inner(f, f)) * std::sqrt(s->inner_tangent(v, v));
      CHECK(std::abs(lhs) < 1e-9 * scale);
    }
  }
}

TEST_CASE("rot90 squared is minus identity on tangent fields") {
  std::mt19937 rng(3);
  for (auto s : {make_sphere(16), make_torus(2.0, 0.5, 24, 24)}) {
    RVector a = RVector::Random(s->size()), b = RVector::Random(s->size());
    RVector v = random_tangent(*s, a, b, a);
    RMatrix t = s->tangential(v);
    CHECK((s->rot90(s->rot90(t)) + t).cwiseAbs().maxCoeff() < 1e-13 * t.cwiseAbs().maxCoeff());
    CHECK(s->normal_dot(s->rot90(t)).cwiseAbs().maxCoeff() < 1e-13 * t.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("sphere Laplace-Beltrami eigenvalues") {
  auto s = make_sphere(32);
  const int L = as_sphere(*s)->lmax();
  double worst = 0.0;
  for (int l = 0; l <= L / 2; ++l)
    for (int m : {0, l / 2, l}) {
      RVector y = sphere_Y(*s, l, m);
      RVector ly = s->laplacian(y);
      RVector e = ly + l * (l + 1.0) * y;
      worst = std::max(worst, e.cwiseAbs().maxCoeff() / std::max(1.0, l * (l + 1.0)));
    }
  CHECK(worst < 1e-8);
  // spot check against the complex harmonic directly
  RVector y = sphere_Y(*s, 4, 3);
  CHECK((s->laplacian(y) + 20.0 * y).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("sphere spectral transforms: orthonormal basis and round trip") {
  auto s = make_sphere(18);
  auto sp = as_sphere(*s);
  RMatrix B = sp->synthesis(RMatrix::Identity(sp->ncoeffs(), sp->ncoeffs()));
  RMatrix G = B.transpose() * s->weights().asDiagonal() * B;
  CHECK((G - RMatrix::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff() < 1e-10);
  std::mt19937 rng(4);
  RVector f = random_sphere_field(*sp, sp->lmax(), rng, false);
  CHECK((sp->synthesis(sp->analysis(f)) - f).cwiseAbs().maxCoeff() < 1e-12 * f.cwiseAbs().maxCoeff());
  // upsampling and point interpolation reproduce a band-limited field
  RVector y = sphere_Y(*s, 5, 2);
  auto fine = s->refined(2);
  RVector yf = sphere_Y(*fine, 5, 2);
  CHECK((s->upsample(y, 2).col(0) - yf).cwiseAbs().maxCoeff() < 1e-12);
  std::vector<std::array<double, 2>> uv = {{0.3, 1.1}, {2.0, 5.0}, {1e-3, 0.2}};
  RMatrix v = s->interpolate_at(uv, y);
  for (size_t p = 0; p < uv.size(); ++p)
    CHECK(std::abs(v(Eigen::Index(p), 0) - specfun::sph_harm_Y(5, 2, uv[p][0], uv[p][1]).real()) < 1e-12);
}

TEST_CASE("R0 on the sphere: eigenfunctions, zero, mean-zero contract") {
  auto s = make_sphere(20);
  for (int l : {1, 2, 5, 9}) {
    RVector y = sphere_Y(*s, l, l / 2);
    CMatrix u = laplace_beltrami_partial_inverse_R0(*s, y.cast<cplx>());
    CHECK((u.col(0).real() + y / (l * (l + 1.0))).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(u.imag().cwiseAbs().maxCoeff() == 0.0);
  }
  CMatrix z = CMatrix::Zero(s->size(), 1);
  CHECK(laplace_beltrami_partial_inverse_R0(*s, z).cwiseAbs().maxCoeff() == 0.0);
  CVector c = CVector::Constant(s->size(), cplx(1.0, 0.0));
  CHECK_THROWS_AS(laplace_beltrami_partial_inverse_R0(*s, c), MeanZeroError);
  // tiny means are projected away
  RVector y = sphere_Y(*s, 3, 1);
  CVector yt = y.cast<cplx>();
  yt.array() += 1e-13;
  CHECK_NOTHROW(laplace_beltrami_partial_inverse_R0(*s, yt));
}

TEST_CASE("R0 on the torus: apply-inverse-apply") {
  auto s = make_torus(2.0, 0.5, 64, 64);
  std::mt19937 rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    RVector f = random_torus_field(*s, 8, rng);
    RVector u = s->R0(f);
    RVector res = s->laplacian(u).col(0) - f;
    CHECK(res.cwiseAbs().maxCoeff() < 1e-8 * f.cwiseAbs().maxCoeff());
    CHECK(std::abs(mean(*s, u.cast<cplx>())) < 1e-12 * u.cwiseAbs().maxCoeff());
  }
  CHECK(s->R0(RMatrix::Zero(s->size(), 1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mean-zero projection") {
  auto s = make_torus(2.0, 0.5, 24, 20);
  CVector c = CVector::Constant(s->size(), cplx(2.0, -1.0));
  CHECK(mean_zero_project(*s, c).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(!is_mean_zero(*s, c));
  std::mt19937 rng(6);
  CVector f = random_torus_field(*s, 3, rng, false).cast<cplx>();
  CVector p = mean_zero_project(*s, f);
  CHECK(is_mean_zero(*s, p));
  CHECK((mean_zero_project(*s, p) - p).cwiseAbs().maxCoeff() < 1e-15 * p.cwiseAbs().maxCoeff() + 1e-16);
  auto sp = make_sphere(12);
  RVector y = sphere_Y(*sp, 2, 1);
  CVector yc = y.cast<cplx>();
  CHECK((mean_zero_project(*sp, yc) - yc).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("currents from Debye sources") {
  auto s = make_sphere(16);
  SUBCASE("r = Y_1^0, q = 0, k = 1") {
    CVector r = sphere_Y(*s, 1, 0).cast<cplx>(), q = CVector::Zero(s->size());
    Currents c = currents_from_debye(*s, r, q, 1.0);
    CVector expect = (-0.5 * I) * CVector(cgrad(*s, r));
    CHECK((c.j - expect).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((c.m - crot90(*s, c.j)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("normal component vanishes exactly; k -> 0 limit") {
    std::mt19937 rng(7);
    CVector r = random_sphere_field(*as_sphere(*s), 8, rng).cast<cplx>();
    CVector q = random_sphere_field(*as_sphere(*s), 8, rng).cast<cplx>();
    Currents c = currents_from_debye(*s, r, q, 1e-8);
    CHECK(cnormal_dot(*s, c.j).cwiseAbs().maxCoeff() < 1e-15 * std::max(1e-300, c.j.cwiseAbs().maxCoeff()) + 1e-30);
    CHECK(wnorm(*s, c.j) / wnorm_s(*s, r) < 1e-6);
  }
  SUBCASE("continuity conditions on the torus") {
    auto t = make_torus(2.0, 0.5, 48, 48);
    std::mt19937 rng(8);
    CVector r = random_torus_field(*t, 6, rng).cast<cplx>();
    CVector q = random_torus_field(*t, 6, rng).cast<cplx>();
    cplx k(1.3, 0.2);
    CVector hc(2);
    hc << cplx(0.4, 0.1), cplx(-0.7, 0.3);
    Currents c = currents_from_debye(*t, r, q, k, hc);
    double sc = r.cwiseAbs().maxCoeff() + q.cwiseAbs().maxCoeff();
    CHECK((CVector(cdiv(*t, c.j)) - I * k * r).cwiseAbs().maxCoeff() < 1e-8 * sc);
    CHECK((CVector(cdiv(*t, c.m)) - I * k * q).cwiseAbs().maxCoeff() < 1e-8 * sc);
    CVector bad = r.array() + 1.0;
    CHECK_THROWS_AS(currents_from_debye(*t, bad, q, k), MeanZeroError);
  }
}

TEST_CASE("harmonic basis") {
  CHECK(make_sphere(10)->harmonic_basis().cols() == 0);
  auto t = make_torus(2.0, 0.5, 64, 64);
  const RMatrix& H = t->harmonic_basis();
  REQUIRE(H.cols() == 2);
  RMatrix G(2, 2);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) G(a, b) = t->inner_tangent(RVector(H.col(a)), RVector(H.col(b)));
  CHECK((G - RMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  RMatrix A = torus_analytic_harmonic(*t);
  CHECK(principal_angle(*t, H, A) < 1e-6);
  CHECK(t->div(H).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(t->div(t->rot90(H)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(t->normal_dot(H).cwiseAbs().maxCoeff() < 1e-12);
  // analytic pair: second is the rotation of the first
  CHECK((t->rot90(A.col(0)) - A.col(1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Hodge decomposition") {
  SUBCASE("pure gradient on the sphere") {
    auto s = make_sphere(16);
    CVector y = sphere_Y(*s, 2, 1).cast<cplx>();
    CVector v = cgrad(*s, y);
    HodgeParts h = hodge_decompose(*s, v);
    CHECK(wnorm(*s, h.rot_part) < 1e-12 * wnorm(*s, v));
    CHECK(wnorm(*s, h.grad_part - v) < 1e-12 * wnorm(*s, v));
    CHECK(h.harmonic_coeffs.size() == 0);
  }
  SUBCASE("harmonic field on the torus") {
    auto t = make_torus(2.0, 0.5, 48, 48);
    CVector v = torus_analytic_harmonic(*t).col(0).cast<cplx>();
    HodgeParts h = hodge_decompose(*t, v);
    CHECK(wnorm(*t, h.grad_part) < 1e-8 * wnorm(*t, v));
    CHECK(wnorm(*t, h.rot_part) < 1e-8 * wnorm(*t, v));
    CHECK(wnorm(*t, h.harmonic_part - v) < 1e-8 * wnorm(*t, v));
  }
  SUBCASE("random field: orthogonal parts and Pythagoras") {
    auto t = make_torus(2.0, 0.5, 48, 48);
    std::mt19937 rng(9);
    RVector a = random_torus_field(*t, 5, rng), b = random_torus_field(*t, 5, rng);
    RVector v = random_tangent(*t, a, b, RVector::Constant(t->size(), 0.3) + a.cwiseProduct(a) * 0.01);
    CVector vc = v.cast<cplx>() + I * torus_analytic_harmonic(*t).col(1).cast<cplx>();
    HodgeParts h = hodge_decompose(*t, vc);
    double n2 = std::pow(wnorm(*t, vc), 2);
    double parts = std::pow(wnorm(*t, h.grad_part), 2) + std::pow(wnorm(*t, h.rot_part), 2) +
                   std::pow(wnorm(*t, h.harmonic_part), 2);
    CHECK(wnorm(*t, h.remainder) < 1e-8 * std::sqrt(n2));
    CHECK(std::abs(n2 - parts) < 1e-8 * n2);
    CHECK(std::abs(t->inner_tangent(h.grad_part, h.rot_part)) < 1e-9 * n2);
    CHECK(std::abs(t->inner_tangent(h.grad_part, h.harmonic_part)) < 1e-9 * n2);
    CHECK(std::abs(t->inner_tangent(h.rot_part, h.harmonic_part)) < 1e-9 * n2);
  }
}

TEST_CASE("torus interpolation and chart components") {
  auto t = make_torus(2.0, 0.5, 24, 20);
  RVector f(t->size());
  for (int i = 0; i < t->size(); ++i) f(i) = std::sin(2 * t->chart(i)[0]) * std::cos(3 * t->chart(i)[1]) + 0.5;
  std::vector<std::array<double, 2>> uv = {{0.123, 4.2}, {3.0, 0.77}};
  RMatrix v = t->interpolate_at(uv, f);
  for (size_t p = 0; p < uv.size(); ++p)
    CHECK(std::abs(v(Eigen::Index(p), 0) - (std::sin(2 * uv[p][0]) * std::cos(3 * uv[p][1]) + 0.5)) < 1e-13);
  RVector fu = t->upsample(f, 3).col(0);
  auto fine = t->refined(3);
  for (int i = 0; i < fine->size(); i += 11) {
    double s = fine->chart(i)[0], tt = fine->chart(i)[1];
    CHECK(std::abs(fu(i) - (std::sin(2 * s) * std::cos(3 * tt) + 0.5)) < 1e-13);
  }
  std::mt19937 rng(10);
  RVector a = random_torus_field(*t, 3, rng);
  RMatrix g = t->grad(a);
  CHECK((t->from_chart(t->to_chart(g)) - g).cwiseAbs().maxCoeff() < 1e-13 * g.cwiseAbs().maxCoeff());
  CHECK_THROWS_AS(t->div(RMatrix::Zero(5, 1)), DomainError);
}
