#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "debye/solver.hpp"
#include "debye/specfun.hpp"
#include "debye/sphere_ops.hpp"

using namespace debye;
using namespace debye::solve;

namespace {

CVector real_harmonic(const surf::SphereSurface& s, int l, int m) {
  RVector a = RVector::Zero(s.ncoeffs());
  a(surf::SphereSurface::coeff_index(l, m)) = 1.0;
  return s.synthesis(a).cast<cplx>();
}

CVector random_band(const surf::Surface& s, int band, std::mt19937& rng) {
  std::normal_distribution<double> g;
  if (const auto* sp = surf::as_sphere(s)) {
    RVector a = RVector::Zero(sp->ncoeffs()), b = a;
    for (int i = 1; i < (band + 1) * (band + 1); ++i) {
      a(i) = g(rng);
      b(i) = g(rng);
    }
    CVector f(s.size());
    f.real() = sp->synthesis(a);
    f.imag() = sp->synthesis(b);
    return f;
  }
  CVector f = CVector::Zero(s.size());
  for (int a = -band; a <= band; ++a)
    for (int b = -band; b <= band; ++b) {
      cplx c(g(rng), g(rng));
      c /= 1.0 + a * a + b * b;
      for (int i = 0; i < s.size(); ++i) f(i) += c * std::polar(1.0, a * s.chart(i)[0] + b * s.chart(i)[1]);
    }
  return surf::mean_zero_project(s, f);
}

double vmax(const CMatrix& a) { return a.cwiseAbs().maxCoeff(); }

cplx weighted_mean(const surf::Surface& s, const CVector& f) {
  return s.weights().cast<cplx>().dot(f) / s.weights().sum();
}

CMatrix Zc(int n, int c) { return CMatrix::Zero(n, c); }

// Exterior points for a torus with R = 2, r = 0.5.
std::vector<Vec3> torus_points() {
  return {{3.5, 0.0, 0.3}, {0.0, 3.2, -0.5}, {-2.0, 0.3, 1.4}, {0.2, -1.0, 0.1}, {1.1, 1.1, 1.0}, {-3.0, -1.0, -0.2}};
}

}  // namespace

TEST_CASE("normal system on the sphere is diagonal with symbol m_n") {
  auto s = surf::make_sphere(14);
  const auto& sp = *surf::as_sphere(*s);
  const cplx k = 1.3;
  lp::BoundaryOps ops(s, k);
  CMatrix A = assemble_N(ops, +1);
  const int n = s->size();
  for (int l : {1, 2, 5, 9}) {
    CVector Y = real_harmonic(sp, l, l / 2);
    CVector x = CVector::Zero(2 * n);
    x.head(n) = Y;
    CVector y = A * x;
    cplx mn = sphere::multiplier_normal(k, l);
    CHECK(vmax(y.head(n) - mn * Y) / vmax(Y) < 1e-9);
    CHECK(vmax(y.tail(n)) / vmax(Y) < 1e-9);
    x.setZero();
    x.tail(n) = Y;
    y = A * x;
    CHECK(vmax(y.tail(n) - mn * Y) / vmax(Y) < 1e-9);
    CHECK(vmax(y.head(n)) / vmax(Y) < 1e-9);
  }
}

TEST_CASE("normal traces of mean-zero sources have mean zero") {
  std::mt19937 rng(11);
  for (const auto& s : {surf::make_sphere(12), surf::make_torus(2.0, 0.5, 24, 24)}) {
    lp::BoundaryOps ops(s, 0.9);
    const int n = s->size(), cols = 25;
    CMatrix R(n, cols), Q(n, cols);
    for (int c = 0; c < cols; ++c) {
      R.col(c) = random_band(*s, 4, rng);
      Q.col(c) = random_band(*s, 4, rng);
    }
    lp::Traces t = source_traces(ops, R, Q, Zc(2 * s->genus(), cols), +1, true, false);
    double worst = 0.0;
    for (int c = 0; c < cols; ++c) {
      worst = std::max(worst, std::abs(weighted_mean(*s, t.nE.col(c))) / vmax(t.nE.col(c)));
      worst = std::max(worst, std::abs(weighted_mean(*s, t.nH.col(c))) / vmax(t.nH.col(c)));
    }
    INFO(s->kind());
    CHECK(worst < (s->genus() ? 1e-5 : 1e-10));
  }
}

TEST_CASE("zero data gives zero sources") {
  auto s = surf::make_sphere(10);
  const int n = s->size();
  lp::BoundaryOps g0(s, 0.0);
  // includes k near interior resonances of the classical formulations
  for (double k : {0.5, 1.0, 2.0, 4.2}) {
    lp::BoundaryOps ops(s, k);
    DebyeSources d = solve_normal_bvp(ops, CVector::Zero(n), CVector::Zero(n));
    CHECK(d.r.norm() == 0.0);
    CHECK(d.q.norm() == 0.0);
    PecSolver P(ops, g0);
    CHECK(P.system().condition_estimate() < 1e3);
    ScatterSolution sol = P.solve_traces(CVector::Zero(3 * n), CVector::Zero(n));
    CHECK(sol.sources.r.norm() == 0.0);
    CHECK(sol.sources.q.norm() == 0.0);
    CHECK(sol.currents.j.norm() == 0.0);
  }
}

TEST_CASE("normal boundary value problem on the sphere") {
  auto s = surf::make_sphere(16);
  const auto& sp = *surf::as_sphere(*s);
  const cplx k = 1.3;
  lp::BoundaryOps ops(s, k);
  CVector f = real_harmonic(sp, 2, 1), h = 0.5 * real_harmonic(sp, 3, -2);
  SolveInfo info;
  DebyeSources d = solve_normal_bvp(ops, f, h, &info);
  lp::Traces t = source_traces(ops, d, +1);
  CHECK(vmax(t.nE - f) / vmax(f) < 1e-8);
  CHECK(vmax(t.nH - h) / vmax(h) < 1e-8);
  CHECK(info.system_residual < 1e-12);
  cplx mn = sphere::multiplier_normal(k, 2);
  CHECK(vmax(d.r - f / mn) / vmax(f) < 1e-8);
  CHECK(std::abs(weighted_mean(*s, d.r)) < 1e-12);
}

TEST_CASE("non-mean-zero data is rejected") {
  auto s = surf::make_sphere(8);
  lp::BoundaryOps ops(s, 1.0);
  CVector one = CVector::Ones(s->size());
  CHECK_THROWS_AS(solve_normal_bvp(ops, one, CVector::Zero(s->size())), MeanZeroError);
}

TEST_CASE("tangential traces on the sphere match the spectral traces") {
  auto s = surf::make_sphere(14);
  const auto& sp = *surf::as_sphere(*s);
  const cplx k = 0.8;
  lp::BoundaryOps ops(s, k);
  const int n = s->size(), l = 3, m = 1;
  sphere::SphereDebyeSolution ref{k, sphere::SphHarmCoeffs(l), sphere::SphHarmCoeffs(l)};
  ref.a(l, m) = 1.0;
  ref.b(l, -m) = 0.4;
  sphere::SphereTraces st = sphere::eval_traces_sphere(ref);
  CVector r(n), q(n), Ya(n), Yb(n);
  for (int i = 0; i < n; ++i) {
    Ya(i) = specfun::sph_harm_Y(l, m, s->chart(i)[0], s->chart(i)[1]);
    Yb(i) = specfun::sph_harm_Y(l, -m, s->chart(i)[0], s->chart(i)[1]);
  }
  r = Ya;
  q = 0.4 * Yb;
  CMatrix T = assemble_T(ops, +1);
  CVector x(2 * n);
  x << r, q;
  CVector y = T * x;
  // n x E = n x (e_grad grad Y + e_star n x grad Y)
  CMatrix gA = surf::cgrad(sp, Ya), gB = surf::cgrad(sp, Yb);
  CVector expect = st.e_grad(l, m) * surf::crot90(sp, gA) - st.e_star(l, m) * gA + st.e_grad(l, -m) * surf::crot90(sp, gB) -
                   st.e_star(l, -m) * gB;
  CHECK(vmax(y.head(3 * n) - expect) / vmax(expect) < 1e-8);
  (void)sp;
}

TEST_CASE("hybrid system: sphere symbols and the static limit") {
  auto s = surf::make_sphere(14);
  const auto& sp = *surf::as_sphere(*s);
  const int n = s->size();
  SUBCASE("k = 0 first block is G0 Laplace G0") {
    lp::BoundaryOps g0(s, 0.0);
    CMatrix Q = assemble_hybrid_Q(g0, g0, +1);
    CMatrix S = lp::build_operator(g0, "S", +1).M;
    for (int l : {1, 4, 8}) {
      CVector Y = real_harmonic(sp, l, -1);
      CVector lap = surf::cdiv(sp, surf::cgrad(sp, CVector(S * Y)));
      CVector expect = S * lap;
      CVector got = Q.block(0, 0, n, n) * Y;
      CHECK(vmax(got - expect) / vmax(expect) < 1e-8);
      double sym = -double(l * (l + 1)) / ((2 * l + 1) * (2 * l + 1));
      CHECK(vmax(got - sym * Y) / vmax(Y) < 1e-8);
    }
  }
  SUBCASE("k = 2 diagonal symbols cluster at -1/4 and +1/2") {
    const cplx k = 2.0;
    lp::BoundaryOps ops(s, k), g0(s, 0.0);
    CMatrix Q = assemble_hybrid_Q(ops, g0, +1);
    for (int l : {1, 6, 11}) {
      CVector Y = real_harmonic(sp, l, 0);
      CVector x = CVector::Zero(2 * n);
      x.head(n) = Y;
      CVector y = Q * x;
      CHECK(vmax(y.head(n) - sphere::multiplier_tangential(k, l) * Y) / vmax(Y) < 1e-8);
      x.setZero();
      x.tail(n) = Y;
      y = Q * x;
      CHECK(vmax(y.tail(n) - sphere::multiplier_normal(k, l) * Y) / vmax(Y) < 1e-8);
    }
    CHECK(std::abs(sphere::multiplier_tangential(k, 2000) + 0.25) < 1e-3);
    CHECK(std::abs(sphere::multiplier_normal(k, 2000) - 0.5) < 1e-3);
  }
}

TEST_CASE("sphere hybrid system stays well conditioned for k <= 20") {
  double worst = 0.0;
  for (int ik = 1; ik <= 400; ++ik) {
    const double k = 0.05 * ik;
    double lo = 1e300, hi = 0.0;
    for (int l = 1; l <= 60; ++l)
      for (cplx m : {sphere::multiplier_tangential(k, l), sphere::multiplier_normal(k, l)}) {
        lo = std::min(lo, std::abs(m));
        hi = std::max(hi, std::abs(m));
      }
    worst = std::max(worst, hi / lo);
  }
  INFO("worst ratio " << worst);
  CHECK(worst < 1e4);
}

TEST_CASE("sphere PEC scattering matches the spectral solution") {
  const int nth = 16, L = nth - 2;
  const double k = 1.7;
  auto s = surf::make_sphere(nth);
  lp::BoundaryOps ops(s, k), g0(s, 0.0);
  auto inc = plane_wave(k, Vec3(0.3, -0.2, 1.0), CVec3(1.0, 0.5, 0.0));
  PecSolver P(ops, g0);
  ScatterSolution sol = P.solve(inc);
  CHECK(sol.info.condition_estimate < 1e4);
  PecResidual pr = pec_residual(ops, sol, 64, 3);
  CHECK(pr.tangential_E < 1e-6);
  CHECK(pr.normal_H < 1e-6);
  auto pd = sphere::project_incident(inc, L);
  auto ref = sphere::solve_hybrid_sphere(k, pd.p, pd.q);
  double da = 0.0, scale = 0.0;
  for (int l = 1; l <= L; ++l)
    for (int m = -l; m <= l; ++m) {
      cplx a = 0.0, b = 0.0;
      for (int i = 0; i < s->size(); ++i) {
        cplx Y = std::conj(specfun::sph_harm_Y(l, m, s->chart(i)[0], s->chart(i)[1]));
        a += s->weights()(i) * Y * sol.sources.r(i);
        b += s->weights()(i) * Y * sol.sources.q(i);
      }
      da = std::max({da, std::abs(a - ref.a(l, m)), std::abs(b - ref.b(l, m))});
      scale = std::max({scale, std::abs(ref.a(l, m)), std::abs(ref.b(l, m))});
    }
  CHECK(da / scale < 1e-8);
}

TEST_CASE("condition limit raises ConditioningError") {
  auto s = surf::make_sphere(8);
  lp::BoundaryOps ops(s, 1.0), g0(s, 0.0);
  CHECK_THROWS_AS(PecSolver(ops, g0, 1.0), ConditioningError);
  CMatrix A = CMatrix::Identity(4, 4);
  A(3, 3) = 1e-15;
  DenseSolver D(A);
  CHECK(D.condition_estimate() > 1e14);
  CHECK_THROWS_AS(D.check_condition(1e12), ConditioningError);
  CHECK_NOTHROW(DenseSolver(CMatrix::Identity(4, 4)).check_condition(1.5));
}

TEST_CASE("normal boundary value problem on the torus") {
  auto t = surf::make_torus(2.0, 0.5, kDefaultTorusRes, kDefaultTorusRes);
  lp::BoundaryOps ops(t, 1.0);
  std::mt19937 rng(5);
  CVector f = random_band(*t, 4, rng), h = random_band(*t, 4, rng);
  SolveInfo info;
  DebyeSources d = solve_normal_bvp(ops, f, h, &info);
  lp::Traces tr = source_traces(ops, d, +1);
  double res = std::max(vmax(tr.nE - f) / vmax(f), vmax(tr.nH - h) / vmax(h));
  INFO("residual " << res << " cond " << info.condition_estimate);
  CHECK(res < 1e-5);
  CHECK(std::abs(weighted_mean(*t, d.r)) < 1e-12 * vmax(d.r));
}

TEST_CASE("torus: dipole PEC, k-Neumann fields, harmonic tangential data") {
  const double k = 1.0;
  auto t = surf::make_torus(2.0, 0.5, kDefaultTorusRes, kDefaultTorusRes);
  lp::BoundaryOps ops(t, k), g0(t, 0.0);
  PecSolver P(ops, g0);

  const KNeumannSet& kn = P.k_neumann();
  REQUIRE(kn.fields.size() == 2);
  for (const auto& f : kn.fields) CHECK(f.normal_residual < 1e-5);
  CHECK(kn.gram_condition < 1e6);

  auto inc = electric_dipole(k, Vec3(4.5, 0.5, 1.2), CVec3(0.2, 1.0, 0.4));
  ScatterSolution sol = P.solve(inc);
  PecResidual pr = pec_residual(ops, sol, 64, 3);
  INFO("tangential " << pr.tangential_E << " normal " << pr.normal_H);
  CHECK(pr.tangential_E < 1e-4);
  CHECK(pr.normal_H < 1e-4);

  const int n = t->size();
  CVector psi = t->harmonic_basis().col(0).cast<cplx>();
  HarmonicTangentialSolution ht = P.harmonic_tangential(psi);
  lp::Traces tr = source_traces(ops, ht.solution.sources, +1);
  CVector Et = -surf::crot90(*t, tr.tE).col(0);
  CHECK(vmax(Et - psi) / vmax(psi) < 1e-4);
  CHECK(vmax(tr.nH) / vmax(psi) < 1e-4);
  CHECK(ht.map_condition < 1e6);
  CHECK(ht.harmonic_map.rows() == 2);
  (void)n;
}

TEST_CASE("k-Neumann fields on the sphere are empty; genus 1 needs k != 0") {
  auto s = surf::make_sphere(8);
  lp::BoundaryOps ops(s, 1.0);
  CHECK(build_k_neumann(ops).fields.empty());
  auto t = surf::make_torus(2.0, 0.5, 12, 12);
  lp::BoundaryOps t0(t, 0.0);
  CHECK_THROWS_AS(build_k_neumann(t0), DomainError);
}

TEST_CASE("k-Neumann fields decouple as k -> 0 and carry A-cycle circulation") {
  auto t = surf::make_torus(2.0, 0.5, 24, 24);
  lp::BoundaryOps ops(t, 1e-8);
  KNeumannSet kn = build_k_neumann(ops);
  REQUIRE(kn.fields.size() == 2);
  for (const auto& f : kn.fields) CHECK(f.normal_residual < 1e-5);
  Decoupling d = k_neumann_decoupling(ops, kn, torus_points());
  CHECK(d.e_only_ratio < 1e-4);
  CHECK(d.h_only_ratio < 1e-4);

  Cycle A = torus_a_cycle(2.0, 1.0), B = torus_b_cycle(3.0, 0.2);
  double a_max = 0.0;
  for (const auto& f : kn.fields) {
    lp::FieldEvaluator ev(potentials(ops, f.sources));
    FieldFn fn = [&](const Vec3& x) { return ev(x); };
    cplx ca = circulation(fn, A, 96);
    a_max = std::max(a_max, std::abs(ca));
    // reversed orientation flips the sign
    Cycle Ar{[&](double th) { return A.x(-th); }, [&](double th) { return Vec3(-A.dx(-th)); }};
    CHECK(std::abs(circulation(fn, Ar, 96) + ca) < 1e-10 * std::max(1.0, std::abs(ca)));
    // E-only field: its B-cycle circulation vanishes with k
    CHECK(std::abs(circulation(fn, B, 96) * circulation(fn, B, 96, true)) < 1e-6);
  }
  CHECK(a_max > 0.1);
}

TEST_CASE("static solve: gradient fields have no circulation") {
  auto t = surf::make_torus(2.0, 0.5, 20, 20);
  lp::BoundaryOps g0(t, 0.0);
  std::mt19937 rng(3);
  CVector f = random_band(*t, 3, rng);
  SolveInfo info;
  DebyeSources d = solve_static(g0, f, CVector::Zero(t->size()), &info);
  CHECK(info.system_residual < 1e-12);
  lp::Traces tr = source_traces(g0, d, +1);
  CHECK(vmax(tr.nE - f) / vmax(f) < 1e-5);
  lp::FieldEvaluator ev(lp::PotentialSet{t, 0.0, d.r, d.q, {}, {}});
  FieldFn fn = [&](const Vec3& x) { return ev(x); };
  cplx c = circulation(fn, torus_a_cycle(2.0, 1.0), 128);
  double scale = ev(Vec3(3.0, 0.0, 0.0)).E.norm();
  CHECK(std::abs(c) < 1e-8 * scale);
  CHECK_THROWS_AS(solve_static(lp::BoundaryOps(t, 1.0), f, f), DomainError);
}

TEST_CASE("low-frequency limit on the sphere") {
  auto s = surf::make_sphere(14);
  const auto& sp = *surf::as_sphere(*s);
  CVector f = real_harmonic(sp, 1, 0) + 0.3 * real_harmonic(sp, 3, 2), h = real_harmonic(sp, 2, -1);
  std::vector<Vec3> pts = {{0.0, 0.0, 2.0}, {1.5, 0.5, -0.3}, {-1.2, 1.2, 0.4}};
  LowFrequencyReport rep = low_frequency_limit_check(s, 1e-8, f, h, pts);
  CHECK(rep.field_difference < 1e-5);
  CHECK(rep.current_ratio < 1e-6);
  CHECK(rep.h_over_e < 1e-6);
  CHECK(rep.multiplier_error < 1e-8);
  CHECK_THROWS_AS(low_frequency_limit_check(s, 0.1, f, h, pts), DomainError);
}

TEST_CASE("incident fields satisfy Maxwell's equations") {
  const cplx k = 1.4;
  for (const FieldFn& f : {plane_wave(k, Vec3(1, 2, 0.5), CVec3(0.0, 1.0, 1.0)),
                           electric_dipole(k, Vec3(0.1, 0.2, -0.3), CVec3(1.0, cplx(0.0, 0.5), 0.2))}) {
    Vec3 x(1.3, -0.7, 0.9);
    const double h = 1e-5;
    CVec3 cE, cH;
    auto d = [&](int a, bool H) {
      Vec3 e = Vec3::Zero();
      e(a) = h;
      FieldEH p = f(x + e), m = f(x - e);
      return CVec3(((H ? p.H : p.E) - (H ? m.H : m.E)) / (2 * h));
    };
    CVec3 dE[3] = {d(0, false), d(1, false), d(2, false)};
    CVec3 dH[3] = {d(0, true), d(1, true), d(2, true)};
    cE << dE[1](2) - dE[2](1), dE[2](0) - dE[0](2), dE[0](1) - dE[1](0);
    cH << dH[1](2) - dH[2](1), dH[2](0) - dH[0](2), dH[0](1) - dH[1](0);
    FieldEH v = f(x);
    CHECK((cE - I * k * v.H).norm() < 1e-6 * v.H.norm());
    CHECK((cH + I * k * v.E).norm() < 1e-6 * v.E.norm());
  }
}
