#include "debye/rootfinder.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "debye/quadrature.hpp"
#include "debye/specfun.hpp"

namespace debye::roots {

namespace {

constexpr double kTwoPi = 2.0 * PI;

struct ContourTooClose : std::runtime_error {
  using std::runtime_error::runtime_error;
};

cplx deriv(const ComplexFn& f, const ComplexFn& df, cplx z) { return df ? df(z) : richardson_derivative(f, z); }

// Integral of f'/f along [a, b], refined until an 8-point rule agrees with
// the principal log increment.
cplx segment_integral(const ComplexFn& f, const ComplexFn& df, cplx a, cplx b, cplx fa, cplx fb,
                      double min_len, int depth) {
  const auto& gl = quad::gauss_legendre(8);
  cplx mid = 0.5 * (a + b), half = 0.5 * (b - a);
  cplx s = 0.0;
  for (size_t i = 0; i < gl.x.size(); ++i) {
    cplx z = mid + half * gl.x[i];
    cplx fz = f(z);
    if (!std::isfinite(std::abs(fz)) || std::abs(fz) == 0.0)
      throw ContourTooClose("function vanishes or is not finite on the contour");
    s += gl.w[i] * deriv(f, df, z) / fz;
  }
  s *= half;
  cplx lg = std::log(fb / fa);
  if (std::abs(s - lg) < 1e-5 && std::abs(lg.imag()) < 0.5 * PI) return s;
  if (std::abs(b - a) < min_len || depth > 60) throw ContourTooClose("contour passes too close to a zero");
  cplx fm = f(mid);
  if (std::abs(fm) == 0.0) throw ContourTooClose("zero on the contour");
  return segment_integral(f, df, a, mid, fa, fm, min_len, depth + 1) +
         segment_integral(f, df, mid, b, fm, fb, min_len, depth + 1);
}

cplx polyline_integral(const ComplexFn& f, const ComplexFn& df, const std::vector<cplx>& pts, double scale) {
  double min_len = 1e-10 * std::max(1.0, scale);
  cplx total = 0.0;
  for (size_t e = 0; e + 1 < pts.size(); ++e) {
    cplx a = pts[e], b = pts[e + 1];
    int pieces = std::max(1, int(std::ceil(std::abs(b - a) / 0.5)));
    cplx prev = a, fprev = f(a);
    if (std::abs(fprev) == 0.0) throw ContourTooClose("zero on the contour");
    for (int p = 1; p <= pieces; ++p) {
      cplx z = a + (b - a) * (double(p) / pieces);
      cplx fz = f(z);
      if (std::abs(fz) == 0.0) throw ContourTooClose("zero on the contour");
      total += segment_integral(f, df, prev, z, fprev, fz, min_len, 0);
      prev = z;
      fprev = fz;
    }
  }
  return total;
}

int winding_from(cplx integral) {
  double w = integral.imag() / kTwoPi;
  int n = int(std::lround(w));
  double resid = std::abs(w - n) + std::abs(integral.real()) / kTwoPi;
  if (resid >= 0.25) throw ContourTooClose("argument-principle integral is not near an integer");
  return n;
}

// Boundary of the rectangle minus the disc |z| < rho as closed polylines,
// counterclockwise around the region.
std::vector<std::vector<cplx>> punctured_boundary(double x0, double x1, double y0, double y1, double rho) {
  std::vector<cplx> corners{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  bool origin_inside = x0 < 0.0 && 0.0 < x1 && y0 < 0.0 && 0.0 < y1;
  auto in_disc = [rho](cplx z) { return std::abs(z) < rho; };
  // Boundary with circle crossings inserted.
  std::vector<cplx> pts;
  bool touches = false;
  for (int e = 0; e < 4; ++e) {
    cplx a = corners[e], b = corners[(e + 1) % 4], d = b - a;
    pts.push_back(a);
    if (rho <= 0.0) continue;
    // |a + t d| = rho
    double A = std::norm(d), B = 2.0 * (std::conj(a) * d).real(), C = std::norm(a) - rho * rho;
    double disc = B * B - 4.0 * A * C;
    if (disc <= 0.0) continue;
    double sq = std::sqrt(disc);
    for (double t : {(-B - sq) / (2.0 * A), (-B + sq) / (2.0 * A)})
      if (t > 0.0 && t < 1.0) {
        pts.push_back(a + t * d);
        touches = true;
      }
  }
  for (cplx c : corners)
    if (rho > 0.0 && in_disc(c)) touches = true;
  if (!touches) {
    pts.push_back(pts.front());
    std::vector<std::vector<cplx>> out{pts};
    if (origin_inside && rho > 0.0) {
      std::vector<cplx> circ;
      const int m = 64;
      for (int i = 0; i <= m; ++i) circ.push_back(rho * std::exp(-I * (kTwoPi * i / m)));
      out.push_back(circ);
    }
    return out;
  }
  // Keep boundary pieces outside the disc, bridge inside runs by clockwise arcs.
  size_t n = pts.size();
  auto mid_in = [&](size_t i) { return in_disc(0.5 * (pts[i] + pts[(i + 1) % n])); };
  size_t s0 = n;
  for (size_t i = 0; i < n; ++i)
    if (!mid_in(i) && mid_in((i + n - 1) % n)) {
      s0 = i;
      break;
    }
  if (s0 == n) {
    bool all_in = true;
    for (size_t i = 0; i < n; ++i) all_in = all_in && mid_in(i);
    if (all_in) throw DomainError("search region lies inside the punctured disc around k = 0");
    pts.push_back(pts.front());
    return {pts};
  }
  std::vector<cplx> poly;
  for (size_t c = 0; c < n; ++c) {
    size_t i = (s0 + c) % n;
    if (!mid_in(i)) {
      if (poly.empty() || poly.back() != pts[i]) poly.push_back(pts[i]);
      poly.push_back(pts[(i + 1) % n]);
      continue;
    }
    // walk to the exit point of this inside run
    size_t jdx = i;
    while (mid_in(jdx % n)) ++jdx;
    cplx p = pts[i], q = pts[jdx % n];
    double ap = std::arg(p), aq = std::arg(q);
    while (aq >= ap) aq -= kTwoPi;
    int m = std::max(4, int(std::ceil((ap - aq) / (PI / 32))));
    for (int t = 1; t <= m; ++t) poly.push_back(rho * std::exp(I * (ap + (aq - ap) * t / m)));
    c += jdx - i - 1;
  }
  if (poly.back() != poly.front()) poly.push_back(poly.front());
  return {poly};
}

// Zeros of f in the punctured rectangle, without jitter; throws ContourTooClose.
int count_raw(const ComplexFn& f, const ComplexFn& df, double x0, double x1, double y0, double y1, double puncture) {
  double scale = std::max(x1 - x0, y1 - y0);
  int n = 0;
  for (const auto& poly : punctured_boundary(x0, x1, y0, y1, puncture))
    n += winding_from(polyline_integral(f, df, poly, scale));
  return n;
}

cplx newton(const ComplexFn& f, const ComplexFn& df, cplx z, int mult, double tol, double reach, bool& ok) {
  ok = false;
  cplx z0 = z;
  for (int it = 0; it < 80; ++it) {
    cplx fz, d;
    try {
      fz = f(z);
      d = deriv(f, df, z);
    } catch (const DomainError&) {
      return z;
    }
    if (d == cplx(0.0)) return z;
    cplx step = double(mult) * fz / d;
    z -= step;
    if (!std::isfinite(std::abs(z)) || std::abs(z - z0) > reach) return z;
    double rel = std::abs(step) / std::max(1.0, std::abs(z));
    if (rel < tol || (it >= 20 && rel < 1e-9)) {
      ok = true;
      return z;
    }
  }
  return z;
}

struct Box {
  double x0, x1, y0, y1;
  int count;
  int depth;
};

}  // namespace

cplx richardson_derivative(const ComplexFn& f, cplx z) {
  double h = 1e-6 * (1.0 + std::abs(z));
  auto central = [&](double s) { return (f(z + s) - f(z - s)) / (2.0 * s); };
  cplx d1 = central(h), d2 = central(0.5 * h);
  return (4.0 * d2 - d1) / 3.0;
}

int count_zeros(const ComplexFn& f, const SearchRegion& r, const ComplexFn& df) {
  if (!(r.re_min < r.re_max) || !(r.im_min < r.im_max)) throw DomainError("degenerate search region");
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> u(1e-7, 1e-5);
  double scale = std::max(r.re_max - r.re_min, r.im_max - r.im_min);
  double x0 = r.re_min, x1 = r.re_max, y0 = r.im_min, y1 = r.im_max;
  for (int attempt = 0; attempt <= 5; ++attempt) {
    try {
      return count_raw(f, df, x0, x1, y0, y1, r.puncture);
    } catch (const ContourTooClose&) {
      x0 = r.re_min - u(rng) * scale;
      x1 = r.re_max + u(rng) * scale;
      y0 = r.im_min - u(rng) * scale;
      y1 = r.im_max + u(rng) * scale;
    }
  }
  throw ConvergenceError("contour too close to a zero after 5 jittered retries");
}

std::vector<cplx> find_roots(const ComplexFn& f, const SearchRegion& r, const ComplexFn& df) {
  int total = count_zeros(f, r, df);
  std::vector<std::pair<cplx, int>> found;
  std::vector<Box> stack{{r.re_min, r.re_max, r.im_min, r.im_max, total, 0}};
  std::vector<std::string> unresolved;
  double scale = std::max(r.re_max - r.re_min, r.im_max - r.im_min);
  auto in_box = [](const Box& b, cplx z, double m) {
    return z.real() >= b.x0 - m && z.real() <= b.x1 + m && z.imag() >= b.y0 - m && z.imag() <= b.y1 + m;
  };

  while (!stack.empty()) {
    Box b = stack.back();
    stack.pop_back();
    if (b.count == 0) continue;
    double w = b.x1 - b.x0, h = b.y1 - b.y0;
    cplx c(0.5 * (b.x0 + b.x1), 0.5 * (b.y0 + b.y1));
    bool tiny = std::max(w, h) < 1e-7 * std::max(1.0, scale);
    if (b.count == 1 || tiny) {
      bool ok = false;
      double tol = tiny ? std::max(r.newton_tol, 1e-10) : r.newton_tol;
      cplx z = newton(f, df, c, tiny ? b.count : 1, tol, 4.0 * std::max(w, h), ok);
      double margin = tiny ? std::max(w, h) : 1e-9 * std::max(1.0, std::abs(c));
      if (tiny && !ok && in_box(b, z, margin)) ok = true;
      if (ok && in_box(b, z, margin)) {
        found.push_back({z, b.count});
        continue;
      }
      if (tiny) {
        std::ostringstream os;
        os << "[" << b.x0 << "," << b.x1 << "]x[" << b.y0 << "," << b.y1 << "] count " << b.count;
        unresolved.push_back(os.str());
        continue;
      }
    }
    if (b.depth >= r.max_depth) {
      std::ostringstream os;
      os << "[" << b.x0 << "," << b.x1 << "]x[" << b.y0 << "," << b.y1 << "] count " << b.count;
      unresolved.push_back(os.str());
      continue;
    }
    bool split_re = w >= h;
    bool done = false;
    for (double frac : {0.5, 0.471, 0.529, 0.443, 0.557, 0.41, 0.59}) {
      Box lo = b, hi = b;
      if (split_re) {
        lo.x1 = hi.x0 = b.x0 + frac * w;
      } else {
        lo.y1 = hi.y0 = b.y0 + frac * h;
      }
      try {
        lo.count = count_raw(f, df, lo.x0, lo.x1, lo.y0, lo.y1, r.puncture);
        hi.count = count_raw(f, df, hi.x0, hi.x1, hi.y0, hi.y1, r.puncture);
      } catch (const ContourTooClose&) {
        continue;
      } catch (const DomainError&) {
        continue;
      }
      if (lo.count + hi.count != b.count || lo.count < 0 || hi.count < 0) continue;
      lo.depth = hi.depth = b.depth + 1;
      stack.push_back(lo);
      stack.push_back(hi);
      done = true;
      break;
    }
    if (!done) {
      std::ostringstream os;
      os << "[" << b.x0 << "," << b.x1 << "]x[" << b.y0 << "," << b.y1 << "] split failed";
      unresolved.push_back(os.str());
    }
  }
  if (!unresolved.empty()) {
    std::string msg = "find_roots: unresolved boxes:";
    for (const auto& s : unresolved) msg += " " + s;
    throw ConvergenceError(msg);
  }

  std::vector<std::pair<cplx, int>> merged;
  for (const auto& [z, m] : found) {
    auto it = std::find_if(merged.begin(), merged.end(), [&](const auto& p) { return std::abs(p.first - z) < 1e-8; });
    if (it == merged.end())
      merged.push_back({z, m});
    else
      it->second = std::max(it->second, m);
  }
  std::vector<cplx> out;
  for (const auto& [z, m] : merged)
    for (int i = 0; i < m; ++i) out.push_back(z);
  std::sort(out.begin(), out.end(), [](cplx a, cplx b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return out;
}

std::vector<cplx> polynomial_roots(const std::vector<cplx>& coeffs) {
  std::vector<cplx> c = coeffs;
  while (!c.empty() && c.back() == cplx(0.0)) c.pop_back();
  int n = int(c.size()) - 1;
  if (n < 1) return {};
  CMatrix comp = CMatrix::Zero(n, n);
  for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) comp(i, n - 1) = -c[i] / c[n];
  Eigen::ComplexEigenSolver<CMatrix> es(comp, false);
  std::vector<cplx> out;
  for (int i = 0; i < n; ++i) {
    cplx z = es.eigenvalues()(i);
    for (int it = 0; it < 5; ++it) {
      cplx p = c[n], dp = 0.0;
      for (int d = n - 1; d >= 0; --d) {
        dp = dp * z + p;
        p = p * z + c[d];
      }
      if (dp == cplx(0.0)) break;
      z -= p / dp;
    }
    out.push_back(z);
  }
  std::sort(out.begin(), out.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
  return out;
}

namespace {
// F_l (2l+1)!!/k^l and its k-derivative.
std::pair<cplx, cplx> resonance_factor_pair(cplx k, int l) {
  if (l < 1) throw DomainError("resonance_factor needs l >= 1");
  if (k == cplx(0.0)) return {I * double(l + 1), 0.0};
  using specfun::Scaled;
  specfun::BesselTable t(l, k);
  Scaled jl = t.j(l), jm = t.j(l - 1);
  Scaled djl = jm - jl * (double(l + 1) / k);
  Scaled djm = l >= 2 ? t.j(l - 2) - jm * (double(l) / k) : t.j(1) * -1.0;
  Scaled F = jl * (k - I * double(l)) + jm * (I * k);
  Scaled dF = jl + djl * (k - I * double(l)) + jm * I + djm * (I * k);
  // (2l+1)!! / k^l in scaled form
  int e2 = 0;
  double mant = 1.0;
  for (int i = 1; i <= l; ++i) {
    int ex;
    mant = std::frexp(mant * (2.0 * i + 1.0), &ex);
    e2 += ex;
  }
  Scaled kl(cplx(1.0), 0);
  for (int i = 0; i < l; ++i) kl = kl * k;
  Scaled c = Scaled(cplx(mant), e2) / kl;
  return {(F * c).value(), ((dF - F * (double(l) / k)) * c).value()};
}
}  // namespace

cplx resonance_factor(cplx k, int l) { return resonance_factor_pair(k, l).first; }
cplx resonance_factor_derivative(cplx k, int l) { return resonance_factor_pair(k, l).second; }

bool is_hankel_root(cplx r, int l, double tol) {
  for (cplx z : polynomial_roots(specfun::hankel_poly_coeffs(l)))
    if (std::abs(z - r) < tol * std::max(1.0, std::abs(z))) return true;
  return false;
}

cplx smallest_root_positive_re(int l) {
  if (l < 1 || l > 1000) throw DomainError("smallest_root_positive_re needs 1 <= l <= 1000");
  ComplexFn g = [l](cplx k) { return resonance_factor(k, l); };
  ComplexFn dg = [l](cplx k) { return resonance_factor_derivative(k, l); };
  auto positive = [](std::vector<cplx> rs) {
    std::erase_if(rs, [](cplx z) { return !(z.real() > 0.0); });
    return rs;
  };
  auto by_mod = [](cplx a, cplx b) { return std::abs(a) < std::abs(b); };
  // Search a shallow strip first, then confirm that the rest of the quarter
  // square of side |best| holds no zero.
  const double depth = 4.0;
  double x = 0.5 * l + 4.0;
  std::vector<cplx> rs;
  for (int grow = 0; grow < 12 && rs.empty(); ++grow, x *= 1.6)
    rs = positive(find_roots(g, SearchRegion{0.05, x, -depth, -1e-6}, dg));
  if (rs.empty()) throw ConvergenceError("no resonance zero found");
  cplx best = *std::min_element(rs.begin(), rs.end(), by_mod);
  double m = std::abs(best) * (1.0 + 1e-9);
  if (m > x / 1.6) {
    for (cplx z : positive(find_roots(g, SearchRegion{0.05, m, -depth, -1e-6}, dg)))
      if (std::abs(z) < std::abs(best)) best = z;
  }
  if (m > depth) {
    SearchRegion deep{0.05, m, -m, -depth};
    if (count_zeros(g, deep, dg) > 0)
      for (cplx z : positive(find_roots(g, deep, dg)))
        if (std::abs(z) < std::abs(best)) best = z;
  }
  return best;
}

}  // namespace debye::roots
