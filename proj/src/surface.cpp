#include "debye/surface.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "debye/quadrature.hpp"
#include "debye/specfun.hpp"

namespace debye::surf {

namespace {

void check_rows(const Surface& s, Eigen::Index rows, int per_node, const char* what) {
  if (rows != Eigen::Index(per_node) * s.size())
    throw DomainError(std::string(what) + ": field does not live on this grid (rows " + std::to_string(rows) +
                      ", expected " + std::to_string(per_node * s.size()) + ")");
}

template <class Op>
CMatrix split_apply(const CMatrix& f, Op op) {
  const Eigen::Index c = f.cols();
  RMatrix x(f.rows(), 2 * c);
  x.leftCols(c) = f.real();
  x.rightCols(c) = f.imag();
  RMatrix y = op(x);
  CMatrix out(y.rows(), c);
  out.real() = y.leftCols(c);
  out.imag() = y.rightCols(c);
  return out;
}

// Symmetric W-orthonormalization keeping directions with Gram eigenvalue
// above tol * largest.
RMatrix w_orthonormalize(const RMatrix& A, const RVector& w3, double tol) {
  if (A.cols() == 0) return A;
  RMatrix G = A.transpose() * w3.asDiagonal() * A;
  Eigen::SelfAdjointEigenSolver<RMatrix> es(G);
  const RVector& ev = es.eigenvalues();
  double top = ev.maxCoeff();
  std::vector<int> keep;
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i) > tol * top) keep.push_back(i);
  RMatrix Q(A.rows(), Eigen::Index(keep.size()));
  for (size_t j = 0; j < keep.size(); ++j)
    Q.col(Eigen::Index(j)) = A * es.eigenvectors().col(keep[j]) / std::sqrt(ev(keep[j]));
  return Q;
}

RVector tangent_weights(const Surface& s) {
  const int n = s.size();
  RVector w3(3 * n);
  for (int c = 0; c < 3; ++c) w3.segment(c * n, n) = s.weights();
  return w3;
}

}  // namespace

// ---------------------------------------------------------------- Surface

const RMatrix& Surface::harmonic_basis() const {
  std::call_once(harmonic_once_, [this] { harmonic_ = compute_harmonic_basis(); });
  return harmonic_;
}

RMatrix Surface::rot90(const RMatrix& v) const {
  check_rows(*this, v.rows(), 3, "rot90");
  const int n = size();
  RMatrix out(v.rows(), v.cols());
  for (int i = 0; i < n; ++i) {
    const Vec3& nn = nrm_[i];
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      Vec3 a(v(i, c), v(n + i, c), v(2 * n + i, c));
      Vec3 b = nn.cross(a);
      out(i, c) = b(0);
      out(n + i, c) = b(1);
      out(2 * n + i, c) = b(2);
    }
  }
  return out;
}

RMatrix Surface::normal_dot(const RMatrix& v) const {
  check_rows(*this, v.rows(), 3, "normal_dot");
  const int n = size();
  RMatrix out(n, v.cols());
  for (int i = 0; i < n; ++i)
    out.row(i) = nrm_[i](0) * v.row(i) + nrm_[i](1) * v.row(n + i) + nrm_[i](2) * v.row(2 * n + i);
  return out;
}

RMatrix Surface::tangential(const RMatrix& v) const {
  RMatrix d = normal_dot(v);
  const int n = size();
  RMatrix out = v;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out.row(c * n + i) -= nrm_[i](c) * d.row(i);
  return out;
}

RMatrix Surface::hodge_laplacian(const RMatrix& v) const {
  return grad(div(v)) - rot90(grad(div(rot90(v))));
}

double Surface::inner(const RVector& a, const RVector& b) const {
  check_rows(*this, a.size(), 1, "inner");
  return (a.array() * b.array() * w_.array()).sum();
}

double Surface::inner_tangent(const RVector& a, const RVector& b) const {
  check_rows(*this, a.size(), 3, "inner_tangent");
  const int n = size();
  double s = 0.0;
  for (int c = 0; c < 3; ++c)
    s += (a.segment(c * n, n).array() * b.segment(c * n, n).array() * w_.array()).sum();
  return s;
}

cplx Surface::inner(const CVector& a, const CVector& b) const {
  check_rows(*this, a.size(), 1, "inner");
  return (a.conjugate().array() * b.array() * w_.array().cast<cplx>()).sum();
}

cplx Surface::inner_tangent(const CVector& a, const CVector& b) const {
  check_rows(*this, a.size(), 3, "inner_tangent");
  const int n = size();
  cplx s = 0.0;
  for (int c = 0; c < 3; ++c)
    s += (a.segment(c * n, n).conjugate().array() * b.segment(c * n, n).array() * w_.array().cast<cplx>()).sum();
  return s;
}

RMatrix Surface::to_chart(const RMatrix& v) const {
  check_rows(*this, v.rows(), 3, "to_chart");
  const int n = size();
  RMatrix out(2 * n, v.cols());
  for (int i = 0; i < n; ++i) {
    const Vec3 &a = xu_[i], &b = xv_[i];
    double E = a.squaredNorm(), F = a.dot(b), G = b.squaredNorm(), det = E * G - F * F;
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      Vec3 x(v(i, c), v(n + i, c), v(2 * n + i, c));
      double pu = x.dot(a), pv = x.dot(b);
      out(i, c) = (G * pu - F * pv) / det;
      out(n + i, c) = (E * pv - F * pu) / det;
    }
  }
  return out;
}

RMatrix Surface::from_chart(const RMatrix& ab) const {
  check_rows(*this, ab.rows(), 2, "from_chart");
  const int n = size();
  RMatrix out(3 * n, ab.cols());
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out.row(c * n + i) = xu_[i](c) * ab.row(i) + xv_[i](c) * ab.row(n + i);
  return out;
}

// ---------------------------------------------------------------- sphere

SphereSurface::SphereSurface(int ntheta) : nt_(ntheta), np_(2 * ntheta), L_(ntheta - 2) {
  if (ntheta < 3) throw DomainError("sphere grid needs ntheta >= 3");
  quad::Rule gl = quad::gauss_legendre(nt_);
  theta_.resize(nt_);
  gw_ = gl.w;
  for (int i = 0; i < nt_; ++i) theta_[i] = std::acos(gl.x[i]);

  cphi_.setZero(np_, L_ + 1);
  sphi_.setZero(np_, L_ + 1);
  for (int j = 0; j < np_; ++j) {
    double ph = 2.0 * PI * j / np_;
    for (int m = 0; m <= L_; ++m) {
      double sc = m == 0 ? 1.0 : std::sqrt(2.0);
      cphi_(j, m) = sc * std::cos(m * ph);
      sphi_(j, m) = m == 0 ? 0.0 : sc * std::sin(m * ph);
    }
  }
  P_.resize(L_ + 1);
  dP_.resize(L_ + 1);
  Ps_.resize(L_ + 1);
  for (int m = 0; m <= L_; ++m) {
    P_[m].resize(nt_, L_ - m + 1);
    dP_[m].resize(nt_, L_ - m + 1);
    Ps_[m].resize(nt_, L_ - m + 1);
  }
  for (int i = 0; i < nt_; ++i) {
    auto tab = specfun::legendre_table(L_, theta_[i]);
    for (int m = 0; m <= L_; ++m)
      for (int l = m; l <= L_; ++l) {
        P_[m](i, l - m) = tab(l, m);
        dP_[m](i, l - m) = tab.d(l, m);
        Ps_[m](i, l - m) = tab.msin(l, m);
      }
  }

  const int n = nt_ * np_;
  pos_.resize(n);
  nrm_.resize(n);
  xu_.resize(n);
  xv_.resize(n);
  uv_.resize(n);
  w_.resize(n);
  for (int i = 0; i < nt_; ++i)
    for (int j = 0; j < np_; ++j) {
      int k = i * np_ + j;
      double th = theta_[i], ph = 2.0 * PI * j / np_;
      double st = std::sin(th), ct = std::cos(th), sp = std::sin(ph), cp = std::cos(ph);
      pos_[k] = Vec3(st * cp, st * sp, ct);
      nrm_[k] = pos_[k];
      xu_[k] = Vec3(ct * cp, ct * sp, -st);
      xv_[k] = Vec3(-st * sp, st * cp, 0.0);
      uv_[k] = {th, ph};
      w_(k) = gw_[i] * 2.0 * PI / np_;
    }
}

double SphereSurface::spacing() const { return std::sqrt(4.0 * PI / size()); }

void SphereSurface::analyze(const std::vector<RMatrix>& P, const RMatrix& f, Coeffs& ac, Coeffs& as) const {
  const Eigen::Index c = f.cols();
  const double h = 2.0 * PI / np_;
  std::vector<RMatrix> gc(L_ + 1, RMatrix(nt_, c)), gs(L_ + 1, RMatrix(nt_, c));
  for (int i = 0; i < nt_; ++i) {
    RMatrix fc = h * gw_[i] * (cphi_.transpose() * f.middleRows(Eigen::Index(i) * np_, np_));
    RMatrix fs = h * gw_[i] * (sphi_.transpose() * f.middleRows(Eigen::Index(i) * np_, np_));
    for (int m = 0; m <= L_; ++m) {
      gc[m].row(i) = fc.row(m);
      gs[m].row(i) = fs.row(m);
    }
  }
  ac.resize(L_ + 1);
  as.resize(L_ + 1);
  for (int m = 0; m <= L_; ++m) {
    ac[m] = P[m].transpose() * gc[m];
    as[m] = P[m].transpose() * gs[m];
  }
}

RMatrix SphereSurface::synthesize(const std::vector<RMatrix>& P, const Coeffs& ac, const Coeffs& as,
                                  int cols) const {
  std::vector<RMatrix> gc(L_ + 1), gs(L_ + 1);
  for (int m = 0; m <= L_; ++m) {
    gc[m] = P[m] * ac[m];
    gs[m] = P[m] * as[m];
  }
  RMatrix out(size(), cols);
  RMatrix hc(L_ + 1, cols), hs(L_ + 1, cols);
  for (int i = 0; i < nt_; ++i) {
    for (int m = 0; m <= L_; ++m) {
      hc.row(m) = gc[m].row(i);
      hs.row(m) = gs[m].row(i);
    }
    out.middleRows(Eigen::Index(i) * np_, np_).noalias() = cphi_ * hc + sphi_ * hs;
  }
  return out;
}

SphereSurface::Coeffs SphereSurface::unpack(const RMatrix& a, bool sine) const {
  Coeffs out(L_ + 1);
  for (int m = 0; m <= L_; ++m) {
    out[m].setZero(L_ - m + 1, a.cols());
    if (sine && m == 0) continue;
    for (int l = m; l <= L_; ++l) {
      int idx = coeff_index(l, sine ? -m : m);
      if (idx < a.rows()) out[m].row(l - m) = a.row(idx);
    }
  }
  return out;
}

RMatrix SphereSurface::pack(const Coeffs& ac, const Coeffs& as) const {
  RMatrix a = RMatrix::Zero(ncoeffs(), ac[0].cols());
  for (int m = 0; m <= L_; ++m)
    for (int l = m; l <= L_; ++l) {
      a.row(coeff_index(l, m)) = ac[m].row(l - m);
      if (m > 0) a.row(coeff_index(l, -m)) = as[m].row(l - m);
    }
  return a;
}

RMatrix SphereSurface::analysis(const RMatrix& f) const {
  check_rows(*this, f.rows(), 1, "analysis");
  Coeffs ac, as;
  analyze(P_, f, ac, as);
  return pack(ac, as);
}

RMatrix SphereSurface::synthesis(const RMatrix& a) const {
  if (a.rows() > ncoeffs()) throw DomainError("synthesis: band exceeds the grid band limit");
  return synthesize(P_, unpack(a, false), unpack(a, true), int(a.cols()));
}

CMatrix SphereSurface::apply_symbol(const CMatrix& f, const std::vector<cplx>& lam) const {
  if (int(lam.size()) < L_ + 1) throw DomainError("apply_symbol: need one multiplier per degree");
  const Eigen::Index c = f.cols();
  RMatrix x(f.rows(), 2 * c);
  x.leftCols(c) = f.real();
  x.rightCols(c) = f.imag();
  RMatrix a = analysis(x);
  RMatrix br(a.rows(), c), bi(a.rows(), c);
  for (int l = 0; l <= L_; ++l)
    for (int m = -l; m <= l; ++m) {
      int k = coeff_index(l, m);
      for (Eigen::Index j = 0; j < c; ++j) {
        cplx v = lam[l] * cplx(a(k, j), a(k, c + j));
        br(k, j) = v.real();
        bi(k, j) = v.imag();
      }
    }
  RMatrix both(a.rows(), 2 * c);
  both.leftCols(c) = br;
  both.rightCols(c) = bi;
  RMatrix y = synthesis(both);
  CMatrix out(f.rows(), c);
  out.real() = y.leftCols(c);
  out.imag() = y.rightCols(c);
  return out;
}

RMatrix SphereSurface::grad(const RMatrix& f) const {
  check_rows(*this, f.rows(), 1, "grad");
  const int c = int(f.cols());
  Coeffs ac, as;
  analyze(P_, f, ac, as);
  Coeffs neg(L_ + 1);
  for (int m = 0; m <= L_; ++m) neg[m] = -ac[m];
  RMatrix ft = synthesize(dP_, ac, as, c);
  RMatrix fp = synthesize(Ps_, as, neg, c);
  const int n = size();
  RMatrix out(3 * n, c);
  for (int i = 0; i < n; ++i) {
    Vec3 et = xu_[i], ep = xv_[i] / std::sin(uv_[i][0]);
    for (int d = 0; d < 3; ++d) out.row(d * n + i) = et(d) * ft.row(i) + ep(d) * fp.row(i);
  }
  return out;
}

RMatrix SphereSurface::div(const RMatrix& v) const {
  check_rows(*this, v.rows(), 3, "div");
  const int n = size(), c = int(v.cols());
  RMatrix vt(n, c), vp(n, c);
  for (int i = 0; i < n; ++i) {
    Vec3 et = xu_[i], ep = xv_[i] / std::sin(uv_[i][0]);
    vt.row(i) = et(0) * v.row(i) + et(1) * v.row(n + i) + et(2) * v.row(2 * n + i);
    vp.row(i) = ep(0) * v.row(i) + ep(1) * v.row(n + i) + ep(2) * v.row(2 * n + i);
  }
  Coeffs tc, ts, pc, ps;
  analyze(dP_, vt, tc, ts);
  analyze(Ps_, vp, pc, ps);
  Coeffs bc(L_ + 1), bs(L_ + 1);
  for (int m = 0; m <= L_; ++m) {
    bc[m] = -(tc[m] - ps[m]);
    bs[m] = -(ts[m] + pc[m]);
  }
  return synthesize(P_, bc, bs, c);
}

RMatrix SphereSurface::R0(const RMatrix& f) const {
  check_rows(*this, f.rows(), 1, "R0");
  RMatrix a = analysis(f);
  for (int l = 0; l <= L_; ++l)
    for (int m = -l; m <= l; ++m) a.row(coeff_index(l, m)) *= l == 0 ? 0.0 : -1.0 / (l * (l + 1.0));
  return synthesis(a);
}

SurfacePtr SphereSurface::refined(int factor) const {
  if (factor < 1) throw DomainError("refinement factor must be >= 1");
  std::lock_guard<std::mutex> lock(cache_mu_);
  for (auto& e : cache_)
    if (e.first == factor) return e.second;
  auto s = std::make_shared<SphereSurface>(factor * nt_);
  cache_.emplace_back(factor, s);
  return s;
}

RMatrix SphereSurface::upsample(const RMatrix& f, int factor) const {
  auto fine = std::static_pointer_cast<const SphereSurface>(refined(factor));
  return fine->synthesis(analysis(f));
}

RMatrix SphereSurface::upsample_adjoint(const RMatrix& g, int factor) const {
  auto fine = std::static_pointer_cast<const SphereSurface>(refined(factor));
  if (g.rows() != fine->size()) throw DomainError("upsample_adjoint: fine grid size mismatch");
  RMatrix a = fine->analysis(g.array().colwise() / fine->weights().array());
  RMatrix out = synthesis(a.topRows(ncoeffs()));
  return out.array().colwise() * w_.array();
}

Vec3 SphereSurface::point_at(double th, double ph) const {
  return Vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
}

RMatrix SphereSurface::interpolate_at(const std::vector<std::array<double, 2>>& uv, const RMatrix& f) const {
  RMatrix a = analysis(f);
  RMatrix out(Eigen::Index(uv.size()), f.cols());
  RVector b(ncoeffs());
  for (size_t p = 0; p < uv.size(); ++p) {
    auto tab = specfun::legendre_table(L_, uv[p][0]);
    for (int l = 0; l <= L_; ++l) {
      b(coeff_index(l, 0)) = tab(l, 0);
      for (int m = 1; m <= l; ++m) {
        b(coeff_index(l, m)) = std::sqrt(2.0) * tab(l, m) * std::cos(m * uv[p][1]);
        b(coeff_index(l, -m)) = std::sqrt(2.0) * tab(l, m) * std::sin(m * uv[p][1]);
      }
    }
    out.row(Eigen::Index(p)) = b.transpose() * a;
  }
  return out;
}

// ---------------------------------------------------------------- torus

namespace {

RMatrix periodic_diff_matrix(int n) {
  RMatrix D = RMatrix::Zero(n, n);
  const double h = 2.0 * PI / n;
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      if (j != k) D(j, k) = 0.5 * (((j - k) % 2 == 0) ? 1.0 : -1.0) / std::tan((j - k) * h / 2.0);
  return D;
}

}  // namespace

RVector TorusSurface::dirichlet_weights(int n, double x) {
  RVector w(n);
  for (int j = 0; j < n; ++j) {
    double d = x - 2.0 * PI * j / n;
    double sh = std::sin(0.5 * d);
    if (std::abs(sh) < 1e-9) {
      // near a node: use the cosine sum, which is exact there
      double s = 1.0 + std::cos(0.5 * n * d);
      for (int k = 1; k < n / 2; ++k) s += 2.0 * std::cos(k * d);
      w(j) = s / n;
    } else {
      w(j) = std::sin(0.5 * n * d) * std::cos(0.5 * d) / (sh * n);
    }
  }
  return w;
}

RMatrix TorusSurface::resample_matrix(int n, int m) {
  RMatrix U(m, n);
  for (int i = 0; i < m; ++i) U.row(i) = dirichlet_weights(n, 2.0 * PI * i / m).transpose();
  return U;
}

TorusSurface::TorusSurface(double R, double r, int ns, int nt) : R_(R), r_(r), ns_(ns), ntt_(nt) {
  if (!(R > r && r > 0.0)) throw DomainError("torus needs R > r > 0");
  if (ns < 4 || nt < 4 || ns % 2 || nt % 2) throw DomainError("torus grid counts must be even and >= 4");
  const int n = ns * nt;
  pos_.resize(n);
  nrm_.resize(n);
  xu_.resize(n);
  xv_.resize(n);
  uv_.resize(n);
  w_.resize(n);
  const double hs = 2.0 * PI / ns, ht = 2.0 * PI / nt;
  for (int it = 0; it < nt; ++it)
    for (int is = 0; is < ns; ++is) {
      int k = it * ns + is;
      double s = is * hs, t = it * ht;
      double rho = R + r * std::cos(t);
      pos_[k] = point_at(s, t);
      nrm_[k] = normal_at(s, t);
      xu_[k] = Vec3(-rho * std::sin(s), rho * std::cos(s), 0.0);
      xv_[k] = Vec3(-r * std::sin(t) * std::cos(s), -r * std::sin(t) * std::sin(s), r * std::cos(t));
      uv_[k] = {s, t};
      w_(k) = rho * r * hs * ht;
    }
  Ds_ = periodic_diff_matrix(ns);
  Dt_ = periodic_diff_matrix(nt);

  Ms_ = ns / 2 - 1;
  Mt_ = nt / 2 - 1;
}

void TorusSurface::build_galerkin() const {
  const double R = R_, r = r_;
  // Galerkin matrices in e^{imt}, |m| <= Mt, one per |n| <= Ms.
  const int M = 2 * Mt_ + 1;
  const double sq = std::sqrt(R * R - r * r), beta = (R - sq) / r;
  auto inv_rho = [&](int d) { return 2.0 * PI / sq * std::pow(-beta, std::abs(d)); };
  mu_ = RVector::Zero(M);
  for (int a = 0; a < M; ++a) {
    int m = a - Mt_;
    mu_(a) = 2.0 * PI * r * (m == 0 ? R : (std::abs(m) == 1 ? r / 2.0 : 0.0));
  }
  for (int nn = 0; nn <= Ms_; ++nn) {
    int dim = nn == 0 ? M + 1 : M;
    RMatrix A = RMatrix::Zero(dim, dim);
    for (int a = 0; a < M; ++a)
      for (int b = 0; b < M; ++b) {
        int mp = a - Mt_, m = b - Mt_, d = m - mp;
        double rr = 2.0 * PI * ((d == 0 ? R / r : 0.0) + (std::abs(d) == 1 ? 0.5 : 0.0));
        A(a, b) = double(nn) * nn * r * inv_rho(d) + double(m) * mp * rr;
      }
    if (nn == 0) {
      A.block(0, M, M, 1) = mu_;
      A.block(M, 0, 1, M) = mu_.transpose();
    }
    lu_.emplace_back(A);
  }
}

std::array<double, 2> TorusSurface::foot_chart(const Vec3& x) const {
  double s = std::atan2(x(1), x(0));
  double t = std::atan2(x(2), std::hypot(x(0), x(1)) - R_);
  return {s < 0 ? s + 2.0 * PI : s, t < 0 ? t + 2.0 * PI : t};
}

double TorusSurface::spacing() const { return std::sqrt(area() / size()); }

Vec3 TorusSurface::point_at(double s, double t) const {
  double rho = R_ + r_ * std::cos(t);
  return Vec3(rho * std::cos(s), rho * std::sin(s), r_ * std::sin(t));
}

Vec3 TorusSurface::normal_at(double s, double t) const {
  return Vec3(std::cos(t) * std::cos(s), std::cos(t) * std::sin(s), std::sin(t));
}

RMatrix TorusSurface::ds(const RMatrix& f) const {
  check_rows(*this, f.rows(), 1, "ds");
  RMatrix out(f.rows(), f.cols());
  Eigen::Map<const RMatrix> F(f.data(), ns_, Eigen::Index(ntt_) * f.cols());
  Eigen::Map<RMatrix> O(out.data(), ns_, Eigen::Index(ntt_) * f.cols());
  O.noalias() = Ds_ * F;
  return out;
}

RMatrix TorusSurface::dt(const RMatrix& f) const {
  check_rows(*this, f.rows(), 1, "dt");
  RMatrix out(f.rows(), f.cols());
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    Eigen::Map<const RMatrix> F(f.col(c).data(), ns_, ntt_);
    Eigen::Map<RMatrix> O(out.col(c).data(), ns_, ntt_);
    O.noalias() = F * Dt_.transpose();
  }
  return out;
}

RMatrix TorusSurface::grad(const RMatrix& f) const {
  RMatrix fs = ds(f), ft = dt(f);
  const int n = size();
  RMatrix out(3 * n, f.cols());
  for (int i = 0; i < n; ++i) {
    double E = xu_[i].squaredNorm(), G = r_ * r_;
    for (int d = 0; d < 3; ++d) out.row(d * n + i) = (xu_[i](d) / E) * fs.row(i) + (xv_[i](d) / G) * ft.row(i);
  }
  return out;
}

RMatrix TorusSurface::div(const RMatrix& v) const {
  check_rows(*this, v.rows(), 3, "div");
  const int n = size();
  RMatrix a(n, v.cols()), b(n, v.cols());
  for (int i = 0; i < n; ++i) {
    double rh = rho(i), sg = rh * r_;
    Vec3 ca = xu_[i] * (sg / (rh * rh)), cb = xv_[i] * (sg / (r_ * r_));
    a.row(i) = ca(0) * v.row(i) + ca(1) * v.row(n + i) + ca(2) * v.row(2 * n + i);
    b.row(i) = cb(0) * v.row(i) + cb(1) * v.row(n + i) + cb(2) * v.row(2 * n + i);
  }
  RMatrix out = ds(a) + dt(b);
  for (int i = 0; i < n; ++i) out.row(i) /= rho(i) * r_;
  return out;
}

RMatrix TorusSurface::R0(const RMatrix& f) const {
  check_rows(*this, f.rows(), 1, "R0");
  std::call_once(galerkin_once_, [this] { build_galerkin(); });
  const int S = 2 * Ms_ + 1, M = 2 * Mt_ + 1;
  const Eigen::Index c = f.cols();
  CMatrix Es(S, ns_), Et(ntt_, M), Bs(ns_, S), Bt(M, ntt_);
  for (int a = 0; a < S; ++a)
    for (int is = 0; is < ns_; ++is) {
      double ph = (a - Ms_) * 2.0 * PI * is / ns_;
      Es(a, is) = std::polar(1.0 / ns_, -ph);
      Bs(is, a) = std::polar(1.0, ph);
    }
  for (int b = 0; b < M; ++b)
    for (int it = 0; it < ntt_; ++it) {
      double ph = (b - Mt_) * 2.0 * PI * it / ntt_;
      Et(it, b) = std::polar(-2.0 * PI / ntt_, -ph);
      Bt(b, it) = std::polar(1.0, ph);
    }
  RVector rr(ntt_);
  for (int it = 0; it < ntt_; ++it) rr(it) = (R_ + r_ * std::cos(2.0 * PI * it / ntt_)) * r_;

  // rhs[n] is M x c
  std::vector<CMatrix> rhs(S, CMatrix(M, c));
  for (Eigen::Index k = 0; k < c; ++k) {
    Eigen::Map<const RMatrix> F(f.col(k).data(), ns_, ntt_);
    RMatrix G = F * rr.asDiagonal();
    CMatrix H = Es * G.cast<cplx>() * Et;
    for (int a = 0; a < S; ++a) rhs[a].col(k) = H.row(a).transpose();
  }
  std::vector<CMatrix> coef(S);
  for (int a = 0; a < S; ++a) {
    int nn = std::abs(a - Ms_);
    const auto& lu = lu_[nn];
    if (nn == 0) {
      RMatrix xr(M + 1, c), xi(M + 1, c);
      xr.topRows(M) = rhs[a].real();
      xr.row(M).setZero();
      xi.topRows(M) = rhs[a].imag();
      xi.row(M).setZero();
      RMatrix yr = lu.solve(xr), yi = lu.solve(xi);
      coef[a].resize(M, c);
      coef[a].real() = yr.topRows(M);
      coef[a].imag() = yi.topRows(M);
    } else {
      coef[a].resize(M, c);
      coef[a].real() = lu.solve(RMatrix(rhs[a].real()));
      coef[a].imag() = lu.solve(RMatrix(rhs[a].imag()));
    }
  }
  RMatrix out(f.rows(), c);
  CMatrix C(S, M);
  for (Eigen::Index k = 0; k < c; ++k) {
    for (int a = 0; a < S; ++a) C.row(a) = coef[a].col(k).transpose();
    Eigen::Map<RMatrix> O(out.col(k).data(), ns_, ntt_);
    O = (Bs * C * Bt).real();
  }
  return out;
}

SurfacePtr TorusSurface::refined(int factor) const {
  if (factor < 1) throw DomainError("refinement factor must be >= 1");
  return std::make_shared<TorusSurface>(R_, r_, factor * ns_, factor * ntt_);
}

RMatrix TorusSurface::upsample(const RMatrix& f, int factor) const {
  check_rows(*this, f.rows(), 1, "upsample");
  const int fs = factor * ns_, ft = factor * ntt_;
  RMatrix Us = resample_matrix(ns_, fs), Ut = resample_matrix(ntt_, ft);
  RMatrix out(Eigen::Index(fs) * ft, f.cols());
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    Eigen::Map<const RMatrix> F(f.col(c).data(), ns_, ntt_);
    Eigen::Map<RMatrix> O(out.col(c).data(), fs, ft);
    O.noalias() = Us * F * Ut.transpose();
  }
  return out;
}

RMatrix TorusSurface::upsample_adjoint(const RMatrix& g, int factor) const {
  const int fs = factor * ns_, ft = factor * ntt_;
  if (g.rows() != Eigen::Index(fs) * ft) throw DomainError("upsample_adjoint: fine grid size mismatch");
  RMatrix Us = resample_matrix(ns_, fs), Ut = resample_matrix(ntt_, ft);
  RMatrix out(size(), g.cols());
  for (Eigen::Index c = 0; c < g.cols(); ++c) {
    Eigen::Map<const RMatrix> G(g.col(c).data(), fs, ft);
    Eigen::Map<RMatrix> O(out.col(c).data(), ns_, ntt_);
    O.noalias() = Us.transpose() * G * Ut;
  }
  return out;
}

RMatrix TorusSurface::interpolate_at(const std::vector<std::array<double, 2>>& uv, const RMatrix& f) const {
  check_rows(*this, f.rows(), 1, "interpolate_at");
  const Eigen::Index P = Eigen::Index(uv.size());
  RMatrix Ws(P, ns_), Wt(P, ntt_);
  for (Eigen::Index p = 0; p < P; ++p) {
    Ws.row(p) = dirichlet_weights(ns_, uv[p][0]).transpose();
    Wt.row(p) = dirichlet_weights(ntt_, uv[p][1]).transpose();
  }
  RMatrix out(P, f.cols());
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    Eigen::Map<const RMatrix> F(f.col(c).data(), ns_, ntt_);
    RMatrix T = Ws * F;
    out.col(c) = (T.array() * Wt.array()).rowwise().sum();
  }
  return out;
}

RMatrix TorusSurface::compute_harmonic_basis() const {
  // Fourier modes in s decouple because the coefficients of the 1-form
  // Laplacian in the (x_s, x_t) frame depend on t only.
  const int M = 2 * Mt_ + 1, nt = ntt_;
  RVector rho(nt), sg(nt);
  for (int it = 0; it < nt; ++it) {
    rho(it) = R_ + r_ * std::cos(2.0 * PI * it / nt);
    sg(it) = rho(it) * r_;
  }
  CMatrix Dt = Dt_.cast<cplx>();
  auto div1 = [&](int n, const CVector& a, const CVector& b) -> CVector {
    CVector ga = (sg.array() * a.array()).matrix(), gb = (sg.array() * b.array()).matrix();
    return ((cplx(0.0, n) * ga + Dt * gb).array() / sg.array()).matrix();
  };
  struct Mode {
    int n;
    Eigen::JacobiSVD<CMatrix> svd;
  };
  std::vector<Mode> modes;
  double smax = 0.0;
  for (int n = -Ms_; n <= Ms_; ++n) {
    CMatrix A(2 * nt, 2 * M);
    for (int col = 0; col < 2 * M; ++col) {
      int m = (col % M) - Mt_;
      CVector e(nt);
      for (int it = 0; it < nt; ++it) e(it) = std::polar(1.0, m * 2.0 * PI * it / nt);
      CVector a = col < M ? e : CVector::Zero(nt), b = col < M ? CVector::Zero(nt) : e;
      CVector d1 = div1(n, a, b);
      CVector a2 = -(b.array() * r_ / rho.array()).matrix(), b2 = (a.array() * rho.array() / r_).matrix();
      CVector d2 = div1(n, a2, b2);
      CVector ap = (cplx(0.0, n) * d1.array() / (rho.array() * rho.array()) +
                    (Dt * d2).array() / (r_ * rho.array())).matrix();
      CVector bp = ((Dt * d1).array() / (r_ * r_) - cplx(0.0, n) * d2.array() / (rho.array() * r_)).matrix();
      A.col(col).head(nt) = (ap.array() * rho.array() * sg.array().sqrt()).matrix();
      A.col(col).tail(nt) = (bp.array() * r_ * sg.array().sqrt()).matrix();
    }
    modes.push_back({n, Eigen::JacobiSVD<CMatrix>(A, Eigen::ComputeFullV)});
    smax = std::max(smax, modes.back().svd.singularValues()(0));
  }
  const double thr = 1e3 * std::numeric_limits<double>::epsilon() * smax;
  int count = 0;
  const int N = size();
  std::vector<RVector> cand;
  for (auto& md : modes) {
    const RVector& sv = md.svd.singularValues();
    for (int j = 0; j < sv.size(); ++j) {
      if (sv(j) >= thr) continue;
      ++count;
      CVector c = md.svd.matrixV().col(j);
      RVector re(3 * N), im(3 * N);
      for (int i = 0; i < N; ++i) {
        double s = uv_[i][0], t = uv_[i][1];
        cplx a = 0.0, b = 0.0;
        for (int q = 0; q < M; ++q) {
          cplx e = std::polar(1.0, (q - Mt_) * t);
          a += c(q) * e;
          b += c(M + q) * e;
        }
        cplx ph = std::polar(1.0, md.n * s);
        for (int d = 0; d < 3; ++d) {
          cplx v = ph * (a * xu_[i](d) + b * xv_[i](d));
          re(d * N + i) = v.real();
          im(d * N + i) = v.imag();
        }
      }
      cand.push_back(re);
      cand.push_back(im);
    }
  }
  if (count != 2 * genus())
    throw RankError("torus harmonic nullspace has dimension " + std::to_string(count) + ", expected " +
                        std::to_string(2 * genus()),
                    count, 2 * genus());
  RMatrix C(3 * N, Eigen::Index(cand.size()));
  for (size_t j = 0; j < cand.size(); ++j) C.col(Eigen::Index(j)) = cand[j];
  RMatrix Q = w_orthonormalize(C, tangent_weights(*this), 1e-8);
  if (Q.cols() != 2 * genus())
    throw RankError("harmonic candidates span " + std::to_string(Q.cols()) + " real directions", int(Q.cols()),
                    2 * genus());
  return Q;
}

// ---------------------------------------------------------------- factories and free functions

SurfacePtr make_sphere(int ntheta) { return std::make_shared<SphereSurface>(ntheta); }

SurfacePtr make_torus(double R, double r, int ns, int nt) { return std::make_shared<TorusSurface>(R, r, ns, nt); }

const SphereSurface* as_sphere(const Surface& s) { return dynamic_cast<const SphereSurface*>(&s); }
const TorusSurface* as_torus(const Surface& s) { return dynamic_cast<const TorusSurface*>(&s); }

CMatrix cgrad(const Surface& s, const CMatrix& f) {
  return split_apply(f, [&](const RMatrix& x) { return s.grad(x); });
}
CMatrix cdiv(const Surface& s, const CMatrix& v) {
  return split_apply(v, [&](const RMatrix& x) { return s.div(x); });
}
CMatrix cR0(const Surface& s, const CMatrix& f) {
  return split_apply(f, [&](const RMatrix& x) { return s.R0(x); });
}
CMatrix crot90(const Surface& s, const CMatrix& v) {
  return split_apply(v, [&](const RMatrix& x) { return s.rot90(x); });
}
CMatrix cnormal_dot(const Surface& s, const CMatrix& v) {
  return split_apply(v, [&](const RMatrix& x) { return s.normal_dot(x); });
}
CMatrix cupsample(const Surface& s, const CMatrix& f, int factor) {
  return split_apply(f, [&](const RMatrix& x) { return s.upsample(x, factor); });
}
CMatrix cinterpolate_at(const Surface& s, const std::vector<std::array<double, 2>>& uv, const CMatrix& f) {
  return split_apply(f, [&](const RMatrix& x) { return s.interpolate_at(uv, x); });
}

cplx mean(const Surface& s, const CVector& f) {
  check_rows(s, f.size(), 1, "mean");
  return (f.array() * s.weights().array().cast<cplx>()).sum() / s.area();
}

namespace {
double rms(const Surface& s, const CVector& f) {
  return std::sqrt((f.array().abs2() * s.weights().array()).sum() / s.area());
}
}  // namespace

bool is_mean_zero(const Surface& s, const CVector& f, double tol) {
  double scale = rms(s, f);
  return scale == 0.0 || std::abs(mean(s, f)) <= tol * scale;
}

CVector mean_zero_project(const Surface& s, const CVector& f) {
  return f.array() - mean(s, f);
}

CMatrix laplace_beltrami_partial_inverse_R0(const Surface& s, const CMatrix& f) {
  check_rows(s, f.rows(), 1, "R0");
  CMatrix g = f;
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    CVector col = f.col(c);
    if (!is_mean_zero(s, col, 1e-10))
      throw MeanZeroError("R0 input has mean " + std::to_string(std::abs(mean(s, col))) +
                          " relative to RMS " + std::to_string(rms(s, col)));
    g.col(c) = mean_zero_project(s, col);
  }
  return cR0(s, g);
}

Currents currents_from_debye(const Surface& s, const CVector& r, const CVector& q, cplx k,
                             const CVector& harmonic_coeffs) {
  check_rows(s, r.size(), 1, "currents_from_debye");
  check_rows(s, q.size(), 1, "currents_from_debye");
  CMatrix rq(s.size(), 2);
  rq.col(0) = r;
  rq.col(1) = q;
  CMatrix u = laplace_beltrami_partial_inverse_R0(s, rq);
  CMatrix g = cgrad(s, u);
  Currents out;
  out.j = I * k * g.col(0) - I * k * CVector(crot90(s, g.col(1)));
  if (harmonic_coeffs.size() > 0) {
    const RMatrix& H = s.harmonic_basis();
    if (harmonic_coeffs.size() != H.cols()) throw DomainError("harmonic coefficient count does not match 2g");
    out.j += H.cast<cplx>() * harmonic_coeffs;
  }
  out.m = crot90(s, out.j);
  return out;
}

CurrentBlocks currents_from_debye_block(const Surface& s, const CMatrix& R, const CMatrix& Q, cplx k) {
  check_rows(s, R.rows(), 1, "currents_from_debye_block");
  check_rows(s, Q.rows(), 1, "currents_from_debye_block");
  if (R.cols() != Q.cols()) throw DomainError("currents_from_debye_block: R and Q column counts differ");
  const Eigen::Index c = R.cols();
  CMatrix RQ(s.size(), R.cols() + Q.cols());
  RQ.leftCols(c) = R;
  RQ.rightCols(Q.cols()) = Q;
  RVector w = s.weights() / s.area();
  RQ.rowwise() -= (w.transpose().cast<cplx>() * RQ);
  CMatrix g = cgrad(s, cR0(s, RQ));
  CurrentBlocks out;
  out.J = I * k * g.leftCols(c) - I * k * crot90(s, g.rightCols(Q.cols()));
  out.M = crot90(s, out.J);
  return out;
}

HodgeParts hodge_decompose(const Surface& s, const CVector& v) {
  check_rows(s, v.size(), 3, "hodge_decompose");
  HodgeParts h;
  CVector d1 = cdiv(s, v), d2 = cdiv(s, crot90(s, v));
  h.alpha = cR0(s, mean_zero_project(s, d1));
  h.beta = -cR0(s, mean_zero_project(s, d2));
  h.grad_part = cgrad(s, h.alpha);
  h.rot_part = crot90(s, cgrad(s, h.beta));
  CVector rest = v - h.grad_part - h.rot_part;
  const RMatrix& H = s.harmonic_basis();
  h.harmonic_coeffs = CVector::Zero(H.cols());
  h.harmonic_part = CVector::Zero(v.size());
  for (Eigen::Index l = 0; l < H.cols(); ++l) {
    CVector hl = H.col(l).cast<cplx>();
    h.harmonic_coeffs(l) = s.inner_tangent(hl, rest);
    h.harmonic_part += h.harmonic_coeffs(l) * hl;
  }
  h.remainder = rest - h.harmonic_part;
  return h;
}

RMatrix torus_analytic_harmonic(const Surface& torus) {
  const TorusSurface* t = as_torus(torus);
  if (!t) throw DomainError("analytic harmonic pair is defined for the torus only");
  const int n = t->size();
  RMatrix out(3 * n, 2);
  for (int i = 0; i < n; ++i) {
    double rho = t->rho(i);
    for (int d = 0; d < 3; ++d) {
      out(d * n + i, 0) = t->xu()[i](d) / (rho * rho);
      out(d * n + i, 1) = t->xv()[i](d) / (rho * t->r());
    }
  }
  return out;
}

double principal_angle(const Surface& s, const RMatrix& A, const RMatrix& B) {
  RVector w3 = tangent_weights(s);
  RMatrix QA = w_orthonormalize(A, w3, 1e-14), QB = w_orthonormalize(B, w3, 1e-14);
  RMatrix D = QA - QB * (QB.transpose() * w3.asDiagonal() * QA);
  RMatrix G = D.transpose() * w3.asDiagonal() * D;
  double top = G.rows() ? Eigen::SelfAdjointEigenSolver<RMatrix>(G).eigenvalues().maxCoeff() : 0.0;
  return std::asin(std::min(1.0, std::sqrt(std::max(0.0, top))));
}

}  // namespace debye::surf
