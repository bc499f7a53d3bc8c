#include "debye/layerpot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>

#include "debye/quadrature.hpp"

namespace debye::lp {

using surf::Surface;

namespace {

// e^{ikd}/(4 pi d) and its d-derivative
inline void green(double d, cplx k, cplx& g, cplx& gp) {
  cplx e = std::exp(I * k * d);
  g = e / (4.0 * PI * d);
  gp = e * (I * k * d - 1.0) / (4.0 * PI * d * d);
}

// 1 near the center, 0 beyond u = 1, C-infinity in between.
double bump(double u) {
  if (u <= 0.0) return 1.0;
  if (u >= 1.0) return 0.0;
  return std::exp(2.0 * std::exp(-1.0 / u) / (u - 1.0));
}

double wrap(double a) {
  a = std::fmod(a + PI, 2.0 * PI);
  if (a < 0) a += 2.0 * PI;
  return a - PI;
}

// N x c per component <-> 3N x c
CMatrix split3(const CMatrix& v, int n) {
  const Eigen::Index c = v.cols();
  CMatrix out(n, 3 * c);
  for (int a = 0; a < 3; ++a) out.middleCols(a * c, c) = v.middleRows(Eigen::Index(a) * n, n);
  return out;
}

CMatrix join3(const CMatrix& w, int n) {
  const Eigen::Index c = w.cols() / 3;
  CMatrix out(3 * n, c);
  for (int a = 0; a < 3; ++a) out.middleRows(Eigen::Index(a) * n, n) = w.middleCols(a * c, c);
  return out;
}

CMatrix tangential(const Surface& s, const CMatrix& v) {
  return v - [&] {
    CMatrix d = surf::cnormal_dot(s, v);
    const int n = s.size();
    CMatrix nd(3 * n, v.cols());
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a) nd.row(Eigen::Index(a) * n + i) = s.normals()[i](a) * d.row(i);
    return nd;
  }();
}

// sum_a n_a G_a with G_a the tangent blocks of grad applied to component a
CMatrix normal_weighted_grad(const Surface& s, const CMatrix& comps) {
  const int n = s.size();
  const Eigen::Index c = comps.cols() / 3;
  CMatrix g = surf::cgrad(s, comps);  // 3N x 3c
  CMatrix out = CMatrix::Zero(3 * n, c);
  for (int a = 0; a < 3; ++a)
    for (int d = 0; d < 3; ++d)
      for (int i = 0; i < n; ++i)
        out.row(Eigen::Index(d) * n + i) += s.normals()[i](a) * g.block(Eigen::Index(d) * n + i, a * c, 1, c);
  return out;
}

// Legendre polynomials P_0..P_L at x
void legendre_p(int L, double x, std::vector<double>& p) {
  p.assign(L + 1, 0.0);
  p[0] = 1.0;
  if (L >= 1) p[1] = x;
  for (int l = 1; l < L; ++l) p[l + 1] = ((2 * l + 1) * x * p[l] - l * p[l - 1]) / (l + 1);
}

}  // namespace

cplx kernel_gk(const Vec3& x, const Vec3& y, cplx k) {
  double d = (x - y).norm();
  if (d == 0.0) throw DomainError("kernel_gk: coincident points");
  return std::exp(I * k * d) / (4.0 * PI * d);
}

CVec3 grad_kernel_gk(const Vec3& x, const Vec3& y, cplx k) {
  Vec3 r = x - y;
  double d = r.norm();
  if (d == 0.0) throw DomainError("grad_kernel_gk: coincident points");
  cplx g, gp;
  green(d, k, g, gp);
  return (gp / d) * r.cast<cplx>();
}

// ---------------------------------------------------------------- BoundaryOps

BoundaryOps::BoundaryOps(surf::SurfacePtr s, cplx k, const QuadOptions& opt) : s_(std::move(s)), k_(k), opt_(opt) {
  if (surf::as_sphere(*s_))
    build_sphere();
  else if (surf::as_torus(*s_))
    build_torus();
  else
    throw DomainError("BoundaryOps: unsupported surface kind " + s_->kind());
  if (qerr_ > 1e-6)
    warnings_.push_back("single-layer quadrature error estimate " + std::to_string(qerr_) + " exceeds 1e-6");
}

void BoundaryOps::build_sphere() {
  const auto* sp = surf::as_sphere(*s_);
  const int L = sp->lmax();
  auto symbols = [&](int nodes, std::vector<cplx>& ls, std::vector<cplx>& lk) {
    quad::Rule gl = quad::gauss_legendre(nodes, 0.0, PI);
    ls.assign(L + 1, 0.0);
    lk.assign(L + 1, 0.0);
    std::vector<double> p;
    for (size_t q = 0; q < gl.x.size(); ++q) {
      double g = gl.x[q], d = 2.0 * std::sin(0.5 * g), ch = std::cos(0.5 * g);
      cplx e = std::exp(I * k_ * d);
      // kernel times sin(gamma); the 1/d singularity cancels
      cplx fs = e * ch / (4.0 * PI), fk = e * (I * k_ * d - 1.0) * ch / (8.0 * PI);
      legendre_p(L, std::cos(g), p);
      for (int l = 0; l <= L; ++l) {
        ls[l] += 2.0 * PI * gl.w[q] * fs * p[l];
        lk[l] += 2.0 * PI * gl.w[q] * fk * p[l];
      }
    }
  };
  int nodes = opt_.sphere_nodes > 0 ? opt_.sphere_nodes : 2 * L + 64 + int(4.0 * std::abs(k_));
  symbols(nodes, lamS_, lamK_);
  std::vector<cplx> s2, k2;
  symbols(nodes * 3 / 4, s2, k2);
  double top = 0.0, diff = 0.0;
  for (int l = 0; l <= L; ++l) {
    top = std::max(top, std::abs(lamS_[l]));
    diff = std::max(diff, std::abs(lamS_[l] - s2[l]));
  }
  qerr_ = diff / top;
}

std::array<CMatrix, 3> BoundaryOps::torus_rows(int it0, int nr, int na) const {
  const auto* T = surf::as_torus(*s_);
  const int ns = T->ns(), nt = T->nt();
  const double R = T->R(), r = T->r();
  const double as = std::min(opt_.patch_cells * 2.0 * PI / ns, opt_.max_patch);
  const double at = std::min(opt_.patch_cells * 2.0 * PI / nt, opt_.max_patch);
  const double t0 = 2.0 * PI * it0 / nt;
  const Vec3 x0 = T->point_at(0.0, t0), n0 = T->normal_at(0.0, t0);

  std::array<CMatrix, 3> A;
  for (auto& a : A) a = CMatrix::Zero(ns, nt);

  // polar patch
  quad::Rule gl = quad::gauss_legendre(nr, 0.0, 1.0);
  const int Q = nr * na;
  RMatrix Ws(Q, ns), Wt(Q, nt);
  std::array<CVector, 3> v;
  for (auto& x : v) x.resize(Q);
  for (int a = 0; a < nr; ++a)
    for (int b = 0; b < na; ++b) {
      int q = a * na + b;
      double rh = gl.x[a], th = 2.0 * PI * b / na;
      double dsv = as * rh * std::cos(th), dtv = at * rh * std::sin(th);
      double t = t0 + dtv;
      Vec3 y = T->point_at(dsv, t), ny = T->normal_at(dsv, t);
      double sg = (R + r * std::cos(t)) * r;
      double c = bump(rh) * sg * as * at * rh * gl.w[a] * (2.0 * PI / na);
      Vec3 dx = x0 - y;
      double d = dx.norm();
      cplx g, gp;
      green(d, k_, g, gp);
      v[OpS](q) = c * g;
      v[OpK0](q) = c * gp * n0.dot(dx) / d;
      v[OpD](q) = -c * gp * ny.dot(dx) / d;
      Ws.row(q) = surf::TorusSurface::dirichlet_weights(ns, dsv).transpose();
      Wt.row(q) = surf::TorusSurface::dirichlet_weights(nt, t).transpose();
    }
  RMatrix WsT = Ws.transpose();
  for (int op = 0; op < 3; ++op) {
    RMatrix re = WsT * (v[op].real().asDiagonal() * Wt);
    RMatrix im = WsT * (v[op].imag().asDiagonal() * Wt);
    A[op].real() += re;
    A[op].imag() += im;
  }

  // smooth remainder on a refined grid
  const int F = opt_.smooth_upsample, fs = F * ns, ft = F * nt;
  std::array<CMatrix, 3> Rf;
  for (auto& x : Rf) x = CMatrix::Zero(fs, ft);
  const double hw = (2.0 * PI / fs) * (2.0 * PI / ft);
  for (int jt = 0; jt < ft; ++jt) {
    double t = 2.0 * PI * jt / ft, dtv = wrap(t - t0);
    double ct = std::cos(t), st = std::sin(t), rho = R + r * ct;
    for (int js = 0; js < fs; ++js) {
      double s = 2.0 * PI * js / fs, dsv = wrap(s);
      double u = std::hypot(dsv / as, dtv / at);
      double eta = bump(u);
      if (eta >= 1.0) continue;
      Vec3 y(rho * std::cos(s), rho * std::sin(s), r * st);
      Vec3 ny(ct * std::cos(s), ct * std::sin(s), st);
      Vec3 dx = x0 - y;
      double d = dx.norm();
      cplx g, gp;
      green(d, k_, g, gp);
      double c = (1.0 - eta) * rho * r * hw;
      Rf[OpS](js, jt) = c * g;
      Rf[OpK0](js, jt) = c * gp * n0.dot(dx) / d;
      Rf[OpD](js, jt) = -c * gp * ny.dot(dx) / d;
    }
  }
  RMatrix Us = surf::TorusSurface::resample_matrix(ns, fs), Ut = surf::TorusSurface::resample_matrix(nt, ft);
  RMatrix UsT = Us.transpose();
  for (int op = 0; op < 3; ++op) {
    RMatrix re = UsT * RMatrix(Rf[op].real()) * Ut;
    RMatrix im = UsT * RMatrix(Rf[op].imag()) * Ut;
    A[op].real() += re;
    A[op].imag() += im;
  }
  return A;
}

void BoundaryOps::build_torus() {
  const auto* T = surf::as_torus(*s_);
  const int ns = T->ns(), nt = T->nt();
  CMatrix Ep(ns, ns);
  fs_.resize(ns, ns);
  for (int n = 0; n < ns; ++n)
    for (int u = 0; u < ns; ++u) {
      Ep(n, u) = std::polar(1.0, 2.0 * PI * n * u / ns);
      fs_(n, u) = std::conj(Ep(n, u));
    }
  for (auto& b : bhat_) b.assign(ns, CMatrix(nt, nt));
  for (int it0 = 0; it0 < nt; ++it0) {
    auto A = torus_rows(it0, opt_.n_radial, opt_.n_angular);
    if (it0 == 0) {
      auto B = torus_rows(0, std::max(4, opt_.n_radial * 2 / 3), std::max(8, opt_.n_angular * 2 / 3));
      qerr_ = (A[OpS] - B[OpS]).cwiseAbs().sum() / A[OpS].cwiseAbs().sum();
    }
    for (int op = 0; op < 3; ++op) {
      CMatrix H = Ep * A[op];
      for (int n = 0; n < ns; ++n) bhat_[op][n].row(it0) = H.row(n);
    }
  }
  // Symmetrize under the quadrature pairing: S with itself, K0 with D.
  // The weighted transpose of mode n is diag(1/rho) B(-n)^T diag(rho).
  RVector w(nt);
  for (int it = 0; it < nt; ++it) w(it) = T->rho(it * ns);
  auto wt = [&](const CMatrix& B) -> CMatrix {
    return w.cwiseInverse().cast<cplx>().asDiagonal() * B.transpose() * w.cast<cplx>().asDiagonal();
  };
  std::array<std::vector<CMatrix>, 3> sym;
  for (auto& b : sym) b.resize(ns);
  for (int n = 0; n < ns; ++n) {
    int mn = (ns - n) % ns;
    sym[OpS][n] = 0.5 * (bhat_[OpS][n] + wt(bhat_[OpS][mn]));
    sym[OpK0][n] = 0.5 * (bhat_[OpK0][n] + wt(bhat_[OpD][mn]));
    sym[OpD][n] = 0.5 * (bhat_[OpD][n] + wt(bhat_[OpK0][mn]));
  }
  bhat_ = std::move(sym);
}

CMatrix BoundaryOps::apply(Op op, const CMatrix& f) const {
  const Surface& s = *s_;
  if (f.rows() != s.size()) throw DomainError("boundary operator: field does not live on this grid");
  if (f.cols() == 0) return CMatrix(f.rows(), 0);
  if (const auto* sp = surf::as_sphere(s)) return sp->apply_symbol(f, op == OpS ? lamS_ : lamK_);
  const auto* T = surf::as_torus(s);
  const int ns = T->ns(), nt = T->nt();
  const Eigen::Index c = f.cols();
  Eigen::Map<const CMatrix> F(f.data(), ns, Eigen::Index(nt) * c);
  CMatrix Fh = fs_ * F;
  CMatrix Gh(ns, Eigen::Index(nt) * c);
  CMatrix X(nt, c);
  for (int n = 0; n < ns; ++n) {
    for (Eigen::Index j = 0; j < c; ++j) X.col(j) = Fh.row(n).segment(j * nt, nt).transpose();
    CMatrix Y = bhat_[op][n] * X;
    for (Eigen::Index j = 0; j < c; ++j) Gh.row(n).segment(j * nt, nt) = Y.col(j).transpose();
  }
  CMatrix out(f.rows(), c);
  Eigen::Map<CMatrix> O(out.data(), ns, Eigen::Index(nt) * c);
  O.noalias() = fs_.adjoint() * Gh / double(ns);
  return out;
}

CMatrix BoundaryOps::S(const CMatrix& f) const { return apply(OpS, f); }
CMatrix BoundaryOps::K0(const CMatrix& f) const { return apply(OpK0, f); }
CMatrix BoundaryOps::D(const CMatrix& f) const {
  // on the unit sphere the D and K0 kernels coincide
  return apply(surf::as_sphere(*s_) ? OpK0 : OpD, f);
}
CMatrix BoundaryOps::S3(const CMatrix& v) const { return join3(S(split3(v, s_->size())), s_->size()); }
CMatrix BoundaryOps::K0_3(const CMatrix& v) const { return join3(K0(split3(v, s_->size())), s_->size()); }

CMatrix BoundaryOps::K1(const CMatrix& r) const { return surf::crot90(*s_, surf::cgrad(*s_, S(r))); }
CMatrix BoundaryOps::K2n(const CMatrix& j) const { return surf::cnormal_dot(*s_, S3(j)); }
CMatrix BoundaryOps::K2t(const CMatrix& j) const { return surf::crot90(*s_, S3(j)); }
CMatrix BoundaryOps::K3(const CMatrix& j) const { return -surf::cdiv(*s_, surf::crot90(*s_, S3(j))); }
CMatrix BoundaryOps::K4(const CMatrix& j) const {
  const int n = s_->size();
  return normal_weighted_grad(*s_, S(split3(j, n))) - tangential(*s_, K0_3(j));
}

Traces traces(const BoundaryOps& ops, const CMatrix& r, const CMatrix& q, const CMatrix& j, const CMatrix& m,
              int side, bool want_normal, bool want_tangential) {
  const Surface& s = ops.surface();
  const int n = s.size();
  const cplx ik = I * ops.k();
  const double h = 0.5 * side;
  const Eigen::Index c = r.cols();
  // one batched application of S to r, q and the components of j, m
  CMatrix all(n, 8 * c);
  all << r, q, split3(j, n), split3(m, n);
  CMatrix Sall = ops.S(all);
  CMatrix Sr = Sall.leftCols(c), Sq = Sall.middleCols(c, c);
  CMatrix Sj3 = Sall.middleCols(2 * c, 3 * c), Sm3 = Sall.middleCols(5 * c, 3 * c);
  CMatrix Sj = join3(Sj3, n), Sm = join3(Sm3, n);
  Traces t;
  if (want_normal) {
    CMatrix rq(n, 2 * c);
    rq << r, q;
    CMatrix K0rq = ops.K0(rq);
    CMatrix divj = surf::cdiv(s, surf::crot90(s, Sj)), divm = surf::cdiv(s, surf::crot90(s, Sm));
    t.nE = h * r - K0rq.leftCols(c) + ik * surf::cnormal_dot(s, Sj) + divm;
    t.nH = h * q - K0rq.rightCols(c) - divj + ik * surf::cnormal_dot(s, Sm);
  }
  if (want_tangential) {
    CMatrix jm(3 * n, 2 * c);
    jm << j, m;
    CMatrix K0jm = tangential(s, ops.K0_3(jm));
    CMatrix sm3(n, 6 * c);
    sm3 << Sj3, Sm3;
    CMatrix NG = normal_weighted_grad(s, sm3.leftCols(3 * c));
    CMatrix NGm = normal_weighted_grad(s, sm3.rightCols(3 * c));
    CMatrix K4j = NG - K0jm.leftCols(c), K4m = NGm - K0jm.rightCols(c);
    CMatrix srq(n, 2 * c);
    srq << Sr, Sq;
    CMatrix K1rq = surf::crot90(s, surf::cgrad(s, srq));
    t.tE = -h * m - K1rq.leftCols(c) + ik * surf::crot90(s, Sj) - K4m;
    t.tH = h * j + K4j + ik * surf::crot90(s, Sm) - K1rq.rightCols(c);
  }
  return t;
}

// ---------------------------------------------------------------- dense builds and dumps

DiscretizedOperator build_operator(const BoundaryOps& ops, const std::string& kind, int side) {
  const int n = ops.surface().size();
  DiscretizedOperator out{CMatrix(), ops.k(), side, kind};
  auto eye = [](int m) { return CMatrix::Identity(m, m); };
  if (kind == "S") {
    out.M = ops.S(eye(n));
  } else if (kind == "K0") {
    out.M = ops.K0(eye(n));
    out.M.diagonal().array() -= 0.5 * side;
  } else if (kind == "D") {
    out.M = ops.D(eye(n));
    out.M.diagonal().array() += 0.5 * side;
  } else if (kind == "K1") {
    out.M = ops.K1(eye(n));
  } else if (kind == "K2n") {
    out.M = ops.K2n(eye(3 * n));
  } else if (kind == "K2t") {
    out.M = ops.K2t(eye(3 * n));
  } else if (kind == "K3") {
    out.M = ops.K3(eye(3 * n));
  } else if (kind == "K4") {
    out.M = ops.K4(eye(3 * n));
    // one-sided n x curl S: +-1/2 on the tangent part
    if (side != 0) out.M += 0.5 * side * tangential(ops.surface(), eye(3 * n));
  } else {
    throw DomainError("unknown operator kind " + kind);
  }
  return out;
}

DiscretizedOperator build_single_layer(const BoundaryOps& ops) { return build_operator(ops, "S", 0); }

DiscretizedOperator build_single_layer_offsurface(const Surface& s, cplx k, const std::vector<Vec3>& targets,
                                                  int upsample) {
  auto fine = s.refined(upsample);
  const int nf = fine->size();
  const Eigen::Index P = Eigen::Index(targets.size());
  RMatrix gr(nf, P), gi(nf, P);
  for (Eigen::Index p = 0; p < P; ++p)
    for (int i = 0; i < nf; ++i) {
      cplx g = kernel_gk(targets[p], fine->points()[i], k) * fine->weights()(i);
      gr(i, p) = g.real();
      gi(i, p) = g.imag();
    }
  RMatrix cr = s.upsample_adjoint(gr, upsample), ci = s.upsample_adjoint(gi, upsample);
  DiscretizedOperator out{CMatrix(P, s.size()), k, 0, "S_off"};
  out.M.real() = cr.transpose();
  out.M.imag() = ci.transpose();
  return out;
}

void write_matrix(const std::string& path, const DiscretizedOperator& op) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DomainError("cannot open " + path + " for writing");
  const char magic[8] = {'D', 'B', 'Y', 'E', 'M', 'A', 'T', '1'};
  std::int64_t rows = op.M.rows(), cols = op.M.cols();
  double kr = op.k.real(), ki = op.k.imag();
  std::int32_t side = op.side;
  char kind[16] = {};
  std::strncpy(kind, op.kind.c_str(), sizeof(kind) - 1);
  f.write(magic, 8);
  f.write(reinterpret_cast<const char*>(&rows), 8);
  f.write(reinterpret_cast<const char*>(&cols), 8);
  f.write(reinterpret_cast<const char*>(&kr), 8);
  f.write(reinterpret_cast<const char*>(&ki), 8);
  f.write(reinterpret_cast<const char*>(&side), 4);
  f.write(kind, 16);
  f.write(reinterpret_cast<const char*>(op.M.data()), std::streamsize(sizeof(cplx) * op.M.size()));
}

DiscretizedOperator read_matrix(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DomainError("cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (std::memcmp(magic, "DBYEMAT1", 8) != 0) throw DomainError(path + ": not a matrix dump");
  std::int64_t rows, cols;
  double kr, ki;
  std::int32_t side;
  char kind[16];
  f.read(reinterpret_cast<char*>(&rows), 8);
  f.read(reinterpret_cast<char*>(&cols), 8);
  f.read(reinterpret_cast<char*>(&kr), 8);
  f.read(reinterpret_cast<char*>(&ki), 8);
  f.read(reinterpret_cast<char*>(&side), 4);
  f.read(kind, 16);
  kind[15] = 0;
  DiscretizedOperator op{CMatrix(rows, cols), cplx(kr, ki), side, kind};
  f.read(reinterpret_cast<char*>(op.M.data()), std::streamsize(sizeof(cplx) * op.M.size()));
  if (!f) throw DomainError(path + ": truncated matrix dump");
  return op;
}

// ---------------------------------------------------------------- off-surface fields

FieldEvaluator::FieldEvaluator(const PotentialSet& p, int upsample, double cutoff_factor, const QuadOptions& opt)
    : coarse_(p.surface), fine_(p.surface->refined(upsample)), k_(p.k), opt_(opt) {
  const Surface& s = *coarse_;
  const int n = s.size();
  auto fix = [&](const CVector& v, int per) { return v.size() ? v : CVector(CVector::Zero(per * n)); };
  CVector r = fix(p.r, 1), q = fix(p.q, 1), j = fix(p.j, 3), m = fix(p.m, 3);
  if (r.size() != n || q.size() != n || j.size() != 3 * n || m.size() != 3 * n)
    throw DomainError("PotentialSet: density sizes do not match the grid");
  coarse_dens_.resize(n, 8);
  coarse_dens_.col(0) = r;
  coarse_dens_.col(1) = q;
  for (int a = 0; a < 3; ++a) {
    coarse_dens_.col(2 + a) = j.segment(a * n, n);
    coarse_dens_.col(5 + a) = m.segment(a * n, n);
  }
  dens_ = surf::cupsample(s, coarse_dens_, upsample);
  dens_ = dens_.array().colwise() * fine_->weights().array().cast<cplx>();
  cutoff_ = cutoff_factor * s.spacing();
  if (const auto* T = surf::as_torus(s)) {
    as_ = std::min(opt_.patch_cells * 2.0 * PI / T->ns(), opt_.max_patch);
    at_ = std::min(opt_.patch_cells * 2.0 * PI / T->nt(), opt_.max_patch);
    near_ = 0.5 * std::min(as_ * (T->R() - T->r()), at_ * T->r());
  }
  if (const auto* S = surf::as_sphere(s)) {
    as_ = std::min(opt_.patch_cells * PI / S->ntheta(), opt_.max_patch);
    near_ = 0.5 * as_;
  }
}

double FieldEvaluator::distance(const Vec3& x) const {
  if (const auto* T = surf::as_torus(*coarse_)) {
    auto st = T->foot_chart(x);
    return (x - T->point_at(st[0], st[1])).norm();
  }
  if (surf::as_sphere(*coarse_)) return std::abs(x.norm() - 1.0);
  double d = 1e300;
  for (const Vec3& y : fine_->points()) d = std::min(d, (x - y).squaredNorm());
  return std::sqrt(d);
}

struct FieldEvaluator::Acc {
  CVec3 A = CVec3::Zero(), Am = CVec3::Zero(), gphi = CVec3::Zero(), gphim = CVec3::Zero();
  CVec3 cA = CVec3::Zero(), cAm = CVec3::Zero();
};

inline void FieldEvaluator::add_source(Acc& acc, const Vec3& x, const Vec3& y, const cplx* d, double w) const {
  Vec3 dx = x - y;
  double dist = dx.norm();
  cplx g, gp;
  green(dist, k_, g, gp);
  g *= w;
  CVec3 gg = (w * gp / dist) * dx.cast<cplx>();
  CVec3 jv(d[2], d[3], d[4]), mv(d[5], d[6], d[7]);
  acc.A += g * jv;
  acc.Am += g * mv;
  acc.gphi += gg * d[0];
  acc.gphim += gg * d[1];
  acc.cA += cross(gg, jv);
  acc.cAm += cross(gg, mv);
}

FieldEH FieldEvaluator::operator()(const Vec3& x) const {
  double dist = distance(x);
  if (dist < cutoff_)
    throw NearSurfaceError("evaluation point at distance " + std::to_string(dist) + " is inside the cutoff " +
                               std::to_string(cutoff_),
                           dist);
  Acc acc;
  const auto* T = surf::as_torus(*coarse_);
  const auto* Sp = surf::as_sphere(*coarse_);
  const bool near = (T || Sp) && dist < near_;
  std::array<double, 2> c0{0.0, 0.0};
  Vec3 x0 = Vec3::UnitZ();
  if (near && T) c0 = T->foot_chart(x);
  if (near && Sp && x.norm() > 0.0) x0 = x.normalized();
  // patch coordinate in [0, 1) of a fine node, >= 1 outside the patch
  auto patch_u = [&](int i) {
    if (T) {
      const auto& uv = fine_->chart(i);
      return std::hypot(wrap(uv[0] - c0[0]) / as_, wrap(uv[1] - c0[1]) / at_);
    }
    return std::acos(std::clamp(fine_->points()[i].dot(x0), -1.0, 1.0)) / as_;
  };
  const auto& ys = fine_->points();
  Eigen::Matrix<cplx, 8, 1> dv;
  for (size_t i = 0; i < ys.size(); ++i) {
    double w = near ? 1.0 - bump(patch_u(int(i))) : 1.0;
    if (w <= 0.0) continue;
    for (int c = 0; c < 8; ++c) dv(c) = dens_(Eigen::Index(i), c);
    add_source(acc, x, ys[i], dv.data(), w);
  }
  if (near) {
    // radial panels graded towards the foot point
    const double lmin = T ? std::min(as_ * (T->R() - T->r()), at_ * T->r()) : as_;
    std::vector<double> br{0.0};
    for (double b = std::max(dist / lmin, 1e-6); b < 0.5; b *= 2.0) br.push_back(b);
    br.push_back(1.0);
    const int per = 12, na = opt_.n_angular;
    std::vector<double> rx, rw;
    for (size_t pnl = 0; pnl + 1 < br.size(); ++pnl) {
      quad::Rule gl = quad::gauss_legendre(per, br[pnl], br[pnl + 1]);
      rx.insert(rx.end(), gl.x.begin(), gl.x.end());
      rw.insert(rw.end(), gl.w.begin(), gl.w.end());
    }
    const int Q = int(rx.size()) * na;
    std::vector<Vec3> pts(Q);
    std::vector<double> wq(Q);
    CMatrix vals(Q, 8);
    if (T) {
      const int ns = T->ns(), nt = T->nt();
      RMatrix Ws(Q, ns), Wt(Q, nt);
      for (size_t ia = 0; ia < rx.size(); ++ia)
        for (int ib = 0; ib < na; ++ib) {
          int q = int(ia) * na + ib;
          double th = 2.0 * PI * ib / na;
          double s = c0[0] + as_ * rx[ia] * std::cos(th), t = c0[1] + at_ * rx[ia] * std::sin(th);
          pts[q] = T->point_at(s, t);
          wq[q] = bump(rx[ia]) * (T->R() + T->r() * std::cos(t)) * T->r() * as_ * at_ * rx[ia] * rw[ia] *
                  (2.0 * PI / na);
          Ws.row(q) = surf::TorusSurface::dirichlet_weights(ns, s).transpose();
          Wt.row(q) = surf::TorusSurface::dirichlet_weights(nt, t).transpose();
        }
      for (int c = 0; c < 8; ++c) {
        CMatrix F = Eigen::Map<const CMatrix>(coarse_dens_.col(c).data(), ns, nt);
        RMatrix Fr = F.real(), Fi = F.imag();
        RMatrix tr = Ws * Fr, ti = Ws * Fi;
        RVector vr = (tr.array() * Wt.array()).rowwise().sum(), vi = (ti.array() * Wt.array()).rowwise().sum();
        for (int q = 0; q < Q; ++q) vals(q, c) = cplx(vr(q), vi(q));
      }
    } else {
      // geodesic polar coordinates about x0
      Vec3 e1 = std::abs(x0(2)) < 0.9 ? Vec3::UnitZ().cross(x0).normalized() : Vec3::UnitX().cross(x0).normalized();
      Vec3 e2 = x0.cross(e1);
      std::vector<std::array<double, 2>> uv(Q);
      for (size_t ia = 0; ia < rx.size(); ++ia)
        for (int ib = 0; ib < na; ++ib) {
          int q = int(ia) * na + ib;
          double th = 2.0 * PI * ib / na, rh = as_ * rx[ia];
          Vec3 y = std::cos(rh) * x0 + std::sin(rh) * (std::cos(th) * e1 + std::sin(th) * e2);
          pts[q] = y;
          wq[q] = bump(rx[ia]) * std::sin(rh) * as_ * rw[ia] * (2.0 * PI / na);
          double ph = std::atan2(y(1), y(0));
          uv[q] = {std::acos(std::clamp(y(2), -1.0, 1.0)), ph < 0 ? ph + 2.0 * PI : ph};
        }
      vals = surf::cinterpolate_at(*coarse_, uv, coarse_dens_);
    }
    for (int q = 0; q < Q; ++q) {
      if (wq[q] == 0.0) continue;
      for (int c = 0; c < 8; ++c) dv(c) = vals(q, c);
      add_source(acc, x, pts[q], dv.data(), wq[q]);
    }
  }
  const cplx ik = I * k_;
  return {ik * acc.A - acc.gphi - acc.cAm, acc.cA + ik * acc.Am - acc.gphim};
}

std::vector<FieldEH> FieldEvaluator::eval(const std::vector<Vec3>& xs) const {
  std::vector<FieldEH> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back((*this)(x));
  return out;
}

namespace {
cplx neville_at_zero(const std::vector<double>& x, std::vector<cplx> y) {
  const size_t n = x.size();
  for (size_t m = 1; m < n; ++m)
    for (size_t i = 0; i + m < n; ++i) y[i] = (x[i + m] * y[i] - x[i] * y[i + 1]) / (x[i + m] - x[i]);
  return y[0];
}
}  // namespace

JumpResult jump_test(const PotentialSet& p, const std::vector<double>& eps, int nsamples, int upsample,
                     unsigned seed) {
  if (eps.size() < 2) throw DomainError("jump_test needs at least two offsets");
  const Surface& s = *p.surface;
  const int n = s.size();
  FieldEvaluator ev(p, upsample, 0.0);
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  double sr = p.r.cwiseAbs().maxCoeff(), sq = p.q.cwiseAbs().maxCoeff();
  double sj = p.j.cwiseAbs().maxCoeff(), sm = p.m.cwiseAbs().maxCoeff();
  JumpResult res;
  res.eps = eps;
  res.samples = nsamples;
  for (int smp = 0; smp < nsamples; ++smp) {
    int i = pick(rng);
    const Vec3 x = s.points()[i], nn = s.normals()[i];
    const CVec3 nc = nn.cast<cplx>();
    // 0: n.[E], 1: n.[H], 2-4: n x [E], 5-7: n x [H]
    std::vector<std::vector<cplx>> seq(8, std::vector<cplx>(eps.size()));
    for (size_t e = 0; e < eps.size(); ++e) {
      FieldEH a = ev(x + eps[e] * nn), b = ev(x - eps[e] * nn);
      CVec3 dE = a.E - b.E, dH = a.H - b.H;
      seq[0][e] = bdot(nc, dE);
      seq[1][e] = bdot(nc, dH);
      CVec3 tE = cross(nc, dE), tH = cross(nc, dH);
      for (int c = 0; c < 3; ++c) {
        seq[2 + c][e] = tE(c);
        seq[5 + c][e] = tH(c);
      }
    }
    res.nE = std::max(res.nE, std::abs(neville_at_zero(eps, seq[0]) - p.r(i)) / sr);
    res.nH = std::max(res.nH, std::abs(neville_at_zero(eps, seq[1]) - p.q(i)) / sq);
    for (int c = 0; c < 3; ++c) {
      res.tE = std::max(res.tE, std::abs(neville_at_zero(eps, seq[2 + c]) + p.m(c * n + i)) / sm);
      res.tH = std::max(res.tH, std::abs(neville_at_zero(eps, seq[5 + c]) - p.j(c * n + i)) / sj);
    }
  }
  return res;
}

}  // namespace debye::lp
