#include "debye/solver.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <thread>

#include "debye/sphere_ops.hpp"

namespace debye::solve {

using surf::Surface;

int thread_count() {
  if (const char* e = std::getenv("DEBYE_BIE_THREADS")) {
    int n = std::atoi(e);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

constexpr Eigen::Index kChunk = 192;

// Runs body(c0, c1) over column chunks of [0, n), on up to thread_count() threads.
template <class F>
void for_column_chunks(Eigen::Index n, F body) {
  const Eigen::Index nchunks = (n + kChunk - 1) / kChunk;
  const int nt = int(std::min<Eigen::Index>(thread_count(), nchunks));
  auto run = [&](int tid) {
    for (Eigen::Index ch = tid; ch < nchunks; ch += nt) body(ch * kChunk, std::min(n, (ch + 1) * kChunk));
  };
  if (nt <= 1) {
    run(0);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < nt; ++t) pool.emplace_back(run, t);
  for (auto& t : pool) t.join();
}

// Identity columns [c0, c1) of the stacked [r; q] space.
void unit_columns(int n, Eigen::Index c0, Eigen::Index c1, CMatrix& R, CMatrix& Q) {
  R = CMatrix::Zero(n, c1 - c0);
  Q = CMatrix::Zero(n, c1 - c0);
  for (Eigen::Index c = c0; c < c1; ++c) {
    if (c < n)
      R(c, c - c0) = 1.0;
    else
      Q(c - n, c - c0) = 1.0;
  }
}

CMatrix empty_harmonic(const Surface& s, Eigen::Index cols) { return CMatrix::Zero(2 * s.genus(), cols); }

double vmax(const CMatrix& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Harmonic coefficients of a tangent field in the orthonormal basis.
CVector harmonic_coeffs(const Surface& s, const CVector& v) {
  const RMatrix& H = s.harmonic_basis();
  CVector out(H.cols());
  for (Eigen::Index l = 0; l < H.cols(); ++l) out(l) = s.inner_tangent(CVector(H.col(l).cast<cplx>()), v);
  return out;
}

// Tangential E from a trace n x E.
CMatrix tangential_E(const Surface& s, const CMatrix& nxE) { return -surf::crot90(s, nxE); }

double rel_error(double num, double den) { return den > 0.0 ? num / den : num; }

}  // namespace

// ---------------------------------------------------------------- sources and traces

surf::CurrentBlocks source_currents(const Surface& s, const CMatrix& R, const CMatrix& Q, const CMatrix& C, cplx k) {
  surf::CurrentBlocks b = surf::currents_from_debye_block(s, R, Q, k);
  if (C.size() && C.cwiseAbs().maxCoeff() > 0.0) {
    if (C.rows() != 2 * s.genus() || C.cols() != R.cols())
      throw DomainError("source_currents: harmonic coefficient block has the wrong shape");
    CMatrix HC = s.harmonic_basis().cast<cplx>() * C;
    b.J += HC;
    b.M += surf::crot90(s, HC);
  }
  return b;
}

lp::Traces source_traces(const lp::BoundaryOps& ops, const CMatrix& R, const CMatrix& Q, const CMatrix& C, int side,
                         bool normal, bool tangential) {
  surf::CurrentBlocks b = source_currents(ops.surface(), R, Q, C, ops.k());
  return lp::traces(ops, R, Q, b.J, b.M, side, normal, tangential);
}

lp::Traces source_traces(const lp::BoundaryOps& ops, const DebyeSources& src, int side) {
  return source_traces(ops, src.r, src.q, src.c.size() ? CMatrix(src.c) : empty_harmonic(ops.surface(), 1), side);
}

lp::PotentialSet potentials(const lp::BoundaryOps& ops, const DebyeSources& src) {
  const Surface& s = ops.surface();
  surf::CurrentBlocks b = source_currents(s, src.r, src.q, src.c.size() ? CMatrix(src.c) : empty_harmonic(s, 1),
                                          ops.k());
  return {ops.surface_ptr(), ops.k(), src.r, src.q, b.J.col(0), b.M.col(0)};
}

// ---------------------------------------------------------------- assembly

CMatrix assemble_N(const lp::BoundaryOps& ops, int side) {
  const Surface& s = ops.surface();
  const int n = s.size();
  CMatrix A(2 * n, 2 * n);
  for_column_chunks(2 * n, [&](Eigen::Index c0, Eigen::Index c1) {
    CMatrix R, Q;
    unit_columns(n, c0, c1, R, Q);
    lp::Traces t = source_traces(ops, R, Q, empty_harmonic(s, c1 - c0), side, true, false);
    A.block(0, c0, n, c1 - c0) = t.nE;
    A.block(n, c0, n, c1 - c0) = t.nH;
  });
  return A;
}

CMatrix assemble_T(const lp::BoundaryOps& ops, int side) {
  const Surface& s = ops.surface();
  const int n = s.size();
  CMatrix A(6 * n, 2 * n);
  for_column_chunks(2 * n, [&](Eigen::Index c0, Eigen::Index c1) {
    CMatrix R, Q;
    unit_columns(n, c0, c1, R, Q);
    lp::Traces t = source_traces(ops, R, Q, empty_harmonic(s, c1 - c0), side, false, true);
    A.block(0, c0, 3 * n, c1 - c0) = t.tE;
    A.block(3 * n, c0, 3 * n, c1 - c0) = t.tH;
  });
  return A;
}

CMatrix assemble_hybrid_Q(const lp::BoundaryOps& ops, const lp::BoundaryOps& g0, int side) {
  const Surface& s = ops.surface();
  const int n = s.size();
  CMatrix A(2 * n, 2 * n);
  for_column_chunks(2 * n, [&](Eigen::Index c0, Eigen::Index c1) {
    CMatrix R, Q;
    unit_columns(n, c0, c1, R, Q);
    lp::Traces t = source_traces(ops, R, Q, empty_harmonic(s, c1 - c0), side, true, true);
    A.block(0, c0, n, c1 - c0) = g0.S(surf::cdiv(s, surf::crot90(s, t.tE)));
    A.block(n, c0, n, c1 - c0) = t.nH;
  });
  return A;
}

CMatrix border_mean_zero(const Surface& s, const CMatrix& A, const CVector& b1, const CVector& b2) {
  const int n = s.size();
  if (A.rows() != 2 * n || A.cols() != 2 * n) throw DomainError("border_mean_zero: operator is not 2N x 2N");
  CMatrix B = CMatrix::Zero(2 * n + 2, 2 * n + 2);
  B.topLeftCorner(2 * n, 2 * n) = A;
  CVector w = (s.weights() / s.weights().norm()).cast<cplx>();
  B.block(0, 2 * n, n, 1) = b1 / b1.norm();
  B.block(n, 2 * n + 1, n, 1) = b2 / b2.norm();
  B.block(2 * n, 0, 1, n) = w.transpose();
  B.block(2 * n + 1, n, 1, n) = w.transpose();
  return B;
}

// ---------------------------------------------------------------- reduced systems

BlockSystem::BlockSystem(const Surface& s, const BlockOp& op, const CVector& b1, const CVector& b2, double max_cond,
                         const std::string& name)
    : n_(s.size()) {
  if (const auto* sp = surf::as_sphere(s)) {
    const int K = sp->ncoeffs() - 1;
    RMatrix E = RMatrix::Zero(sp->ncoeffs(), K);
    E.bottomRows(K) = RMatrix::Identity(K, K);
    B_ = sp->synthesis(E).cast<cplx>();
    P_ = sp->analysis(RMatrix::Identity(n_, n_)).bottomRows(K).cast<cplx>();
  } else if (const auto* T = surf::as_torus(s)) {
    // trigonometric modes without the Nyquist rows, which spectral
    // differentiation annihilates
    const int ms = T->ns() / 2 - 1, mt = T->nt() / 2 - 1;
    B_.resize(n_, (2 * ms + 1) * (2 * mt + 1));
    Eigen::Index col = 0;
    for (int a = -ms; a <= ms; ++a)
      for (int b = -mt; b <= mt; ++b, ++col)
        for (int i = 0; i < n_; ++i) B_(i, col) = std::polar(1.0, a * s.chart(i)[0] + b * s.chart(i)[1]);
    P_ = B_.adjoint() / double(n_);
    bordered_ = true;
  } else {
    throw DomainError("BlockSystem: unsupported surface kind " + s.kind());
  }
  dim_ = B_.cols();
  const Eigen::Index tot = 2 * dim_ + (bordered_ ? 2 : 0);
  CMatrix A = CMatrix::Zero(tot, tot);
  for_column_chunks(2 * dim_, [&](Eigen::Index c0, Eigen::Index c1) {
    CMatrix R = CMatrix::Zero(n_, c1 - c0), Q = R;
    for (Eigen::Index c = c0; c < c1; ++c) {
      if (c < dim_)
        R.col(c - c0) = B_.col(c);
      else
        Q.col(c - c0) = B_.col(c - dim_);
    }
    auto rows = op(R, Q);
    A.block(0, c0, dim_, c1 - c0) = reduce(rows.first);
    A.block(dim_, c0, dim_, c1 - c0) = reduce(rows.second);
  });
  if (bordered_) {
    CVector wB = (s.weights() / s.weights().norm()).cast<cplx>().transpose() * B_;
    CVector p1 = reduce(b1), p2 = reduce(b2);
    A.block(0, 2 * dim_, dim_, 1) = p1 / p1.norm();
    A.block(dim_, 2 * dim_ + 1, dim_, 1) = p2 / p2.norm();
    A.block(2 * dim_, 0, 1, dim_) = wB.transpose();
    A.block(2 * dim_ + 1, dim_, 1, dim_) = wB.transpose();
  }
  sys_ = std::make_unique<DenseSolver>(std::move(A));
  sys_->check_condition(max_cond, name);
}

CMatrix BlockSystem::reduce(const CMatrix& v) const { return P_ * v; }

std::pair<CVector, CVector> BlockSystem::solve(const CVector& f1, const CVector& f2, double* res) const {
  CVector rhs = CVector::Zero(sys_->size());
  rhs.head(dim_) = reduce(f1);
  rhs.segment(dim_, dim_) = reduce(f2);
  CVector x = sys_->solve(rhs, res);
  return {B_ * x.head(dim_), B_ * x.segment(dim_, dim_)};
}

// ---------------------------------------------------------------- dense solver

DenseSolver::DenseSolver(CMatrix A, unsigned seed) : A_(std::move(A)), lu_(A_) {
  const Eigen::Index n = A_.rows();
  std::mt19937 rng(seed);
  std::normal_distribution<double> g;
  auto start = [&] {
    CVector x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = cplx(g(rng), g(rng));
    return CVector(x / x.norm());
  };
  double big = 0.0, inv = 0.0;
  CVector x = start();
  for (int it = 0; it < 12; ++it) {
    CVector y = A_.adjoint() * (A_ * x);
    big = std::sqrt(y.norm());
    if (y.norm() == 0.0) break;
    x = y / y.norm();
  }
  x = start();
  for (int it = 0; it < 12; ++it) {
    CVector y = lu_.solve(CVector(lu_.adjoint().solve(x)));
    inv = std::sqrt(y.norm());
    if (!std::isfinite(inv)) break;
    x = y / y.norm();
  }
  cond_ = std::isfinite(inv) ? big * inv : std::numeric_limits<double>::infinity();
}

void DenseSolver::check_condition(double max_cond, const std::string& what) const {
  if (!(cond_ <= max_cond))
    throw ConditioningError(what + ": condition estimate " + std::to_string(cond_) + " exceeds " +
                                std::to_string(max_cond) + "; k may be close to an exceptional value",
                            cond_);
}

CVector DenseSolver::solve(const CVector& b, double* rel_residual) const {
  CVector x = lu_.solve(b);
  const double nb = b.norm();
  double res = 0.0;
  for (int it = 0; it < 3; ++it) {
    CVector r = b - A_ * x;
    res = r.norm();
    if (res <= 1e-15 * nb) break;
    x += lu_.solve(r);
  }
  res = (b - A_ * x).norm();
  if (rel_residual) *rel_residual = rel_error(res, nb);
  return x;
}

CMatrix DenseSolver::solve(const CMatrix& B) const {
  CMatrix X(B.rows(), B.cols());
  for (Eigen::Index c = 0; c < B.cols(); ++c) X.col(c) = solve(CVector(B.col(c)));
  return X;
}

// ---------------------------------------------------------------- normal problem

namespace {

std::unique_ptr<BlockSystem> normal_system(const lp::BoundaryOps& ops, double max_cond) {
  const Surface& s = ops.surface();
  CVector one = CVector::Ones(s.size());
  BlockOp op = [&](const CMatrix& R, const CMatrix& Q) {
    lp::Traces t = source_traces(ops, R, Q, empty_harmonic(s, R.cols()), +1, true, false);
    return std::make_pair(t.nE, t.nH);
  };
  return std::make_unique<BlockSystem>(s, op, one, one, max_cond, "normal system N+(k)");
}

CVector checked_mean_zero(const Surface& s, const CVector& f, const char* name) {
  if (f.size() != s.size()) throw DomainError(std::string(name) + ": size does not match the grid");
  if (!surf::is_mean_zero(s, f))
    throw MeanZeroError(std::string(name) + " must have mean zero on every boundary component");
  return surf::mean_zero_project(s, f);
}

DebyeSources solve_normal_with(const lp::BoundaryOps& ops, const BlockSystem& S, const CVector& f, const CVector& h,
                               SolveInfo* info) {
  const Surface& s = ops.surface();
  auto x = S.solve(checked_mean_zero(s, f, "f"), checked_mean_zero(s, h, "h"), info ? &info->system_residual : nullptr);
  if (info) info->condition_estimate = S.dense().condition_estimate();
  return {x.first, x.second, CVector::Zero(2 * s.genus())};
}

}  // namespace

DebyeSources solve_normal_bvp(const lp::BoundaryOps& ops, const CVector& f, const CVector& h, SolveInfo* info,
                              double max_cond) {
  auto S = normal_system(ops, max_cond);
  return solve_normal_with(ops, *S, f, h, info);
}

// ---------------------------------------------------------------- incident fields

FieldFn plane_wave(cplx k, const Vec3& direction, const CVec3& polarization) {
  Vec3 d = direction.normalized();
  CVec3 dc = d.cast<cplx>();
  CVec3 p = polarization - bdot(dc, polarization) * dc;
  CVec3 h = cross(dc, p);
  return [k, d, p, h](const Vec3& x) {
    cplx e = std::exp(I * k * d.dot(x));
    return FieldEH{e * p, e * h};
  };
}

FieldFn electric_dipole(cplx k, const Vec3& x0, const CVec3& moment) {
  if (k == 0.0) throw DomainError("electric_dipole: k must be nonzero");
  return [k, x0, moment](const Vec3& x) {
    Vec3 rv = x - x0;
    double d = rv.norm();
    if (d == 0.0) throw NearSurfaceError("electric_dipole: evaluation at the source point", 0.0);
    Vec3 u = rv / d;
    cplx e = std::exp(I * k * d) / (4.0 * PI);
    cplx g = e / d;
    cplx g1 = e * (I * k * d - 1.0) / (d * d);
    cplx g2 = e * ((I * k) * (I * k) / d - 2.0 * I * k / (d * d) + 2.0 / (d * d * d));
    CVec3 uc = u.cast<cplx>();
    // grad g x p, and (i/k)(Hess g p + k^2 g p)
    CVec3 H = cross(g1 * uc, moment);
    cplx up = bdot(uc, moment);
    CVec3 hess = g2 * up * uc + (g1 / d) * (moment - up * uc);
    CVec3 E = (I / k) * (hess + k * k * g * moment);
    return FieldEH{E, H};
  };
}

// ---------------------------------------------------------------- PEC

HybridData hybrid_data(const lp::BoundaryOps& g0, const CMatrix& Etan, const CVector& Hn) {
  const Surface& s = g0.surface();
  CMatrix nnE = surf::crot90(s, surf::crot90(s, Etan));
  return {g0.S(surf::cdiv(s, nnE)).col(0), Hn};
}

namespace {

struct GridIncident {
  CVector Etan, Hn;
};

GridIncident sample_incident(const Surface& s, const FieldFn& f) {
  const int n = s.size();
  GridIncident g{CVector(3 * n), CVector(n)};
  for (int i = 0; i < n; ++i) {
    FieldEH v = f(s.points()[i]);
    CVec3 nc = s.normals()[i].cast<cplx>();
    CVec3 t = v.E - bdot(nc, v.E) * nc;
    for (int a = 0; a < 3; ++a) g.Etan(a * n + i) = t(a);
    g.Hn(i) = bdot(nc, v.H);
  }
  return g;
}

DebyeSources add(const DebyeSources& a, const DebyeSources& b, cplx sb = 1.0) {
  DebyeSources out{a.r + sb * b.r, a.q + sb * b.q, a.c};
  if (b.c.size()) out.c = (a.c.size() ? a.c : CVector(CVector::Zero(b.c.size()))) + sb * b.c;
  return out;
}

}  // namespace

PecSolver::PecSolver(const lp::BoundaryOps& ops, const lp::BoundaryOps& g0, double max_cond)
    : ops_(ops), g0_(g0), max_cond_(max_cond) {
  if (g0.k() != 0.0) throw DomainError("PecSolver: g0 must be built at k = 0");
  if (&ops.surface() != &g0.surface() && ops.surface().size() != g0.surface().size())
    throw DomainError("PecSolver: operators live on different grids");
  if (ops.k() == 0.0) throw DomainError("PecSolver: k = 0 is handled by the static solves");
  const Surface& s = ops.surface();
  CVector one = CVector::Ones(s.size());
  CVector g0one = g0.S(one).col(0);
  BlockOp op = [&](const CMatrix& R, const CMatrix& Q) {
    lp::Traces t = source_traces(ops, R, Q, empty_harmonic(s, R.cols()), +1, true, true);
    return std::make_pair(CMatrix(g0.S(surf::cdiv(s, surf::crot90(s, t.tE)))), t.nH);
  };
  Q_ = std::make_unique<BlockSystem>(s, op, g0one, one, max_cond, "hybrid system Q+(k)");
}

ScatterSolution PecSolver::finish(DebyeSources src) const {
  const Surface& s = ops_.surface();
  if (!src.c.size()) src.c = CVector::Zero(2 * s.genus());
  surf::CurrentBlocks b = source_currents(s, src.r, src.q, CMatrix(src.c), ops_.k());
  ScatterSolution out;
  out.surface = ops_.surface_ptr();
  out.k = ops_.k();
  out.sources = std::move(src);
  out.currents = {b.J.col(0), b.M.col(0)};
  out.info.condition_estimate = Q_->dense().condition_estimate();
  return out;
}

ScatterSolution PecSolver::solve_traces(const CVector& Etan, const CVector& Hn) const {
  const Surface& s = ops_.surface();
  HybridData d = hybrid_data(g0_, Etan, Hn);
  double res = 0.0;
  auto x = Q_->solve(-d.f, -d.h, &res);
  DebyeSources src{x.first, x.second, CVector::Zero(2 * s.genus())};
  if (s.genus() > 0) {
    // the hybrid rows fix div and curl of the tangential trace; the harmonic
    // part of the total trace is removed by a k-Neumann combination
    lp::Traces t = source_traces(ops_, src, +1);
    CVector Etot = tangential_E(s, t.tE).col(0) + Etan;
    CVector hc = harmonic_coeffs(s, Etot);
    CVector psi = -(s.harmonic_basis().cast<cplx>() * hc);
    HarmonicTangentialSolution corr = harmonic_tangential(psi);
    src = add(src, corr.solution.sources);
    res = std::max(res, corr.solution.info.system_residual);
  }
  ScatterSolution out = finish(std::move(src));
  out.info.system_residual = res;
  return out;
}

ScatterSolution PecSolver::solve(const FieldFn& incident) const {
  GridIncident g = sample_incident(ops_.surface(), incident);
  ScatterSolution out = solve_traces(g.Etan, g.Hn);
  out.incident = incident;
  return out;
}

ScatterSolution solve_pec(const lp::BoundaryOps& ops, const lp::BoundaryOps& g0, const FieldFn& incident) {
  return PecSolver(ops, g0).solve(incident);
}

PecResidual pec_residual(const lp::BoundaryOps& ops, const ScatterSolution& sol, int npoints, unsigned seed) {
  const Surface& s = ops.surface();
  const int n = s.size();
  lp::Traces t = source_traces(ops, sol.sources, +1);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::array<double, 2>> uv(npoints);
  for (auto& p : uv) {
    if (surf::as_sphere(s))
      p = {std::acos(1.0 - 2.0 * u(rng)), 2.0 * PI * u(rng)};
    else
      p = {2.0 * PI * u(rng), 2.0 * PI * u(rng)};
  }
  CMatrix vals(n, 4);
  for (int a = 0; a < 3; ++a) vals.col(a) = t.tE.col(0).segment(a * n, n);
  vals.col(3) = t.nH.col(0);
  CMatrix iv = surf::cinterpolate_at(s, uv, vals);
  double eres = 0.0, hres = 0.0, escale = 0.0, hscale = 0.0;
  for (int p = 0; p < npoints; ++p) {
    Vec3 x = s.point_at(uv[p][0], uv[p][1]), nn = s.normal_at(uv[p][0], uv[p][1]);
    CVec3 nc = nn.cast<cplx>();
    FieldEH in = sol.incident ? sol.incident(x) : FieldEH{CVec3::Zero(), CVec3::Zero()};
    CVec3 tot = CVec3(iv(p, 0), iv(p, 1), iv(p, 2)) + cross(nc, in.E);
    eres = std::max(eres, tot.norm());
    hres = std::max(hres, std::abs(iv(p, 3) + bdot(nc, in.H)));
    escale = std::max(escale, in.E.norm());
    hscale = std::max(hscale, in.H.norm());
  }
  return {rel_error(eres, escale), rel_error(hres, hscale)};
}

// ---------------------------------------------------------------- k-Neumann fields

namespace {

KNeumannSet k_neumann_with(const lp::BoundaryOps& ops, const BlockSystem& Nsys) {
  const Surface& s = ops.surface();
  const int n = s.size(), g2 = 2 * s.genus();
  KNeumannSet out;
  out.info.condition_estimate = Nsys.dense().condition_estimate();
  if (g2 == 0) return out;
  CMatrix Z = CMatrix::Zero(n, g2);
  lp::Traces t = source_traces(ops, Z, Z, CMatrix::Identity(g2, g2), +1, true, false);
  CMatrix T(3 * n, g2);
  for (int l = 0; l < g2; ++l) {
    double res = 0.0;
    auto x = Nsys.solve(-t.nE.col(l), -t.nH.col(l), &res);
    out.info.system_residual = std::max(out.info.system_residual, res);
    DebyeSources src{x.first, x.second, CVector::Unit(g2, l)};
    lp::Traces tl = source_traces(ops, src, +1);
    double nres = std::max(vmax(tl.nE), vmax(tl.nH)) / vmax(tl.tE);
    T.col(l) = tl.tE.col(0);
    out.fields.push_back({ops.k(), std::move(src), nres});
  }
  CMatrix G = T.adjoint() * s.weights().replicate(3, 1).cast<cplx>().asDiagonal() * T;
  Eigen::JacobiSVD<CMatrix> svd(G);
  const auto& sv = svd.singularValues();
  out.gram_condition = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace

KNeumannSet build_k_neumann(const lp::BoundaryOps& ops, double max_cond) {
  if (ops.surface().genus() == 0) return {};
  if (ops.k() == 0.0) throw DomainError("build_k_neumann: k must be nonzero");
  auto N = normal_system(ops, max_cond);
  return k_neumann_with(ops, *N);
}

Decoupling k_neumann_decoupling(const lp::BoundaryOps& ops, const KNeumannSet& set, const std::vector<Vec3>& points) {
  const int m = int(set.fields.size()), np = int(points.size());
  if (m == 0) return {};
  CMatrix ME(3 * np, m), MH(3 * np, m);
  for (int l = 0; l < m; ++l) {
    lp::FieldEvaluator ev(potentials(ops, set.fields[l].sources));
    for (int p = 0; p < np; ++p) {
      FieldEH f = ev(points[p]);
      ME.col(l).segment<3>(3 * p) = f.E;
      MH.col(l).segment<3>(3 * p) = f.H;
    }
  }
  auto ratio = [](const CMatrix& small, const CMatrix& big) {
    Eigen::JacobiSVD<CMatrix> svd(small, Eigen::ComputeThinV);
    CVector v = svd.matrixV().col(small.cols() - 1);
    return rel_error((small * v).norm(), (big * v).norm());
  };
  return {ratio(MH, ME), ratio(ME, MH)};
}

const KNeumannSet& PecSolver::k_neumann() const {
  std::call_once(kn_once_, [&] {
    if (ops_.surface().genus() == 0) return;
    auto N = normal_system(ops_, max_cond_);
    kn_ = k_neumann_with(ops_, *N);
  });
  return kn_;
}

HarmonicTangentialSolution PecSolver::harmonic_tangential(const CVector& psi) const {
  const Surface& s = ops_.surface();
  const int n = s.size(), g2 = 2 * s.genus();
  if (g2 == 0) throw DomainError("harmonic_tangential: surface has no harmonic fields");
  if (psi.size() != 3 * n) throw DomainError("harmonic_tangential: psi is not a tangent field on this grid");
  const KNeumannSet& kn = k_neumann();
  // For k-Neumann field l: hybrid correction g_l with Q g_l = -(Q1 F_l, 0),
  // then the harmonic part of tangential E of F_l + g_l.
  CMatrix Mh(g2, g2);
  std::vector<DebyeSources> unit(g2);
  double res = kn.info.system_residual;
  for (int l = 0; l < g2; ++l) {
    const DebyeSources& F = kn.fields[l].sources;
    lp::Traces t = source_traces(ops_, F, +1);
    CVector q1 = g0_.S(surf::cdiv(s, surf::crot90(s, t.tE))).col(0);
    double r = 0.0;
    auto x = Q_->solve(-q1, CVector::Zero(n), &r);
    res = std::max(res, r);
    unit[l] = add(F, DebyeSources{x.first, x.second, CVector()});
    lp::Traces tu = source_traces(ops_, unit[l], +1);
    Mh.col(l) = harmonic_coeffs(s, tangential_E(s, tu.tE).col(0));
  }
  Eigen::JacobiSVD<CMatrix> svd(Mh, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  HarmonicTangentialSolution out;
  out.harmonic_map = Mh;
  out.map_condition = sv(g2 - 1) > 0.0 ? sv(0) / sv(g2 - 1) : std::numeric_limits<double>::infinity();
  if (!(out.map_condition < 1e12))
    throw ConditioningError("harmonic_tangential: k-Neumann traces do not span the harmonic fields",
                            out.map_condition);
  CVector alpha = svd.solve(harmonic_coeffs(s, psi));
  DebyeSources src{CVector::Zero(n), CVector::Zero(n), CVector::Zero(g2)};
  for (int l = 0; l < g2; ++l) src = add(src, unit[l], alpha(l));
  out.solution = finish(std::move(src));
  out.solution.info.system_residual = res;
  return out;
}

HarmonicTangentialSolution solve_harmonic_tangential(const lp::BoundaryOps& ops, const lp::BoundaryOps& g0,
                                                     const CVector& psi) {
  return PecSolver(ops, g0).harmonic_tangential(psi);
}

// ---------------------------------------------------------------- static and low frequency

DebyeSources solve_static(const lp::BoundaryOps& g0, const CVector& f, const CVector& h, SolveInfo* info) {
  if (g0.k() != 0.0) throw DomainError("solve_static: operators must be built at k = 0");
  const Surface& s = g0.surface();
  const int n = s.size();
  // n . E+ = r/2 - K0 r with E = -grad S r
  CMatrix A = CMatrix::Zero(n + 1, n + 1);
  A.topLeftCorner(n, n) = -lp::build_operator(g0, "K0", +1).M;
  A.block(0, n, n, 1) = CVector::Ones(n) / std::sqrt(double(n));
  A.block(n, 0, 1, n) = (s.weights() / s.weights().norm()).cast<cplx>().transpose();
  DenseSolver S(std::move(A));
  S.check_condition(1e12, "static system");
  CMatrix B = CMatrix::Zero(n + 1, 2);
  B.col(0).head(n) = checked_mean_zero(s, f, "f");
  B.col(1).head(n) = checked_mean_zero(s, h, "h");
  CMatrix X = S.solve(B);
  if (info) {
    info->condition_estimate = S.condition_estimate();
    info->system_residual = rel_error((B - S.matrix() * X).norm(), B.norm());
  }
  return {X.col(0).head(n), X.col(1).head(n), CVector::Zero(2 * s.genus())};
}

LowFrequencyReport low_frequency_limit_check(const surf::SurfacePtr& s, double k_small, const CVector& f,
                                             const CVector& h, const std::vector<Vec3>& check_points) {
  if (!(k_small > 0.0 && k_small <= 1e-6)) throw DomainError("low_frequency_limit_check: need 0 < k_small <= 1e-6");
  LowFrequencyReport rep;
  rep.k_small = k_small;
  lp::BoundaryOps ops(s, k_small), g0(s, 0.0);
  auto N = normal_system(ops, 1e12);
  DebyeSources dk = solve_normal_with(ops, *N, f, h, nullptr);
  DebyeSources d0 = solve_static(g0, f, h);

  lp::FieldEvaluator evk(potentials(ops, dk));
  lp::FieldEvaluator ev0(lp::PotentialSet{s, 0.0, d0.r, d0.q, {}, {}});
  double diff = 0.0, scale = 0.0;
  for (const Vec3& x : check_points) {
    FieldEH a = evk(x), b = ev0(x);
    diff = std::max({diff, (a.E - b.E).norm(), (a.H - b.H).norm()});
    scale = std::max({scale, b.E.norm(), b.H.norm()});
  }
  rep.field_difference = rel_error(diff, scale);

  lp::PotentialSet pk = potentials(ops, dk);
  rep.current_ratio = rel_error(std::sqrt(std::abs(s->inner_tangent(pk.j, pk.j))),
                                std::sqrt(std::abs(s->inner(dk.r, dk.r))));

  DebyeSources de = solve_normal_with(ops, *N, f, CVector::Zero(s->size()), nullptr);
  lp::FieldEvaluator eve(potentials(ops, de));
  double hm = 0.0, em = 0.0;
  for (const Vec3& x : check_points) {
    FieldEH a = eve(x);
    hm = std::max(hm, a.H.norm());
    em = std::max(em, a.E.norm());
  }
  rep.h_over_e = rel_error(hm, em);

  if (const auto* sp = surf::as_sphere(*s)) {
    for (int l = 1; l <= std::min(10, sp->lmax()); ++l) {
      RVector a = RVector::Zero(sp->ncoeffs());
      a(surf::SphereSurface::coeff_index(l, 0)) = 1.0;
      CVector Y = sp->synthesis(a).cast<cplx>();
      lp::Traces t = source_traces(ops, Y, CVector::Zero(s->size()), empty_harmonic(*s, 1), +1, true, false);
      cplx mn = sphere::multiplier_normal(0.0, l);
      rep.multiplier_error = std::max(rep.multiplier_error, vmax(t.nE - mn * Y) / vmax(Y));
    }
  }
  return rep;
}

// ---------------------------------------------------------------- circulation

Cycle torus_a_cycle(double R, double rho) {
  return {[R, rho](double th) { return Vec3(R + rho * std::cos(th), 0.0, rho * std::sin(th)); },
          [rho](double th) { return Vec3(-rho * std::sin(th), 0.0, rho * std::cos(th)); }};
}

Cycle torus_b_cycle(double rho, double z) {
  return {[rho, z](double th) { return Vec3(rho * std::cos(th), rho * std::sin(th), z); },
          [rho](double th) { return Vec3(-rho * std::sin(th), rho * std::cos(th), 0.0); }};
}

cplx circulation(const FieldFn& field, const Cycle& c, int npoints, bool use_H) {
  cplx sum = 0.0;
  for (int i = 0; i < npoints; ++i) {
    double th = 2.0 * PI * i / npoints;
    FieldEH f = field(c.x(th));
    sum += bdot(use_H ? f.H : f.E, c.dx(th).cast<cplx>());
  }
  return sum * (2.0 * PI / npoints);
}

}  // namespace debye::solve
