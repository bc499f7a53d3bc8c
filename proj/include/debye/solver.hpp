#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "debye/layerpot.hpp"
#include "debye/surface.hpp"
#include "debye/types.hpp"

namespace debye::solve {

// Grid sizes used when none is given: sphere ntheta, torus ns = nt. At the
// torus default a dipole PEC solve takes about a minute on one core.
inline constexpr int kDefaultSphereRes = 24;
inline constexpr int kDefaultTorusRes = 40;

// Threads used for column-parallel assembly: DEBYE_BIE_THREADS if set,
// otherwise the hardware concurrency.
int thread_count();

struct DebyeSources {
  CVector r, q;  // N, mean zero
  CVector c;     // harmonic coefficients, 2g (empty for genus 0)
};

// Currents and exterior/interior traces of the fields generated by column
// blocks of sources. C holds harmonic coefficients (2g x cols, may be empty).
surf::CurrentBlocks source_currents(const surf::Surface& s, const CMatrix& R, const CMatrix& Q, const CMatrix& C,
                                    cplx k);
lp::Traces source_traces(const lp::BoundaryOps& ops, const CMatrix& R, const CMatrix& Q, const CMatrix& C, int side,
                         bool normal = true, bool tangential = true);
lp::Traces source_traces(const lp::BoundaryOps& ops, const DebyeSources& src, int side);
lp::PotentialSet potentials(const lp::BoundaryOps& ops, const DebyeSources& src);

// Dense operators on stacked [r; q] (2N columns). Rows:
//   N: [n.E; n.H]                    2N
//   T: [n x E; n x H]                6N
//   Q: [G0 div(n x (n x E)); n.H]    2N, G0 the k = 0 single layer
CMatrix assemble_N(const lp::BoundaryOps& ops, int side);
CMatrix assemble_T(const lp::BoundaryOps& ops, int side);
CMatrix assemble_hybrid_Q(const lp::BoundaryOps& ops, const lp::BoundaryOps& g0, int side);

// Dense LU with iterative refinement. The condition number (2-norm) is
// estimated by power iteration on A^H A and its inverse.
class DenseSolver {
 public:
  explicit DenseSolver(CMatrix A, unsigned seed = 7);
  // Throws ConditioningError when the estimate exceeds max_cond.
  void check_condition(double max_cond = 1e12, const std::string& what = "linear system") const;
  CVector solve(const CVector& b, double* rel_residual = nullptr) const;
  CMatrix solve(const CMatrix& B) const;
  double condition_estimate() const { return cond_; }
  Eigen::Index size() const { return A_.rows(); }
  const CMatrix& matrix() const { return A_; }

 private:
  CMatrix A_;
  Eigen::PartialPivLU<CMatrix> lu_;
  double cond_ = 0.0;
};

// Mean-zero bordering of a 2N x 2N operator on [r; q]: rows w^T r = 0,
// w^T q = 0 and multiplier columns b1 (first block rows) and b2 (second).
CMatrix border_mean_zero(const surf::Surface& s, const CMatrix& A, const CVector& b1, const CVector& b2);

// Row blocks (row1, row2) of an operator applied to source columns (R, Q).
using BlockOp = std::function<std::pair<CMatrix, CMatrix>(const CMatrix& R, const CMatrix& Q)>;

// Square system on (r, q) in a band-limited basis r = B a, tested by P with
// P B = I. Sphere: real harmonics of degree 1..lmax (mean zero by
// construction). Torus: trigonometric modes below Nyquist, bordered with the
// mean-zero rows and multiplier columns P b1, P b2.
class BlockSystem {
 public:
  BlockSystem(const surf::Surface& s, const BlockOp& op, const CVector& b1, const CVector& b2, double max_cond,
              const std::string& name);
  const DenseSolver& dense() const { return *sys_; }
  Eigen::Index basis_size() const { return dim_; }
  std::pair<CVector, CVector> solve(const CVector& f1, const CVector& f2, double* rel_residual = nullptr) const;

 private:
  CMatrix reduce(const CMatrix& v) const;

  int n_;
  Eigen::Index dim_ = 0;
  bool bordered_ = false;
  CMatrix B_, P_;
  std::unique_ptr<DenseSolver> sys_;
};

struct SolveInfo {
  double system_residual = 0.0;
  double condition_estimate = 0.0;
};

// Exterior normal boundary value problem N+(k)(r, q) = (f, h); f, h mean zero.
DebyeSources solve_normal_bvp(const lp::BoundaryOps& ops, const CVector& f, const CVector& h,
                              SolveInfo* info = nullptr, double max_cond = 1e12);

// Incident fields (E, H) solving curl E = ik H, curl H = -ik E.
FieldFn plane_wave(cplx k, const Vec3& direction, const CVec3& polarization);
FieldFn electric_dipole(cplx k, const Vec3& x0, const CVec3& moment);

struct ScatterSolution {
  surf::SurfacePtr surface;
  cplx k;
  DebyeSources sources;
  surf::Currents currents;
  FieldFn incident;
  SolveInfo info;
};

// Hybrid system data for incident E, H sampled on the grid:
// f = G0 div(n x (n x E)), h = n . H.
struct HybridData {
  CVector f, h;
};
HybridData hybrid_data(const lp::BoundaryOps& g0, const CMatrix& Etan, const CVector& Hn);

struct KNeumannField {
  cplx k;
  DebyeSources sources;
  double normal_residual = 0.0;  // max |n.E|, |n.H| over max |n x E|
};
struct KNeumannSet {
  std::vector<KNeumannField> fields;
  double gram_condition = 0.0;  // of the tangential E traces
  SolveInfo info;
};
// Solutions with vanishing normal traces, one per harmonic basis field.
// Empty for genus 0.
KNeumannSet build_k_neumann(const lp::BoundaryOps& ops, double max_cond = 1e12);

// k -> 0 check: within the span of the fields, the combination minimizing
// H (resp. E) at the sample points and its ratio |H|/|E| (resp. |E|/|H|).
struct Decoupling {
  double e_only_ratio = 0.0, h_only_ratio = 0.0;
};
Decoupling k_neumann_decoupling(const lp::BoundaryOps& ops, const KNeumannSet& set, const std::vector<Vec3>& points);

// Outgoing field with tangential E equal to a harmonic tangent field psi, as
// a combination of k-Neumann fields plus a hybrid correction.
struct HarmonicTangentialSolution {
  ScatterSolution solution;
  // 2g x 2g: harmonic coefficients of tangential E per unit harmonic
  // coefficient of the solution; psi -> c is its inverse.
  CMatrix harmonic_map;
  double map_condition = 0.0;
};

// The PEC problem n x (E + E_in) = 0, n . (H + H_in) = 0. On genus g > 0 the
// hybrid solution is completed by solve_harmonic_tangential.
class PecSolver {
 public:
  PecSolver(const lp::BoundaryOps& ops, const lp::BoundaryOps& g0, double max_cond = 1e12);
  ScatterSolution solve(const FieldFn& incident) const;
  // Same from grid traces: tangential E (3N) and normal H (N) of the incident field.
  ScatterSolution solve_traces(const CVector& Etan, const CVector& Hn) const;
  const DenseSolver& system() const { return Q_->dense(); }
  // Genus > 0 only; built on first use.
  const KNeumannSet& k_neumann() const;
  HarmonicTangentialSolution harmonic_tangential(const CVector& psi) const;

 private:
  ScatterSolution finish(DebyeSources src) const;

  const lp::BoundaryOps& ops_;
  const lp::BoundaryOps& g0_;
  std::unique_ptr<BlockSystem> Q_;
  double max_cond_;
  mutable std::once_flag kn_once_;
  mutable KNeumannSet kn_;
};

ScatterSolution solve_pec(const lp::BoundaryOps& ops, const lp::BoundaryOps& g0, const FieldFn& incident);
HarmonicTangentialSolution solve_harmonic_tangential(const lp::BoundaryOps& ops, const lp::BoundaryOps& g0,
                                                     const CVector& psi);

// Relative PEC residuals of the total field at random boundary points, from
// the exterior traces interpolated off the grid.
struct PecResidual {
  double tangential_E = 0.0, normal_H = 0.0;
};
PecResidual pec_residual(const lp::BoundaryOps& ops, const ScatterSolution& sol, int npoints, unsigned seed = 1);

// Static (k = 0) decoupled solves: (1/2 - K0(0)) r = f, (1/2 - K0(0)) q = h.
// Exterior fields E = -grad S r, H = -grad S q.
DebyeSources solve_static(const lp::BoundaryOps& g0, const CVector& f, const CVector& h, SolveInfo* info = nullptr);

struct LowFrequencyReport {
  double k_small = 0.0;
  double field_difference = 0.0;  // max over check points of |F_k - F_0| / max |F_0|
  double current_ratio = 0.0;     // ||j|| / ||r||
  double h_over_e = 0.0;          // with h = 0: max |H| / max |E|
  double multiplier_error = 0.0;  // sphere only: diagonal of N+ against m_n(0, l)
};
LowFrequencyReport low_frequency_limit_check(const surf::SurfacePtr& s, double k_small, const CVector& f,
                                             const CVector& h, const std::vector<Vec3>& check_points);

// Closed curve x(theta), theta in [0, 2 pi), with its derivative.
struct Cycle {
  std::function<Vec3(double)> x, dx;
};
// Loop around the tube at distance rho from the core circle (exterior when rho > r).
Cycle torus_a_cycle(double R, double rho);
// Horizontal circle of radius rho at height z.
Cycle torus_b_cycle(double rho, double z = 0.0);
// Line integral of E (or H) by the periodic trapezoid rule.
cplx circulation(const FieldFn& field, const Cycle& c, int npoints = 128, bool use_H = false);

}  // namespace debye::solve
