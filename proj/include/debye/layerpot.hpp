#pragma once

#include <array>
#include <string>
#include <vector>

#include "debye/surface.hpp"
#include "debye/types.hpp"

namespace debye::lp {

// g_k(x - y) = e^{ik|x-y|} / (4 pi |x-y|)
cplx kernel_gk(const Vec3& x, const Vec3& y, cplx k);
// gradient in x
CVec3 grad_kernel_gk(const Vec3& x, const Vec3& y, cplx k);

struct QuadOptions {
  // torus: patch semi-axes in grid cells, polar nodes, smooth-part upsampling
  double patch_cells = 10.0;
  double max_patch = 1.0;  // radians
  int n_radial = 48;
  int n_angular = 96;
  int smooth_upsample = 6;
  // sphere: Gauss-Legendre nodes for the degree symbols (0: automatic)
  int sphere_nodes = 0;
};

// Boundary operators on one surface at one wavenumber. Scalar blocks are
// N x c, tangent blocks 3N x c (see surface.hpp). All operators are the
// principal-value parts; one-sided traces add the identity terms.
//   S   single layer
//   K0  normal derivative in x of S, principal value
//   D   double layer (normal derivative in y), principal value
//   K1 r = n x grad S r        K2n j = n . S j        K2t j = n x S j
//   K3 j = -div(n x S j)       K4 j = sum_a n_a grad S j_a - P_tan K0 j
class BoundaryOps {
 public:
  BoundaryOps(surf::SurfacePtr s, cplx k, const QuadOptions& opt = {});

  const surf::Surface& surface() const { return *s_; }
  surf::SurfacePtr surface_ptr() const { return s_; }
  cplx k() const { return k_; }
  // Estimated relative quadrature error of the single layer; a warning is
  // recorded when it exceeds 1e-6.
  double quadrature_error_estimate() const { return qerr_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  CMatrix S(const CMatrix& f) const;
  CMatrix K0(const CMatrix& f) const;
  CMatrix D(const CMatrix& f) const;
  CMatrix S3(const CMatrix& v) const;
  CMatrix K0_3(const CMatrix& v) const;

  CMatrix K1(const CMatrix& r) const;
  CMatrix K2n(const CMatrix& j) const;
  CMatrix K2t(const CMatrix& j) const;
  CMatrix K3(const CMatrix& j) const;
  CMatrix K4(const CMatrix& j) const;

  // Degree symbols of S, K0 on the unit sphere (empty for other surfaces).
  const std::vector<cplx>& sphere_symbol_S() const { return lamS_; }
  const std::vector<cplx>& sphere_symbol_K0() const { return lamK_; }

 private:
  enum Op { OpS = 0, OpK0 = 1, OpD = 2 };
  CMatrix apply(Op op, const CMatrix& f) const;
  void build_sphere();
  void build_torus();
  std::array<CMatrix, 3> torus_rows(int it0, int nr, int na) const;

  surf::SurfacePtr s_;
  cplx k_;
  QuadOptions opt_;
  double qerr_ = 0.0;
  std::vector<std::string> warnings_;
  std::vector<cplx> lamS_, lamK_;
  // torus: per s-mode n, nt x nt matrices for S, K0, D
  std::array<std::vector<CMatrix>, 3> bhat_;
  CMatrix fs_;  // forward DFT along s
};

// Traces of the fields generated by (r, q, j, m). side = +1 exterior,
// -1 interior, 0 principal value.
struct Traces {
  CMatrix nE, nH;  // N x c
  CMatrix tE, tH;  // n x E, n x H, 3N x c
};
Traces traces(const BoundaryOps& ops, const CMatrix& r, const CMatrix& q, const CMatrix& j, const CMatrix& m,
              int side, bool want_normal = true, bool want_tangential = true);

struct DiscretizedOperator {
  CMatrix M;
  cplx k;
  int side = 0;
  std::string kind;
};

// Dense operator by application to identity columns. kind in
// {S, K0, D, K1, K2n, K2t, K3, K4}; side adds the one-sided identity term for
// K0 (n . grad S), D and K4 (n x curl S).
DiscretizedOperator build_operator(const BoundaryOps& ops, const std::string& kind, int side = 0);
DiscretizedOperator build_single_layer(const BoundaryOps& ops);
// Off-surface single layer: rows are targets, smooth trapezoid on an
// upsampled grid.
DiscretizedOperator build_single_layer_offsurface(const surf::Surface& s, cplx k, const std::vector<Vec3>& targets,
                                                  int upsample = 4);

// Binary dump: "DBYEMAT1", int64 rows, int64 cols, double re k, double im k,
// int32 side, char kind[16], then column-major complex doubles.
void write_matrix(const std::string& path, const DiscretizedOperator& op);
DiscretizedOperator read_matrix(const std::string& path);

struct PotentialSet {
  surf::SurfacePtr surface;
  cplx k;
  CVector r, q;  // N
  CVector j, m;  // 3N
};

// E = ik A - grad phi - curl A_m, H = curl A + ik A_m - grad phi_m, by the
// trapezoid/Gauss rule on an upsampled grid. Targets closer
// than near_distance() use a polar patch centred at the foot point with
// graded radial panels, blended into the upsampled rule.
class FieldEvaluator {
 public:
  FieldEvaluator(const PotentialSet& p, int upsample = 4, double cutoff_factor = 0.25,
                 const QuadOptions& opt = {});
  FieldEH operator()(const Vec3& x) const;
  std::vector<FieldEH> eval(const std::vector<Vec3>& xs) const;
  double cutoff() const { return cutoff_; }
  double distance(const Vec3& x) const;
  double near_distance() const { return near_; }

 private:
  struct Acc;
  void add_source(Acc& acc, const Vec3& x, const Vec3& y, const cplx* d, double w) const;

  surf::SurfacePtr coarse_, fine_;
  cplx k_;
  QuadOptions opt_;
  CMatrix dens_;    // fine nodes x 8: r, q, j(3), m(3), weights folded in
  CMatrix coarse_dens_;  // coarse nodes x 8, no weights
  double cutoff_;
  double near_ = 0.0, as_ = 0.0, at_ = 0.0;
};

struct JumpResult {
  // max relative residual of n.[E] - r, n.[H] - q, n x [E] + m, n x [H] - j
  double nE = 0.0, nH = 0.0, tE = 0.0, tH = 0.0;
  std::vector<double> eps;
  int samples = 0;
};
// Off-surface jumps at x +- eps n, extrapolated to eps -> 0.
JumpResult jump_test(const PotentialSet& p, const std::vector<double>& eps, int nsamples, int upsample,
                     unsigned seed = 1);

}  // namespace debye::lp
