#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "debye/types.hpp"

namespace debye::surf {

// Scalar fields are N x c blocks (one column per field). Tangent fields are
// 3N x c blocks in Cartesian components, stored component-major: rows
// [0, N) hold x, [N, 2N) hold y, [2N, 3N) hold z.
class Surface {
 public:
  virtual ~Surface() = default;

  virtual std::string kind() const = 0;
  virtual int genus() const = 0;
  int components() const { return 1; }

  int size() const { return int(pos_.size()); }
  const std::vector<Vec3>& points() const { return pos_; }
  const std::vector<Vec3>& normals() const { return nrm_; }
  const std::vector<Vec3>& xu() const { return xu_; }
  const std::vector<Vec3>& xv() const { return xv_; }
  const RVector& weights() const { return w_; }
  double area() const { return w_.sum(); }
  // chart coordinates of node i
  const std::array<double, 2>& chart(int i) const { return uv_[i]; }
  // Mean node spacing, used for near-surface cutoffs.
  virtual double spacing() const = 0;

  virtual RMatrix grad(const RMatrix& f) const = 0;
  virtual RMatrix div(const RMatrix& v) const = 0;
  // Inverse Laplace-Beltrami on mean-zero input; output has mean zero.
  virtual RMatrix R0(const RMatrix& f) const = 0;

  // Same surface at a finer grid, and spectral interpolation onto it.
  virtual std::shared_ptr<const Surface> refined(int factor) const = 0;
  // Scalar block sampled on refined(factor).
  virtual RMatrix upsample(const RMatrix& f, int factor) const = 0;
  // Transpose of upsample: coarse row weights from fine-grid row weights.
  virtual RMatrix upsample_adjoint(const RMatrix& g, int factor) const = 0;

  // Geometry and spectral interpolation at arbitrary chart coordinates.
  virtual Vec3 point_at(double u, double v) const = 0;
  virtual Vec3 normal_at(double u, double v) const = 0;
  virtual RMatrix interpolate_at(const std::vector<std::array<double, 2>>& uv, const RMatrix& f) const = 0;

  // Harmonic tangent fields (3N x 2g), L2-orthonormal; empty for genus 0.
  const RMatrix& harmonic_basis() const;

  RMatrix rot90(const RMatrix& v) const;      // n x v
  RMatrix tangential(const RMatrix& v) const;  // v - n (n . v)
  RMatrix normal_dot(const RMatrix& v) const;  // n . v  (N x c)
  RMatrix laplacian(const RMatrix& f) const { return div(grad(f)); }
  // 1-form Laplacian grad div v - n x grad div (n x v)
  RMatrix hodge_laplacian(const RMatrix& v) const;

  // Quadrature inner products; tangent version sums the three components.
  double inner(const RVector& a, const RVector& b) const;
  double inner_tangent(const RVector& a, const RVector& b) const;
  cplx inner(const CVector& a, const CVector& b) const;          // sum w conj(a) b
  cplx inner_tangent(const CVector& a, const CVector& b) const;  // sum w conj(a) . b

  // Chart components (a, b) of v = a xu + b xv, and back.
  RMatrix to_chart(const RMatrix& v) const;    // 3N x c -> 2N x c (a rows, then b rows)
  RMatrix from_chart(const RMatrix& ab) const;  // 2N x c -> 3N x c

 protected:
  virtual RMatrix compute_harmonic_basis() const = 0;

  std::vector<Vec3> pos_, nrm_, xu_, xv_;
  std::vector<std::array<double, 2>> uv_;
  RVector w_;

 private:
  mutable std::once_flag harmonic_once_;
  mutable RMatrix harmonic_;
};

using SurfacePtr = std::shared_ptr<const Surface>;

// Unit sphere on a Gauss-Legendre (colatitude) x uniform (longitude) grid,
// ntheta x 2 ntheta nodes, node index i * nphi + j. Spectral band
// lmax = ntheta - 2 in a real orthonormal spherical-harmonic basis.
SurfacePtr make_sphere(int ntheta);

// Torus x(s,t) = ((R + r cos t) cos s, (R + r cos t) sin s, r sin t) on a
// uniform ns x nt grid, node index it * ns + is. Both counts must be even.
SurfacePtr make_torus(double R, double r, int ns, int nt);

// Unit sphere backend. Real orthonormal harmonics: Pbar_l^0, sqrt2 Pbar_l^m cos(m phi)
// at index l^2 + l + m, sqrt2 Pbar_l^m sin(m phi) at index l^2 + l - m.
class SphereSurface final : public Surface {
 public:
  explicit SphereSurface(int ntheta);
  std::string kind() const override { return "sphere"; }
  int genus() const override { return 0; }
  double spacing() const override;

  int ntheta() const { return nt_; }
  int nphi() const { return np_; }
  int lmax() const { return L_; }
  int ncoeffs() const { return (L_ + 1) * (L_ + 1); }
  static int coeff_index(int l, int m) { return l * l + l + m; }

  RMatrix analysis(const RMatrix& f) const;   // N x c -> K x c
  RMatrix synthesis(const RMatrix& a) const;  // K' x c (K' <= K, zero padded) -> N x c
  // synthesis(lam_l * analysis(f)), one multiplier per degree l
  CMatrix apply_symbol(const CMatrix& f, const std::vector<cplx>& lam) const;

  RMatrix grad(const RMatrix& f) const override;
  RMatrix div(const RMatrix& v) const override;
  RMatrix R0(const RMatrix& f) const override;
  SurfacePtr refined(int factor) const override;
  RMatrix upsample(const RMatrix& f, int factor) const override;
  RMatrix upsample_adjoint(const RMatrix& g, int factor) const override;
  Vec3 point_at(double theta, double phi) const override;
  Vec3 normal_at(double theta, double phi) const override { return point_at(theta, phi); }
  RMatrix interpolate_at(const std::vector<std::array<double, 2>>& uv, const RMatrix& f) const override;

 protected:
  RMatrix compute_harmonic_basis() const override { return RMatrix(3 * size(), 0); }

 private:
  using Coeffs = std::vector<RMatrix>;  // per m, (L - m + 1) x c
  void analyze(const std::vector<RMatrix>& P, const RMatrix& f, Coeffs& ac, Coeffs& as) const;
  RMatrix synthesize(const std::vector<RMatrix>& P, const Coeffs& ac, const Coeffs& as, int cols) const;
  Coeffs unpack(const RMatrix& a, bool sine) const;
  RMatrix pack(const Coeffs& ac, const Coeffs& as) const;

  int nt_, np_, L_;
  std::vector<double> theta_, gw_;
  RMatrix cphi_, sphi_;                // nphi x (L+1), sqrt2 scaling for m > 0
  std::vector<RMatrix> P_, dP_, Ps_;  // per m: ntheta x (L - m + 1)
  mutable std::mutex cache_mu_;
  mutable std::vector<std::pair<int, SurfacePtr>> cache_;
};

// Torus backend, chart (s, t).
class TorusSurface final : public Surface {
 public:
  TorusSurface(double R, double r, int ns, int nt);
  std::string kind() const override { return "torus"; }
  int genus() const override { return 1; }
  double spacing() const override;

  double R() const { return R_; }
  double r() const { return r_; }
  int ns() const { return ns_; }
  int nt() const { return ntt_; }
  double rho(int i) const { return R_ + r_ * std::cos(uv_[i][1]); }

  RMatrix grad(const RMatrix& f) const override;
  RMatrix div(const RMatrix& v) const override;
  RMatrix R0(const RMatrix& f) const override;
  SurfacePtr refined(int factor) const override;
  RMatrix upsample(const RMatrix& f, int factor) const override;
  RMatrix upsample_adjoint(const RMatrix& g, int factor) const override;
  Vec3 point_at(double s, double t) const override;
  Vec3 normal_at(double s, double t) const override;
  RMatrix interpolate_at(const std::vector<std::array<double, 2>>& uv, const RMatrix& f) const override;

  // Chart coordinates of the closest surface point (exact for the torus).
  std::array<double, 2> foot_chart(const Vec3& x) const;

  RMatrix ds(const RMatrix& f) const;
  RMatrix dt(const RMatrix& f) const;
  // Trigonometric interpolation weights of a 2 pi periodic grid of n points at x.
  static RVector dirichlet_weights(int n, double x);
  // Rows: weights of a grid of n points sampled on a grid of m points.
  static RMatrix resample_matrix(int n, int m);

 protected:
  RMatrix compute_harmonic_basis() const override;

 private:
  double R_, r_;
  int ns_, ntt_;
  RMatrix Ds_, Dt_;
  // R0 data: per |n| factored Galerkin matrices, built on first use
  void build_galerkin() const;
  int Ms_, Mt_;
  mutable std::once_flag galerkin_once_;
  mutable std::vector<Eigen::PartialPivLU<RMatrix>> lu_;
  mutable RVector mu_;
};

const SphereSurface* as_sphere(const Surface& s);
const TorusSurface* as_torus(const Surface& s);

// Complex fields through the real operators.
CMatrix cgrad(const Surface& s, const CMatrix& f);
CMatrix cdiv(const Surface& s, const CMatrix& v);
CMatrix cR0(const Surface& s, const CMatrix& f);
CMatrix crot90(const Surface& s, const CMatrix& v);
CMatrix cnormal_dot(const Surface& s, const CMatrix& v);
CMatrix cupsample(const Surface& s, const CMatrix& f, int factor);
CMatrix cinterpolate_at(const Surface& s, const std::vector<std::array<double, 2>>& uv, const CMatrix& f);

// Per-component means (one component for the built-in surfaces).
cplx mean(const Surface& s, const CVector& f);
bool is_mean_zero(const Surface& s, const CVector& f, double tol = 1e-10);
CVector mean_zero_project(const Surface& s, const CVector& f);

// R0 with the mean-zero contract: |mean| <= 1e-10 (relative to the RMS of f)
// is projected away, larger means raise MeanZeroError.
CMatrix laplace_beltrami_partial_inverse_R0(const Surface& s, const CMatrix& f);

struct Currents {
  CVector j;  // 3N
  CVector m;  // n x j
};
// j = grad(ik R0 r) + n x grad(-ik R0 q) + sum c_l h_l.
Currents currents_from_debye(const Surface& s, const CVector& r, const CVector& q, cplx k,
                             const CVector& harmonic_coeffs = CVector());

// Block form: columns of R and Q are projected to mean zero without checks.
struct CurrentBlocks {
  CMatrix J, M;  // 3N x c
};
CurrentBlocks currents_from_debye_block(const Surface& s, const CMatrix& R, const CMatrix& Q, cplx k);

struct HodgeParts {
  CVector grad_part, rot_part, harmonic_part;
  CVector alpha, beta;      // v = grad alpha + n x grad beta + h
  CVector harmonic_coeffs;  // in the orthonormal harmonic basis
  CVector remainder;        // v minus the three parts
};
HodgeParts hodge_decompose(const Surface& s, const CVector& v);

// Analytic harmonic pair on the torus: j1 = xs / rho^2, j2 = n x j1 = xt / (rho r).
RMatrix torus_analytic_harmonic(const Surface& torus);

// Largest principal angle (radians) between the column spans of A and B
// (tangent blocks) in the quadrature inner product.
double principal_angle(const Surface& s, const RMatrix& A, const RMatrix& B);

}  // namespace debye::surf
