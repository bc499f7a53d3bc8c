#pragma once

#include <functional>
#include <string>
#include <vector>

#include "debye/types.hpp"

namespace debye::roots {

using ComplexFn = std::function<cplx(cplx)>;

// Rectangle in the complex k-plane minus the disc |k| < puncture. A region
// lying entirely inside the disc is rejected.
struct SearchRegion {
  double re_min = 0.0, re_max = 1.0;
  double im_min = -1.0, im_max = 0.0;
  int max_depth = 60;
  double newton_tol = 1e-13;
  double puncture = 0.05;
};

// Central differences at h and h/2 combined by one Richardson step,
// h = 1e-6 (1 + |z|).
cplx richardson_derivative(const ComplexFn& f, cplx z);

// Winding number of f around the region boundary.
int count_zeros(const ComplexFn& f, const SearchRegion& region, const ComplexFn& df = {});

// All zeros inside the region, repeated according to multiplicity.
std::vector<cplx> find_roots(const ComplexFn& f, const SearchRegion& region, const ComplexFn& df = {});

// Roots of a polynomial given by ascending coefficients (companion matrix
// eigenvalues polished by Newton).
std::vector<cplx> polynomial_roots(const std::vector<cplx>& coeffs);

// m_n(k, l) = p_l(k) e^{ik} F_l(k) / k^l with F_l(k) = (k - il) j_l(k) + ik j_{l-1}(k).
// resonance_factor returns the entire function F_l(k) (2l+1)!! / k^l, equal to
// i(l+1) at k = 0. Its zeros are the zeros of m_n other than those of p_l.
cplx resonance_factor(cplx k, int l);
cplx resonance_factor_derivative(cplx k, int l);

// Resonance zero (zero of F_l) with Re k > 0 of smallest modulus.
cplx smallest_root_positive_re(int l);

// Root of m_n(., l) matching a zero of the Hankel polynomial p_l.
bool is_hankel_root(cplx r, int l, double tol = 1e-6);

}  // namespace debye::roots
