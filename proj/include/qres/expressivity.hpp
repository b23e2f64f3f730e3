#pragma once

#include <gmpxx.h>

#include <vector>

#include "qres/common.hpp"

namespace qres {

// Network family for the expressivity formulas. A QRes layer doubles the
// leading polynomial degree relative to a plain layer with the same
// activation, which is all these closed forms need to know.
enum class NetKind { Plain, QRes };

struct ArchitectureQuery {
  std::vector<long> d;          // widths (d0, ..., dh); h = d.size() - 1 layers
  long r = 2;                   // leading degree of the activation
  NetKind kind = NetKind::Plain;
};

struct FillingReport {
  // Hidden layers 1..h-1, in layer order.
  std::vector<long> layer;               // layer index of each entry
  std::vector<mpz_class> minimal_width;  // sufficient width at that layer
  std::vector<long> actual_width;
  bool filling = false;     // true => filling (sufficient condition holds)
  bool sufficient_only = true;  // false verdict never proves non-filling
  mpz_class leading_deg;
};

// dim Sym_d(R^n) = C(n+d-1, d), exact.
mpz_class dim_sym(long n, long d);

// Leading degree of the functional space: Plain r^(h-1), QRes (2r)^(h-1).
mpz_class leading_degree(long h, long r, NetKind kind);

// Depth bound for a plain net to match a QRes net of depth h_q:
//   value   = 1 + (1 + ln2/ln r)(h_q - 1)          (real-valued form)
//   h_exact = min { h_n : (2r)^(h_q-1) <= r^(h_n-1) }   (exact integers)
// When r is a power of two the real form is exactly rational and `ceiling`
// is computed in integer arithmetic; otherwise it is ceil of the double.
struct DepthBound {
  double value = 0.0;
  long ceiling = 0;
  long h_exact = 0;
  bool rational_exact = false;
};
DepthBound depth_lower_bound(long h_q, long r);

// Minimal filling width at hidden layer h-i:
//   min[ dh * r^(i*d0),  C(r^(h-i) + d0 - 1, r^(h-i)) ]
mpz_class minimal_filling_width(long d0, long dh, long h, long r, long i);

// Sufficient-condition filling verdict for an architecture. For QRes the
// bounds are evaluated at effective degree 2r (Lemma: QRes functional space
// of degree r equals the plain space of degree 2r).
FillingReport is_filling(const ArchitectureQuery& q);

// Width-efficiency exponent tau = min[i*d0, (h-i)(d0-1)].
long width_ratio_exponent(long i, long d0, long h);

}  // namespace qres
