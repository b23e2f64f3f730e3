#include "qres/expressivity.hpp"

#include <cmath>

namespace qres {

namespace {

mpz_class mpz_pow(const mpz_class& base, unsigned long e) {
  mpz_class out;
  mpz_pow_ui(out.get_mpz_t(), base.get_mpz_t(), e);
  return out;
}

// C(n, k) for big n and small k, exact: multiply then divide term by term
// (each partial product is itself a binomial, so the division is exact).
mpz_class binom_big_n(const mpz_class& n, long k) {
  if (k < 0 || n < k) return 0;
  mpz_class res = 1;
  for (long j = 1; j <= k; ++j) {
    res *= n - k + j;
    mpz_class q;
    mpz_divexact_ui(q.get_mpz_t(), res.get_mpz_t(), static_cast<unsigned long>(j));
    res = q;
  }
  return res;
}

}  // namespace

mpz_class dim_sym(long n, long d) {
  if (n < 1) throw DomainError("dim_sym: n must be >= 1");
  if (d < 0) throw DomainError("dim_sym: d must be >= 0");
  mpz_class out;
  mpz_bin_uiui(out.get_mpz_t(), static_cast<unsigned long>(n + d - 1),
               static_cast<unsigned long>(d));
  return out;
}

mpz_class leading_degree(long h, long r, NetKind kind) {
  if (h < 1) throw DomainError("leading_degree: h must be >= 1");
  if (r < 1) throw DomainError("leading_degree: r must be >= 1");
  mpz_class base = (kind == NetKind::QRes) ? 2 * r : r;
  return mpz_pow(base, static_cast<unsigned long>(h - 1));
}

DepthBound depth_lower_bound(long h_q, long r) {
  if (r < 2) throw DomainError("depth_lower_bound: r must be >= 2");
  if (h_q <= 1) throw DomainError("depth_lower_bound: h_q must be > 1");

  DepthBound out;

  // Exact integer form: smallest h_n with (2r)^(h_q-1) <= r^(h_n-1).
  mpz_class lhs = mpz_pow(mpz_class(2 * r), static_cast<unsigned long>(h_q - 1));
  mpz_class rhs = 1;
  long h_n = 1;
  while (rhs < lhs) {
    rhs *= r;
    ++h_n;
  }
  out.h_exact = h_n;

  // Real-valued form. If r = 2^m then ln2/ln r = 1/m exactly, so the value is
  // the rational 1 + (h_q-1)(m+1)/m and its ceiling is exact integer math.
  long m = 0;
  for (long p = r; p > 1 && p % 2 == 0; p /= 2) ++m;
  bool pow2 = (r == (1L << m));
  if (pow2) {
    out.rational_exact = true;
    long num = (h_q - 1) * (m + 1);  // value = 1 + num / m
    out.value = 1.0 + static_cast<double>(num) / static_cast<double>(m);
    out.ceiling = 1 + (num + m - 1) / m;
  } else {
    out.value = 1.0 + (1.0 + std::log(2.0) / std::log(static_cast<double>(r))) *
                          static_cast<double>(h_q - 1);
    out.ceiling = static_cast<long>(std::ceil(out.value));
  }
  return out;
}

mpz_class minimal_filling_width(long d0, long dh, long h, long r, long i) {
  if (r < 2) throw DomainError("minimal_filling_width: r must be >= 2");
  if (i < 1 || i > h - 1) throw DomainError("minimal_filling_width: need 1 <= i <= h-1");
  if (d0 < 1 || dh < 1) throw DomainError("minimal_filling_width: widths must be >= 1");

  mpz_class a = dh * mpz_pow(mpz_class(r), static_cast<unsigned long>(i * d0));
  mpz_class e = mpz_pow(mpz_class(r), static_cast<unsigned long>(h - i));
  // C(e + d0 - 1, e) = C(e + d0 - 1, d0 - 1)
  mpz_class b = binom_big_n(e + d0 - 1, d0 - 1);
  return a < b ? a : b;
}

FillingReport is_filling(const ArchitectureQuery& q) {
  const long h = static_cast<long>(q.d.size()) - 1;
  if (h < 1) throw DomainError("is_filling: need at least one layer");
  if (q.r < 2) throw DomainError("is_filling: leading degree must be >= 2");
  for (long w : q.d)
    if (w < 1) throw DomainError("is_filling: widths must be >= 1");

  // The sufficiency bound is agnostic to the hidden-layer structure: it
  // depends only on d0, dh, h and the activation's leading degree, so plain
  // and QRes queries share the same per-layer thresholds. Only the leading
  // degree of the resulting variety differs between the two families.
  FillingReport rep;
  rep.leading_deg = leading_degree(h, q.r, q.kind);
  rep.filling = true;
  for (long layer = 1; layer <= h - 1; ++layer) {
    long i = h - layer;
    mpz_class need = minimal_filling_width(q.d.front(), q.d.back(), h, q.r, i);
    rep.layer.push_back(layer);
    rep.minimal_width.push_back(need);
    rep.actual_width.push_back(q.d[static_cast<std::size_t>(layer)]);
    if (q.d[static_cast<std::size_t>(layer)] < need) rep.filling = false;
  }
  return rep;
}

long width_ratio_exponent(long i, long d0, long h) {
  if (i < 1 || i > h - 1) throw DomainError("width_ratio_exponent: need 1 <= i <= h-1");
  long a = i * d0;
  long b = (h - i) * (d0 - 1);
  return a < b ? a : b;
}

}  // namespace qres
