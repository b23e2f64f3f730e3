#include "qres/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qres {

AdamState make_adam(long n_params, double lr) {
  AdamState st;
  st.m = Eigen::VectorXd::Zero(n_params);
  st.v = Eigen::VectorXd::Zero(n_params);
  st.lr = lr;
  return st;
}

void adam_step(AdamState& st, Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != st.m.size() || grad.size() != st.m.size())
    throw ShapeError("adam_step: state/params/grad lengths disagree");
  if (!grad.allFinite()) throw NonFiniteGradient("adam_step: gradient has NaN or Inf");
  st.t += 1;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  params.array() -=
      st.lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + st.eps);
}

LbfgsState make_lbfgs(int m_hist) {
  LbfgsState st;
  st.m_hist = m_hist;
  return st;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// φ(α) and φ'(α) of the 1-D restriction f(x + α d). Non-finite trials read
// as +∞ so the line search backtracks instead of wandering off.
struct LinePoint {
  double a = 0.0;
  double phi = kInf;
  double dphi = kInf;
  Eigen::VectorXd grad;
};

struct LineEval {
  const LossGradFn& fn;
  const Eigen::VectorXd& x;
  const Eigen::VectorXd& d;
  long* n_evals;

  LinePoint operator()(double a) const {
    LinePoint p;
    p.a = a;
    auto [loss, grad] = fn(x + a * d);
    ++*n_evals;
    if (std::isfinite(loss) && grad.allFinite()) {
      p.phi = loss;
      p.dphi = grad.dot(d);
      p.grad = std::move(grad);
    }
    return p;
  }
};

// Minimizer of the cubic through (a, φa, φ'a) and (b, φb, φ'b); NaN when the
// formula degenerates. Exact line minimization for quadratic φ.
double cubic_min(double a, double fa, double ga, double b, double fb, double gb) {
  const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - ga * gb;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  return b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
}

bool wolfe_ok(const LinePoint& p, const LinePoint& p0, double c1, double c2) {
  return p.phi <= p0.phi + c1 * p.a * p0.dphi && std::abs(p.dphi) <= -c2 * p0.dphi;
}

// Standard zoom: shrink [lo, hi] (ordered by φ, with the minimum bracketed)
// until a strong-Wolfe point appears.
LinePoint zoom(LinePoint lo, LinePoint hi, const LinePoint& p0, const LineEval& eval, double c1,
               double c2, int budget) {
  for (int it = 0; it < budget; ++it) {
    const double lo_a = std::min(lo.a, hi.a), hi_a = std::max(lo.a, hi.a);
    double a = cubic_min(lo.a, lo.phi, lo.dphi, hi.a, hi.phi, hi.dphi);
    const double margin = 0.1 * (hi_a - lo_a);
    if (!std::isfinite(a) || a < lo_a + margin || a > hi_a - margin)
      a = 0.5 * (lo_a + hi_a);
    LinePoint p = eval(a);
    if (p.phi > p0.phi + c1 * a * p0.dphi || p.phi >= lo.phi) {
      hi = std::move(p);
    } else {
      if (std::abs(p.dphi) <= -c2 * p0.dphi) return p;
      if (p.dphi * (hi.a - lo.a) >= 0.0) hi = lo;
      lo = std::move(p);
    }
    if (hi_a - lo_a < 1e-18 * std::max(1.0, std::abs(hi_a))) break;
  }
  throw LineSearchFailed("zoom exhausted its budget without a strong-Wolfe point");
}

}  // namespace

double lbfgs_step(LbfgsState& st, const LossGradFn& fn, Eigen::VectorXd& params) {
  if (!st.have_eval) {
    auto [loss, grad] = fn(params);
    ++st.n_evals;
    if (!std::isfinite(loss) || !grad.allFinite())
      throw NonFiniteGradient("lbfgs_step: non-finite loss or gradient at the start point");
    st.last_loss = loss;
    st.last_grad = std::move(grad);
    st.have_eval = true;
  }

  const double gnorm = st.last_grad.norm();
  if (gnorm == 0.0) {
    st.converged = true;
    return 0.0;
  }

  // Two-loop recursion over the stored curvature pairs.
  Eigen::VectorXd q = st.last_grad;
  const int m = static_cast<int>(st.s.size());
  std::vector<double> a(m);
  for (int i = m - 1; i >= 0; --i) {
    a[i] = st.rho[i] * st.s[i].dot(q);
    q -= a[i] * st.y[i];
  }
  if (m > 0) q *= st.s[m - 1].dot(st.y[m - 1]) / st.y[m - 1].squaredNorm();
  for (int i = 0; i < m; ++i) {
    const double beta = st.rho[i] * st.y[i].dot(q);
    q += (a[i] - beta) * st.s[i];
  }
  Eigen::VectorXd d = -q;
  if (d.dot(st.last_grad) >= 0.0) {
    // Numerically spoiled curvature; fall back to steepest descent.
    st.s.clear();
    st.y.clear();
    st.rho.clear();
    d = -st.last_grad;
  }

  LinePoint p0;
  p0.a = 0.0;
  p0.phi = st.last_loss;
  p0.dphi = st.last_grad.dot(d);
  p0.grad = st.last_grad;
  LineEval eval{fn, params, d, &st.n_evals};

  // Bracketing phase of the strong-Wolfe search (Nocedal & Wright alg. 3.5).
  double a_trial = (st.iters == 0 && m == 0) ? std::min(1.0, 1.0 / std::max(1.0, gnorm)) : 1.0;
  LinePoint prev = p0;
  LinePoint acc;
  bool accepted = false;
  int evals_used = 0;
  while (!accepted) {
    if (++evals_used > st.max_ls)
      throw LineSearchFailed("line search exhausted its budget without a strong-Wolfe point");
    LinePoint p = eval(a_trial);
    if (p.phi > p0.phi + st.c1 * p.a * p0.dphi || (p.phi >= prev.phi && evals_used > 1)) {
      acc = zoom(prev, std::move(p), p0, eval, st.c1, st.c2, st.max_ls - evals_used);
      accepted = true;
    } else if (std::abs(p.dphi) <= -st.c2 * p0.dphi) {
      acc = std::move(p);
      accepted = true;
    } else if (p.dphi >= 0.0) {
      acc = zoom(std::move(p), prev, p0, eval, st.c1, st.c2, st.max_ls - evals_used);
      accepted = true;
    } else {
      prev = std::move(p);
      a_trial = std::min(2.0 * a_trial, 1e10);
    }
  }

  // Polish: a few extra cubic steps toward φ' = 0. Exact on quadratics, so
  // full-history L-BFGS terminates finitely there; elsewhere it sharpens the
  // step at the cost of at most three evaluations.
  {
    LinePoint left = p0, right = acc;
    for (int extra = 0; extra < 3 && std::abs(right.dphi) > 1e-9 * std::abs(p0.dphi); ++extra) {
      double a_new = cubic_min(left.a, left.phi, left.dphi, right.a, right.phi, right.dphi);
      if (!std::isfinite(a_new) || a_new <= 0.0) break;
      LinePoint p = eval(a_new);
      if (!std::isfinite(p.phi)) break;
      const bool better = std::abs(p.dphi) <= 0.1 * std::abs(right.dphi);
      if (wolfe_ok(p, p0, st.c1, st.c2) && p.phi <= acc.phi) {
        left = right;
        right = p;
        acc = std::move(p);
      } else {
        break;
      }
      if (!better) break;
    }
  }

  Eigen::VectorXd s_vec = acc.a * d;
  Eigen::VectorXd y_vec = acc.grad - st.last_grad;
  if (s_vec.dot(y_vec) > 1e-10 * s_vec.norm() * y_vec.norm()) {
    st.s.push_back(std::move(s_vec));
    st.y.push_back(std::move(y_vec));
    st.rho.push_back(1.0 / st.s.back().dot(st.y.back()));
    while (static_cast<int>(st.s.size()) > st.m_hist) {
      st.s.pop_front();
      st.y.pop_front();
      st.rho.pop_front();
    }
  }

  params += acc.a * d;
  st.last_loss = acc.phi;
  st.last_grad = std::move(acc.grad);
  st.iters += 1;
  if (st.last_grad.norm() == 0.0) st.converged = true;
  return acc.a;
}

bool should_stop(double L_k, double L_k1, const TerminationRule& rule) {
  return (L_k - L_k1) / std::max({std::abs(L_k), std::abs(L_k1), 1.0}) <= rule.ftol;
}

}  // namespace qres
