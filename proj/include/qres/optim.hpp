#pragma once

#include <Eigen/Dense>

#include <deque>
#include <utility>

#include "qres/autodiff.hpp"
#include "qres/common.hpp"

namespace qres {

// ---------------------------------------------------------------------------
// Adam over a flat parameter vector. Full-batch; defaults follow the usual
// published constants (lr is the only one the experiments ever set).
// ---------------------------------------------------------------------------
struct AdamState {
  Eigen::VectorXd m, v;
  long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(long n_params, double lr = 1e-3);

// One update in place. Throws NonFiniteGradient if grad has a NaN/Inf and
// ShapeError if lengths disagree.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad);

// ---------------------------------------------------------------------------
// L-BFGS with two-loop recursion and a strong-Wolfe line search. Plain
// (unconstrained) variant: every parameter in every experiment is free, so
// the bound-constrained machinery of L-BFGS-B would be dead weight.
// ---------------------------------------------------------------------------
struct LbfgsState {
  int m_hist = 50;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_ls = 60;  // line-search evaluation budget per step

  std::deque<Eigen::VectorXd> s;  // parameter displacements
  std::deque<Eigen::VectorXd> y;  // gradient displacements
  std::deque<double> rho;         // 1 / yᵀs
  Eigen::VectorXd last_grad;
  double last_loss = 0.0;
  bool have_eval = false;  // last_loss/last_grad hold f(params)
  bool converged = false;  // gradient vanished; no further progress possible
  long iters = 0;
  long n_evals = 0;  // loss_fn invocations (line search included)
};

LbfgsState make_lbfgs(int m_hist = 50);

// One quasi-Newton iteration in place; returns the accepted step length
// (0 when the gradient is exactly zero, which also sets state.converged).
// Throws LineSearchFailed when no strong-Wolfe point exists within the
// line-search budget — typically loss has reached its float64 floor and the
// caller should end the run gracefully.
double lbfgs_step(LbfgsState& state, const LossGradFn& fn, Eigen::VectorXd& params);

// ---------------------------------------------------------------------------
// Loss-plateau stopping rule.
// ---------------------------------------------------------------------------
struct TerminationRule {
  double ftol = 2.22e-16;
  long max_epochs = 50000;
  friend bool operator==(const TerminationRule&, const TerminationRule&) = default;
};

// true iff (L_k − L_k1) / max(|L_k|, |L_k1|, 1) ≤ ftol.
bool should_stop(double L_k, double L_k1, const TerminationRule& rule);

}  // namespace qres
