#pragma once

#include <Eigen/Dense>

#include <array>
#include <variant>

#include "qres/autodiff.hpp"
#include "qres/common.hpp"
#include "qres/data.hpp"

namespace qres {

inline constexpr double kBurgersNu = 0.01 / kPi;

// ---------------------------------------------------------------------------
// Problem definitions. Dataset sizes follow the canonical PINN setup: 10k
// collocation points, 100 IC/BC labels forward, 2k interior labels inverse.
// ---------------------------------------------------------------------------

// u_t + u·u_x − ν·u_xx = 0 on [−1,1]×[0,1], u(x,0) = −sin(πx), u(±1,t) = 0.
struct BurgersForward {
  double nu = kBurgersNu;
  long n_colloc = 10000;
  long n_ic = 50;
  long n_bc = 50;  // split evenly between x = −1 and x = +1
};

// u_t + λ₁·u·u_x − λ₂·u_xx = 0 with λ₁, λ₂ trainable; interior measurements.
struct BurgersInverse {
  double noise_level = 0.0;  // 0 or 0.01
  long n_colloc = 10000;
  long n_data = 2000;
};

// Regression of sin(6x) on [0, 2π] from 8 labels plus the first-order
// constraint dy/dx = 6cos(6x) at collocation points.
struct SineToy {
  long n_colloc = 200;
  long n_data = 8;
};

// Pure regression of Σ_k sin(kx), k ∈ {4,8,16,32,64,128}, from 1000 evenly
// spaced samples on [0, 2π); no PDE term. Used by the spectral-bias study.
struct CompositedWave {
  long n_data = 1000;
};

using Problem = std::variant<BurgersForward, BurgersInverse, SineToy, CompositedWave>;

inline constexpr std::array<int, 6> kCompositedFreqs = {4, 8, 16, 32, 64, 128};

Box domain(const Problem& problem);
const char* problem_name(const Problem& problem);
bool is_inverse(const Problem& problem);

// ---------------------------------------------------------------------------
// Cole–Hopf oracle: exact viscous-Burgers solution for the −sin(πx) initial
// condition, evaluated by Gauss–Hermite quadrature of the heat-kernel
// integrals. Every call computes with n and 2n nodes and demands agreement
// below 1e-10 (OracleError otherwise), so results are self-verifying.
// ---------------------------------------------------------------------------
struct OracleJet {
  double u, u_x, u_t, u_xx;
};

class ColeHopf {
 public:
  explicit ColeHopf(double nu = kBurgersNu, int nodes = 100);

  double value(double x, double t) const;
  OracleJet jet(double x, double t) const;
  double nu() const { return nu_; }

 private:
  struct Quad {
    Eigen::VectorXd z, lw;  // nodes and log of the total weight (incl. e^{-z^2})
  };
  static Quad gauss_hermite(int n);
  // Normalised derivative moments m0..m3 of the transformed heat solution.
  void moments(double x, double t, const Quad& q, double m[4]) const;

  double nu_;
  Quad coarse_, fine_;
};

// Convenience entry point (caches the ν = 0.01/π oracle).
double cole_hopf_reference(double x, double t, double nu = kBurgersNu);

// Exact solution sampled on a uniform grid (inclusive endpoints).
struct ReferenceGrid {
  Eigen::VectorXd x;  // nx
  Eigen::VectorXd t;  // nt
  Eigen::MatrixXd u;  // nx x nt
};

ReferenceGrid make_reference_grid(int nx = 256, int nt = 101, double nu = kBurgersNu);

// n interior measurements uniform over [−1,1]×[0,1]; targets from the oracle,
// plus Gaussian noise of standard deviation noise_level·std(u) when
// noise_level > 0. Same seed ⇒ same points regardless of noise level.
LabeledSet generate_inverse_dataset(long n, std::uint64_t seed, double noise_level,
                                    double nu = kBurgersNu);

// ---------------------------------------------------------------------------
// Residual operators. The scalar forms serve oracle checks; the tape forms
// build the residual as nodes (λ as constants for the forward problem, as
// trainable scalars for the inverse one).
// ---------------------------------------------------------------------------
double burgers_residual(double u, double u_x, double u_t, double u_xx, double lam1, double lam2);
double burgers_residual(const Jet2& jet, double lam1, double lam2);  // inputs ordered (x, t)
double burgers_residual(const OracleJet& jet, double lam1, double lam2);

// u_jets: width-1 jet node over inputs (x, t) with the (x,x) pair tracked.
NodeId burgers_residual(Tape& tape, NodeId u_jets, double lam1, double lam2);
NodeId burgers_residual(Tape& tape, NodeId u_jets, NodeId lam1, NodeId lam2);

double sine_toy_residual(const Jet2& jet, double x);
// y_jets: width-1 jet node over input x; xs: the collocation coordinates.
NodeId sine_toy_residual(Tape& tape, NodeId y_jets, const Eigen::VectorXd& xs);

double composited_wave_target(double x);
double sine_toy_target(double x);  // sin(6x)

}  // namespace qres
