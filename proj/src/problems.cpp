#include "qres/problems.hpp"

#include <cmath>

namespace qres {

Box domain(const Problem& problem) {
  Box box;
  if (std::holds_alternative<BurgersForward>(problem) ||
      std::holds_alternative<BurgersInverse>(problem)) {
    box.lo = Eigen::Vector2d(-1.0, 0.0);
    box.hi = Eigen::Vector2d(1.0, 1.0);
  } else {
    box.lo = Eigen::VectorXd::Constant(1, 0.0);
    box.hi = Eigen::VectorXd::Constant(1, 2.0 * kPi);
  }
  return box;
}

const char* problem_name(const Problem& problem) {
  switch (problem.index()) {
    case 0: return "burgers_forward";
    case 1: return "burgers_inverse";
    case 2: return "sine_toy";
    case 3: return "composited_wave";
  }
  return "?";
}

bool is_inverse(const Problem& problem) {
  return std::holds_alternative<BurgersInverse>(problem);
}

// --------------------------------------------------------------- Cole–Hopf

ColeHopf::ColeHopf(double nu, int nodes) : nu_(nu) {
  if (!(nu > 0.0)) throw DomainError("ColeHopf: viscosity must be positive");
  if (nodes < 100) throw DomainError("ColeHopf: need at least 100 quadrature nodes");
  coarse_ = gauss_hermite(nodes);
  fine_ = gauss_hermite(2 * nodes);
}

namespace {

// log of the total Gauss–Hermite weight (the e^{-z^2} factor included):
// w_k = e^{-z^2} / (n·ψ_{n-1}(z_k)^2) with ψ_m the orthonormal Hermite
// functions, so log w_k = -log n - 2·log|ψ̂_{n-1}(z_k)| after the stable
// substitution ψ̂_m = e^{z^2/2}·ψ_m (the z² cancels exactly). ψ̂ obeys the
// same three-term recurrence and stays representable with a carried
// power-of-two exponent; a naive e^{-z^2}-bearing weight underflows, and the
// eigenvector-based weight bottoms out near machine-epsilon² — both wreck
// the far-tail nodes this integrand genuinely draws mass from.
double log_gh_weight(int n, double z) {
  double prev = std::pow(kPi, -0.25);          // ψ̂_0
  double cur = std::sqrt(2.0) * z * prev;      // ψ̂_1
  long twos = 0;                               // running power-of-two exponent
  if (n == 1) cur = prev;
  for (int m = 1; m < n - 1; ++m) {
    const double next =
        z * std::sqrt(2.0 / (m + 1)) * cur - std::sqrt(m / (m + 1.0)) * prev;
    prev = cur;
    cur = next;
    const double mag = std::abs(cur);
    if (mag > 0x1p+500) {
      prev = std::ldexp(prev, -500);
      cur = std::ldexp(cur, -500);
      twos += 500;
    } else if (mag < 0x1p-500 && mag > 0.0) {
      prev = std::ldexp(prev, 500);
      cur = std::ldexp(cur, 500);
      twos -= 500;
    }
  }
  return -std::log(static_cast<double>(n)) -
         2.0 * (std::log(std::abs(cur)) + static_cast<double>(twos) * std::log(2.0));
}

}  // namespace

ColeHopf::Quad ColeHopf::gauss_hermite(int n) {
  // Golub–Welsch for the nodes only: the Hermite Jacobi matrix (zero
  // diagonal, off-diagonal sqrt(i/2)) has the nodes as eigenvalues. Weights
  // come from the analytic formula above — eigenvector first components lose
  // all accuracy in the far tails, and those tails matter here.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(i / 2.0);
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  if (es.info() != Eigen::Success)
    throw OracleError("gauss_hermite: eigensolver failed to converge");
  Quad q;
  q.z = es.eigenvalues();
  q.lw.resize(n);
  for (int k = 0; k < n; ++k) q.lw[k] = log_gh_weight(n, q.z[k]);
  return q;
}

void ColeHopf::moments(double x, double t, const Quad& q, double m[4]) const {
  // Heat solution φ(x,t) = ∫ K(x−y,t) e^{g(y)} dy with g = (1−cos πy)/(2πν);
  // substituting y = x − 2√(νt)·z turns it into a Gauss–Hermite integral.
  // m_j accumulates d^j/dy^j e^{g}. The summand is formed in log space
  // (log-weight + g, shifted by the max over the node set) because g spans
  // [0, 1/(πν)] ≈ [0, 100] and the dominant node often sits far out in the
  // Gaussian tail; the shift cancels in all the ratios the jets use.
  const int n = static_cast<int>(q.z.size());
  const double s = 2.0 * std::sqrt(nu_ * t);
  const double inv2nu = 1.0 / (2.0 * nu_);

  double qmax = -1e300;
  for (int k = 0; k < n; ++k) {
    const double y = x - s * q.z[k];
    const double g = (1.0 - std::cos(kPi * y)) / (2.0 * kPi * nu_);
    qmax = std::max(qmax, q.lw[k] + g);
  }
  m[0] = m[1] = m[2] = m[3] = 0.0;
  for (int k = 0; k < n; ++k) {
    const double y = x - s * q.z[k];
    const double g = (1.0 - std::cos(kPi * y)) / (2.0 * kPi * nu_);
    const double g1 = std::sin(kPi * y) * inv2nu;
    const double g2 = kPi * std::cos(kPi * y) * inv2nu;
    const double g3 = -kPi * kPi * std::sin(kPi * y) * inv2nu;
    const double f0 = std::exp(q.lw[k] + g - qmax);
    m[0] += f0;
    m[1] += f0 * g1;
    m[2] += f0 * (g1 * g1 + g2);
    m[3] += f0 * (g1 * g1 * g1 + 3.0 * g1 * g2 + g3);
  }
}

namespace {

OracleJet jet_from_moments(const double m[4], double nu) {
  const double m0 = m[0], m1 = m[1], m2 = m[2], m3 = m[3];
  OracleJet j;
  j.u = -2.0 * nu * m1 / m0;
  j.u_x = -2.0 * nu * (m2 * m0 - m1 * m1) / (m0 * m0);
  j.u_xx = -2.0 * nu * (m3 * m0 * m0 - 3.0 * m2 * m1 * m0 + 2.0 * m1 * m1 * m1) / (m0 * m0 * m0);
  // φ satisfies the heat equation, so ∂t(φ_x/φ) = ν(m3·m0 − m1·m2)/m0².
  j.u_t = -2.0 * nu * nu * (m3 * m0 - m1 * m2) / (m0 * m0);
  return j;
}

OracleJet initial_jet(double x, double nu) {
  OracleJet j;
  j.u = -std::sin(kPi * x);
  j.u_x = -kPi * std::cos(kPi * x);
  j.u_xx = kPi * kPi * std::sin(kPi * x);
  j.u_t = -j.u * j.u_x + nu * j.u_xx;  // from the PDE at t = 0
  return j;
}

void check_domain(double x, double t) {
  if (!(t >= 0.0)) throw DomainError("cole_hopf: t must be >= 0");
  if (!(x >= -1.0 && x <= 1.0)) throw DomainError("cole_hopf: x must be in [-1, 1]");
}

}  // namespace

OracleJet ColeHopf::jet(double x, double t) const {
  check_domain(x, t);
  if (t == 0.0) return initial_jet(x, nu_);
  double mc[4], mf[4];
  moments(x, t, coarse_, mc);
  moments(x, t, fine_, mf);
  const OracleJet jc = jet_from_moments(mc, nu_);
  const OracleJet jf = jet_from_moments(mf, nu_);
  if (!(std::abs(jc.u - jf.u) < 1e-10))
    throw OracleError("cole_hopf: quadrature did not converge at x=" + std::to_string(x) +
                      ", t=" + std::to_string(t));
  return jf;
}

double ColeHopf::value(double x, double t) const { return jet(x, t).u; }

double cole_hopf_reference(double x, double t, double nu) {
  if (nu == kBurgersNu) {
    static const ColeHopf oracle(kBurgersNu);
    return oracle.value(x, t);
  }
  return ColeHopf(nu).value(x, t);
}

ReferenceGrid make_reference_grid(int nx, int nt, double nu) {
  if (nx < 2 || nt < 2) throw DomainError("make_reference_grid: need at least a 2x2 grid");
  ColeHopf oracle(nu);
  ReferenceGrid grid;
  grid.x = Eigen::VectorXd::LinSpaced(nx, -1.0, 1.0);
  grid.t = Eigen::VectorXd::LinSpaced(nt, 0.0, 1.0);
  grid.u.resize(nx, nt);
  for (int j = 0; j < nt; ++j)
    for (int i = 0; i < nx; ++i) grid.u(i, j) = oracle.value(grid.x[i], grid.t[j]);
  return grid;
}

LabeledSet generate_inverse_dataset(long n, std::uint64_t seed, double noise_level, double nu) {
  if (n < 1) throw DomainError("generate_inverse_dataset: n must be >= 1");
  if (!(noise_level >= 0.0)) throw DomainError("generate_inverse_dataset: noise must be >= 0");
  ColeHopf oracle(nu);
  Rng rng(seed);
  LabeledSet set;
  set.inputs.resize(n, 2);
  set.targets.resize(n, 1);
  for (long i = 0; i < n; ++i) {
    set.inputs(i, 0) = rng.uniform(-1.0, 1.0);
    set.inputs(i, 1) = rng.uniform(0.0, 1.0);
    set.targets(i, 0) = oracle.value(set.inputs(i, 0), set.inputs(i, 1));
  }
  if (noise_level > 0.0) {
    const double mean = set.targets.col(0).mean();
    const double sd =
        std::sqrt((set.targets.col(0).array() - mean).square().sum() / static_cast<double>(n));
    for (long i = 0; i < n; ++i) set.targets(i, 0) += noise_level * sd * rng.normal();
  }
  return set;
}

// ---------------------------------------------------------------- residuals

double burgers_residual(double u, double u_x, double u_t, double u_xx, double lam1, double lam2) {
  return u_t + lam1 * u * u_x - lam2 * u_xx;
}

double burgers_residual(const Jet2& jet, double lam1, double lam2) {
  return burgers_residual(jet.v, jet.d1[0], jet.d1[1], jet.d2(0, 0), lam1, lam2);
}

double burgers_residual(const OracleJet& jet, double lam1, double lam2) {
  return burgers_residual(jet.u, jet.u_x, jet.u_t, jet.u_xx, lam1, lam2);
}

NodeId burgers_residual(Tape& tape, NodeId u_jets, double lam1, double lam2) {
  NodeId u = tape.extract(u_jets, JetComp::value());
  NodeId ux = tape.extract(u_jets, JetComp::d1(0));
  NodeId ut = tape.extract(u_jets, JetComp::d1(1));
  NodeId uxx = tape.extract(u_jets, JetComp::d2(0, 0));
  return tape.add(ut, tape.sub(tape.scale(tape.hadamard(u, ux), lam1), tape.scale(uxx, lam2)));
}

NodeId burgers_residual(Tape& tape, NodeId u_jets, NodeId lam1, NodeId lam2) {
  NodeId u = tape.extract(u_jets, JetComp::value());
  NodeId ux = tape.extract(u_jets, JetComp::d1(0));
  NodeId ut = tape.extract(u_jets, JetComp::d1(1));
  NodeId uxx = tape.extract(u_jets, JetComp::d2(0, 0));
  return tape.add(ut, tape.sub(tape.scale_param(tape.hadamard(u, ux), lam1),
                               tape.scale_param(uxx, lam2)));
}

double sine_toy_residual(const Jet2& jet, double x) {
  return jet.d1[0] - 6.0 * std::cos(6.0 * x);
}

NodeId sine_toy_residual(Tape& tape, NodeId y_jets, const Eigen::VectorXd& xs) {
  NodeId dy = tape.extract(y_jets, JetComp::d1(0));
  Eigen::MatrixXd forcing(1, xs.size());
  for (long i = 0; i < xs.size(); ++i) forcing(0, i) = 6.0 * std::cos(6.0 * xs[i]);
  return tape.sub(dy, tape.const_values(forcing));
}

double sine_toy_target(double x) { return std::sin(6.0 * x); }

double composited_wave_target(double x) {
  double sum = 0.0;
  for (int k : kCompositedFreqs) sum += std::sin(k * x);
  return sum;
}

}  // namespace qres
