#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

#include "qres/pinn.hpp"
#include "qres/problems.hpp"
#include "qres/spectral.hpp"

using namespace qres;
using Eigen::VectorXd;

namespace {

VectorXd sample_wave(int k, int n) {
  VectorXd s(n);
  for (int i = 0; i < n; ++i) s(i) = std::sin(k * (2 * kPi * i / n));
  return s;
}

// O(N²) reference transform for cross-checking the radix-2 path.
VectorXd naive_magnitudes(const VectorXd& s) {
  const int n = static_cast<int>(s.size());
  VectorXd mag(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) {
    std::complex<double> acc(0, 0);
    for (int i = 0; i < n; ++i)
      acc += s(i) * std::exp(std::complex<double>(0, -2.0 * kPi * k * i / n));
    mag(k) = std::abs(acc) / (n / 2.0);
  }
  return mag;
}

}  // namespace

TEST_CASE("a unit sinusoid reads exactly one at its bin") {
  Spectrum sp = dft_magnitude(sample_wave(4, 1024));
  REQUIRE(sp.magnitudes.size() == 513);
  CHECK(std::abs(sp.magnitudes(4) - 1.0) <= 1e-10);
  for (int k = 0; k < 513; ++k)
    if (k != 4) CHECK(sp.magnitudes(k) <= 1e-10);
}

TEST_CASE("zero samples give a zero spectrum") {
  Spectrum sp = dft_magnitude(VectorXd::Zero(256));
  CHECK(sp.magnitudes.norm() == 0.0);
}

TEST_CASE("Parseval's identity holds") {
  Rng rng(77);
  const int n = 512;
  VectorXd s(n);
  for (int i = 0; i < n; ++i) s(i) = rng.normal();
  Spectrum sp = dft_magnitude(s);
  // One-sided magnitudes normalised by N/2: |X_k|² = (mag_k·N/2)², and the
  // interior bins carry their conjugate twins.
  double lhs = s.squaredNorm();
  double rhs = 0.0;
  for (int k = 0; k <= n / 2; ++k) {
    double xk2 = std::pow(sp.magnitudes(k) * (n / 2.0), 2);
    rhs += (k == 0 || k == n / 2) ? xk2 : 2.0 * xk2;
  }
  rhs /= n;
  CHECK(std::abs(lhs - rhs) <= 1e-9 * lhs);
}

TEST_CASE("the FFT agrees with a naive DFT") {
  Rng rng(123);
  for (int n : {64, 128, 256}) {
    VectorXd s(n);
    for (int i = 0; i < n; ++i) s(i) = rng.uniform(-2.0, 2.0);
    Spectrum sp = dft_magnitude(s);
    VectorXd ref = naive_magnitudes(s);
    CHECK((sp.magnitudes - ref).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, ref.maxCoeff()));
  }
}

TEST_CASE("non-power-of-two lengths are rejected") {
  CHECK_THROWS_AS(dft_magnitude(VectorXd::Zero(1000)), ShapeError);
}

TEST_CASE("band_error reference points") {
  Spectrum target = dft_magnitude(sample_wave(8, 256));
  CHECK(band_error(target, target, 8) == 0.0);
  CHECK(band_error(target, target, 3) == 0.0);

  Spectrum zero = dft_magnitude(VectorXd::Zero(256));
  CHECK(band_error(zero, target, 8) == doctest::Approx(1.0).epsilon(1e-10));

  Spectrum half = dft_magnitude(VectorXd(0.5 * sample_wave(8, 256)));
  CHECK(band_error(half, target, 8) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("the composited-wave target nails its own spectrum") {
  VectorXd samples = composited_wave_samples();
  REQUIRE(samples.size() == 1024);
  Spectrum sp = dft_magnitude(samples, 2 * kPi / 1024);
  for (int k : kCompositedFreqs) CHECK(std::abs(sp.magnitudes(k) - 1.0) <= 1e-10);
  CHECK(sp.magnitudes(5) <= 1e-10);
}

TEST_CASE("untrained networks carry no energy at the target bins") {
  VectorXd target = composited_wave_samples();
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    NetworkSpec spec = make_spec({1, 32, 32, 1}, LayerKind::Plain, Activation::Tanh);
    VectorXd params = flatten(spec, init_params(spec, seed));
    BiasCurve curve = spectral_bias_curve({{0, params}}, spec, target);
    REQUIRE(curve.epochs.size() == 1);
    for (int j = 0; j < 6; ++j) CHECK(curve.errors(0, j) == doctest::Approx(1.0).epsilon(0.25));
  }
}

TEST_CASE("training fits the slow band before the fast band") {
  CompositedWave prob;
  NetworkSpec spec = make_spec({1, 32, 32, 1}, LayerKind::Plain, Activation::Tanh);
  Schedule sched;
  sched.adam_epochs = 4000;
  sched.lbfgs_max_iters = 0;

  std::vector<std::pair<long, VectorXd>> snapshots;
  EpochHook hook = [&](long epoch, const VectorXd& p) {
    if (epoch % 1000 == 0) snapshots.emplace_back(epoch, p);
  };
  RunRecord rec = train(Problem{prob}, spec, sched, 0, hook);
  REQUIRE_FALSE(rec.failed);

  BiasCurve curve = spectral_bias_curve(snapshots, spec, composited_wave_samples());
  REQUIRE(curve.epochs.size() == snapshots.size());
  // Band errors start near one everywhere...
  CHECK(curve.errors(0, 0) == doctest::Approx(1.0).epsilon(0.25));
  // ...and by the last snapshot the slowest band is well ahead of the fastest.
  int last = static_cast<int>(curve.epochs.size()) - 1;
  CHECK(curve.errors(last, 0) < curve.errors(last, 5));
  CHECK(curve.errors(last, 0) < 0.5);
}
