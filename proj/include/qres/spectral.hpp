#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

#include "qres/common.hpp"
#include "qres/network.hpp"

namespace qres {

// One-sided magnitude spectrum of a real signal on N uniform samples.
struct Spectrum {
  Eigen::VectorXd magnitudes;  // bins 0 .. N/2, normalised by N/2
  long n_samples = 0;
  double dx = 0.0;
};

// Radix-2 FFT magnitudes. A unit-amplitude sinusoid at integer bin k (k
// strictly inside (0, N/2)) reads exactly 1.0 at magnitudes[k].
Spectrum dft_magnitude(const Eigen::VectorXd& samples, double dx = 1.0);

// |pred[k] − target[k]| / max(target[k], 1e-12).
double band_error(const Spectrum& pred, const Spectrum& target, int k);

// band_error at each target frequency for each snapshot, evaluated on 1024
// uniform samples of the network over [0, 2π). Row i = snapshot i, column j
// = kCompositedFreqs[j]; first column of the companion epoch vector returned
// alongside.
struct BiasCurve {
  std::vector<long> epochs;
  Eigen::MatrixXd errors;  // snapshots x 6
};

BiasCurve spectral_bias_curve(const std::vector<std::pair<long, Eigen::VectorXd>>& snapshots,
                              const NetworkSpec& spec, const Eigen::VectorXd& target_samples);

// Convenience: the composited-wave target sampled on the 1024-point grid.
Eigen::VectorXd composited_wave_samples(long n = 1024);

}  // namespace qres
