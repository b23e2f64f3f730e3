#include "qres/spectral.hpp"

#include <cmath>
#include <complex>

#include "qres/autodiff.hpp"
#include "qres/problems.hpp"

namespace qres {

namespace {

bool power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Fresh twiddles each butterfly keep roundoff from accumulating.
        const std::complex<double> w =
            std::polar(1.0, -2.0 * kPi * static_cast<double>(k) / static_cast<double>(len));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

}  // namespace

Spectrum dft_magnitude(const Eigen::VectorXd& samples, double dx) {
  const long n = samples.size();
  if (!power_of_two(n) || n < 2)
    throw ShapeError("dft_magnitude: sample count must be a power of two (got " +
                     std::to_string(n) + ")");
  std::vector<std::complex<double>> a(n);
  for (long i = 0; i < n; ++i) a[i] = samples[i];
  fft_radix2(a);
  Spectrum sp;
  sp.n_samples = n;
  sp.dx = dx;
  sp.magnitudes.resize(n / 2 + 1);
  const double scale = 2.0 / static_cast<double>(n);  // 1 / (N/2)
  for (long k = 0; k <= n / 2; ++k) sp.magnitudes[k] = std::abs(a[k]) * scale;
  return sp;
}

double band_error(const Spectrum& pred, const Spectrum& target, int k) {
  if (pred.n_samples != target.n_samples)
    throw ShapeError("band_error: spectra have different sample counts");
  if (k < 0 || k >= pred.magnitudes.size())
    throw UsageError("band_error: bin out of range");
  return std::abs(pred.magnitudes[k] - target.magnitudes[k]) /
         std::max(target.magnitudes[k], 1e-12);
}

Eigen::VectorXd composited_wave_samples(long n) {
  Eigen::VectorXd s(n);
  for (long i = 0; i < n; ++i)
    s[i] = composited_wave_target(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
  return s;
}

BiasCurve spectral_bias_curve(const std::vector<std::pair<long, Eigen::VectorXd>>& snapshots,
                              const NetworkSpec& spec, const Eigen::VectorXd& target_samples) {
  const long n = target_samples.size();
  if (!power_of_two(n)) throw ShapeError("spectral_bias_curve: need a power-of-two grid");
  for (std::size_t i = 1; i < snapshots.size(); ++i)
    if (snapshots[i].first <= snapshots[i - 1].first)
      throw UsageError("spectral_bias_curve: snapshots must be epoch-ordered");
  const Spectrum target = dft_magnitude(target_samples);

  Eigen::MatrixXd grid(1, n);
  for (long i = 0; i < n; ++i)
    grid(0, i) = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n);

  BiasCurve curve;
  curve.errors.resize(static_cast<long>(snapshots.size()), static_cast<long>(kCompositedFreqs.size()));
  for (std::size_t s = 0; s < snapshots.size(); ++s) {
    curve.epochs.push_back(snapshots[s].first);
    Tape tape;
    NodeId out = build_network(tape, spec, tape.const_values(grid));
    tape.forward(snapshots[s].second);
    const Spectrum pred = dft_magnitude(tape.values(out).row(0).transpose());
    for (std::size_t f = 0; f < kCompositedFreqs.size(); ++f)
      curve.errors(static_cast<long>(s), static_cast<long>(f)) =
          band_error(pred, target, kCompositedFreqs[f]);
  }
  return curve;
}

}  // namespace qres
