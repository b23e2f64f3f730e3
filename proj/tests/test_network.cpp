#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "qres/expressivity.hpp"
#include "qres/network.hpp"

using namespace qres;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("a QRes layer with W2 = 0 is a plain layer") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    int nin = 2 + static_cast<int>(rng.below(5));
    int nout = 2 + static_cast<int>(rng.below(5));
    MatrixXd W1(nout, nin);
    for (int i = 0; i < W1.size(); ++i) W1(i) = rng.normal();
    MatrixXd W2 = MatrixXd::Zero(nout, nin);
    VectorXd b(nout), h(nin);
    for (int i = 0; i < nout; ++i) b(i) = rng.normal();
    for (int i = 0; i < nin; ++i) h(i) = rng.normal();

    VectorXd qres = layer_forward(LayerKind::QRes, W1, &W2, b, nullptr, h, Activation::Tanh);
    VectorXd plain = layer_forward(LayerKind::Plain, W1, nullptr, b, nullptr, h, Activation::Tanh);
    CHECK((qres - plain).norm() == 0.0);
  }
}

TEST_CASE("one-dimensional QRes layer, by hand") {
  // (W1·h)(W2·h) + W1·h + b = (2·2)(3·2) + 4 + 1 = 29 under identity activation.
  MatrixXd W1 = MatrixXd::Constant(1, 1, 2.0);
  MatrixXd W2 = MatrixXd::Constant(1, 1, 3.0);
  VectorXd b = VectorXd::Constant(1, 1.0);
  VectorXd h = VectorXd::Constant(1, 2.0);
  VectorXd out = layer_forward(LayerKind::QRes, W1, &W2, b, nullptr, h, Activation::Identity);
  CHECK(out(0) == 29.0);
}

TEST_CASE("an adaptive layer at alpha = 1/n is a plain layer") {
  Rng rng(8);
  MatrixXd W1(4, 3);
  for (int i = 0; i < W1.size(); ++i) W1(i) = rng.normal();
  VectorXd b(4), h(3);
  for (int i = 0; i < 4; ++i) b(i) = rng.normal();
  for (int i = 0; i < 3; ++i) h(i) = rng.normal();
  const double alpha = 1.0 / kAdaptiveN;

  VectorXd ada =
      layer_forward(LayerKind::AdaptivePlain, W1, nullptr, b, &alpha, h, Activation::Tanh);
  VectorXd plain = layer_forward(LayerKind::Plain, W1, nullptr, b, nullptr, h, Activation::Tanh);
  CHECK((ada - plain).norm() == 0.0);
}

TEST_CASE("shortcut layers follow their formulas") {
  Rng rng(12);
  MatrixXd W1(4, 4), W2(4, 4);
  VectorXd b(4), h(4);
  for (int i = 0; i < 16; ++i) W1(i) = rng.normal();
  for (int i = 0; i < 16; ++i) W2(i) = rng.normal();
  for (int i = 0; i < 4; ++i) b(i) = rng.normal();
  for (int i = 0; i < 4; ++i) h(i) = rng.normal();

  VectorXd a1 = W1 * h;
  VectorXd isc = layer_forward(LayerKind::IdentityShortcut, W1, nullptr, b, nullptr, h,
                               Activation::Tanh);
  CHECK((isc - ((a1 + b).array().tanh().matrix() + h)).norm() <= 1e-15);

  VectorXd a2 = W2 * h;
  VectorXd qsc =
      layer_forward(LayerKind::QuadraticShortcut, W1, &W2, b, nullptr, h, Activation::Tanh);
  VectorXd expect = a1.cwiseProduct(a2) + (a1 + b).array().tanh().matrix();
  CHECK((qsc - expect).norm() <= 1e-15);
}

TEST_CASE("layer_forward rejects malformed inputs") {
  MatrixXd W1 = MatrixXd::Identity(3, 3);
  MatrixXd W2 = MatrixXd::Identity(3, 3);
  VectorXd b = VectorXd::Zero(3), h = VectorXd::Zero(3);
  CHECK_THROWS_AS(layer_forward(LayerKind::QRes, W1, nullptr, b, nullptr, h, Activation::Tanh),
                  SpecError);  // missing W2
  CHECK_THROWS_AS(layer_forward(LayerKind::Plain, W1, &W2, b, nullptr, h, Activation::Tanh),
                  SpecError);  // spurious W2
  VectorXd h4 = VectorXd::Zero(4);
  CHECK_THROWS_AS(layer_forward(LayerKind::Plain, W1, nullptr, b, nullptr, h4, Activation::Tanh),
                  ShapeError);
}

TEST_CASE("a single linear QRes layer represents any quadratic exactly") {
  const double alpha = 1.7, beta = -0.8, gamma = 0.35;
  NetworkSpec spec = make_spec({1, 1}, LayerKind::QRes, Activation::Identity);
  ParameterSet p = init_params(spec, 0);
  p.W1[0](0, 0) = beta;
  p.W2[0](0, 0) = alpha / beta;
  p.b[0](0) = gamma;

  for (int i = 0; i <= 100; ++i) {
    double x = -2.0 + 4.0 * i / 100.0;
    VectorXd out = forward(spec, p, VectorXd::Constant(1, x));
    CHECK(std::abs(out(0) - (alpha * x * x + beta * x + gamma)) <= 1e-12);
  }
}

TEST_CASE("all-zero parameters map everything to zero") {
  NetworkSpec spec = make_spec({2, 6, 6, 1}, LayerKind::QRes, Activation::Tanh);
  ParameterSet zero = unflatten(spec, VectorXd::Zero(param_count(spec)));
  VectorXd x(2);
  x << 0.4, -1.2;
  CHECK(forward(spec, zero, x)(0) == 0.0);
}

TEST_CASE("the Burgers-sized QRes net produces finite outputs") {
  NetworkSpec spec = make_uniform_spec(2, 10, 8, 1, LayerKind::QRes, Activation::Tanh);
  ParameterSet p = init_params(spec, 5);
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    VectorXd x(2);
    x << rng.uniform(-1, 1), rng.uniform(0, 1);
    CHECK(std::isfinite(forward(spec, p, x)(0)));
  }
}

TEST_CASE("parameter counts of the published architectures") {
  auto count = [](int d0, int w, int hidden, int dout, LayerKind k) {
    return param_count(make_uniform_spec(d0, w, hidden, dout, k, Activation::Tanh));
  };
  CHECK(count(2, 20, 8, 1, LayerKind::Plain) == 3021);
  CHECK(count(2, 10, 8, 1, LayerKind::QRes) == 1541);
  CHECK(count(2, 14, 8, 1, LayerKind::QRes) == 2941);
  CHECK(count(2, 50, 4, 2, LayerKind::QRes) == 15602);
  CHECK(count(2, 100, 4, 2, LayerKind::Plain) == 30802);
}

TEST_CASE("flattened parameters have exactly param_count entries") {
  for (LayerKind k : {LayerKind::Plain, LayerKind::QRes, LayerKind::IdentityShortcut,
                      LayerKind::QuadraticShortcut, LayerKind::AdaptivePlain}) {
    NetworkSpec spec = make_spec({2, 7, 7, 3}, k, Activation::Elu);
    CHECK(flatten(spec, init_params(spec, 1)).size() == param_count(spec));
  }
}

TEST_CASE("initialization is deterministic with zero biases") {
  NetworkSpec spec = make_spec({2, 9, 9, 1}, LayerKind::QRes, Activation::Tanh);
  VectorXd a = flatten(spec, init_params(spec, 42));
  VectorXd b = flatten(spec, init_params(spec, 42));
  CHECK(a == b);
  CHECK(a != flatten(spec, init_params(spec, 43)));

  ParameterSet p = init_params(spec, 42);
  for (const VectorXd& bias : p.b) CHECK(bias.norm() == 0.0);
}

TEST_CASE("initial weight variance matches the Glorot-uniform bound") {
  // A 100x100 layer gives 10^4 draws; uniform on [-a, a] has variance a²/3.
  NetworkSpec spec = make_spec({100, 100, 1}, LayerKind::Plain, Activation::Tanh);
  ParameterSet p = init_params(spec, 17);
  const MatrixXd& W = p.W1[0];
  double mean = W.mean();
  double var = (W.array() - mean).square().sum() / (W.size() - 1);
  double bound = std::sqrt(6.0 / (100 + 100));
  double expect = bound * bound / 3.0;
  CHECK(std::abs(var - expect) <= 0.1 * expect);
}

TEST_CASE("flatten and unflatten round-trip bitwise") {
  for (LayerKind k : {LayerKind::QRes, LayerKind::AdaptivePlain}) {
    NetworkSpec spec = make_spec({3, 5, 5, 2}, k, Activation::Tanh);
    VectorXd flat = flatten(spec, init_params(spec, 77));
    CHECK(flatten(spec, unflatten(spec, flat)) == flat);
  }
  NetworkSpec spec = make_spec({2, 4, 1}, LayerKind::QRes, Activation::Tanh);
  CHECK_THROWS_AS(unflatten(spec, VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("linear QRes stacks are polynomials of degree at most 2^h") {
  // Sample the net on 2^h + 1 points, interpolate, and confirm the
  // interpolant reproduces the net everywhere else: a polynomial of degree
  // <= 2^h is pinned down by 2^h + 1 samples. The top coefficient staying
  // away from zero shows the bound is attained at generic parameters.
  for (int h = 1; h <= 3; ++h) {
    std::vector<int> arch(h + 1, 3);
    arch.front() = 1;
    arch.back() = 1;
    NetworkSpec spec = make_spec(arch, LayerKind::QRes, Activation::Identity);
    ParameterSet p = init_params(spec, 100 + h);

    const int deg = 1 << h;
    const int n = deg + 1;
    MatrixXd V(n, n);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      double x = -0.8 + 1.6 * i / (n - 1);
      for (int j = 0; j < n; ++j) V(i, j) = std::pow(x, j);
      y(i) = forward(spec, p, VectorXd::Constant(1, x))(0);
    }
    VectorXd coef = V.colPivHouseholderQr().solve(y);

    Rng rng(h);
    double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
    for (int trial = 0; trial < 10; ++trial) {
      double x = rng.uniform(-0.8, 0.8);
      double poly = 0.0;
      for (int j = n - 1; j >= 0; --j) poly = poly * x + coef(j);
      double net = forward(spec, p, VectorXd::Constant(1, x))(0);
      CHECK(std::abs(poly - net) <= 1e-7 * scale);
    }
    CHECK(std::abs(coef(deg)) > 1e-10);  // generic: top degree actually present

    // Depth convention cross-check against the closed-form leading degree.
    CHECK(mpz_class(deg) == leading_degree(h + 1, 1, NetKind::QRes));
  }
}

TEST_CASE("spec validation and construction rules") {
  CHECK_THROWS_AS(make_spec({5}, LayerKind::Plain, Activation::Tanh), SpecError);
  CHECK_THROWS_AS(make_spec({2, 0, 1}, LayerKind::Plain, Activation::Tanh), SpecError);

  // Hand-built identity shortcut across unequal widths is rejected...
  NetworkSpec bad;
  bad.arch = {2, 5, 1};
  bad.kinds = {LayerKind::IdentityShortcut, LayerKind::IdentityShortcut};
  bad.acts = {Activation::Tanh, Activation::Identity};
  CHECK_THROWS_AS(validate(bad), SpecError);

  // ...while make_spec demotes those layers to plain.
  NetworkSpec spec = make_spec({2, 5, 5, 1}, LayerKind::IdentityShortcut, Activation::Tanh);
  CHECK(spec.kinds.front() == LayerKind::Plain);
  CHECK(spec.kinds[1] == LayerKind::IdentityShortcut);
  CHECK(spec.kinds.back() == LayerKind::Plain);
  CHECK(spec.acts.back() == Activation::Identity);
}

TEST_CASE("parameter files round-trip and refuse foreign architectures") {
  NetworkSpec spec = make_spec({2, 6, 1}, LayerKind::QRes, Activation::Tanh);
  VectorXd flat = flatten(spec, init_params(spec, 13));
  std::string path = "test_params_roundtrip.bin";
  save_params(path, spec, flat);
  CHECK(load_params(path, spec) == flat);

  NetworkSpec other = make_spec({2, 7, 1}, LayerKind::QRes, Activation::Tanh);
  CHECK_THROWS_AS(load_params(path, other), SpecError);
  std::remove(path.c_str());
}

TEST_CASE("spec naming and hashing") {
  NetworkSpec a = make_spec({1, 8, 1}, LayerKind::QRes, Activation::Tanh);
  NetworkSpec b = make_spec({1, 8, 1}, LayerKind::QRes, Activation::Tanh);
  NetworkSpec c = make_spec({1, 9, 1}, LayerKind::QRes, Activation::Tanh);
  CHECK(spec_hash(a) == spec_hash(b));
  CHECK(spec_hash(a) != spec_hash(c));
  CHECK(spec_string(a) == "1,8,1|qres,qres|tanh,identity");
}
