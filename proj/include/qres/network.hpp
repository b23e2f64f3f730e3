#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "qres/autodiff.hpp"
#include "qres/common.hpp"

namespace qres {

enum class LayerKind : std::uint8_t {
  Plain,              // σ(W1·H + b)
  QRes,               // σ((W1·H)∘(W2·H) + W1·H + b)
  IdentityShortcut,   // σ(W1·H + b) + H              (needs in-width == out-width)
  QuadraticShortcut,  // (W1·H)∘(W2·H) + σ(W1·H + b)
  AdaptivePlain,      // σ(n·α·(W1·H + b)), n = 5, α trainable
};

enum class Activation : std::uint8_t { Tanh, Elu, Identity };

const char* layer_kind_name(LayerKind k);
const char* activation_name(Activation a);
LayerKind parse_layer_kind(const std::string& s);      // UsageError on unknown
Activation parse_activation(const std::string& s);     // UsageError on unknown

// Scaling factor n of the adaptive-activation layer.
inline constexpr double kAdaptiveN = 5.0;

// ---------------------------------------------------------------------------
// Architecture as the width vector d = (d0, ..., dh) plus one kind and one
// activation per layer. The last layer conventionally uses Identity.
// ---------------------------------------------------------------------------
struct NetworkSpec {
  std::vector<int> arch;
  std::vector<LayerKind> kinds;
  std::vector<Activation> acts;

  int layers() const { return static_cast<int>(arch.size()) - 1; }
  int in_dim() const { return arch.front(); }
  int out_dim() const { return arch.back(); }
};

// Throws SpecError unless: h >= 1, widths >= 1, kinds/acts sized h, and every
// IdentityShortcut layer maps equal widths.
void validate(const NetworkSpec& spec);

// Spec from an explicit width vector with one kind and one hidden
// activation; the output layer gets Identity. IdentityShortcut demands equal
// in/out widths, so under that kind unequal layers fall back to Plain.
NetworkSpec make_spec(const std::vector<int>& arch, LayerKind kind, Activation act);

// (d0, width x hidden, dout) shorthand for the common uniform case.
NetworkSpec make_uniform_spec(int d0, int width, int hidden, int dout, LayerKind kind,
                              Activation act);

// Stable identifier of an architecture, used by the params.bin header.
std::uint64_t spec_hash(const NetworkSpec& spec);
// "arch|kinds|acts" CSV triple, e.g. "1,8,1|qres,qres|tanh,identity".
std::string spec_string(const NetworkSpec& spec);

// ---------------------------------------------------------------------------
// Structured parameters. W2[l] is 0x0 for kinds without a second matrix;
// alpha[l] is meaningful only for AdaptivePlain layers.
// ---------------------------------------------------------------------------
struct ParameterSet {
  std::vector<Eigen::MatrixXd> W1;
  std::vector<Eigen::MatrixXd> W2;
  std::vector<Eigen::VectorXd> b;
  std::vector<double> alpha;
};

long param_count(const NetworkSpec& spec);

// Glorot-uniform W1/W2 (bound sqrt(6/(fan_in+fan_out))), zero biases,
// alpha = 1/n. Bitwise deterministic in the seed.
ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed);

// Canonical flat layout, per layer: W1 row-major, then W2 row-major (kinds
// with a second matrix), then b, then alpha (AdaptivePlain). Round-trips
// bitwise; length equals param_count(spec).
Eigen::VectorXd flatten(const NetworkSpec& spec, const ParameterSet& params);
ParameterSet unflatten(const NetworkSpec& spec, const Eigen::VectorXd& flat);

// One layer on a plain vector. W2/alpha are required exactly when the kind
// uses them (missing or spurious -> SpecError); shape mismatch -> ShapeError.
Eigen::VectorXd layer_forward(LayerKind kind, const Eigen::MatrixXd& W1,
                              const Eigen::MatrixXd* W2, const Eigen::VectorXd& b,
                              const double* alpha, const Eigen::VectorXd& h_in, Activation act);

// Whole-network evaluation at one input point.
Eigen::VectorXd forward(const NetworkSpec& spec, const ParameterSet& params,
                        const Eigen::VectorXd& x);

// Emits the network as tape ops reading parameters at [offset, offset +
// param_count) of the flat vector; returns the output node. `input` may be a
// plain or jet node; the same builder serves value passes and PG-loss passes.
NodeId build_network(Tape& tape, const NetworkSpec& spec, NodeId input, long offset = 0);

// params.bin: 8-byte magic "QRESPRM1", uint64 spec hash, int64 count, then
// count little-endian doubles in canonical flat order.
void save_params(const std::string& path, const NetworkSpec& spec, const Eigen::VectorXd& flat);
Eigen::VectorXd load_params(const std::string& path, const NetworkSpec& spec);

}  // namespace qres
