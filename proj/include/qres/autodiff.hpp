#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qres/common.hpp"

namespace qres {

// ---------------------------------------------------------------------------
// Second-order jet: value, gradient and Hessian of one scalar quantity with
// respect to the k tape inputs. d2 is exactly symmetric by construction.
// ---------------------------------------------------------------------------
struct Jet2 {
  double v = 0.0;
  Eigen::VectorXd d1;  // k
  Eigen::MatrixXd d2;  // k x k
};

using NodeId = int;

enum class OpKind : std::uint8_t {
  ConstValues,  // leaf: plain values, no gradient
  ConstJets,    // leaf: caller-packed jet lanes, no gradient
  InputJets,    // leaf: points seeded as jets (d1 = basis vectors)
  ParamMatrix,  // leaf: view into the flat parameter vector (rows x cols)
  ParamScalar,  // leaf: one trainable scalar from the flat vector
  MatVec,       // W * H (W: ParamMatrix)
  AddBias,      // H + b broadcast on the value lane (b: ParamMatrix rows x 1)
  Add,          // A + B
  Sub,          // A - B
  Hadamard,     // A ∘ B with full jet algebra
  ScaleConst,   // c * A
  ScaleParam,   // λ * A (λ: ParamScalar)
  Tanh,
  Elu,  // α = 1
  Sin,
  Cos,
  SelectRow,   // one row of A as a width-1 node
  Extract,     // one jet component of A as a plain (lane-1) node
  Square,      // A ∘ A on plain nodes
  ReduceMean,  // mean over all rows and points -> 1x1 scalar node
};

const char* op_name(OpKind op);

// Jet component selector for Extract: value, d1[i], or d2(i,j).
struct JetComp {
  int i = -1;
  int j = -1;
  static JetComp value() { return {-1, -1}; }
  static JetComp d1(int i) { return {i, -1}; }
  static JetComp d2(int i, int j) { return {i, j}; }
};

struct Node {
  OpKind op;
  NodeId a = -1, b = -1;
  int width = 0;  // rows
  int npts = 0;   // points (columns / lanes)
  int lanes = 1;  // 1 for plain nodes, jet length for jet nodes
  double c = 0.0;      // ScaleConst factor
  JetComp comp;        // Extract selector
  int row = 0;         // SelectRow index
  long offset = 0;     // Param*: position in the flat vector
};

// ---------------------------------------------------------------------------
// Reverse-mode tape over batched jet-valued nodes.
//
// Values are stored as width x (npts * lanes) matrices, point-major: column
// p*lanes + l holds lane l of point p. Lane 0 is the value; lanes 1..k the
// first derivatives w.r.t. the k tape inputs; the remaining lanes the tracked
// second-derivative pairs (a problem asks only for the d2 entries its
// residual reads, e.g. Burgers tracks just (x,x)).
//
// Parameters live outside the tape in one flat vector; forward() materialises
// them into leaf nodes, backward() accumulates their adjoints into a flat
// gradient. Same tape + same inputs => bitwise identical values and
// gradients (fixed evaluation order, no threading inside a tape).
// ---------------------------------------------------------------------------
class Tape {
 public:
  // k: number of jet inputs (0 for pure value passes).
  // d2_pairs: tracked second-derivative index pairs (i <= j canonical form).
  explicit Tape(int k = 0, std::vector<std::pair<int, int>> d2_pairs = {});

  // --- leaves ---
  NodeId const_values(const Eigen::MatrixXd& values);  // width x N
  // points: k x N; row i becomes a jet with d1 = e_i.
  NodeId input_jets(const Eigen::MatrixXd& points);
  // packed: width x (N * jet_len) in this tape's lane layout.
  NodeId const_jets(const Eigen::MatrixXd& packed, int npts);
  NodeId param_matrix(long offset, int rows, int cols);
  NodeId param_scalar(long offset);

  // --- ops ---
  NodeId matvec(NodeId w, NodeId h);
  NodeId add_bias(NodeId h, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId scale_param(NodeId a, NodeId lambda);
  NodeId tanh_(NodeId a);
  NodeId elu_(NodeId a);
  NodeId sin_(NodeId a);
  NodeId cos_(NodeId a);
  NodeId select_row(NodeId a, int row);
  NodeId extract(NodeId a, JetComp comp);
  NodeId square(NodeId a);
  NodeId reduce_mean(NodeId a);

  // --- execution ---
  void forward(const double* params, long n_params);
  void forward(const Eigen::VectorXd& params) { forward(params.data(), params.size()); }
  // Writes d(loss)/d(params) into grad, which must cover the tape's
  // parameter extent; backward zeroes it before accumulating.
  void backward(NodeId loss, Eigen::VectorXd& grad);

  double value(NodeId n) const;  // 1x1 scalar nodes
  Jet2 jet_at(NodeId n, int row, int point) const;
  const Eigen::MatrixXd& values(NodeId n) const;
  const Node& node(NodeId n) const { return nodes_[check(n)]; }
  std::size_t size() const { return nodes_.size(); }
  int jet_dim() const { return k_; }
  int jet_len() const { return jet_len_; }
  int lane_of(JetComp comp) const;  // throws UsageError for untracked pairs

  // Throws NonFiniteValue naming the first offending node, if any.
  void assert_finite() const;

 private:
  NodeId push(Node n);
  int check(NodeId n) const;
  void eval_node(NodeId id, const double* params, long n_params);

  int k_;
  std::vector<std::pair<int, int>> pairs_;  // canonical (i <= j)
  int jet_len_;
  std::vector<Node> nodes_;
  std::vector<Eigen::MatrixXd> vals_;
  std::vector<Eigen::MatrixXd> adj_;
  bool ran_forward_ = false;
};

// Scalar handle into a tape: the spec's Var (value + node-id).
struct Var {
  double value = 0.0;
  NodeId id = -1;
  Tape* tape = nullptr;
};

// A differentiable map expressed as tape construction: given the tape and an
// input node, emit ops and return the output node. Stub networks (lookup
// tables, interpolants) and real networks both fit this shape.
using JetProgram = std::function<NodeId(Tape&, NodeId)>;

// Evaluates net_fn at one point and returns the second-order jet of each
// output row w.r.t. the point coordinates. The returned jets stay connected
// to `tape`, so parameter gradients can flow through them afterwards.
std::vector<Jet2> forward_jet(Tape& tape, const JetProgram& net_fn,
                              const Eigen::VectorXd& point,
                              const Eigen::VectorXd& params);

// Convenience overload with a throwaway tape (all d2 pairs tracked).
std::vector<Jet2> forward_jet(const JetProgram& net_fn, const Eigen::VectorXd& point,
                              const Eigen::VectorXd& params = Eigen::VectorXd());

// Gradient of a scalar loss node w.r.t. the flat parameter vector.
// Re-runs the tape forward at `params`, then sweeps backward.
Eigen::VectorXd grad_params(const Var& loss, const Eigen::VectorXd& params);

// (loss, gradient) evaluator used by optimizers and fd_check.
using LossGradFn = std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>;

// Max over parameters of |analytic - central difference| / max(|analytic|, 1e-12).
double fd_check(const LossGradFn& fn, const Eigen::VectorXd& params, double step);

std::vector<std::pair<int, int>> all_d2_pairs(int k);

}  // namespace qres
