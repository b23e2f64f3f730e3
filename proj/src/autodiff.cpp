#include "qres/autodiff.hpp"

#include <cmath>

namespace qres {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::ConstValues: return "const_values";
    case OpKind::ConstJets: return "const_jets";
    case OpKind::InputJets: return "input_jets";
    case OpKind::ParamMatrix: return "param_matrix";
    case OpKind::ParamScalar: return "param_scalar";
    case OpKind::MatVec: return "matvec";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Hadamard: return "hadamard";
    case OpKind::ScaleConst: return "scale";
    case OpKind::ScaleParam: return "scale_param";
    case OpKind::Tanh: return "tanh";
    case OpKind::Elu: return "elu";
    case OpKind::Sin: return "sin";
    case OpKind::Cos: return "cos";
    case OpKind::SelectRow: return "select_row";
    case OpKind::Extract: return "extract";
    case OpKind::Square: return "square";
    case OpKind::ReduceMean: return "reduce_mean";
  }
  return "?";
}

std::vector<std::pair<int, int>> all_d2_pairs(int k) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j) pairs.emplace_back(i, j);
  return pairs;
}

Tape::Tape(int k, std::vector<std::pair<int, int>> d2_pairs) : k_(k), pairs_(std::move(d2_pairs)) {
  if (k_ < 0) throw DomainError("Tape: jet dimension must be >= 0");
  for (auto& [i, j] : pairs_) {
    if (i > j) std::swap(i, j);
    if (i < 0 || j >= k_) throw DomainError("Tape: d2 pair outside jet dimension");
  }
  jet_len_ = 1 + k_ + static_cast<int>(pairs_.size());
}

int Tape::check(NodeId n) const {
  if (n < 0 || static_cast<std::size_t>(n) >= nodes_.size())
    throw UsageError("node id not on this tape");
  return n;
}

int Tape::lane_of(JetComp comp) const {
  if (comp.i < 0) return 0;
  if (comp.j < 0) {
    if (comp.i >= k_) throw UsageError("extract: d1 index outside jet dimension");
    return 1 + comp.i;
  }
  int i = comp.i, j = comp.j;
  if (i > j) std::swap(i, j);
  for (std::size_t q = 0; q < pairs_.size(); ++q)
    if (pairs_[q].first == i && pairs_[q].second == j) return 1 + k_ + static_cast<int>(q);
  throw UsageError("extract: second-derivative pair not tracked by this tape");
}

NodeId Tape::push(Node n) {
  nodes_.push_back(n);
  vals_.emplace_back();
  adj_.emplace_back();
  ran_forward_ = false;
  return static_cast<NodeId>(nodes_.size() - 1);
}

// ---------------------------------------------------------------------- leaves

NodeId Tape::const_values(const Eigen::MatrixXd& values) {
  Node n{};
  n.op = OpKind::ConstValues;
  n.width = static_cast<int>(values.rows());
  n.npts = static_cast<int>(values.cols());
  n.lanes = 1;
  NodeId id = push(n);
  vals_[id] = values;
  return id;
}

NodeId Tape::input_jets(const Eigen::MatrixXd& points) {
  if (points.rows() != k_) throw ShapeError("input_jets: points must be k x N");
  Node n{};
  n.op = OpKind::InputJets;
  n.width = k_;
  n.npts = static_cast<int>(points.cols());
  n.lanes = jet_len_;
  NodeId id = push(n);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(k_, points.cols() * jet_len_);
  for (int p = 0; p < n.npts; ++p) {
    v.col(static_cast<long>(p) * jet_len_) = points.col(p);
    for (int i = 0; i < k_; ++i) v(i, static_cast<long>(p) * jet_len_ + 1 + i) = 1.0;
  }
  vals_[id] = std::move(v);
  return id;
}

NodeId Tape::const_jets(const Eigen::MatrixXd& packed, int npts) {
  if (packed.cols() != static_cast<long>(npts) * jet_len_)
    throw ShapeError("const_jets: expected width x (npts * jet_len)");
  Node n{};
  n.op = OpKind::ConstJets;
  n.width = static_cast<int>(packed.rows());
  n.npts = npts;
  n.lanes = jet_len_;
  NodeId id = push(n);
  vals_[id] = packed;
  return id;
}

NodeId Tape::param_matrix(long offset, int rows, int cols) {
  if (offset < 0 || rows < 1 || cols < 1) throw UsageError("param_matrix: bad shape");
  Node n{};
  n.op = OpKind::ParamMatrix;
  n.width = rows;
  n.npts = cols;
  n.lanes = 1;
  n.offset = offset;
  return push(n);
}

NodeId Tape::param_scalar(long offset) {
  if (offset < 0) throw UsageError("param_scalar: bad offset");
  Node n{};
  n.op = OpKind::ParamScalar;
  n.width = 1;
  n.npts = 1;
  n.lanes = 1;
  n.offset = offset;
  return push(n);
}

// ------------------------------------------------------------------------ ops

NodeId Tape::matvec(NodeId w, NodeId h) {
  check(w);
  check(h);
  if (nodes_[w].op != OpKind::ParamMatrix) throw UsageError("matvec: W must be a param matrix");
  if (nodes_[w].npts != nodes_[h].width) throw ShapeError("matvec: inner dimensions disagree");
  Node n{};
  n.op = OpKind::MatVec;
  n.a = w;
  n.b = h;
  n.width = nodes_[w].width;
  n.npts = nodes_[h].npts;
  n.lanes = nodes_[h].lanes;
  return push(n);
}

NodeId Tape::add_bias(NodeId h, NodeId b) {
  check(h);
  check(b);
  if (nodes_[b].op != OpKind::ParamMatrix || nodes_[b].npts != 1)
    throw UsageError("add_bias: b must be a param column");
  if (nodes_[b].width != nodes_[h].width) throw ShapeError("add_bias: width mismatch");
  Node n{};
  n.op = OpKind::AddBias;
  n.a = h;
  n.b = b;
  n.width = nodes_[h].width;
  n.npts = nodes_[h].npts;
  n.lanes = nodes_[h].lanes;
  return push(n);
}

namespace {
void require_same_shape(const Node& a, const Node& b, const char* what) {
  if (a.width != b.width || a.npts != b.npts || a.lanes != b.lanes)
    throw ShapeError(std::string(what) + ": operand shapes disagree");
}
}  // namespace

NodeId Tape::add(NodeId a, NodeId b) {
  check(a);
  check(b);
  require_same_shape(nodes_[a], nodes_[b], "add");
  Node n = nodes_[a];
  n.op = OpKind::Add;
  n.a = a;
  n.b = b;
  return push(n);
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check(a);
  check(b);
  require_same_shape(nodes_[a], nodes_[b], "sub");
  Node n = nodes_[a];
  n.op = OpKind::Sub;
  n.a = a;
  n.b = b;
  return push(n);
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
  check(a);
  check(b);
  require_same_shape(nodes_[a], nodes_[b], "hadamard");
  Node n = nodes_[a];
  n.op = OpKind::Hadamard;
  n.a = a;
  n.b = b;
  return push(n);
}

NodeId Tape::scale(NodeId a, double c) {
  check(a);
  Node n = nodes_[a];
  n.op = OpKind::ScaleConst;
  n.a = a;
  n.b = -1;
  n.c = c;
  return push(n);
}

NodeId Tape::scale_param(NodeId a, NodeId lambda) {
  check(a);
  check(lambda);
  if (nodes_[lambda].op != OpKind::ParamScalar)
    throw UsageError("scale_param: lambda must be a scalar parameter");
  Node n = nodes_[a];
  n.op = OpKind::ScaleParam;
  n.a = a;
  n.b = lambda;
  return push(n);
}

NodeId Tape::tanh_(NodeId a) {
  check(a);
  Node n = nodes_[a];
  n.op = OpKind::Tanh;
  n.a = a;
  n.b = -1;
  return push(n);
}

NodeId Tape::elu_(NodeId a) {
  check(a);
  Node n = nodes_[a];
  n.op = OpKind::Elu;
  n.a = a;
  n.b = -1;
  return push(n);
}

NodeId Tape::sin_(NodeId a) {
  check(a);
  Node n = nodes_[a];
  n.op = OpKind::Sin;
  n.a = a;
  n.b = -1;
  return push(n);
}

NodeId Tape::cos_(NodeId a) {
  check(a);
  Node n = nodes_[a];
  n.op = OpKind::Cos;
  n.a = a;
  n.b = -1;
  return push(n);
}

NodeId Tape::select_row(NodeId a, int row) {
  check(a);
  if (row < 0 || row >= nodes_[a].width) throw ShapeError("select_row: row out of range");
  Node n = nodes_[a];
  n.op = OpKind::SelectRow;
  n.a = a;
  n.b = -1;
  n.width = 1;
  n.row = row;
  return push(n);
}

NodeId Tape::extract(NodeId a, JetComp comp) {
  check(a);
  if (nodes_[a].lanes != jet_len_) throw UsageError("extract: operand is not a jet node");
  lane_of(comp);  // validates
  Node n{};
  n.op = OpKind::Extract;
  n.a = a;
  n.width = nodes_[a].width;
  n.npts = nodes_[a].npts;
  n.lanes = 1;
  n.comp = comp;
  return push(n);
}

NodeId Tape::square(NodeId a) {
  check(a);
  if (nodes_[a].lanes != 1) throw UsageError("square: defined on plain (lane-1) nodes");
  Node n = nodes_[a];
  n.op = OpKind::Square;
  n.a = a;
  n.b = -1;
  return push(n);
}

NodeId Tape::reduce_mean(NodeId a) {
  check(a);
  if (nodes_[a].lanes != 1) throw UsageError("reduce_mean: defined on plain (lane-1) nodes");
  Node n{};
  n.op = OpKind::ReduceMean;
  n.a = a;
  n.width = 1;
  n.npts = 1;
  n.lanes = 1;
  return push(n);
}

// -------------------------------------------------------------------- forward

namespace {

// Derivative triples at the stored input/output values; t1=f', t2=f'', t3=f'''.
struct ActDerivs {
  double t1, t2, t3;
};

inline ActDerivs act_derivs(OpKind op, double in_v, double out_v) {
  switch (op) {
    case OpKind::Tanh: {
      double f = out_v, t1 = 1.0 - f * f;
      double t2 = -2.0 * f * t1;
      double t3 = -2.0 * (t1 * t1 + f * t2);
      return {t1, t2, t3};
    }
    case OpKind::Elu: {
      if (in_v > 0.0) return {1.0, 0.0, 0.0};
      double e = out_v + 1.0;  // exp(v)
      return {e, e, e};
    }
    case OpKind::Sin: {
      double c = std::cos(in_v);
      return {c, -out_v, -c};
    }
    case OpKind::Cos: {
      double s = std::sin(in_v);
      return {-s, -out_v, s};
    }
    default:
      throw UsageError("act_derivs: not an activation");
  }
}

inline double act_eval(OpKind op, double v) {
  switch (op) {
    case OpKind::Tanh: return std::tanh(v);
    case OpKind::Elu: return v > 0.0 ? v : std::expm1(v);
    case OpKind::Sin: return std::sin(v);
    case OpKind::Cos: return std::cos(v);
    default:
      throw UsageError("act_eval: not an activation");
  }
}

}  // namespace

void Tape::eval_node(NodeId id, const double* params, long n_params) {
  Node& n = nodes_[id];
  const long cols = static_cast<long>(n.npts) * n.lanes;
  const int w = n.width;
  const int L = n.lanes;
  const int k = (L == 1) ? 0 : k_;
  const int nq = (L == 1) ? 0 : static_cast<int>(pairs_.size());

  switch (n.op) {
    case OpKind::ConstValues:
    case OpKind::ConstJets:
    case OpKind::InputJets:
      return;  // materialised at creation

    case OpKind::ParamMatrix: {
      if (n.offset + static_cast<long>(n.width) * n.npts > n_params)
        throw UsageError("param_matrix: flat vector too short");
      vals_[id] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                 Eigen::RowMajor>>(params + n.offset, n.width,
                                                                   n.npts);
      return;
    }
    case OpKind::ParamScalar: {
      if (n.offset >= n_params) throw UsageError("param_scalar: flat vector too short");
      vals_[id].resize(1, 1);
      vals_[id](0, 0) = params[n.offset];
      return;
    }
    case OpKind::MatVec:
      vals_[id].resize(w, cols);
      vals_[id].noalias() = vals_[n.a] * vals_[n.b];
      return;

    case OpKind::AddBias: {
      vals_[id] = vals_[n.a];
      const Eigen::MatrixXd& b = vals_[n.b];
      for (int p = 0; p < n.npts; ++p) vals_[id].col(static_cast<long>(p) * L) += b.col(0);
      return;
    }
    case OpKind::Add:
      vals_[id] = vals_[n.a] + vals_[n.b];
      return;
    case OpKind::Sub:
      vals_[id] = vals_[n.a] - vals_[n.b];
      return;

    case OpKind::Hadamard: {
      vals_[id].resize(w, cols);
      const double* A = vals_[n.a].data();
      const double* B = vals_[n.b].data();
      double* C = vals_[id].data();
      if (L == 1) {
        const long total = static_cast<long>(w) * cols;
        for (long x = 0; x < total; ++x) C[x] = A[x] * B[x];
        return;
      }
      for (int p = 0; p < n.npts; ++p) {
        const double* a = A + static_cast<long>(p) * L * w;
        const double* b = B + static_cast<long>(p) * L * w;
        double* c = C + static_cast<long>(p) * L * w;
        for (int x = 0; x < w; ++x) c[x] = a[x] * b[x];
        for (int i = 0; i < k; ++i) {
          const double* ai = a + (1 + i) * w;
          const double* bi = b + (1 + i) * w;
          double* ci = c + (1 + i) * w;
          for (int x = 0; x < w; ++x) ci[x] = ai[x] * b[x] + a[x] * bi[x];
        }
        for (int q = 0; q < nq; ++q) {
          const int i = pairs_[q].first, j = pairs_[q].second;
          const double* aq = a + (1 + k + q) * w;
          const double* bq = b + (1 + k + q) * w;
          const double* ai = a + (1 + i) * w;
          const double* aj = a + (1 + j) * w;
          const double* bi = b + (1 + i) * w;
          const double* bj = b + (1 + j) * w;
          double* cq = c + (1 + k + q) * w;
          for (int x = 0; x < w; ++x)
            cq[x] = aq[x] * b[x] + ai[x] * bj[x] + aj[x] * bi[x] + a[x] * bq[x];
        }
      }
      return;
    }

    case OpKind::ScaleConst:
      vals_[id] = n.c * vals_[n.a];
      return;

    case OpKind::ScaleParam:
      vals_[id] = vals_[n.b](0, 0) * vals_[n.a];
      return;

    case OpKind::Tanh:
    case OpKind::Elu:
    case OpKind::Sin:
    case OpKind::Cos: {
      vals_[id].resize(w, cols);
      const double* A = vals_[n.a].data();
      double* C = vals_[id].data();
      if (L == 1) {
        const long total = static_cast<long>(w) * cols;
        for (long x = 0; x < total; ++x) C[x] = act_eval(n.op, A[x]);
        return;
      }
      Eigen::VectorXd t1(w), t2(w);
      for (int p = 0; p < n.npts; ++p) {
        const double* a = A + static_cast<long>(p) * L * w;
        double* c = C + static_cast<long>(p) * L * w;
        for (int x = 0; x < w; ++x) {
          c[x] = act_eval(n.op, a[x]);
          ActDerivs d = act_derivs(n.op, a[x], c[x]);
          t1[x] = d.t1;
          t2[x] = d.t2;
        }
        for (int i = 0; i < k; ++i) {
          const double* ai = a + (1 + i) * w;
          double* ci = c + (1 + i) * w;
          for (int x = 0; x < w; ++x) ci[x] = t1[x] * ai[x];
        }
        for (int q = 0; q < nq; ++q) {
          const int i = pairs_[q].first, j = pairs_[q].second;
          const double* aq = a + (1 + k + q) * w;
          const double* ai = a + (1 + i) * w;
          const double* aj = a + (1 + j) * w;
          double* cq = c + (1 + k + q) * w;
          for (int x = 0; x < w; ++x) cq[x] = t1[x] * aq[x] + t2[x] * ai[x] * aj[x];
        }
      }
      return;
    }

    case OpKind::SelectRow:
      vals_[id] = vals_[n.a].row(n.row);
      return;

    case OpKind::Extract: {
      vals_[id].resize(w, n.npts);
      const int lane = lane_of(n.comp);
      const int la = nodes_[n.a].lanes;
      for (int p = 0; p < n.npts; ++p)
        vals_[id].col(p) = vals_[n.a].col(static_cast<long>(p) * la + lane);
      return;
    }

    case OpKind::Square: {
      vals_[id] = vals_[n.a].cwiseProduct(vals_[n.a]);
      return;
    }

    case OpKind::ReduceMean: {
      vals_[id].resize(1, 1);
      const Eigen::MatrixXd& a = vals_[n.a];
      vals_[id](0, 0) = a.size() > 0 ? a.sum() / static_cast<double>(a.size()) : 0.0;
      return;
    }
  }
}

void Tape::forward(const double* params, long n_params) {
  for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id)
    eval_node(id, params, n_params);
  ran_forward_ = true;
}

double Tape::value(NodeId n) const {
  check(n);
  if (!ran_forward_) throw UsageError("value: run forward first");
  if (vals_[n].rows() != 1 || vals_[n].cols() != 1)
    throw UsageError("value: node is not a scalar");
  return vals_[n](0, 0);
}

const Eigen::MatrixXd& Tape::values(NodeId n) const {
  check(n);
  if (!ran_forward_) throw UsageError("values: run forward first");
  return vals_[n];
}

Jet2 Tape::jet_at(NodeId n, int row, int point) const {
  check(n);
  if (!ran_forward_) throw UsageError("jet_at: run forward first");
  const Node& nd = nodes_[n];
  if (nd.lanes != jet_len_) throw UsageError("jet_at: node is not a jet node");
  if (row < 0 || row >= nd.width || point < 0 || point >= nd.npts)
    throw ShapeError("jet_at: index out of range");
  Jet2 jet;
  const long base = static_cast<long>(point) * jet_len_;
  jet.v = vals_[n](row, base);
  jet.d1 = Eigen::VectorXd::Zero(k_);
  jet.d2 = Eigen::MatrixXd::Zero(k_, k_);
  for (int i = 0; i < k_; ++i) jet.d1[i] = vals_[n](row, base + 1 + i);
  for (std::size_t q = 0; q < pairs_.size(); ++q) {
    double v = vals_[n](row, base + 1 + k_ + static_cast<long>(q));
    jet.d2(pairs_[q].first, pairs_[q].second) = v;
    jet.d2(pairs_[q].second, pairs_[q].first) = v;
  }
  return jet;
}

void Tape::assert_finite() const {
  for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
    if (vals_[id].size() > 0 && !vals_[id].allFinite())
      throw NonFiniteValue("non-finite value at tape node " + std::to_string(id) + " (" +
                           op_name(nodes_[id].op) + ")");
  }
}

// ------------------------------------------------------------------- backward

void Tape::backward(NodeId loss, Eigen::VectorXd& grad) {
  check(loss);
  if (!ran_forward_) throw UsageError("backward: run forward first");
  const Node& ln = nodes_[loss];
  if (ln.width != 1 || ln.npts != 1 || ln.lanes != 1)
    throw UsageError("backward: loss must be a scalar node");
  long extent = 0;
  for (const Node& n : nodes_)
    if (n.op == OpKind::ParamMatrix || n.op == OpKind::ParamScalar)
      extent = std::max(extent, n.offset + static_cast<long>(n.width) * n.npts);
  if (grad.size() < extent)
    throw ShapeError("backward: gradient vector shorter than the tape's parameter extent");
  grad.setZero();

  // Mark ancestors of the loss; everything else is skipped.
  std::vector<char> needed(nodes_.size(), 0);
  needed[loss] = 1;
  for (NodeId id = loss; id >= 0; --id) {
    if (!needed[id]) continue;
    if (nodes_[id].a >= 0) needed[nodes_[id].a] = 1;
    if (nodes_[id].b >= 0) needed[nodes_[id].b] = 1;
  }

  // Fresh adjoints for the reachable set.
  for (NodeId id = 0; id <= loss; ++id) {
    if (!needed[id]) continue;
    adj_[id].resize(vals_[id].rows(), vals_[id].cols());
    adj_[id].setZero();
  }
  adj_[loss](0, 0) = 1.0;

  for (NodeId id = loss; id >= 0; --id) {
    if (!needed[id]) continue;
    const Node& n = nodes_[id];
    const int w = n.width;
    const int L = n.lanes;
    const int k = (L == 1) ? 0 : k_;
    const int nq = (L == 1) ? 0 : static_cast<int>(pairs_.size());

    switch (n.op) {
      case OpKind::ConstValues:
      case OpKind::ConstJets:
      case OpKind::InputJets:
        break;  // leaves without parameter adjoints

      case OpKind::ParamMatrix: {
        // Canonical flattening is row-major.
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> g(
            grad.data() + n.offset, n.width, n.npts);
        g += adj_[id];
        break;
      }
      case OpKind::ParamScalar:
        grad[n.offset] += adj_[id](0, 0);
        break;

      case OpKind::MatVec:
        adj_[n.b].noalias() += vals_[n.a].transpose() * adj_[id];
        adj_[n.a].noalias() += adj_[id] * vals_[n.b].transpose();
        break;

      case OpKind::AddBias: {
        adj_[n.a] += adj_[id];
        for (int p = 0; p < n.npts; ++p)
          adj_[n.b].col(0) += adj_[id].col(static_cast<long>(p) * L);
        break;
      }

      case OpKind::Add:
        adj_[n.a] += adj_[id];
        adj_[n.b] += adj_[id];
        break;
      case OpKind::Sub:
        adj_[n.a] += adj_[id];
        adj_[n.b] -= adj_[id];
        break;

      case OpKind::Hadamard: {
        const double* A = vals_[n.a].data();
        const double* B = vals_[n.b].data();
        const double* G = adj_[id].data();
        double* GA = adj_[n.a].data();
        double* GB = adj_[n.b].data();
        if (L == 1) {
          const long total = static_cast<long>(w) * n.npts;
          for (long x = 0; x < total; ++x) {
            GA[x] += G[x] * B[x];
            GB[x] += G[x] * A[x];
          }
          break;
        }
        for (int p = 0; p < n.npts; ++p) {
          const long base = static_cast<long>(p) * L * w;
          const double* a = A + base;
          const double* b = B + base;
          const double* g = G + base;
          double* ga = GA + base;
          double* gb = GB + base;
          // value lane: from all lanes of the output adjoint
          for (int x = 0; x < w; ++x) {
            ga[x] += g[x] * b[x];
            gb[x] += g[x] * a[x];
          }
          for (int i = 0; i < k; ++i) {
            const double* gi = g + (1 + i) * w;
            const double* ai = a + (1 + i) * w;
            const double* bi = b + (1 + i) * w;
            double* gav = ga;
            double* gbv = gb;
            double* gai = ga + (1 + i) * w;
            double* gbi = gb + (1 + i) * w;
            for (int x = 0; x < w; ++x) {
              // c1i = ai*b0 + a0*bi
              gai[x] += gi[x] * b[x];
              gbi[x] += gi[x] * a[x];
              gav[x] += gi[x] * bi[x];
              gbv[x] += gi[x] * ai[x];
            }
          }
          for (int q = 0; q < nq; ++q) {
            const int i = pairs_[q].first, j = pairs_[q].second;
            const double* gq = g + (1 + k + q) * w;
            const double* aq = a + (1 + k + q) * w;
            const double* bq = b + (1 + k + q) * w;
            const double* ai = a + (1 + i) * w;
            const double* aj = a + (1 + j) * w;
            const double* bi = b + (1 + i) * w;
            const double* bj = b + (1 + j) * w;
            double* gaq = ga + (1 + k + q) * w;
            double* gbq = gb + (1 + k + q) * w;
            double* gai = ga + (1 + i) * w;
            double* gaj = ga + (1 + j) * w;
            double* gbi = gb + (1 + i) * w;
            double* gbj = gb + (1 + j) * w;
            for (int x = 0; x < w; ++x) {
              // cq = aq*b0 + ai*bj + aj*bi + a0*bq
              gaq[x] += gq[x] * b[x];
              gbq[x] += gq[x] * a[x];
              gai[x] += gq[x] * bj[x];
              gbj[x] += gq[x] * ai[x];
              gaj[x] += gq[x] * bi[x];
              gbi[x] += gq[x] * aj[x];
              ga[x] += gq[x] * bq[x];
              gb[x] += gq[x] * aq[x];
            }
          }
        }
        break;
      }

      case OpKind::ScaleConst:
        adj_[n.a] += n.c * adj_[id];
        break;

      case OpKind::ScaleParam: {
        const double lam = vals_[n.b](0, 0);
        adj_[n.a] += lam * adj_[id];
        adj_[n.b](0, 0) += (adj_[id].cwiseProduct(vals_[n.a])).sum();
        break;
      }

      case OpKind::Tanh:
      case OpKind::Elu:
      case OpKind::Sin:
      case OpKind::Cos: {
        const double* A = vals_[n.a].data();
        const double* C = vals_[id].data();
        const double* G = adj_[id].data();
        double* GA = adj_[n.a].data();
        if (L == 1) {
          const long total = static_cast<long>(w) * n.npts;
          for (long x = 0; x < total; ++x) {
            ActDerivs d = act_derivs(n.op, A[x], C[x]);
            GA[x] += d.t1 * G[x];
          }
          break;
        }
        Eigen::VectorXd t1(w), t2(w), t3(w);
        for (int p = 0; p < n.npts; ++p) {
          const long base = static_cast<long>(p) * L * w;
          const double* a = A + base;
          const double* c = C + base;
          const double* g = G + base;
          double* ga = GA + base;
          for (int x = 0; x < w; ++x) {
            ActDerivs d = act_derivs(n.op, a[x], c[x]);
            t1[x] = d.t1;
            t2[x] = d.t2;
            t3[x] = d.t3;
          }
          // value lane of the input collects from every output lane
          for (int x = 0; x < w; ++x) ga[x] += t1[x] * g[x];
          for (int i = 0; i < k; ++i) {
            const double* gi = g + (1 + i) * w;
            const double* ai = a + (1 + i) * w;
            double* gai = ga + (1 + i) * w;
            for (int x = 0; x < w; ++x) {
              gai[x] += t1[x] * gi[x];
              ga[x] += t2[x] * gi[x] * ai[x];
            }
          }
          for (int q = 0; q < nq; ++q) {
            const int i = pairs_[q].first, j = pairs_[q].second;
            const double* gq = g + (1 + k + q) * w;
            const double* aq = a + (1 + k + q) * w;
            const double* ai = a + (1 + i) * w;
            const double* aj = a + (1 + j) * w;
            double* gaq = ga + (1 + k + q) * w;
            double* gai = ga + (1 + i) * w;
            double* gaj = ga + (1 + j) * w;
            for (int x = 0; x < w; ++x) {
              // yq = t1*aq + t2*ai*aj
              gaq[x] += t1[x] * gq[x];
              gai[x] += t2[x] * gq[x] * aj[x];
              gaj[x] += t2[x] * gq[x] * ai[x];
              ga[x] += gq[x] * (t2[x] * aq[x] + t3[x] * ai[x] * aj[x]);
            }
          }
        }
        break;
      }

      case OpKind::SelectRow:
        adj_[n.a].row(n.row) += adj_[id];
        break;

      case OpKind::Extract: {
        const int lane = lane_of(n.comp);
        const int la = nodes_[n.a].lanes;
        for (int p = 0; p < n.npts; ++p)
          adj_[n.a].col(static_cast<long>(p) * la + lane) += adj_[id].col(p);
        break;
      }

      case OpKind::Square:
        adj_[n.a] += 2.0 * adj_[id].cwiseProduct(vals_[n.a]);
        break;

      case OpKind::ReduceMean: {
        const double g = adj_[id](0, 0) / static_cast<double>(vals_[n.a].size());
        adj_[n.a].array() += g;
        break;
      }
    }
  }
}

// ------------------------------------------------------------------ utilities

std::vector<Jet2> forward_jet(Tape& tape, const JetProgram& net_fn, const Eigen::VectorXd& point,
                              const Eigen::VectorXd& params) {
  if (point.size() != tape.jet_dim())
    throw ShapeError("forward_jet: point dimension must equal the tape jet dimension");
  NodeId in = tape.input_jets(point);
  NodeId out = net_fn(tape, in);
  tape.forward(params);
  const Node& n = tape.node(out);
  std::vector<Jet2> jets;
  jets.reserve(n.width);
  for (int r = 0; r < n.width; ++r) {
    Jet2 j = tape.jet_at(out, r, 0);
    bool ok = std::isfinite(j.v) && j.d1.allFinite() && j.d2.allFinite();
    if (!ok) tape.assert_finite();  // locates and throws with the node index
    jets.push_back(std::move(j));
  }
  return jets;
}

std::vector<Jet2> forward_jet(const JetProgram& net_fn, const Eigen::VectorXd& point,
                              const Eigen::VectorXd& params) {
  Tape tape(static_cast<int>(point.size()), all_d2_pairs(static_cast<int>(point.size())));
  return forward_jet(tape, net_fn, point, params);
}

Eigen::VectorXd grad_params(const Var& loss, const Eigen::VectorXd& params) {
  if (loss.tape == nullptr || loss.id < 0) throw UsageError("grad_params: loss is not on a tape");
  loss.tape->forward(params);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
  loss.tape->backward(loss.id, grad);
  return grad;
}

double fd_check(const LossGradFn& fn, const Eigen::VectorXd& params, double step) {
  if (!(step > 0.0)) throw DomainError("fd_check: step must be positive");
  auto [loss0, analytic] = fn(params);
  (void)loss0;
  if (analytic.size() != params.size()) throw ShapeError("fd_check: gradient length mismatch");
  Eigen::VectorXd p = params;
  double worst = 0.0;
  for (long i = 0; i < params.size(); ++i) {
    p[i] = params[i] + step;
    double up = fn(p).first;
    p[i] = params[i] - step;
    double dn = fn(p).first;
    p[i] = params[i];
    double fd = (up - dn) / (2.0 * step);
    double rel = std::abs(analytic[i] - fd) / std::max(std::abs(analytic[i]), 1e-12);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace qres
