#include "qres/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace qres {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Plain: return "plain";
    case LayerKind::QRes: return "qres";
    case LayerKind::IdentityShortcut: return "isc";
    case LayerKind::QuadraticShortcut: return "qsc";
    case LayerKind::AdaptivePlain: return "apinn";
  }
  return "?";
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Elu: return "elu";
    case Activation::Identity: return "identity";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  if (s == "plain") return LayerKind::Plain;
  if (s == "qres") return LayerKind::QRes;
  if (s == "isc") return LayerKind::IdentityShortcut;
  if (s == "qsc") return LayerKind::QuadraticShortcut;
  if (s == "apinn") return LayerKind::AdaptivePlain;
  throw UsageError("unknown layer kind '" + s + "' (plain|qres|isc|qsc|apinn)");
}

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "elu") return Activation::Elu;
  if (s == "identity") return Activation::Identity;
  throw UsageError("unknown activation '" + s + "' (tanh|elu|identity)");
}

namespace {

bool has_w2(LayerKind k) {
  return k == LayerKind::QRes || k == LayerKind::QuadraticShortcut;
}

}  // namespace

void validate(const NetworkSpec& spec) {
  const int h = spec.layers();
  if (h < 1) throw SpecError("network needs at least one layer");
  for (int d : spec.arch)
    if (d < 1) throw SpecError("all widths must be >= 1");
  if (static_cast<int>(spec.kinds.size()) != h || static_cast<int>(spec.acts.size()) != h)
    throw SpecError("kinds/acts must have one entry per layer");
  for (int l = 0; l < h; ++l)
    if (spec.kinds[l] == LayerKind::IdentityShortcut && spec.arch[l] != spec.arch[l + 1])
      throw SpecError("identity shortcut requires equal in/out widths (layer " +
                      std::to_string(l) + ")");
}

NetworkSpec make_spec(const std::vector<int>& arch, LayerKind kind, Activation act) {
  if (arch.size() < 2) throw SpecError("make_spec: arch needs at least (d0, d1)");
  NetworkSpec spec;
  spec.arch = arch;
  const int h = static_cast<int>(arch.size()) - 1;
  for (int l = 0; l < h; ++l) {
    LayerKind k = kind;
    if (kind == LayerKind::IdentityShortcut && arch[l] != arch[l + 1]) k = LayerKind::Plain;
    spec.kinds.push_back(k);
    spec.acts.push_back(l == h - 1 ? Activation::Identity : act);
  }
  validate(spec);
  return spec;
}

NetworkSpec make_uniform_spec(int d0, int width, int hidden, int dout, LayerKind kind,
                              Activation act) {
  if (d0 < 1 || width < 1 || hidden < 1 || dout < 1)
    throw SpecError("make_uniform_spec: dimensions must be >= 1");
  std::vector<int> arch;
  arch.push_back(d0);
  for (int i = 0; i < hidden; ++i) arch.push_back(width);
  arch.push_back(dout);
  return make_spec(arch, kind, act);
}

std::string spec_string(const NetworkSpec& spec) {
  std::string s;
  for (std::size_t i = 0; i < spec.arch.size(); ++i)
    s += (i ? "," : "") + std::to_string(spec.arch[i]);
  s += "|";
  for (std::size_t l = 0; l < spec.kinds.size(); ++l)
    s += std::string(l ? "," : "") + layer_kind_name(spec.kinds[l]);
  s += "|";
  for (std::size_t l = 0; l < spec.acts.size(); ++l)
    s += std::string(l ? "," : "") + activation_name(spec.acts[l]);
  return s;
}

std::uint64_t spec_hash(const NetworkSpec& spec) {
  return fnv1a64(spec_string(spec));
}

long param_count(const NetworkSpec& spec) {
  validate(spec);
  long total = 0;
  for (int l = 0; l < spec.layers(); ++l) {
    const long in = spec.arch[l], out = spec.arch[l + 1];
    total += out * in + out;                           // W1 + b
    if (has_w2(spec.kinds[l])) total += out * in;      // W2
    if (spec.kinds[l] == LayerKind::AdaptivePlain) total += 1;  // alpha
  }
  return total;
}

ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  ParameterSet p;
  for (int l = 0; l < spec.layers(); ++l) {
    const int in = spec.arch[l], out = spec.arch[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    Eigen::MatrixXd w1(out, in);
    // Row-major draw order so the flat layout is reproducible from the seed
    // alone, independent of Eigen's storage order.
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w1(r, c) = rng.uniform(-bound, bound);
    p.W1.push_back(std::move(w1));
    if (has_w2(spec.kinds[l])) {
      Eigen::MatrixXd w2(out, in);
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) w2(r, c) = rng.uniform(-bound, bound);
      p.W2.push_back(std::move(w2));
    } else {
      p.W2.emplace_back();
    }
    p.b.push_back(Eigen::VectorXd::Zero(out));
    p.alpha.push_back(1.0 / kAdaptiveN);
  }
  return p;
}

Eigen::VectorXd flatten(const NetworkSpec& spec, const ParameterSet& params) {
  validate(spec);
  Eigen::VectorXd flat(param_count(spec));
  long off = 0;
  auto put_rowmajor = [&](const Eigen::MatrixXd& m) {
    for (long r = 0; r < m.rows(); ++r)
      for (long c = 0; c < m.cols(); ++c) flat[off++] = m(r, c);
  };
  for (int l = 0; l < spec.layers(); ++l) {
    const int in = spec.arch[l], out = spec.arch[l + 1];
    if (params.W1[l].rows() != out || params.W1[l].cols() != in)
      throw ShapeError("flatten: W1 shape disagrees with spec (layer " + std::to_string(l) + ")");
    put_rowmajor(params.W1[l]);
    if (has_w2(spec.kinds[l])) {
      if (params.W2[l].rows() != out || params.W2[l].cols() != in)
        throw ShapeError("flatten: W2 shape disagrees with spec (layer " + std::to_string(l) +
                         ")");
      put_rowmajor(params.W2[l]);
    }
    if (params.b[l].size() != out)
      throw ShapeError("flatten: b length disagrees with spec (layer " + std::to_string(l) + ")");
    for (int r = 0; r < out; ++r) flat[off++] = params.b[l][r];
    if (spec.kinds[l] == LayerKind::AdaptivePlain) flat[off++] = params.alpha[l];
  }
  return flat;
}

ParameterSet unflatten(const NetworkSpec& spec, const Eigen::VectorXd& flat) {
  validate(spec);
  if (flat.size() != param_count(spec))
    throw ShapeError("unflatten: expected " + std::to_string(param_count(spec)) +
                     " scalars, got " + std::to_string(flat.size()));
  ParameterSet p;
  long off = 0;
  auto take_rowmajor = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = flat[off++];
    return m;
  };
  for (int l = 0; l < spec.layers(); ++l) {
    const int in = spec.arch[l], out = spec.arch[l + 1];
    p.W1.push_back(take_rowmajor(out, in));
    p.W2.push_back(has_w2(spec.kinds[l]) ? take_rowmajor(out, in) : Eigen::MatrixXd());
    p.b.push_back(flat.segment(off, out));
    off += out;
    p.alpha.push_back(spec.kinds[l] == LayerKind::AdaptivePlain ? flat[off++]
                                                                : 1.0 / kAdaptiveN);
  }
  return p;
}

namespace {

Eigen::VectorXd apply_act(Activation act, Eigen::VectorXd v) {
  switch (act) {
    case Activation::Tanh:
      return v.array().tanh().matrix();
    case Activation::Elu:
      for (long i = 0; i < v.size(); ++i) v[i] = v[i] > 0.0 ? v[i] : std::expm1(v[i]);
      return v;
    case Activation::Identity:
      return v;
  }
  return v;
}

}  // namespace

Eigen::VectorXd layer_forward(LayerKind kind, const Eigen::MatrixXd& W1,
                              const Eigen::MatrixXd* W2, const Eigen::VectorXd& b,
                              const double* alpha, const Eigen::VectorXd& h_in, Activation act) {
  if (has_w2(kind) && W2 == nullptr)
    throw SpecError(std::string(layer_kind_name(kind)) + " layer requires W2");
  if (!has_w2(kind) && W2 != nullptr)
    throw SpecError(std::string(layer_kind_name(kind)) + " layer takes no W2");
  if (kind == LayerKind::AdaptivePlain && alpha == nullptr)
    throw SpecError("adaptive layer requires alpha");
  if (W1.cols() != h_in.size()) throw ShapeError("layer_forward: W1 columns != input length");
  if (W1.rows() != b.size()) throw ShapeError("layer_forward: W1 rows != bias length");
  if (W2 != nullptr && (W2->rows() != W1.rows() || W2->cols() != W1.cols()))
    throw ShapeError("layer_forward: W2 shape != W1 shape");

  const Eigen::VectorXd z1 = W1 * h_in;
  switch (kind) {
    case LayerKind::Plain:
      return apply_act(act, z1 + b);
    case LayerKind::QRes:
      return apply_act(act, z1.cwiseProduct(*W2 * h_in) + z1 + b);
    case LayerKind::IdentityShortcut: {
      if (W1.rows() != h_in.size())
        throw ShapeError("layer_forward: identity shortcut requires equal widths");
      return apply_act(act, z1 + b) + h_in;
    }
    case LayerKind::QuadraticShortcut:
      return z1.cwiseProduct(*W2 * h_in) + apply_act(act, z1 + b);
    case LayerKind::AdaptivePlain:
      return apply_act(act, kAdaptiveN * (*alpha) * (z1 + b));
  }
  throw SpecError("unknown layer kind");
}

Eigen::VectorXd forward(const NetworkSpec& spec, const ParameterSet& params,
                        const Eigen::VectorXd& x) {
  validate(spec);
  if (x.size() != spec.in_dim()) throw ShapeError("forward: input length != d0");
  Eigen::VectorXd h = x;
  for (int l = 0; l < spec.layers(); ++l) {
    const LayerKind k = spec.kinds[l];
    h = layer_forward(k, params.W1[l], has_w2(k) ? &params.W2[l] : nullptr, params.b[l],
                      k == LayerKind::AdaptivePlain ? &params.alpha[l] : nullptr, h,
                      spec.acts[l]);
  }
  return h;
}

namespace {

NodeId apply_act_node(Tape& tape, NodeId a, Activation act) {
  switch (act) {
    case Activation::Tanh: return tape.tanh_(a);
    case Activation::Elu: return tape.elu_(a);
    case Activation::Identity: return a;
  }
  return a;
}

}  // namespace

NodeId build_network(Tape& tape, const NetworkSpec& spec, NodeId input, long offset) {
  validate(spec);
  if (tape.node(input).width != spec.in_dim())
    throw ShapeError("build_network: input node width != d0");
  long off = offset;
  NodeId h = input;
  for (int l = 0; l < spec.layers(); ++l) {
    const int in = spec.arch[l], out = spec.arch[l + 1];
    const LayerKind k = spec.kinds[l];
    NodeId w1 = tape.param_matrix(off, out, in);
    off += static_cast<long>(out) * in;
    NodeId z1 = tape.matvec(w1, h);
    NodeId z2 = -1;
    if (has_w2(k)) {
      NodeId w2 = tape.param_matrix(off, out, in);
      off += static_cast<long>(out) * in;
      z2 = tape.matvec(w2, h);
    }
    NodeId b = tape.param_matrix(off, out, 1);
    off += out;
    switch (k) {
      case LayerKind::Plain:
        h = apply_act_node(tape, tape.add_bias(z1, b), spec.acts[l]);
        break;
      case LayerKind::QRes:
        h = apply_act_node(tape, tape.add_bias(tape.add(tape.hadamard(z1, z2), z1), b),
                           spec.acts[l]);
        break;
      case LayerKind::IdentityShortcut:
        h = tape.add(apply_act_node(tape, tape.add_bias(z1, b), spec.acts[l]), h);
        break;
      case LayerKind::QuadraticShortcut:
        h = tape.add(tape.hadamard(z1, z2),
                     apply_act_node(tape, tape.add_bias(z1, b), spec.acts[l]));
        break;
      case LayerKind::AdaptivePlain: {
        NodeId alpha = tape.param_scalar(off);
        off += 1;
        NodeId scaled = tape.scale(tape.scale_param(tape.add_bias(z1, b), alpha), kAdaptiveN);
        h = apply_act_node(tape, scaled, spec.acts[l]);
        break;
      }
    }
  }
  return h;
}

// ------------------------------------------------------------- serialization

namespace {
constexpr char kMagic[8] = {'Q', 'R', 'E', 'S', 'P', 'R', 'M', '1'};
}

void save_params(const std::string& path, const NetworkSpec& spec, const Eigen::VectorXd& flat) {
  if (flat.size() != param_count(spec))
    throw ShapeError("save_params: vector length != param_count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("save_params: cannot open '" + path + "'");
  const std::uint64_t hash = spec_hash(spec);
  const std::int64_t count = flat.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&hash), sizeof hash);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw UsageError("save_params: write failed for '" + path + "'");
}

Eigen::VectorXd load_params(const std::string& path, const NetworkSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("load_params: cannot open '" + path + "'");
  char magic[8];
  std::uint64_t hash = 0;
  std::int64_t count = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&hash), sizeof hash);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw SpecError("load_params: '" + path + "' is not a parameter file");
  if (hash != spec_hash(spec))
    throw SpecError("load_params: parameter file was written for a different architecture");
  if (count != param_count(spec))
    throw SpecError("load_params: parameter count disagrees with spec");
  Eigen::VectorXd flat(count);
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw SpecError("load_params: truncated parameter file");
  return flat;
}

}  // namespace qres
