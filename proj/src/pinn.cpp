#include "qres/pinn.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>

namespace qres {

CollocationSet sample_collocation(const Box& box, long n, std::uint64_t seed) {
  if (n < 1) throw DomainError("sample_collocation: n must be >= 1");
  const int d = box.dims();
  for (int i = 0; i < d; ++i)
    if (!(box.hi[i] > box.lo[i]))
      throw DomainError("sample_collocation: degenerate box on axis " + std::to_string(i));
  Rng rng(seed);
  CollocationSet set;
  set.points.resize(n, d);
  std::vector<long> strata(n);
  for (int dim = 0; dim < d; ++dim) {
    std::iota(strata.begin(), strata.end(), 0L);
    rng.shuffle(strata);
    const double width = box.hi[dim] - box.lo[dim];
    for (long i = 0; i < n; ++i)
      set.points(i, dim) =
          box.lo[dim] + width * (static_cast<double>(strata[i]) + rng.uniform()) / n;
  }
  return set;
}

LabeledSet assemble_labeled(const Problem& problem, std::uint64_t seed) {
  LabeledSet set;
  if (const auto* fwd = std::get_if<BurgersForward>(&problem)) {
    Rng rng(seed);
    const long n = fwd->n_ic + fwd->n_bc;
    set.inputs.resize(n, 2);
    set.targets.resize(n, 1);
    for (long i = 0; i < fwd->n_ic; ++i) {
      const double x = rng.uniform(-1.0, 1.0);
      set.inputs(i, 0) = x;
      set.inputs(i, 1) = 0.0;
      set.targets(i, 0) = -std::sin(kPi * x);
    }
    for (long i = 0; i < fwd->n_bc; ++i) {
      set.inputs(fwd->n_ic + i, 0) = (i < fwd->n_bc / 2) ? -1.0 : 1.0;
      set.inputs(fwd->n_ic + i, 1) = rng.uniform(0.0, 1.0);
      set.targets(fwd->n_ic + i, 0) = 0.0;
    }
    return set;
  }
  if (const auto* inv = std::get_if<BurgersInverse>(&problem))
    return generate_inverse_dataset(inv->n_data, seed, inv->noise_level);
  if (const auto* toy = std::get_if<SineToy>(&problem)) {
    Rng rng(seed);
    set.inputs.resize(toy->n_data, 1);
    set.targets.resize(toy->n_data, 1);
    for (long i = 0; i < toy->n_data; ++i) {
      const double x = rng.uniform(0.0, 2.0 * kPi);
      set.inputs(i, 0) = x;
      set.targets(i, 0) = sine_toy_target(x);
    }
    return set;
  }
  const auto& wave = std::get<CompositedWave>(problem);
  set.inputs.resize(wave.n_data, 1);
  set.targets.resize(wave.n_data, 1);
  for (long i = 0; i < wave.n_data; ++i) {
    const double x = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(wave.n_data);
    set.inputs(i, 0) = x;
    set.targets(i, 0) = composited_wave_target(x);
  }
  return set;
}

Tape make_problem_tape(const Problem& problem) {
  switch (problem.index()) {
    case 0:
    case 1:
      return Tape(2, {{0, 0}});  // u, u_x, u_t, u_xx
    case 2:
      return Tape(1, {});  // y, dy/dx
    default:
      return Tape(0, {});
  }
}

long trainable_count(const Problem& problem, const NetworkSpec& spec) {
  return param_count(spec) + (is_inverse(problem) ? 2 : 0);
}

namespace {

long problem_n_colloc(const Problem& problem) {
  if (const auto* fwd = std::get_if<BurgersForward>(&problem)) return fwd->n_colloc;
  if (const auto* inv = std::get_if<BurgersInverse>(&problem)) return inv->n_colloc;
  if (const auto* toy = std::get_if<SineToy>(&problem)) return toy->n_colloc;
  return 0;
}

Var scalar_node(Tape& tape, NodeId id) { return Var{0.0, id, &tape}; }

Var zero_loss(Tape& tape) {
  return scalar_node(tape, tape.reduce_mean(tape.const_values(Eigen::MatrixXd::Zero(1, 1))));
}

Var pg_from_residual(Tape& tape, NodeId residual) {
  return scalar_node(tape, tape.reduce_mean(tape.square(residual)));
}

Var build_pg(Tape& tape, const Problem& problem, const JetProgram& net,
             const CollocationSet& colloc, long lambda_offset) {
  if (std::holds_alternative<CompositedWave>(problem)) return zero_loss(tape);
  if (colloc.points.rows() == 0) return zero_loss(tape);
  NodeId in = tape.input_jets(colloc.points.transpose());
  NodeId u = net(tape, in);
  if (tape.node(u).width != 1)
    throw ShapeError("pg_loss: residual problems expect a scalar-output network");
  NodeId r = -1;
  if (const auto* fwd = std::get_if<BurgersForward>(&problem)) {
    r = burgers_residual(tape, u, 1.0, fwd->nu);
  } else if (std::holds_alternative<BurgersInverse>(problem)) {
    if (lambda_offset < 0) {
      r = burgers_residual(tape, u, 1.0, kBurgersNu);  // surrogate checks: true λ
    } else {
      NodeId lam1 = tape.param_scalar(lambda_offset);
      NodeId lam2 = tape.param_scalar(lambda_offset + 1);
      r = burgers_residual(tape, u, lam1, lam2);
    }
  } else {
    r = sine_toy_residual(tape, u, colloc.points.col(0));
  }
  return pg_from_residual(tape, r);
}

}  // namespace

Var pg_loss(Tape& tape, const Problem& problem, const NetworkSpec& spec,
            const CollocationSet& colloc) {
  JetProgram net = [&spec](Tape& t, NodeId in) { return build_network(t, spec, in); };
  return build_pg(tape, problem, net, colloc, is_inverse(problem) ? param_count(spec) : -1);
}

Var pg_loss_program(Tape& tape, const Problem& problem, const JetProgram& net,
                    const CollocationSet& colloc) {
  return build_pg(tape, problem, net, colloc, -1);
}

Var data_loss(Tape& tape, const NetworkSpec& spec, const LabeledSet& labeled,
              bool* empty_warning) {
  if (labeled.inputs.rows() == 0) {
    if (empty_warning != nullptr) *empty_warning = true;
    std::cerr << "warning: data_loss over an empty labeled set is 0\n";
    return zero_loss(tape);
  }
  if (labeled.inputs.rows() != labeled.targets.rows())
    throw ShapeError("data_loss: inputs/targets row counts disagree");
  if (!labeled.inputs.allFinite() || !labeled.targets.allFinite())
    throw DomainError("data_loss: labeled set contains non-finite entries");
  NodeId x = tape.const_values(labeled.inputs.transpose());
  NodeId pred = build_network(tape, spec, x);
  if (tape.node(pred).width != labeled.targets.cols())
    throw ShapeError("data_loss: network output width != target width");
  NodeId diff = tape.sub(pred, tape.const_values(labeled.targets.transpose()));
  return pg_from_residual(tape, diff);  // same mean-of-squares reduction
}

double pg_loss(const Problem& problem, const NetworkSpec& spec, const Eigen::VectorXd& params,
               const CollocationSet& colloc) {
  Tape tape = make_problem_tape(problem);
  Var loss = pg_loss(tape, problem, spec, colloc);
  tape.forward(params);
  return tape.value(loss.id);
}

double data_loss(const NetworkSpec& spec, const Eigen::VectorXd& params,
                 const LabeledSet& labeled) {
  Tape tape;
  Var loss = data_loss(tape, spec, labeled);
  tape.forward(params);
  return tape.value(loss.id);
}

Eigen::MatrixXd predict(const NetworkSpec& spec, const Eigen::VectorXd& params,
                        const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != spec.in_dim()) throw ShapeError("predict: inputs must be N x d0");
  Tape tape;
  NodeId x = tape.const_values(inputs.transpose());
  NodeId out = build_network(tape, spec, x);
  tape.forward(params);
  return tape.values(out).transpose();
}

double relative_l2_error(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols())
    throw ShapeError("relative_l2_error: grids differ in shape");
  const double ref_norm = ref.norm();
  if (ref_norm == 0.0) throw MetricError("relative_l2_error: reference norm is zero");
  return (pred - ref).norm() / ref_norm;
}

// ------------------------------------------------------------------ training

namespace {

double final_error(const Problem& problem, const NetworkSpec& spec,
                   const Eigen::VectorXd& params) {
  if (std::holds_alternative<BurgersForward>(problem) ||
      std::holds_alternative<BurgersInverse>(problem)) {
    const ReferenceGrid grid = make_reference_grid();
    Eigen::MatrixXd pts(grid.x.size() * grid.t.size(), 2);
    Eigen::MatrixXd ref(grid.x.size() * grid.t.size(), 1);
    long row = 0;
    for (long j = 0; j < grid.t.size(); ++j)
      for (long i = 0; i < grid.x.size(); ++i, ++row) {
        pts(row, 0) = grid.x[i];
        pts(row, 1) = grid.t[j];
        ref(row, 0) = grid.u(i, j);
      }
    return relative_l2_error(predict(spec, params, pts), ref);
  }
  const long n = 1024;
  Eigen::MatrixXd pts(n, 1), ref(n, 1);
  const bool toy = std::holds_alternative<SineToy>(problem);
  for (long i = 0; i < n; ++i) {
    const double x = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n);
    pts(i, 0) = x;
    ref(i, 0) = toy ? sine_toy_target(x) : composited_wave_target(x);
  }
  return relative_l2_error(predict(spec, params, pts), ref);
}

}  // namespace

RunRecord train(const Problem& problem, const NetworkSpec& spec, const Schedule& schedule,
                std::uint64_t seed, const EpochHook& hook) {
  validate(spec);
  RunRecord rec;
  rec.seed = seed;
  rec.arch_hash = spec_hash(spec);
  rec.inverse = is_inverse(problem);

  const long n_colloc = problem_n_colloc(problem);
  CollocationSet colloc;
  if (n_colloc > 0)
    colloc = sample_collocation(domain(problem), n_colloc, derive_seed(seed, "colloc"));
  const LabeledSet labeled = assemble_labeled(problem, derive_seed(seed, "data"));

  const long n_net = param_count(spec);
  const long n_all = trainable_count(problem, spec);
  Eigen::VectorXd params(n_all);
  params.head(n_net) = flatten(spec, init_params(spec, derive_seed(seed, "init")));
  if (rec.inverse) params.tail(2).setZero();  // λ₁ = λ₂ = 0

  Tape tape = make_problem_tape(problem);
  const Var pg = pg_loss(tape, problem, spec, colloc);
  const Var data = data_loss(tape, spec, labeled);
  const NodeId total = tape.add(pg.id, data.id);

  // Raw (loss, grad); non-finite losses are passed through so the line
  // search can backtrack rather than abort.
  LossGradFn eval = [&](const Eigen::VectorXd& p) {
    tape.forward(p);
    const double loss = tape.value(total);
    if (!std::isfinite(loss)) return std::make_pair(loss, Eigen::VectorXd::Zero(n_all).eval());
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n_all);
    tape.backward(total, grad);
    return std::make_pair(loss, std::move(grad));
  };

  const auto t0 = std::chrono::steady_clock::now();
  auto wall_ms = [&t0] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  auto log_row = [&](long epoch, const char* phase) {
    // Assumes the tape holds a forward pass at the current params.
    RunRow row;
    row.epoch = epoch;
    row.phase = phase;
    row.total = tape.value(total);
    row.pg = tape.value(pg.id);
    row.data = tape.value(data.id);
    if (rec.inverse) {
      row.lambda1 = params[n_net];
      row.lambda2 = params[n_net + 1];
    }
    row.wall_ms = wall_ms();
    rec.rows.push_back(std::move(row));
    if (hook) hook(epoch, params);
  };

  long epoch = 0;
  try {
    AdamState adam = make_adam(n_all, schedule.adam_lr);
    for (; epoch < schedule.adam_epochs; ++epoch) {
      auto [loss, grad] = eval(params);
      if (!std::isfinite(loss)) {
        tape.assert_finite();  // throws naming the first offending node
        throw NonFiniteValue("train: total loss is non-finite");
      }
      log_row(epoch, "adam");
      adam_step(adam, params, grad);
    }

    // Loss after the last Adam step; this evaluation warm-starts L-BFGS.
    auto [loss_end, grad_end] = eval(params);
    if (!std::isfinite(loss_end)) {
      tape.assert_finite();
      throw NonFiniteValue("train: total loss is non-finite");
    }
    log_row(epoch, schedule.adam_epochs > 0 ? "adam" : "lbfgs");

    if (schedule.lbfgs_max_iters > 0) {
      LbfgsState lb = make_lbfgs();
      lb.last_loss = loss_end;
      lb.last_grad = grad_end;
      lb.have_eval = true;
      double prev = loss_end;
      for (long it = 0; it < schedule.lbfgs_max_iters; ++it) {
        try {
          lbfgs_step(lb, eval, params);
        } catch (const LineSearchFailed&) {
          break;  // loss at its float64 floor; finish gracefully
        }
        tape.forward(params);  // the line search may have left trial values
        log_row(epoch + 1 + it, "lbfgs");
        if (lb.converged) break;
        if (should_stop(prev, lb.last_loss, schedule.term)) break;
        prev = lb.last_loss;
      }
    }
  } catch (const NonFiniteValue& e) {
    rec.failed = true;
    rec.fail_reason = e.what();
  } catch (const NonFiniteGradient& e) {
    rec.failed = true;
    rec.fail_reason = e.what();
  }

  rec.final_params = params;
  if (rec.inverse) {
    rec.lambda1 = params[n_net];
    rec.lambda2 = params[n_net + 1];
    rec.lambda1_err_pct = std::abs(rec.lambda1 - 1.0) * 100.0;
    rec.lambda2_err_pct = std::abs(rec.lambda2 - kBurgersNu) / kBurgersNu * 100.0;
  }
  if (!rec.failed) rec.final_rel_l2 = final_error(problem, spec, params);
  return rec;
}

}  // namespace qres
