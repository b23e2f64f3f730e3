#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "qres/autodiff.hpp"
#include "qres/common.hpp"
#include "qres/data.hpp"
#include "qres/network.hpp"
#include "qres/optim.hpp"
#include "qres/problems.hpp"

namespace qres {

struct LossBreakdown {
  double pg = 0.0;
  double data = 0.0;
  double total = 0.0;
};

// Optimization phases: Adam for a fixed epoch budget, then L-BFGS until the
// ftol rule fires, the line search hits the float64 floor, or the cap.
struct Schedule {
  long adam_epochs = 0;
  double adam_lr = 1e-3;
  long lbfgs_max_iters = 50000;
  TerminationRule term{};
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct RunRow {
  long epoch = 0;
  std::string phase;  // "adam" | "lbfgs"
  double total = 0.0, pg = 0.0, data = 0.0;
  double lambda1 = 0.0, lambda2 = 0.0;  // meaningful only when inverse
  double wall_ms = 0.0;
};

struct RunRecord {
  std::vector<RunRow> rows;
  std::uint64_t seed = 0;
  std::uint64_t arch_hash = 0;
  bool inverse = false;
  bool failed = false;
  std::string fail_reason;
  double final_rel_l2 = 0.0;                       // vs the problem's reference
  double lambda1 = 0.0, lambda2 = 0.0;             // inverse estimates
  double lambda1_err_pct = 0.0, lambda2_err_pct = 0.0;
  Eigen::VectorXd final_params;                    // net params (+ λ for inverse)
};

// Latin-hypercube samples over the box: each axis is split into n strata and
// every stratum receives exactly one point. Deterministic in the seed.
CollocationSet sample_collocation(const Box& box, long n, std::uint64_t seed);

// The problem's labeled data (forward IC/BC, inverse measurements, toy
// labels, wave samples), deterministic in the seed.
LabeledSet assemble_labeled(const Problem& problem, std::uint64_t seed);

// Tape with the jet layout the problem's residual needs (Burgers tracks
// (x,x); the sine toy needs first derivatives only; the wave none).
Tape make_problem_tape(const Problem& problem);

// Flat trainable length: param_count, plus λ₁, λ₂ appended for the inverse
// problem (in that order, initialised to 0).
long trainable_count(const Problem& problem, const NetworkSpec& spec);

// --- loss builders (emit nodes on the caller's tape; values appear after
// --- tape.forward). The λ of the inverse problem read the two scalars past
// --- the network's block of the flat vector.
Var pg_loss(Tape& tape, const Problem& problem, const NetworkSpec& spec,
            const CollocationSet& colloc);
Var data_loss(Tape& tape, const NetworkSpec& spec, const LabeledSet& labeled,
              bool* empty_warning = nullptr);

// Same PG assembly around a caller-supplied network program (stubs,
// interpolation surrogates); λ are fixed at the forward-problem constants.
Var pg_loss_program(Tape& tape, const Problem& problem, const JetProgram& net,
                    const CollocationSet& colloc);

// --- one-shot evaluations (build a throwaway tape, run forward) ---
double pg_loss(const Problem& problem, const NetworkSpec& spec, const Eigen::VectorXd& params,
               const CollocationSet& colloc);
double data_loss(const NetworkSpec& spec, const Eigen::VectorXd& params,
                 const LabeledSet& labeled);

// Batched value pass: inputs N x d0 -> predictions N x d_h. Extra trailing
// entries of `params` (the inverse λ) are ignored.
Eigen::MatrixXd predict(const NetworkSpec& spec, const Eigen::VectorXd& params,
                        const Eigen::MatrixXd& inputs);

// ‖pred − ref‖₂ / ‖ref‖₂ over matching grids. MetricError when ‖ref‖ = 0.
double relative_l2_error(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref);

// Called at every logged row with the current parameters (spectral snapshots
// and other telemetry hang off this).
using EpochHook = std::function<void(long epoch, const Eigen::VectorXd& params)>;

// Full-batch training of total = pg + data. Row 0 is the initial loss; Adam
// rows follow per epoch, then one L-BFGS row per iteration. A non-finite
// loss/gradient aborts the run with failed = true; a line-search failure
// (loss at its float64 floor) ends the L-BFGS phase gracefully.
RunRecord train(const Problem& problem, const NetworkSpec& spec, const Schedule& schedule,
                std::uint64_t seed, const EpochHook& hook = {});

}  // namespace qres
