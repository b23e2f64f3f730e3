#pragma once

#include <map>
#include <string>
#include <vector>

#include "qres/network.hpp"
#include "qres/pinn.hpp"
#include "qres/problems.hpp"

namespace qres {

// ---------------------------------------------------------------------------
// One experiment, fully determined (seeded — never the wall clock).
// Serialized as JSON; see parse_config/serialize_config for the schema.
// ---------------------------------------------------------------------------
struct ExperimentConfig {
  std::string problem = "burgers_forward";
  std::vector<int> arch;
  LayerKind kind = LayerKind::Plain;
  Activation activation = Activation::Tanh;
  Schedule schedule{};
  long n_colloc = -1;  // -1: problem default
  long n_data = -1;    // forward: IC+BC total; inverse/toy/wave: labeled count
  double noise = 0.0;
  long snapshot_every = 100;  // spectrum subcommand cadence
  std::uint64_t seed = 0;
  std::string out = "runs/out";
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct SweepConfig {
  ExperimentConfig base;
  std::vector<int> depths;                       // hidden-layer counts
  std::map<std::string, std::vector<int>> widths;  // per layer kind name
  std::vector<std::uint64_t> seeds;
  long max_runs = 512;
  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

ExperimentConfig parse_config(const std::string& json_text);
std::string serialize_config(const ExperimentConfig& config);
SweepConfig parse_sweep(const std::string& json_text);
std::string serialize_sweep(const SweepConfig& sweep);

// FNV-1a over the canonical (key-sorted) serialization.
std::uint64_t config_hash(const ExperimentConfig& config);

Problem make_problem(const ExperimentConfig& config);      // resolves ids, budgets
NetworkSpec make_network_spec(const ExperimentConfig& config);

// Subcommand bodies; each returns a process exit code (0 ok, 1 validation
// error, 2 run failure).
int run_train(const ExperimentConfig& config);
int run_sweep(const SweepConfig& sweep, int jobs);
int run_theory(const std::vector<int>& arch, int r, LayerKind kind, const std::string& out);
int run_spectrum(const ExperimentConfig& config);
int run_gendata(const std::string& out_dir, std::uint64_t seed, double noise);
int run_check();

// Full argv dispatch (the `qres` binary is a thin wrapper around this).
int cli_main(int argc, char** argv);

}  // namespace qres
