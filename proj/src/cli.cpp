#include "qres/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "qres/expressivity.hpp"
#include "qres/spectral.hpp"

namespace qres {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(what + ": " + e.what());
  }
}

// Typo protection: configs are hand-edited, so a misspelled key must fail
// loudly instead of silently running with the default it masked.
void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw UsageError("unknown key \"" + it.key() + "\" in " + where);
  }
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["problem"] = c.problem;
  j["network"] = {{"arch", c.arch},
                  {"kind", layer_kind_name(c.kind)},
                  {"activation", activation_name(c.activation)}};
  j["schedule"] = {{"adam_epochs", c.schedule.adam_epochs},
                   {"adam_lr", c.schedule.adam_lr},
                   {"lbfgs_max_iters", c.schedule.lbfgs_max_iters},
                   {"ftol", c.schedule.term.ftol},
                   {"max_epochs", c.schedule.term.max_epochs}};
  j["sampling"] = {{"n_colloc", c.n_colloc}, {"n_data", c.n_data}, {"noise", c.noise}};
  j["snapshot_every"] = c.snapshot_every;
  j["seed"] = c.seed;
  j["out"] = c.out;
  return j;
}

ExperimentConfig config_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + ": top level must be an object");
  reject_unknown(
      j, {"problem", "network", "schedule", "sampling", "snapshot_every", "seed", "out"}, where);
  ExperimentConfig c;
  try {
    c.problem = j.value("problem", c.problem);
    if (j.contains("network")) {
      const json& n = j.at("network");
      reject_unknown(n, {"arch", "kind", "activation"}, where + ".network");
      if (n.contains("arch")) c.arch = n.at("arch").get<std::vector<int>>();
      if (n.contains("kind")) c.kind = parse_layer_kind(n.at("kind").get<std::string>());
      if (n.contains("activation"))
        c.activation = parse_activation(n.at("activation").get<std::string>());
    }
    if (j.contains("schedule")) {
      const json& s = j.at("schedule");
      reject_unknown(s, {"adam_epochs", "adam_lr", "lbfgs_max_iters", "ftol", "max_epochs"},
                     where + ".schedule");
      c.schedule.adam_epochs = s.value("adam_epochs", c.schedule.adam_epochs);
      c.schedule.adam_lr = s.value("adam_lr", c.schedule.adam_lr);
      c.schedule.lbfgs_max_iters = s.value("lbfgs_max_iters", c.schedule.lbfgs_max_iters);
      c.schedule.term.ftol = s.value("ftol", c.schedule.term.ftol);
      c.schedule.term.max_epochs = s.value("max_epochs", c.schedule.term.max_epochs);
    }
    if (j.contains("sampling")) {
      const json& s = j.at("sampling");
      reject_unknown(s, {"n_colloc", "n_data", "noise"}, where + ".sampling");
      c.n_colloc = s.value("n_colloc", c.n_colloc);
      c.n_data = s.value("n_data", c.n_data);
      c.noise = s.value("noise", c.noise);
    }
    c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out);
  } catch (const json::exception& e) {
    throw UsageError(where + ": " + e.what());
  }
  return c;
}

json sweep_to_json(const SweepConfig& s) {
  json j;
  j["base"] = config_to_json(s.base);
  j["depths"] = s.depths;
  j["widths"] = s.widths;
  j["seeds"] = s.seeds;
  j["max_runs"] = s.max_runs;
  return j;
}

// ---------------------------------------------------------------------------
// Artifact writers. Every CSV carries the config hash as its last column so
// any file found on disk can be traced back to the exact configuration.
// ---------------------------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
  if (!out) throw UsageError("short write on " + path.string());
}

void write_run_csv(const fs::path& path, const RunRecord& rec, std::uint64_t hash) {
  std::ostringstream out;
  out << "epoch,phase,total,pg,data,lambda1,lambda2,wall_ms,config_hash\n";
  const std::string h = hex64(hash);
  for (const RunRow& r : rec.rows) {
    out << r.epoch << ',' << r.phase << ',' << g17(r.total) << ',' << g17(r.pg) << ','
        << g17(r.data) << ',';
    if (rec.inverse) out << g17(r.lambda1);
    out << ',';
    if (rec.inverse) out << g17(r.lambda2);
    out << ',' << g17(r.wall_ms) << ',' << h << '\n';
  }
  write_text(path, out.str());
}

void write_summary(const fs::path& path, const ExperimentConfig& cfg, const NetworkSpec& spec,
                   const RunRecord& rec, std::uint64_t hash) {
  json j;
  j["config"] = config_to_json(cfg);
  j["config_hash"] = hex64(hash);
  j["spec"] = spec_string(spec);
  j["spec_hash"] = hex64(spec_hash(spec));
  j["param_count"] = param_count(spec);
  j["trainable_count"] = param_count(spec) + (rec.inverse ? 2 : 0);
  j["status"] = rec.failed ? "failed" : "ok";
  if (rec.failed) j["fail_reason"] = rec.fail_reason;
  j["rows"] = rec.rows.size();
  if (!rec.rows.empty()) {
    const RunRow& last = rec.rows.back();
    j["final_epoch"] = last.epoch;
    j["final_total"] = last.total;
    j["final_pg"] = last.pg;
    j["final_data"] = last.data;
    j["wall_ms"] = last.wall_ms;
  }
  if (!rec.failed) j["rel_l2"] = rec.final_rel_l2;
  if (rec.inverse) {
    j["lambda1"] = rec.lambda1;
    j["lambda2"] = rec.lambda2;
    j["lambda1_err_pct"] = rec.lambda1_err_pct;
    j["lambda2_err_pct"] = rec.lambda2_err_pct;
  }
  write_text(path, j.dump(2) + "\n");
}

// A directory may be reused only by the configuration that created it.
void check_overwrite(const fs::path& dir, std::uint64_t hash) {
  const fs::path summary = dir / "summary.json";
  if (fs::exists(summary)) {
    json j = parse_json_text(slurp(summary.string()), summary.string());
    const std::string prev = j.value("config_hash", std::string());
    if (prev != hex64(hash))
      throw UsageError("output directory " + dir.string() +
                       " already holds a run with a different config (hash " + prev +
                       "); pick a fresh --out");
  } else if (fs::exists(dir / "run.csv") || fs::exists(dir / "params.bin")) {
    throw UsageError("output directory " + dir.string() +
                     " holds artifacts without a summary.json; pick a fresh --out");
  }
}

struct RunOutput {
  RunRecord rec;
  NetworkSpec spec;
  fs::path dir;
};

// Validate, train, persist. All config validation happens before any compute;
// a failed run still leaves run.csv + summary.json (status=failed) behind.
RunOutput execute_run(const ExperimentConfig& cfg, const EpochHook& hook = {}) {
  const Problem problem = make_problem(cfg);
  const NetworkSpec spec = make_network_spec(cfg);
  const Box box = domain(problem);
  if (spec.in_dim() != box.dims())
    throw UsageError(std::string("network input width ") + std::to_string(spec.in_dim()) +
                     " does not match problem dimension " + std::to_string(box.dims()));
  if (spec.out_dim() != 1)
    throw UsageError("problems here are scalar fields; network output width must be 1");

  const std::uint64_t hash = config_hash(cfg);
  const fs::path dir(cfg.out);
  check_overwrite(dir, hash);
  fs::create_directories(dir);

  RunRecord rec = train(problem, spec, cfg.schedule, cfg.seed, hook);

  write_run_csv(dir / "run.csv", rec, hash);
  if (rec.final_params.size() >= param_count(spec))
    save_params((dir / "params.bin").string(), spec, rec.final_params.head(param_count(spec)));
  write_summary(dir / "summary.json", cfg, spec, rec, hash);
  return {std::move(rec), spec, dir};
}

}  // namespace

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

ExperimentConfig parse_config(const std::string& json_text) {
  return config_from_json(parse_json_text(json_text, "config"), "config");
}

std::string serialize_config(const ExperimentConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

SweepConfig parse_sweep(const std::string& json_text) {
  const json j = parse_json_text(json_text, "sweep");
  if (!j.is_object()) throw UsageError("sweep: top level must be an object");
  reject_unknown(j, {"base", "depths", "widths", "seeds", "max_runs"}, "sweep");
  SweepConfig s;
  try {
    if (j.contains("base")) s.base = config_from_json(j.at("base"), "sweep.base");
    if (j.contains("depths")) s.depths = j.at("depths").get<std::vector<int>>();
    if (j.contains("widths"))
      s.widths = j.at("widths").get<std::map<std::string, std::vector<int>>>();
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    s.max_runs = j.value("max_runs", s.max_runs);
  } catch (const json::exception& e) {
    throw UsageError(std::string("sweep: ") + e.what());
  }
  return s;
}

std::string serialize_sweep(const SweepConfig& sweep) { return sweep_to_json(sweep).dump(2) + "\n"; }

std::uint64_t config_hash(const ExperimentConfig& config) {
  // dump() without indentation is canonical: nlohmann objects iterate in
  // sorted key order and doubles print shortest-round-trip.
  return fnv1a64(config_to_json(config).dump());
}

Problem make_problem(const ExperimentConfig& config) {
  const auto colloc = [&](long dflt) { return config.n_colloc >= 0 ? config.n_colloc : dflt; };
  const auto data = [&](long dflt) { return config.n_data >= 0 ? config.n_data : dflt; };
  const auto no_noise = [&] {
    if (config.noise != 0.0)
      throw UsageError("sampling.noise applies to burgers_inverse only");
  };
  if (config.problem == "burgers_forward") {
    no_noise();
    BurgersForward p;
    p.n_colloc = colloc(p.n_colloc);
    const long nd = data(p.n_ic + p.n_bc);  // IC/BC budget, split evenly
    p.n_ic = nd / 2;
    p.n_bc = nd - p.n_ic;
    return p;
  }
  if (config.problem == "burgers_inverse") {
    BurgersInverse p;
    if (config.noise < 0.0) throw UsageError("sampling.noise must be >= 0");
    p.noise_level = config.noise;
    p.n_colloc = colloc(p.n_colloc);
    p.n_data = data(p.n_data);
    return p;
  }
  if (config.problem == "sine_toy") {
    no_noise();
    SineToy p;
    p.n_colloc = colloc(p.n_colloc);
    p.n_data = data(p.n_data);
    return p;
  }
  if (config.problem == "composited_wave") {
    no_noise();
    if (config.n_colloc >= 0)
      throw UsageError("composited_wave is pure regression; sampling.n_colloc does not apply");
    CompositedWave p;
    p.n_data = data(p.n_data);
    return p;
  }
  throw UsageError("unknown problem \"" + config.problem + "\"");
}

NetworkSpec make_network_spec(const ExperimentConfig& config) {
  if (config.arch.empty()) throw UsageError("network.arch is required");
  NetworkSpec spec = make_spec(config.arch, config.kind, config.activation);
  validate(spec);
  return spec;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int run_train(const ExperimentConfig& config) {
  RunOutput out = execute_run(config);
  if (out.rec.failed) {
    std::cerr << "run failed: " << out.rec.fail_reason << " (summary in " << out.dir.string()
              << ")\n";
    return 2;
  }
  const RunRow& last = out.rec.rows.back();
  std::cout << spec_string(out.spec) << " seed=" << out.rec.seed << ": " << out.rec.rows.size()
            << " rows, final total=" << g17(last.total) << ", rel_l2=" << g17(out.rec.final_rel_l2);
  if (out.rec.inverse)
    std::cout << ", lambda1 err=" << g17(out.rec.lambda1_err_pct)
              << "% lambda2 err=" << g17(out.rec.lambda2_err_pct) << "%";
  std::cout << "\n  artifacts: " << out.dir.string() << "\n";
  return 0;
}

int run_sweep(const SweepConfig& sweep, int jobs) {
  if (sweep.depths.empty()) throw UsageError("sweep.depths is empty");
  if (sweep.widths.empty()) throw UsageError("sweep.widths is empty");
  if (sweep.seeds.empty()) throw UsageError("sweep.seeds is empty");
  if (sweep.max_runs < 1) throw UsageError("sweep.max_runs must be >= 1");

  const Problem base_problem = make_problem(sweep.base);  // validates the problem id early
  const int d0 = static_cast<int>(domain(base_problem).dims());

  struct Item {
    ExperimentConfig cfg;
    std::string kind_name;
    int depth = 0, width = 0;
    std::uint64_t seed = 0;
  };
  std::vector<Item> items;
  for (const auto& [kind_name, kind_widths] : sweep.widths) {
    const LayerKind kind = parse_layer_kind(kind_name);
    for (int depth : sweep.depths)
      for (int width : kind_widths)
        for (std::uint64_t seed : sweep.seeds) {
          if (depth < 1 || width < 1) throw UsageError("sweep depths/widths must be >= 1");
          Item it;
          it.cfg = sweep.base;
          it.cfg.kind = kind;
          it.cfg.arch.assign(1, d0);
          it.cfg.arch.insert(it.cfg.arch.end(), depth, width);
          it.cfg.arch.push_back(1);
          it.cfg.seed = seed;
          it.cfg.out = (fs::path(sweep.base.out) / "runs" /
                        (kind_name + "-d" + std::to_string(depth) + "-w" + std::to_string(width) +
                         "-s" + std::to_string(seed)))
                           .string();
          it.kind_name = kind_name;
          it.depth = depth;
          it.width = width;
          it.seed = seed;
          items.push_back(std::move(it));
        }
  }
  if (static_cast<long>(items.size()) > sweep.max_runs)
    throw UsageError("sweep would launch " + std::to_string(items.size()) +
                     " runs, above max_runs " + std::to_string(sweep.max_runs));

  struct Row {
    std::string kind;
    int depth = 0, width = 0;
    long params = 0;
    std::uint64_t seed = 0;
    double final_error = 0.0;
    bool ok = false;
    std::uint64_t hash = 0;
  };
  std::vector<Row> rows(items.size());
  std::atomic<std::size_t> cursor{0};
  std::mutex log_mutex;

  const auto worker = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= items.size()) return;
      const Item& it = items[i];
      Row row;
      row.kind = it.kind_name;
      row.depth = it.depth;
      row.width = it.width;
      row.seed = it.seed;
      row.hash = config_hash(it.cfg);
      try {
        row.params = param_count(make_network_spec(it.cfg));
        RunOutput out = execute_run(it.cfg);
        row.final_error = out.rec.final_rel_l2;
        row.ok = !out.rec.failed;
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cout << "[sweep] " << it.cfg.out << (row.ok ? " ok, rel_l2=" + g17(row.final_error)
                                                         : std::string(" FAILED"))
                  << "\n";
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << "[sweep] " << it.cfg.out << " failed: " << e.what() << "\n";
      }
      rows[i] = std::move(row);
    }
  };

  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(items.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  // Deterministic aggregation order regardless of completion order.
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    if (a.width != b.width) return a.width < b.width;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.kind < b.kind;
  });

  fs::create_directories(sweep.base.out);
  std::ostringstream csv;
  csv << "depth,width,params,final_error,seed,kind,status,config_hash\n";
  bool any_failed = false;
  for (const Row& r : rows) {
    csv << r.depth << ',' << r.width << ',' << r.params << ',';
    if (r.ok)
      csv << g17(r.final_error);
    else
      any_failed = true;
    csv << ',' << r.seed << ',' << r.kind << ',' << (r.ok ? "ok" : "failed") << ','
        << hex64(r.hash) << '\n';
  }
  const fs::path csv_path = fs::path(sweep.base.out) / "sweep.csv";
  write_text(csv_path, csv.str());
  std::cout << rows.size() << " rows -> " << csv_path.string() << "\n";
  return any_failed ? 2 : 0;
}

int run_theory(const std::vector<int>& arch, int r, LayerKind kind, const std::string& out) {
  if (arch.size() < 2) throw UsageError("--arch needs at least input and output widths");
  if (kind != LayerKind::Plain && kind != LayerKind::QRes)
    throw UsageError("theory covers the plain and qres families");
  ArchitectureQuery q;
  q.d.assign(arch.begin(), arch.end());
  q.r = r;
  q.kind = kind == LayerKind::QRes ? NetKind::QRes : NetKind::Plain;
  const FillingReport rep = is_filling(q);

  json j;
  j["arch"] = arch;
  j["r"] = r;
  j["kind"] = layer_kind_name(kind);
  j["leading_degree"] = rep.leading_deg.get_str();
  j["filling"] = rep.filling;
  j["sufficient_only"] = rep.sufficient_only;
  json layers = json::array();
  for (std::size_t i = 0; i < rep.layer.size(); ++i)
    layers.push_back({{"layer", rep.layer[i]},
                      {"minimal_width", rep.minimal_width[i].get_str()},
                      {"actual_width", rep.actual_width[i]}});
  j["layers"] = layers;

  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    const fs::path path(out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text(path, text);
  }
  return 0;
}

int run_spectrum(const ExperimentConfig& config) {
  if (config.problem != "composited_wave")
    throw UsageError("spectrum requires problem \"composited_wave\"");
  if (config.snapshot_every < 1) throw UsageError("snapshot_every must be >= 1");

  std::vector<std::pair<long, Eigen::VectorXd>> snapshots;
  std::pair<long, Eigen::VectorXd> last{-1, {}};
  const EpochHook hook = [&](long epoch, const Eigen::VectorXd& params) {
    if (epoch % config.snapshot_every == 0) snapshots.emplace_back(epoch, params);
    last = {epoch, params};
  };

  RunOutput out = execute_run(config, hook);
  if (last.first >= 0 && (snapshots.empty() || snapshots.back().first != last.first))
    snapshots.push_back(last);  // the final row is always a snapshot

  const BiasCurve curve =
      spectral_bias_curve(snapshots, out.spec, composited_wave_samples());
  std::ostringstream csv;
  csv << "epoch";
  for (int f : kCompositedFreqs) csv << ",f" << f;
  csv << ",config_hash\n";
  const std::string h = hex64(config_hash(config));
  for (std::size_t i = 0; i < curve.epochs.size(); ++i) {
    csv << curve.epochs[i];
    for (int c = 0; c < curve.errors.cols(); ++c) csv << ',' << g17(curve.errors(i, c));
    csv << ',' << h << '\n';
  }
  const fs::path csv_path = out.dir / "spectrum.csv";
  write_text(csv_path, csv.str());
  std::cout << curve.epochs.size() << " snapshots -> " << csv_path.string() << "\n";
  return out.rec.failed ? 2 : 0;
}

int run_gendata(const std::string& out_dir, std::uint64_t seed, double noise) {
  if (noise < 0.0) throw UsageError("--noise must be >= 0");
  fs::create_directories(out_dir);

  const ReferenceGrid grid = make_reference_grid();
  std::ostringstream ref;
  ref << "x,t,u\n";
  for (int j = 0; j < grid.t.size(); ++j)
    for (int i = 0; i < grid.x.size(); ++i)
      ref << g17(grid.x[i]) << ',' << g17(grid.t[j]) << ',' << g17(grid.u(i, j)) << '\n';
  write_text(fs::path(out_dir) / "ref_grid.csv", ref.str());

  const LabeledSet data = generate_inverse_dataset(2000, seed, noise);
  std::ostringstream inv;
  inv << "x,t,u\n";
  for (long i = 0; i < data.inputs.rows(); ++i)
    inv << g17(data.inputs(i, 0)) << ',' << g17(data.inputs(i, 1)) << ',' << g17(data.targets(i, 0))
        << '\n';
  write_text(fs::path(out_dir) / "inverse_data.csv", inv.str());

  std::cout << "wrote " << (fs::path(out_dir) / "ref_grid.csv").string() << " ("
            << grid.x.size() * grid.t.size() << " rows) and "
            << (fs::path(out_dir) / "inverse_data.csv").string() << " (" << data.inputs.rows()
            << " rows, noise=" << noise << ", seed=" << seed << ")\n";
  return 0;
}

namespace {

// fd_check of the full Burgers training loss (PG + data, second-derivative
// paths included) for one layer kind at random weights.
double check_loss_gradient(LayerKind kind, bool inverse, std::uint64_t seed) {
  const Problem problem =
      inverse ? Problem(BurgersInverse{0.0, 16, 8}) : Problem(BurgersForward{kBurgersNu, 16, 4, 4});
  const NetworkSpec spec = make_spec({2, 8, 8, 1}, kind, Activation::Tanh);
  Tape tape = make_problem_tape(problem);
  const CollocationSet colloc = sample_collocation(domain(problem), 16, derive_seed(seed, "colloc"));
  const LabeledSet labeled = assemble_labeled(problem, derive_seed(seed, "data"));
  const Var pg = pg_loss(tape, problem, spec, colloc);
  const Var data = data_loss(tape, spec, labeled);
  const NodeId total = tape.add(pg.id, data.id);

  const long n = trainable_count(problem, spec);
  Rng rng(derive_seed(seed, "init"));
  Eigen::VectorXd params(n);
  for (long i = 0; i < n; ++i) params[i] = rng.normal() * 0.4;

  const LossGradFn fn = [&](const Eigen::VectorXd& p) {
    tape.forward(p);
    const double loss = tape.value(total);
    Eigen::VectorXd grad(n);
    tape.backward(total, grad);
    return std::make_pair(loss, grad);
  };
  return fd_check(fn, params, 1e-5);
}

struct CheckReport {
  bool ok = true;
  void line(const std::string& name, bool pass, const std::string& detail) {
    std::cout << "[check] " << (pass ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
    ok = ok && pass;
  }
};

}  // namespace

int run_check() {
  CheckReport report;
  Rng rng(20260815u);

  // --- gradients through every layer kind (PG + data loss, random weights)
  for (LayerKind kind : {LayerKind::Plain, LayerKind::QRes, LayerKind::IdentityShortcut,
                         LayerKind::QuadraticShortcut, LayerKind::AdaptivePlain}) {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s)
      worst = std::max(worst, check_loss_gradient(kind, false, 101 + s));
    report.line(std::string("fd_check ") + layer_kind_name(kind), worst <= 1e-5,
                "max rel discrepancy " + g17(worst) + " (tol 1e-5)");
  }
  {
    const double worst = std::max(check_loss_gradient(LayerKind::QRes, true, 301),
                                  check_loss_gradient(LayerKind::Plain, true, 302));
    report.line("fd_check inverse (trainable lambda)", worst <= 1e-5,
                "max rel discrepancy " + g17(worst) + " (tol 1e-5)");
  }

  // --- oracle self-tests
  const ColeHopf oracle;
  {
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const double x = rng.uniform(-1.0, 1.0);
      const double t = rng.uniform(0.05, 1.0);
      worst = std::max(worst, std::abs(burgers_residual(oracle.jet(x, t), 1.0, oracle.nu())));
    }
    report.line("oracle analytic-jet residual", worst <= 1e-6,
                "max |u_t + u u_x - nu u_xx| = " + g17(worst) + " (tol 1e-6)");
  }
  {
    double worst = 0.0;
    for (int i = 0; i <= 64; ++i) {
      const double x = -1.0 + 2.0 * i / 64.0;
      worst = std::max(worst, std::abs(oracle.value(x, 0.0) + std::sin(kPi * x)));
    }
    report.line("oracle initial condition", worst <= 1e-12,
                "max |u(x,0) + sin(pi x)| = " + g17(worst) + " (tol 1e-12)");
  }
  {
    double worst = 0.0;
    for (int i = 1; i <= 32; ++i) {
      const double t = i / 32.0;
      worst = std::max(worst, std::abs(oracle.value(-1.0, t)));
      worst = std::max(worst, std::abs(oracle.value(1.0, t)));
    }
    report.line("oracle boundary condition", worst <= 1e-8,
                "max |u(+-1,t)| = " + g17(worst) + " (tol 1e-8)");
  }
  {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double x = rng.uniform(0.0, 1.0);
      const double t = rng.uniform(0.0, 1.0);
      worst = std::max(worst, std::abs(oracle.value(x, t) + oracle.value(-x, t)));
    }
    report.line("oracle odd symmetry", worst <= 1e-10,
                "max |u(x,t) + u(-x,t)| = " + g17(worst) + " (tol 1e-10)");
  }
  {
    const ColeHopf alt(kBurgersNu, 160);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const double x = rng.uniform(-1.0, 1.0);
      const double t = rng.uniform(0.0, 1.0);
      worst = std::max(worst, std::abs(oracle.value(x, t) - alt.value(x, t)));
    }
    report.line("oracle quadrature insensitivity", worst <= 1e-12,
                "max |u_100 - u_160| = " + g17(worst) + " (tol 1e-12)");
  }

  // Finite-difference cross-check of the oracle PDE. At h = 1e-4 the 5-point
  // stencil resolves even the shock layer; the h = 1e-3 probe below is
  // reported for reference only because its truncation error inside the
  // O(nu) shock exceeds any useful gate.
  const auto fd_residual = [&](double x, double t, double h) {
    const auto u = [&](double xx, double tt) { return oracle.value(xx, tt); };
    const double ux = (-u(x + 2 * h, t) + 8 * u(x + h, t) - 8 * u(x - h, t) + u(x - 2 * h, t)) /
                      (12 * h);
    const double ut = (-u(x, t + 2 * h) + 8 * u(x, t + h) - 8 * u(x, t - h) + u(x, t - 2 * h)) /
                      (12 * h);
    const double uxx = (-u(x + 2 * h, t) + 16 * u(x + h, t) - 30 * u(x, t) + 16 * u(x - h, t) -
                        u(x - 2 * h, t)) /
                       (12 * h * h);
    return burgers_residual(u(x, t), ux, ut, uxx, 1.0, oracle.nu());
  };
  {
    Rng fd_rng(424242u);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const double x = fd_rng.uniform(-0.99, 0.99);
      const double t = fd_rng.uniform(0.05, 0.99);
      worst = std::max(worst, std::abs(fd_residual(x, t, 1e-4)));
    }
    report.line("oracle FD residual (h=1e-4)", worst <= 1e-4,
                "max = " + g17(worst) + " over 200 points (tol 1e-4)");
  }
  {
    Rng fd_rng(424242u);
    std::vector<double> res;
    res.reserve(1000);
    for (int i = 0; i < 1000; ++i) {
      const double x = fd_rng.uniform(-0.99, 0.99);
      const double t = fd_rng.uniform(0.05, 0.99);
      res.push_back(std::abs(fd_residual(x, t, 1e-3)));
    }
    std::sort(res.begin(), res.end());
    const long over = std::count_if(res.begin(), res.end(), [](double r) { return r > 1e-4; });
    std::cout << "[check] INFO oracle FD residual (h=1e-3, reference only): max = "
              << g17(res.back()) << ", median = " << g17(res[res.size() / 2]) << ", " << over
              << "/1000 points above 1e-4 (shock-layer truncation; not a gate)\n";
  }

  std::cout << (report.ok ? "[check] all gates passed\n" : "[check] GATE FAILURE\n");
  return report.ok ? 0 : 2;
}

// ---------------------------------------------------------------------------
// argv dispatch
// ---------------------------------------------------------------------------

namespace {

std::vector<int> parse_arch_list(const std::string& text) {
  std::vector<int> arch;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      arch.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("bad --arch entry \"" + tok + "\" (want comma-separated widths)");
    }
  }
  if (arch.empty()) throw UsageError("--arch is empty");
  return arch;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"QRes: quadratic-residual networks for physics-informed training"};
  app.require_subcommand(1);
  int rc = 0;

  // train
  std::string train_config, train_out;
  std::uint64_t train_seed = 0;
  CLI::App* train_cmd = app.add_subcommand("train", "run one experiment from a JSON config");
  train_cmd->add_option("--config", train_config, "experiment config (JSON)")->required();
  train_cmd->add_option("--out", train_out, "override the output directory");
  CLI::Option* train_seed_opt = train_cmd->add_option("--seed", train_seed, "override the RNG seed");
  train_cmd->callback([&] {
    ExperimentConfig cfg = parse_config(slurp(train_config));
    if (!train_out.empty()) cfg.out = train_out;
    if (train_seed_opt->count() > 0) cfg.seed = train_seed;
    rc = run_train(cfg);
  });

  // sweep
  std::string sweep_config, sweep_out;
  int sweep_jobs = 1;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "run an architecture sweep from a JSON sweep config");
  sweep_cmd->add_option("--config", sweep_config, "sweep config (JSON)")->required();
  sweep_cmd->add_option("--out", sweep_out, "override the sweep output directory");
  sweep_cmd->add_option("--jobs", sweep_jobs, "max concurrent runs")
      ->check(CLI::PositiveNumber);
  sweep_cmd->callback([&] {
    SweepConfig sw = parse_sweep(slurp(sweep_config));
    if (!sweep_out.empty()) sw.base.out = sweep_out;
    rc = run_sweep(sw, sweep_jobs);
  });

  // theory
  std::string theory_arch, theory_kind = "qres", theory_out;
  int theory_r = 2;
  CLI::App* theory_cmd =
      app.add_subcommand("theory", "evaluate the filling/expressivity report for an architecture");
  theory_cmd->add_option("--arch", theory_arch, "widths, e.g. 2,20,20,1")->required();
  theory_cmd->add_option("--r", theory_r, "leading degree of the activation (default 2)");
  theory_cmd->add_option("--kind", theory_kind, "plain|qres (default qres)");
  theory_cmd->add_option("--out", theory_out, "write the JSON report here instead of stdout");
  theory_cmd->callback([&] {
    rc = run_theory(parse_arch_list(theory_arch), theory_r, parse_layer_kind(theory_kind),
                    theory_out);
  });

  // spectrum
  std::string spec_config, spec_out;
  std::uint64_t spec_seed = 0;
  CLI::App* spec_cmd =
      app.add_subcommand("spectrum", "train on the composited wave and emit band errors");
  spec_cmd->add_option("--config", spec_config, "experiment config (JSON)")->required();
  spec_cmd->add_option("--out", spec_out, "override the output directory");
  CLI::Option* spec_seed_opt = spec_cmd->add_option("--seed", spec_seed, "override the RNG seed");
  spec_cmd->callback([&] {
    ExperimentConfig cfg = parse_config(slurp(spec_config));
    if (!spec_out.empty()) cfg.out = spec_out;
    if (spec_seed_opt->count() > 0) cfg.seed = spec_seed;
    rc = run_spectrum(cfg);
  });

  // gen-data
  std::string gen_out;
  std::uint64_t gen_seed = 0;
  double gen_noise = 0.0;
  CLI::App* gen_cmd =
      app.add_subcommand("gen-data", "write the reference grid and an inverse dataset as CSV");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->add_option("--seed", gen_seed, "dataset RNG seed (default 0)");
  gen_cmd->add_option("--noise", gen_noise, "noise level for the inverse dataset (default 0)");
  gen_cmd->callback([&] { rc = run_gendata(gen_out, gen_seed, gen_noise); });

  // check
  CLI::App* check_cmd =
      app.add_subcommand("check", "run gradient fd_check and oracle self-tests");
  check_cmd->callback([&] { rc = run_check(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}

}  // namespace qres
