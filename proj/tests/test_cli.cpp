#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "qres/cli.hpp"
#include "qres/expressivity.hpp"
#include "qres/network.hpp"

using namespace qres;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "qres_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int call(std::vector<std::string> args) {
  args.insert(args.begin(), "qres");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

// run.csv minus the wall-clock column, for bitwise run comparisons.
std::string strip_wall(const std::string& csv) {
  std::ostringstream out;
  for (const std::string& line : lines_of(csv)) {
    std::vector<std::string> f = fields_of(line);
    REQUIRE(f.size() == 9);
    f.erase(f.begin() + 7);
    for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
    out << '\n';
  }
  return out.str();
}

ExperimentConfig tiny_sine_config(const fs::path& out) {
  ExperimentConfig c;
  c.problem = "sine_toy";
  c.arch = {1, 8, 8, 1};
  c.kind = LayerKind::QRes;
  c.schedule.adam_epochs = 40;
  c.schedule.lbfgs_max_iters = 0;
  c.seed = 3;
  c.out = out.string();
  return c;
}

}  // namespace

TEST_CASE("configs survive a serialize/parse round trip") {
  ExperimentConfig c;
  c.problem = "burgers_inverse";
  c.arch = {2, 10, 10, 1};
  c.kind = LayerKind::QuadraticShortcut;
  c.activation = Activation::Elu;
  c.schedule.adam_epochs = 123;
  c.schedule.adam_lr = 5e-4;
  c.schedule.lbfgs_max_iters = 7;
  c.schedule.term.ftol = 1e-9;
  c.schedule.term.max_epochs = 99;
  c.n_colloc = 500;
  c.n_data = 77;
  c.noise = 0.01;
  c.snapshot_every = 50;
  c.seed = 9;
  c.out = "runs/elsewhere";
  CHECK(parse_config(serialize_config(c)) == c);

  SweepConfig sw;
  sw.base = c;
  sw.depths = {2, 4, 8};
  sw.widths = {{"plain", {10, 20}}, {"qres", {7, 14}}};
  sw.seeds = {0, 1, 2};
  sw.max_runs = 64;
  CHECK(parse_sweep(serialize_sweep(sw)) == sw);
}

TEST_CASE("unknown keys and bad enumerations are rejected") {
  CHECK_THROWS_AS(parse_config(R"({"problem":"sine_toy","network":{"arch":[1,4,1]},"typo":1})"),
                  UsageError);
  CHECK_THROWS_AS(parse_config(R"({"network":{"arch":[1,4,1],"kind":"cubic"}})"), UsageError);
  CHECK_THROWS_AS(parse_config("[1,2,3]"), UsageError);
  CHECK_THROWS_AS(parse_config("{not json"), UsageError);
}

TEST_CASE("the config hash tracks content, not formatting") {
  ExperimentConfig c = tiny_sine_config("runs/a");
  CHECK(config_hash(parse_config(serialize_config(c))) == config_hash(c));

  // Key order in hand-written JSON must not matter.
  std::string swapped = R"({"seed":3,"network":{"kind":"qres","arch":[1,8,8,1]},)"
                        R"("schedule":{"lbfgs_max_iters":0,"adam_epochs":40},)"
                        R"("problem":"sine_toy","out":"runs/a"})";
  CHECK(config_hash(parse_config(swapped)) == config_hash(c));

  ExperimentConfig d = c;
  d.seed += 1;
  CHECK(config_hash(d) != config_hash(c));
}

TEST_CASE("problem resolution validates its knobs") {
  ExperimentConfig c = tiny_sine_config("runs/a");
  c.problem = "composited_wave";
  c.n_colloc = 100;  // pure regression; collocation makes no sense here
  CHECK_THROWS_AS(make_problem(c), UsageError);

  c = tiny_sine_config("runs/a");
  c.problem = "burgers_forward";
  c.noise = 0.05;  // noise is an inverse-dataset knob
  CHECK_THROWS_AS(make_problem(c), UsageError);

  c = tiny_sine_config("runs/a");
  c.problem = "helmholtz";
  CHECK_THROWS_AS(make_problem(c), UsageError);

  c = tiny_sine_config("runs/a");
  c.arch.clear();
  CHECK_THROWS_AS(make_network_spec(c), UsageError);
}

TEST_CASE("training writes the full artifact set") {
  fs::path dir = fresh_dir("train_artifacts");
  ExperimentConfig c;
  c.problem = "burgers_forward";
  c.arch = {2, 10, 10, 10, 10, 10, 10, 10, 10, 1};
  c.kind = LayerKind::QRes;
  c.schedule.adam_epochs = 0;
  c.schedule.lbfgs_max_iters = 0;
  c.n_colloc = 64;
  c.n_data = 16;
  c.seed = 1;
  c.out = (dir / "run").string();
  fs::path cfg_path = dir / "config.json";
  write_text(cfg_path, serialize_config(c));

  CHECK(call({"train", "--config", cfg_path.string()}) == 0);

  std::vector<std::string> rows = lines_of(read_text(dir / "run" / "run.csv"));
  REQUIRE(rows.size() == 2);  // header + the initial row
  CHECK(rows[0] == "epoch,phase,total,pg,data,lambda1,lambda2,wall_ms,config_hash");
  std::vector<std::string> f = fields_of(rows[1]);
  REQUIRE(f.size() == 9);
  CHECK(f[0] == "0");
  CHECK(f[5].empty());  // λ columns stay blank on forward problems
  CHECK(f[6].empty());

  json summary = json::parse(read_text(dir / "run" / "summary.json"));
  CHECK(summary["param_count"] == 1541);
  CHECK(summary["trainable_count"] == 1541);
  CHECK(summary["status"] == "ok");
  CHECK(summary["rows"] == 1);
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << config_hash(c);
  CHECK(summary["config_hash"] == hash.str());
  CHECK(f[8] == hash.str());

  NetworkSpec spec = make_network_spec(c);
  Eigen::VectorXd saved = load_params((dir / "run" / "params.bin").string(), spec);
  CHECK(saved.size() == 1541);
  // 0 epochs: the untouched init, drawn from the run seed's "init" stream.
  CHECK(saved == flatten(spec, init_params(spec, derive_seed(c.seed, "init"))));
}

TEST_CASE("reruns reproduce the loss columns bitwise") {
  fs::path dir = fresh_dir("train_repro");
  ExperimentConfig c = tiny_sine_config(dir / "a");
  write_text(dir / "config.json", serialize_config(c));
  CHECK(call({"train", "--config", (dir / "config.json").string()}) == 0);
  CHECK(call({"train", "--config", (dir / "config.json").string(), "--out",
              (dir / "b").string()}) == 0);

  std::string a = read_text(dir / "a" / "run.csv");
  std::string b = read_text(dir / "b" / "run.csv");
  CHECK(strip_wall(a) != strip_wall(b));  // --out feeds the hash column...
  std::string a_body = strip_wall(a), b_body = strip_wall(b);
  auto drop_hash = [](const std::string& csv) {
    std::ostringstream out;
    for (const std::string& line : lines_of(csv))
      out << line.substr(0, line.rfind(',')) << '\n';
    return out.str();
  };
  CHECK(drop_hash(a_body) == drop_hash(b_body));  // ...but the run itself is identical
}

TEST_CASE("an output directory never mixes configurations") {
  fs::path dir = fresh_dir("train_overwrite");
  ExperimentConfig c = tiny_sine_config(dir / "run");
  c.schedule.adam_epochs = 5;
  write_text(dir / "config.json", serialize_config(c));
  CHECK(call({"train", "--config", (dir / "config.json").string()}) == 0);
  std::string first_summary = read_text(dir / "run" / "summary.json");

  // A different config aimed at the same directory is refused...
  CHECK(call({"train", "--config", (dir / "config.json").string(), "--seed", "99"}) == 1);
  CHECK(read_text(dir / "run" / "summary.json") == first_summary);

  // ...while the identical config may regenerate its own artifacts.
  CHECK(call({"train", "--config", (dir / "config.json").string()}) == 0);
}

TEST_CASE("a one-point sweep matches its train twin") {
  fs::path dir = fresh_dir("sweep_single");
  SweepConfig sw;
  sw.base = tiny_sine_config(dir / "sweep");
  sw.base.arch.clear();  // the sweep grid supplies architectures
  sw.base.schedule.adam_epochs = 10;
  sw.depths = {8};
  sw.widths = {{"qres", {10}}};
  sw.seeds = {5};
  write_text(dir / "sweep.json", serialize_sweep(sw));
  CHECK(call({"sweep", "--config", (dir / "sweep.json").string()}) == 0);

  std::vector<std::string> rows = lines_of(read_text(dir / "sweep" / "sweep.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "depth,width,params,final_error,seed,kind,status,config_hash");
  std::vector<std::string> f = fields_of(rows[1]);
  REQUIRE(f.size() == 8);
  CHECK(f[0] == "8");
  CHECK(f[1] == "10");
  CHECK(f[2] == std::to_string(param_count(make_uniform_spec(1, 10, 8, 1, LayerKind::QRes, Activation::Tanh))));
  CHECK(f[4] == "5");
  CHECK(f[5] == "qres");
  CHECK(f[6] == "ok");

  json nested = json::parse(read_text(dir / "sweep" / "runs" / "qres-d8-w10-s5" / "summary.json"));
  CHECK(std::stod(f[3]) == nested["rel_l2"].get<double>());
}

TEST_CASE("the grid sweep lands sorted and complete") {
  fs::path dir = fresh_dir("sweep_grid");
  SweepConfig sw;
  sw.base = tiny_sine_config(dir / "sweep");
  sw.base.arch.clear();
  sw.base.schedule.adam_epochs = 15;
  sw.depths = {2, 4};
  sw.widths = {{"plain", {10, 20}}, {"qres", {7, 14}}};
  sw.seeds = {0, 1, 2};
  write_text(dir / "sweep.json", serialize_sweep(sw));
  CHECK(call({"sweep", "--config", (dir / "sweep.json").string(), "--jobs", "1"}) == 0);

  std::vector<std::string> rows = lines_of(read_text(dir / "sweep" / "sweep.csv"));
  REQUIRE(rows.size() == 25);  // header + 2 depths x 2 widths x 3 seeds x 2 kinds
  std::vector<std::vector<std::string>> parsed;
  for (std::size_t i = 1; i < rows.size(); ++i) parsed.push_back(fields_of(rows[i]));
  for (const auto& f : parsed) {
    REQUIRE(f.size() == 8);
    LayerKind kind = parse_layer_kind(f[5]);
    NetworkSpec spec = make_uniform_spec(1, std::stoi(f[1]), std::stoi(f[0]), 1, kind, Activation::Tanh);
    CHECK(f[2] == std::to_string(param_count(spec)));
    CHECK(f[6] == "ok");
  }
  auto key = [](const std::vector<std::string>& f) {
    return std::make_tuple(std::stoi(f[0]), std::stoi(f[1]), std::stoull(f[4]), f[5]);
  };
  for (std::size_t i = 1; i < parsed.size(); ++i) CHECK(key(parsed[i - 1]) < key(parsed[i]));
}

TEST_CASE("an oversized sweep is refused up front") {
  SweepConfig sw;
  sw.base = tiny_sine_config("runs/never");
  sw.depths = {2, 4};
  sw.widths = {{"plain", {10, 20}}};
  sw.seeds = {0, 1, 2};
  sw.max_runs = 5;  // 12 requested
  CHECK_THROWS_AS(run_sweep(sw, 1), UsageError);
}

TEST_CASE("theory reports match the library") {
  fs::path dir = fresh_dir("theory");
  struct Case {
    std::string arch;
    std::vector<int> d;
    bool filling;
  };
  const Case cases[] = {
      {"2,4,1", {2, 4, 1}, true},
      {"2,2,1", {2, 2, 1}, false},
      {"1,2,1", {1, 2, 1}, true},
  };
  for (const Case& c : cases) {
    fs::path out = dir / (c.arch + ".json");
    CHECK(call({"theory", "--arch", c.arch, "--kind", "qres", "--out", out.string()}) == 0);
    json rep = json::parse(read_text(out));
    CHECK(rep["filling"] == c.filling);
    CHECK(rep["sufficient_only"] == true);

    ArchitectureQuery q;
    q.d.assign(c.d.begin(), c.d.end());
    q.kind = NetKind::QRes;
    FillingReport want = is_filling(q);
    CHECK(rep["leading_degree"] == want.leading_deg.get_str());
    REQUIRE(rep["layers"].size() == want.layer.size());
    for (std::size_t i = 0; i < want.layer.size(); ++i) {
      CHECK(rep["layers"][i]["minimal_width"] == want.minimal_width[i].get_str());
      CHECK(rep["layers"][i]["actual_width"] == want.actual_width[i]);
    }
  }
  CHECK_THROWS_AS(run_theory({2, 4, 1}, 2, LayerKind::AdaptivePlain, ""), UsageError);
}

TEST_CASE("spectrum snapshots honour the cadence") {
  fs::path dir = fresh_dir("spectrum");
  ExperimentConfig c;
  c.problem = "composited_wave";
  c.arch = {1, 16, 16, 1};
  c.kind = LayerKind::Plain;
  c.schedule.adam_epochs = 120;
  c.schedule.lbfgs_max_iters = 0;
  c.snapshot_every = 50;
  c.seed = 2;
  c.out = (dir / "a").string();
  write_text(dir / "config.json", serialize_config(c));
  CHECK(call({"spectrum", "--config", (dir / "config.json").string()}) == 0);

  std::vector<std::string> rows = lines_of(read_text(dir / "a" / "spectrum.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "epoch,f4,f8,f16,f32,f64,f128,config_hash");
  const char* want[] = {"0", "50", "100", "120"};
  for (int i = 0; i < 4; ++i) {
    std::vector<std::string> f = fields_of(rows[i + 1]);
    REQUIRE(f.size() == 8);
    CHECK(f[0] == want[i]);
    for (int b = 1; b <= 6; ++b) CHECK(std::isfinite(std::stod(f[b])));
  }

  // A cadence longer than the run still yields the first and last epochs.
  c.snapshot_every = 100000;
  c.out = (dir / "b").string();
  write_text(dir / "config2.json", serialize_config(c));
  CHECK(call({"spectrum", "--config", (dir / "config2.json").string()}) == 0);
  rows = lines_of(read_text(dir / "b" / "spectrum.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(fields_of(rows[1])[0] == "0");
  CHECK(fields_of(rows[2])[0] == "120");

  ExperimentConfig wrong = tiny_sine_config(dir / "c");
  CHECK_THROWS_AS(run_spectrum(wrong), UsageError);
}

TEST_CASE("gen-data writes the advertised shapes") {
  fs::path clean = fresh_dir("gendata_clean");
  fs::path noisy = fresh_dir("gendata_noisy");
  CHECK(call({"gen-data", "--out", clean.string(), "--seed", "3"}) == 0);
  CHECK(call({"gen-data", "--out", noisy.string(), "--seed", "3", "--noise", "0.01"}) == 0);

  std::vector<std::string> grid = lines_of(read_text(clean / "ref_grid.csv"));
  CHECK(grid.size() == 1 + 256 * 101);
  CHECK(grid[0] == "x,t,u");

  std::vector<std::string> a = lines_of(read_text(clean / "inverse_data.csv"));
  std::vector<std::string> b = lines_of(read_text(noisy / "inverse_data.csv"));
  REQUIRE(a.size() == 2001);
  REQUIRE(b.size() == 2001);
  int changed = 0;
  for (std::size_t i = 1; i < a.size(); ++i) {
    std::vector<std::string> fa = fields_of(a[i]), fb = fields_of(b[i]);
    CHECK(fa[0] == fb[0]);  // same sample points, only the labels move
    CHECK(fa[1] == fb[1]);
    changed += fa[2] != fb[2];
  }
  CHECK(changed == 2000);
}

TEST_CASE("exit codes separate usage errors from run failures") {
  fs::path dir = fresh_dir("exit_codes");
  CHECK(call({"no-such-command"}) == 1);
  CHECK(call({}) == 1);
  CHECK(call({"train", "--config", (dir / "missing.json").string()}) == 1);

  ExperimentConfig c = tiny_sine_config(dir / "run");
  c.schedule.adam_epochs = 30;
  c.schedule.adam_lr = 1e150;  // diverges immediately
  write_text(dir / "config.json", serialize_config(c));
  CHECK(call({"train", "--config", (dir / "config.json").string()}) == 2);
  json summary = json::parse(read_text(dir / "run" / "summary.json"));
  CHECK(summary["status"] == "failed");
  CHECK_FALSE(summary["fail_reason"].get<std::string>().empty());
}
