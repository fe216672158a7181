#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "gsfda/checkpoint.hpp"
#include "gsfda/cli.hpp"
#include "gsfda/csv.hpp"

using namespace gsfda;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Silence the CLI's stdout/stderr chatter so the doctest report stays
// readable; the captured text is still available when a test wants it.
struct MuteStreams {
  std::ostringstream sink;
  std::streambuf* out;
  std::streambuf* err;
  MuteStreams()
      : out(std::cout.rdbuf(sink.rdbuf())), err(std::cerr.rdbuf(sink.rdbuf())) {}
  ~MuteStreams() {
    std::cout.rdbuf(out);
    std::cerr.rdbuf(err);
  }
};

int run(const std::vector<std::string>& args) {
  MuteStreams mute;
  return run_cli(args);
}

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() /
               ("gsfda_cli_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) { return json::parse(slurp(path)); }

long count_lines(const std::string& text) {
  long n = 0;
  for (char c : text) n += (c == '\n');
  return n;
}

// A deliberately small run so the whole suite stays fast.
std::string config_text(int seed, int hidden, const std::string& targets,
                        const std::string& lr_source = "0.01") {
  std::ostringstream ss;
  ss << "[run]\n"
     << "seed = " << seed << "\n"
     << "epochs_source = 30\n"
     << "epochs_target = 10\n"
     << "epochs_dc = 80\n"
     << "batch_size = 32\n"
     << "lr_source = " << lr_source << "\n"
     << "lr_target = 0.01\n"
     << "lr_dc = 0.05\n"
     << "momentum = 0.9\n"
     << "k = 3\n"
     << "balance_weight = 1.0\n"
     << "lambda_sparsity = 0.1\n"
     << "exemplars_per_domain = 16\n"
     << "\n[network]\n"
     << "input_dim = 2\n"
     << "hidden = " << hidden << "\n"
     << "feature = 8\n"
     << "classes = 2\n"
     << "\n[data]\n"
     << "generator = two_moons\n"
     << "n_per_domain = 200\n"
     << "noise_sd = 0.1\n"
     << "source_rotation_deg = 0\n"
     << "target_rotation_degs = " << targets << "\n"
     << "train_fraction = 0.9\n"
     << "stratified = true\n"
     << "standardize = false\n";
  return ss.str();
}

// One shared pretrain run that checkpoint-consuming tests build on.
struct BaseRun {
  fs::path dir;
  fs::path config;
  fs::path out;
  int rc;
};

const BaseRun& base_run() {
  static BaseRun b = [] {
    BaseRun r;
    r.dir = fresh_dir("base");
    r.config = r.dir / "run.cfg";
    r.out = r.dir / "pre";
    write_file(r.config, config_text(3, 16, "45"));
    r.rc = run({"pretrain", "--config", r.config.string(), "--out",
                r.out.string()});
    return r;
  }();
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// argument parsing
// ---------------------------------------------------------------------------

TEST_CASE("malformed invocations exit with the usage code") {
  CHECK(run({}) == 2);                       // a subcommand is required
  CHECK(run({"frobnicate"}) == 2);           // unknown subcommand
  CHECK(run({"pretrain"}) == 2);             // missing required --config/--out
  CHECK(run({"pretrain", "--config", "x", "--out", "y", "--bogus"}) == 2);
  CHECK(run({"eval", "--config", "x", "--out", "y", "--checkpoint", "z",
             "--mode", "sideways"}) == 2);   // mode not in {aware, agnostic}
}

TEST_CASE("help requests exit cleanly") {
  CHECK(run({"--help"}) == 0);
  CHECK(run({"pretrain", "--help"}) == 0);
  CHECK(run({"eval", "--help"}) == 0);
}

// ---------------------------------------------------------------------------
// pretrain artifacts
// ---------------------------------------------------------------------------

TEST_CASE("pretrain writes the advertised artifact set") {
  const BaseRun& b = base_run();
  REQUIRE(b.rc == 0);
  for (const char* name :
       {"checkpoint.bin", "metrics.json", "epochs.csv", "masks.csv",
        "manifest.json"})
    CHECK(fs::exists(b.out / name));

  json m = read_json(b.out / "metrics.json");
  CHECK(m.at("schema_version") == 1);
  CHECK(m.at("command") == "pretrain");
  CHECK(m.at("seed") == 3);
  CHECK(std::isfinite(m.at("final_loss").get<double>()));
  double h = m.at("eval").at("h").get<double>();
  CHECK(h >= 0.0);
  CHECK(h <= 100.0);
  CHECK(m.at("eval").at("per_domain").size() == 2);

  json man = read_json(b.out / "manifest.json");
  CHECK(man.at("command") == "pretrain");
  CHECK(man.at("config").at("run").at("seed") == 3);
  CHECK(man.at("config").at("network").at("hidden") == 16);
  CHECK(man.at("timestamp_utc").get<std::string>().size() > 0);

  // header + one record per source epoch (no early stop in pretraining)
  std::string epochs = slurp(b.out / "epochs.csv");
  CHECK(count_lines(epochs) == 1 + 30);
  CHECK(epochs.rfind("target,epoch,loss", 0) == 0);

  // source mask + one target mask, one attention value per feature channel
  std::string masks = slurp(b.out / "masks.csv");
  CHECK(count_lines(masks) == 1 + 2);
  CHECK(masks.rfind("domain,a0,a1,a2,a3,a4,a5,a6,a7", 0) == 0);
}

TEST_CASE("the pretrain checkpoint round-trips through the loader") {
  const BaseRun& b = base_run();
  REQUIRE(b.rc == 0);
  Checkpoint ck = load_checkpoint((b.out / "checkpoint.bin").string());
  CHECK(ck.model.params.dims.hidden == 16);
  CHECK(ck.model.params.dims.feature == 8);
  CHECK(ck.model.masks.n_targets() == 1);
  CHECK(!ck.dc.has_value());  // pretrain never trains a domain classifier
  for (const auto& att : ck.model.masks.attentions) CHECK(att.frozen);
}

// ---------------------------------------------------------------------------
// checkpoint-consuming commands
// ---------------------------------------------------------------------------

TEST_CASE("adapt consumes a pretrain checkpoint and reports before/after") {
  const BaseRun& b = base_run();
  REQUIRE(b.rc == 0);
  fs::path out = fresh_dir("adapt");
  CHECK(run({"adapt", "--config", b.config.string(), "--out", out.string(),
             "--checkpoint", (b.out / "checkpoint.bin").string()}) == 0);
  json m = read_json(out / "metrics.json");
  CHECK(m.at("command") == "adapt");
  for (const char* phase : {"before", "after"}) {
    double h = m.at(phase).at("h").get<double>();
    CHECK(h >= 0.0);
    CHECK(h <= 100.0);
  }
  CHECK(m.contains("acc_n"));
  CHECK(m.contains("acc_np"));
  CHECK(fs::exists(out / "checkpoint.bin"));
  // the adaptation epochs are tagged with target index 1
  std::string epochs = slurp(out / "epochs.csv");
  CHECK(epochs.find("\n1,1,") != std::string::npos);
}

TEST_CASE("adapt-continual writes the accuracy matrix") {
  fs::path dir = fresh_dir("continual");
  fs::path cfg = dir / "run.cfg";
  write_file(cfg, config_text(3, 16, "30, 60"));
  fs::path pre = dir / "pre";
  REQUIRE(run({"pretrain", "--config", cfg.string(), "--out", pre.string()}) ==
          0);
  fs::path out = dir / "cont";
  CHECK(run({"adapt-continual", "--config", cfg.string(), "--out", out.string(),
             "--checkpoint", (pre / "checkpoint.bin").string()}) == 0);
  json m = read_json(out / "metrics.json");
  auto matrix = m.at("accuracy_matrix");
  REQUIRE(matrix.size() == 3);  // source row + one per adapted target
  for (const auto& row : matrix) REQUIRE(row.size() == 3);
  std::string csv = slurp(out / "continual_matrix.csv");
  CHECK(csv.rfind("step,source,target1,target2", 0) == 0);
  CHECK(count_lines(csv) == 1 + 3);
}

TEST_CASE("missing input files exit with the io code") {
  const BaseRun& b = base_run();
  REQUIRE(b.rc == 0);
  fs::path out = fresh_dir("io");
  CHECK(run({"pretrain", "--config", (out / "absent.cfg").string(), "--out",
             out.string()}) == 4);
  CHECK(run({"adapt", "--config", b.config.string(), "--out", out.string(),
             "--checkpoint", (out / "absent.bin").string()}) == 4);
}

TEST_CASE("config mistakes exit with the usage code") {
  fs::path dir = fresh_dir("badcfg");
  auto bad = [&](const std::string& name, const std::string& text) {
    fs::path p = dir / name;
    write_file(p, text);
    return run({"pretrain", "--config", p.string(), "--out",
                (dir / ("out_" + name)).string()});
  };
  std::string good = config_text(3, 16, "45");
  CHECK(bad("unknown_key.cfg", good + "typo_key = 1\n") == 2);
  CHECK(bad("dup_key.cfg", good + "standardize = false\n") == 2);
  CHECK(bad("bad_value.cfg", config_text(3, 16, "45", "fast")) == 2);
  CHECK(bad("bad_section.cfg", "[moose]\nantlers = 2\n" + good) == 2);
  CHECK(bad("orphan_key.cfg", "seed = 1\n" + good) == 2);
}

TEST_CASE("checkpoint/config compatibility is enforced") {
  const BaseRun& b = base_run();
  REQUIRE(b.rc == 0);
  fs::path dir = fresh_dir("compat");

  fs::path wider = dir / "wider.cfg";
  write_file(wider, config_text(3, 24, "45"));
  CHECK(run({"adapt", "--config", wider.string(), "--out",
             (dir / "o1").string(), "--checkpoint",
             (b.out / "checkpoint.bin").string()}) == 2);

  fs::path more_targets = dir / "more_targets.cfg";
  write_file(more_targets, config_text(3, 16, "30, 60"));
  CHECK(run({"adapt", "--config", more_targets.string(), "--out",
             (dir / "o2").string(), "--checkpoint",
             (b.out / "checkpoint.bin").string()}) == 2);
}

// ---------------------------------------------------------------------------
// evaluation and the domain classifier
// ---------------------------------------------------------------------------

TEST_CASE("agnostic evaluation requires a trained domain classifier") {
  const BaseRun& b = base_run();
  REQUIRE(b.rc == 0);
  fs::path dir = fresh_dir("agnostic");
  CHECK(run({"eval", "--config", b.config.string(), "--out",
             (dir / "no_dc").string(), "--checkpoint",
             (b.out / "checkpoint.bin").string(), "--mode", "agnostic"}) == 2);

  fs::path dc_out = dir / "dc";
  REQUIRE(run({"train-dc", "--config", b.config.string(), "--out",
               dc_out.string(), "--checkpoint",
               (b.out / "checkpoint.bin").string()}) == 0);
  json dm = read_json(dc_out / "metrics.json");
  double dc_acc = dm.at("dc_accuracy").get<double>();
  CHECK(dc_acc >= 0.0);
  CHECK(dc_acc <= 100.0);
  Checkpoint ck = load_checkpoint((dc_out / "checkpoint.bin").string());
  CHECK(ck.dc.has_value());

  fs::path ev_out = dir / "ev";
  CHECK(run({"eval", "--config", b.config.string(), "--out", ev_out.string(),
             "--checkpoint", (dc_out / "checkpoint.bin").string(), "--mode",
             "agnostic"}) == 0);
  json em = read_json(ev_out / "metrics.json");
  CHECK(em.at("mode") == "agnostic");
  CHECK(em.at("refresh_bn") == false);
}

TEST_CASE("eval honors the refresh-bn flag") {
  const BaseRun& b = base_run();
  REQUIRE(b.rc == 0);
  fs::path out = fresh_dir("refresh");
  CHECK(run({"eval", "--config", b.config.string(), "--out", out.string(),
             "--checkpoint", (b.out / "checkpoint.bin").string(),
             "--refresh-bn"}) == 0);
  json m = read_json(out / "metrics.json");
  CHECK(m.at("mode") == "aware");
  CHECK(m.at("refresh_bn") == true);
}

// ---------------------------------------------------------------------------
// utility subcommands
// ---------------------------------------------------------------------------

TEST_CASE("gradcheck passes and can record its report") {
  CHECK(run({"gradcheck"}) == 0);
  fs::path out = fresh_dir("gradcheck");
  CHECK(run({"gradcheck", "--out", out.string(), "--seed", "5"}) == 0);
  json m = read_json(out / "metrics.json");
  CHECK(m.at("all_pass") == true);
  CHECK(m.at("seed") == 5);
  CHECK(m.at("suites").size() >= 6);
}

TEST_CASE("dump-masks writes one row per domain") {
  const BaseRun& b = base_run();
  REQUIRE(b.rc == 0);
  fs::path out = fresh_dir("dump");
  CHECK(run({"dump-masks", "--out", out.string(), "--checkpoint",
             (b.out / "checkpoint.bin").string()}) == 0);
  CHECK(count_lines(slurp(out / "masks.csv")) == 1 + 2);
}

TEST_CASE("gen-data writes loadable labeled domain files") {
  fs::path dir = fresh_dir("gendata");
  fs::path cfg = dir / "run.cfg";
  write_file(cfg, config_text(9, 16, "45"));
  fs::path out = dir / "data";
  CHECK(run({"gen-data", "--config", cfg.string(), "--out", out.string()}) ==
        0);
  for (const char* name : {"source.csv", "target1.csv"}) {
    Dataset d = load_csv((out / name).string(), true);
    CHECK(d.features.rows() == 200);
    CHECK(d.features.cols() == 2);
    for (int y : d.labels) CHECK((y == 0 || y == 1));
  }
}

// ---------------------------------------------------------------------------
// determinism and seed control
// ---------------------------------------------------------------------------

TEST_CASE("identical runs produce byte-identical outputs") {
  const BaseRun& b = base_run();
  REQUIRE(b.rc == 0);
  fs::path out2 = fresh_dir("repeat");
  REQUIRE(run({"pretrain", "--config", b.config.string(), "--out",
               out2.string()}) == 0);
  // everything except the timestamped manifest must match exactly
  for (const char* name :
       {"metrics.json", "epochs.csv", "masks.csv", "checkpoint.bin"})
    CHECK(slurp(b.out / name) == slurp(out2 / name));
}

TEST_CASE("the seed override changes the outcome and is recorded") {
  const BaseRun& b = base_run();
  REQUIRE(b.rc == 0);
  fs::path out = fresh_dir("seeded");
  REQUIRE(run({"pretrain", "--config", b.config.string(), "--out", out.string(),
               "--seed", "4"}) == 0);
  json m = read_json(out / "metrics.json");
  CHECK(m.at("seed") == 4);
  CHECK(slurp(out / "metrics.json") != slurp(b.out / "metrics.json"));
  CHECK(slurp(out / "checkpoint.bin") != slurp(b.out / "checkpoint.bin"));
}

TEST_CASE("training divergence exits with the numeric code") {
  fs::path dir = fresh_dir("diverge");
  fs::path cfg = dir / "run.cfg";
  write_file(cfg, config_text(3, 16, "45", "10000.0"));
  CHECK(run({"pretrain", "--config", cfg.string(), "--out",
             (dir / "out").string()}) == 3);
}
