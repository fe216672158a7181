#include "gsfda/cli.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gsfda/checkpoint.hpp"
#include "gsfda/config.hpp"
#include "gsfda/csv.hpp"
#include "gsfda/errors.hpp"
#include "gsfda/gradcheck.hpp"
#include "gsfda/metrics.hpp"
#include "gsfda/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gsfda {

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kSchemaVersion = 1;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json config_json(const FullConfig& cfg) {
  json j;
  j["run"] = {{"seed", cfg.run.seed},
              {"epochs_source", cfg.run.epochs_source},
              {"epochs_target", cfg.run.epochs_target},
              {"epochs_dc", cfg.run.epochs_dc},
              {"batch_size", cfg.run.batch_size},
              {"lr_source", cfg.run.lr_source},
              {"lr_target", cfg.run.lr_target},
              {"lr_dc", cfg.run.lr_dc},
              {"momentum", cfg.run.momentum},
              {"k", cfg.run.k},
              {"balance_weight", cfg.run.balance_weight},
              {"lambda_sparsity", cfg.run.lambda_sparsity},
              {"n_targets", cfg.run.n_targets},
              {"exemplars_per_domain", cfg.run.exemplars_per_domain}};
  j["network"] = {{"input_dim", cfg.run.dims.input_dim},
                  {"hidden", cfg.run.dims.hidden},
                  {"feature", cfg.run.dims.feature},
                  {"classes", cfg.run.dims.classes}};
  j["data"] = {{"generator", cfg.data.generator},
               {"n_per_domain", cfg.data.n_per_domain},
               {"noise_sd", cfg.data.noise_sd},
               {"source_rotation_deg", cfg.data.source_rotation_deg},
               {"target_rotation_degs", cfg.data.target_rotation_degs},
               {"train_fraction", cfg.data.train_fraction},
               {"stratified", cfg.data.stratified},
               {"standardize", cfg.data.standardize},
               {"source_csv", cfg.data.source_csv},
               {"target_csvs", cfg.data.target_csvs}};
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

// manifest.json is the only artifact carrying a timestamp, so every other
// output stays byte-identical across identical runs
void write_manifest(const fs::path& out_dir, const std::string& command,
                    const FullConfig& cfg, const std::string& config_path,
                    const std::string& checkpoint_in) {
  char stamp[32] = "";
  std::time_t t = std::time(nullptr);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  json j = {{"schema_version", kSchemaVersion},
            {"version", kVersion},
            {"command", command},
            {"config_path", config_path},
            {"config", config_json(cfg)},
            {"seed", cfg.run.seed},
            {"checkpoint_in", checkpoint_in},
            {"out_dir", out_dir.string()},
            {"timestamp_utc", stamp}};
  write_json(out_dir / "manifest.json", j);
}

json eval_json(const EvalResult& ev) {
  return {{"per_domain", ev.per_domain},
          {"acc_source", ev.acc_source},
          {"acc_target", ev.acc_target},
          {"h", ev.h}};
}

// phases: (target index, records); 0 = source pretraining
void write_epochs_csv(
    const fs::path& path,
    const std::vector<std::pair<int, const std::vector<EpochRecord>*>>& phases) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "target,epoch,loss,acc_source,acc_target,h,acc_n,acc_np\n";
  for (const auto& [target, records] : phases)
    for (const EpochRecord& r : *records)
      out << target << "," << r.epoch << "," << fmt(r.loss) << ","
          << fmt(r.acc_source) << "," << fmt(r.acc_target) << "," << fmt(r.h)
          << "," << fmt(r.acc_n) << "," << fmt(r.acc_np) << "\n";
}

void write_masks_csv(const fs::path& path, const MaskSet& masks) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "domain";
  std::size_t d = masks.attentions.empty() ? 0 : masks.attentions[0].e.size();
  for (std::size_t j = 0; j < d; ++j) out << ",a" << j;
  out << "\n";
  for (const auto& att : masks.attentions) {
    out << att.domain_id;
    for (double v : att.mask()) out << "," << fmt(v);
    out << "\n";
  }
}

void write_matrix_csv(const fs::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "step,source";
  for (std::size_t c = 1; c < m.cols(); ++c) out << ",target" << c;
  out << "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << r;
    for (std::size_t c = 0; c < m.cols(); ++c) out << "," << fmt(m(r, c));
    out << "\n";
  }
}

// checkpoint/config agreement, so a stale mix fails loudly
void check_compat(const ModelState& model, const FullConfig& cfg) {
  const NetworkDims& a = model.params.dims;
  const NetworkDims& b = cfg.run.dims;
  if (a.input_dim != b.input_dim || a.hidden != b.hidden ||
      a.feature != b.feature || a.classes != b.classes)
    throw ConfigError("checkpoint network dims do not match the config");
  if (model.masks.n_targets() != cfg.run.n_targets)
    throw ConfigError("checkpoint has " +
                      std::to_string(model.masks.n_targets()) +
                      " target masks but the config defines " +
                      std::to_string(cfg.run.n_targets));
}

struct CliArgs {
  std::string config_path;
  std::string out_dir;
  std::string checkpoint_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string mode = "aware";
  bool refresh_bn = false;
};

int cmd_pretrain(const CliArgs& a, FullConfig cfg) {
  DataBundle data = build_data(cfg);
  PretrainResult pre = pretrain_source(cfg.run, data.source_train);
  EvalResult ev = evaluate(pre.model, data.test_sets(), EvalMode::aware);

  fs::path out(a.out_dir);
  save_checkpoint((out / "checkpoint.bin").string(), pre.model);
  write_epochs_csv(out / "epochs.csv", {{0, &pre.epochs}});
  write_masks_csv(out / "masks.csv", pre.model.masks);
  json metrics = {{"schema_version", kSchemaVersion},
                  {"command", "pretrain"},
                  {"seed", cfg.run.seed},
                  {"final_loss", pre.epochs.empty() ? 0.0 : pre.epochs.back().loss},
                  {"eval", eval_json(ev)}};
  write_json(out / "metrics.json", metrics);
  write_manifest(out, "pretrain", cfg, a.config_path, "");
  std::cout << "pretrain: loss=" << fmt(metrics["final_loss"].get<double>())
            << " acc_source=" << fmt(ev.acc_source)
            << " acc_target=" << fmt(ev.acc_target) << " h=" << fmt(ev.h)
            << "\n";
  return 0;
}

int cmd_adapt(const CliArgs& a, FullConfig cfg) {
  Checkpoint ck = load_checkpoint(a.checkpoint_path);
  check_compat(ck.model, cfg);
  DataBundle data = build_data(cfg);
  std::vector<Dataset> tests = data.test_sets();

  EvalResult before = evaluate(ck.model, tests, EvalMode::aware);
  Vector protect = merge_masks(ck.model.masks, 1);
  AdaptResult res = adapt_target(cfg.run, ck.model, 1, data.target_trains[0],
                                 protect, &tests);
  EvalResult after = evaluate(ck.model, tests, EvalMode::aware);

  fs::path out(a.out_dir);
  save_checkpoint((out / "checkpoint.bin").string(), ck.model,
                  ck.dc ? &*ck.dc : nullptr);
  write_epochs_csv(out / "epochs.csv", {{1, &res.epochs}});
  write_masks_csv(out / "masks.csv", ck.model.masks);
  json metrics = {{"schema_version", kSchemaVersion},
                  {"command", "adapt"},
                  {"seed", cfg.run.seed},
                  {"before", eval_json(before)},
                  {"after", eval_json(after)}};
  if (!res.epochs.empty()) {
    metrics["final_loss"] = res.epochs.back().loss;
    metrics["acc_n"] = res.epochs.back().acc_n;
    metrics["acc_np"] = res.epochs.back().acc_np;
  }
  write_json(out / "metrics.json", metrics);
  write_manifest(out, "adapt", cfg, a.config_path, a.checkpoint_path);
  std::cout << "adapt: acc_source=" << fmt(after.acc_source)
            << " acc_target=" << fmt(after.acc_target) << " h=" << fmt(after.h)
            << "\n";
  return 0;
}

int cmd_adapt_continual(const CliArgs& a, FullConfig cfg) {
  Checkpoint ck = load_checkpoint(a.checkpoint_path);
  check_compat(ck.model, cfg);
  DataBundle data = build_data(cfg);

  ContinualResult res =
      adapt_continual(cfg.run, ck.model, data.target_trains, data.test_sets());
  EvalResult after = evaluate(ck.model, data.test_sets(), EvalMode::aware);

  fs::path out(a.out_dir);
  save_checkpoint((out / "checkpoint.bin").string(), ck.model,
                  ck.dc ? &*ck.dc : nullptr);
  std::vector<std::pair<int, const std::vector<EpochRecord>*>> phases;
  for (std::size_t j = 0; j < res.per_target_epochs.size(); ++j)
    phases.emplace_back(static_cast<int>(j + 1), &res.per_target_epochs[j]);
  write_epochs_csv(out / "epochs.csv", phases);
  write_masks_csv(out / "masks.csv", ck.model.masks);
  write_matrix_csv(out / "continual_matrix.csv", res.accuracy_matrix);

  std::vector<std::vector<double>> matrix;
  for (std::size_t r = 0; r < res.accuracy_matrix.rows(); ++r)
    matrix.push_back(res.accuracy_matrix.row_vec(r));
  json metrics = {{"schema_version", kSchemaVersion},
                  {"command", "adapt-continual"},
                  {"seed", cfg.run.seed},
                  {"accuracy_matrix", matrix},
                  {"final", eval_json(after)}};
  write_json(out / "metrics.json", metrics);
  write_manifest(out, "adapt-continual", cfg, a.config_path, a.checkpoint_path);
  std::cout << "adapt-continual: acc_source=" << fmt(after.acc_source)
            << " acc_target=" << fmt(after.acc_target) << " h=" << fmt(after.h)
            << "\n";
  return 0;
}

int cmd_train_dc(const CliArgs& a, FullConfig cfg) {
  Checkpoint ck = load_checkpoint(a.checkpoint_path);
  check_compat(ck.model, cfg);
  DataBundle data = build_data(cfg);
  std::vector<Dataset> trains = data.train_sets();

  DomainClassifier dc = train_domain_classifier(cfg.run, ck.model, trains);

  // sanity accuracy over the full per-domain training sets
  NetworkParams snap = ck.model.params;
  snap.bn_mean = ck.model.src_bn_mean;
  snap.bn_var = ck.model.src_bn_var;
  std::size_t hits = 0, total = 0;
  for (std::size_t dom = 0; dom < trains.size(); ++dom) {
    ForwardCache cache = forward_eval(snap, trains[dom].features, nullptr);
    std::vector<int> pred = argmax_rows(dc.predict(cache.feature));
    for (int p : pred) hits += (p == static_cast<int>(dom));
    total += pred.size();
  }
  double dc_acc = 100.0 * static_cast<double>(hits) / static_cast<double>(total);

  fs::path out(a.out_dir);
  save_checkpoint((out / "checkpoint.bin").string(), ck.model, &dc);
  json metrics = {{"schema_version", kSchemaVersion},
                  {"command", "train-dc"},
                  {"seed", cfg.run.seed},
                  {"dc_accuracy", dc_acc},
                  {"exemplars_per_domain", cfg.run.exemplars_per_domain}};
  write_json(out / "metrics.json", metrics);
  write_manifest(out, "train-dc", cfg, a.config_path, a.checkpoint_path);
  std::cout << "train-dc: accuracy=" << fmt(dc_acc) << "\n";
  return 0;
}

int cmd_eval(const CliArgs& a, FullConfig cfg) {
  Checkpoint ck = load_checkpoint(a.checkpoint_path);
  check_compat(ck.model, cfg);
  DataBundle data = build_data(cfg);

  EvalMode mode = a.mode == "agnostic" ? EvalMode::agnostic : EvalMode::aware;
  const DomainClassifier* dc = nullptr;
  if (mode == EvalMode::agnostic) {
    if (!ck.dc)
      throw UsageError("agnostic evaluation needs a checkpoint with a trained "
                       "domain classifier (run train-dc first)");
    dc = &*ck.dc;
  }
  EvalResult ev = evaluate(ck.model, data.test_sets(), mode, dc, a.refresh_bn);

  fs::path out(a.out_dir);
  json metrics = {{"schema_version", kSchemaVersion},
                  {"command", "eval"},
                  {"seed", cfg.run.seed},
                  {"mode", a.mode},
                  {"refresh_bn", a.refresh_bn},
                  {"eval", eval_json(ev)}};
  write_json(out / "metrics.json", metrics);
  write_manifest(out, "eval", cfg, a.config_path, a.checkpoint_path);
  std::cout << "eval(" << a.mode << "): acc_source=" << fmt(ev.acc_source)
            << " acc_target=" << fmt(ev.acc_target) << " h=" << fmt(ev.h)
            << "\n";
  return 0;
}

int cmd_gradcheck(const CliArgs& a) {
  std::uint64_t seed = a.seed_given ? a.seed : 0;
  auto results = run_gradchecks(seed);
  bool all_pass = true;
  json suites = json::array();
  for (const auto& r : results) {
    all_pass = all_pass && r.pass;
    std::cout << r.name << ": max_err=" << fmt(r.max_err) << " "
              << (r.pass ? "PASS" : "FAIL") << "\n";
    suites.push_back({{"name", r.name},
                      {"max_err", r.max_err},
                      {"trials", r.trials},
                      {"pass", r.pass}});
  }
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    write_json(fs::path(a.out_dir) / "metrics.json",
               {{"schema_version", kSchemaVersion},
                {"command", "gradcheck"},
                {"seed", seed},
                {"suites", suites},
                {"all_pass", all_pass}});
  }
  std::cout << "gradcheck: " << (all_pass ? "PASS" : "FAIL") << "\n";
  return all_pass ? 0 : 3;
}

int cmd_dump_masks(const CliArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint_path);
  fs::path out(a.out_dir);
  write_masks_csv(out / "masks.csv", ck.model.masks);
  std::cout << "dump-masks: " << ck.model.masks.n_domains() << " domains -> "
            << (out / "masks.csv").string() << "\n";
  return 0;
}

int cmd_gen_data(const CliArgs& a, FullConfig cfg) {
  if (cfg.data.generator != "two_moons")
    throw ConfigError("gen-data only supports the two_moons generator");
  fs::path out(a.out_dir);
  std::vector<Dataset> domains = build_domains(cfg);
  for (const Dataset& d : domains)
    save_csv((out / (d.name + ".csv")).string(), d);
  write_manifest(out, "gen-data", cfg, a.config_path, "");
  std::cout << "gen-data: wrote " << domains.size() << " domain files to "
            << out.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"generalized source-free domain adaptation experiments"};
  app.require_subcommand(1);

  CliArgs a;
  auto add_common = [&](CLI::App* sub, bool need_config, bool need_out,
                        bool need_ckpt) {
    auto* c = sub->add_option("--config", a.config_path, "run config file");
    if (need_config) c->required();
    auto* o = sub->add_option("--out", a.out_dir, "output directory");
    if (need_out) o->required();
    auto* k = sub->add_option("--checkpoint", a.checkpoint_path,
                              "input checkpoint file");
    if (need_ckpt) k->required();
    sub->add_option("--seed", a.seed, "override the config seed")
        ->each([&](const std::string&) { a.seed_given = true; });
  };

  CLI::App* pretrain = app.add_subcommand("pretrain", "source pretraining");
  add_common(pretrain, true, true, false);
  CLI::App* adapt = app.add_subcommand("adapt", "single-target adaptation");
  add_common(adapt, true, true, true);
  CLI::App* continual =
      app.add_subcommand("adapt-continual", "sequential multi-target adaptation");
  add_common(continual, true, true, true);
  CLI::App* traindc =
      app.add_subcommand("train-dc", "train the domain-id classifier");
  add_common(traindc, true, true, true);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, true, true, true);
  eval_cmd->add_option("--mode", a.mode, "aware | agnostic")
      ->check(CLI::IsMember({"aware", "agnostic"}));
  eval_cmd->add_flag("--refresh-bn", a.refresh_bn,
                     "re-estimate BN statistics on each evaluated dataset");
  CLI::App* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "analytic vs finite-difference gradient suites");
  add_common(gradcheck_cmd, false, false, false);
  CLI::App* dump = app.add_subcommand("dump-masks", "write mask CSV");
  add_common(dump, false, true, true);
  CLI::App* gendata = app.add_subcommand("gen-data", "write dataset CSVs");
  add_common(gendata, true, true, false);

  std::vector<std::string> full = {"gsfda"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<char*> argv;
  argv.reserve(full.size());
  for (auto& s : full) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags/commands are usage errors
  }

  try {
    auto load_with_seed = [&]() {
      FullConfig cfg = load_config(a.config_path);
      if (a.seed_given) cfg.run.seed = a.seed;
      return cfg;
    };
    if (!a.out_dir.empty()) fs::create_directories(a.out_dir);
    if (pretrain->parsed()) return cmd_pretrain(a, load_with_seed());
    if (adapt->parsed()) return cmd_adapt(a, load_with_seed());
    if (continual->parsed()) return cmd_adapt_continual(a, load_with_seed());
    if (traindc->parsed()) return cmd_train_dc(a, load_with_seed());
    if (eval_cmd->parsed()) return cmd_eval(a, load_with_seed());
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(a);
    if (dump->parsed()) return cmd_dump_masks(a);
    if (gendata->parsed()) return cmd_gen_data(a, load_with_seed());
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gsfda
