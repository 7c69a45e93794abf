#include "ctranatd/cli.hpp"

#include <algorithm>
#include <fstream>

#include "CLI11.hpp"
#include "ctranatd/container.hpp"
#include "ctranatd/errors.hpp"
#include "ctranatd/gradcheck.hpp"
#include "ctranatd/log.hpp"
#include "ctranatd/relay.hpp"
#include "ctranatd/synth.hpp"
#include "ctranatd/training.hpp"

namespace ctranatd {

namespace {

struct Options {
  std::uint64_t seed = 0;
  int verbose = 0;

  // synth
  std::size_t records = 6000;
  std::string attack = "dos";
  double attack_fraction = 0.3;
  double attack_density = 0.9;
  double shift_sigma = 3.0;
  std::size_t shift_features = 5;

  // preprocess
  std::string input, mode = "synthetic", test_out;
  double test_fraction = 0.2;
  std::string attack_filter;

  // train
  std::string data, preset = "dos", arch = "ctranatd", report;
  std::size_t epochs = 20, batch = 32, patience = 5;
  double lr = 1e-3, val_fraction = 0.2;

  // eval / roc
  std::string ckpt, roc;
  std::size_t reps = 100;
  double threshold = 0.5;

  // simulate
  std::string scenario, ledger_out;
  bool oracle = false;

  // gradcheck
  double tolerance = 1e-4;

  std::string out;
};

void log_config(std::ostream& err, const std::string& command, const nlohmann::json& cfg) {
  err << "config: " << nlohmann::json{{"command", command}, {"resolved", cfg}}.dump() << "\n";
}

int run_synth(const Options& o, std::ostream& out, std::ostream& err) {
  SynthConfig c;
  c.records = o.records;
  c.kind = parse_attack_kind(o.attack);
  c.attack_fraction = o.attack_fraction;
  c.attack_density = o.attack_density;
  c.shift_sigma = o.shift_sigma;
  c.shift_features = o.shift_features;
  c.seed = o.seed;
  auto j = c.to_json();
  j["out"] = o.out;
  log_config(err, "synth", j);
  write_synthetic_csv(o.out, c);
  out << "wrote " << c.records << " records to " << o.out << "\n";
  return 0;
}

int run_preprocess(const Options& o, std::ostream& out, std::ostream& err) {
  PreprocessOptions p;
  p.mode = parse_schema_mode(o.mode);
  p.seed = o.seed;
  p.test_fraction = o.test_out.empty() ? 0.0 : o.test_fraction;
  if (!o.test_out.empty() && !(o.test_fraction > 0.0 && o.test_fraction < 1.0))
    throw InvalidArgument("--test-fraction must be in (0, 1) when --test-out is given");
  if (!o.attack_filter.empty()) p.attack_filter = parse_attack_kind(o.attack_filter);
  log_config(err, "preprocess",
             {{"input", o.input}, {"mode", o.mode}, {"seed", o.seed}, {"out", o.out}, {"test_out", o.test_out},
              {"test_fraction", p.test_fraction}, {"attack", o.attack_filter}, {"window", p.window}});
  auto parsed = parse_csv(o.input, p.mode, p.parse);
  auto result = preprocess_records(std::move(parsed.records), parsed.skipped, p);
  result.train.provenance["source"] = o.input;
  save_dataset(o.out, result.train);
  out << "wrote " << result.train.size() << " windows (" << result.train.stats.positive_windows
      << " abnormal) to " << o.out << "\n";
  if (!o.test_out.empty()) {
    result.test.provenance["source"] = o.input;
    save_dataset(o.test_out, result.test);
    out << "wrote " << result.test.size() << " windows (" << result.test.stats.positive_windows
        << " abnormal) to " << o.test_out << "\n";
  }
  return 0;
}

int run_train(const Options& o, std::ostream& out, std::ostream& err) {
  auto mc = ModelConfig::preset(parse_preset(o.preset), parse_architecture(o.arch), o.seed);
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch;
  tc.learning_rate = o.lr;
  tc.patience = o.patience;
  tc.validation_fraction = o.val_fraction;
  tc.seed = o.seed;
  mc.batch_size = tc.batch_size;
  nlohmann::json mj = mc;
  log_config(err, "train", {{"data", o.data}, {"out", o.out}, {"report", o.report}, {"model", mj},
                            {"training", tc.to_json()}});
  const auto data = load_dataset(o.data);
  if (data.features != mc.input_features || data.window != mc.window)
    throw DimensionError("feature", "dataset windows are " + std::to_string(data.window) + "x" +
                                        std::to_string(data.features) + ", model expects " +
                                        std::to_string(mc.window) + "x" + std::to_string(mc.input_features));
  Model model = build(mc);
  const auto report = train(model, data, tc);
  save_model(o.out, model, data.schema.to_json());
  if (!o.report.empty()) write_file_atomic(o.report, report.to_csv());
  if (report.aborted) throw NumericError(report.diagnostic + " (last good checkpoint written to " + o.out + ")");
  const auto& last = report.epochs.back();
  out << "trained " << to_string(mc.architecture) << " for " << report.stopped_epoch << " epochs (best "
      << report.best_epoch << "), final val_loss " << last.val_loss << ", val_acc " << last.val_accuracy << "\n";
  return 0;
}

int run_eval(const Options& o, std::ostream& out, std::ostream& err) {
  log_config(err, "eval", {{"ckpt", o.ckpt}, {"data", o.data}, {"reps", o.reps}, {"seed", o.seed},
                           {"threshold", o.threshold}, {"out", o.out}, {"roc", o.roc}});
  if (o.reps == 0) throw InvalidArgument("--reps must be >= 1");
  auto loaded = load_model(o.ckpt);
  const auto data = load_dataset(o.data);
  const auto result = evaluate(loaded.model, data);
  const auto reps = repeated_selection(result, o.reps, o.seed, o.threshold);
  write_file_atomic(o.out, metrics_to_csv(reps));
  if (!o.roc.empty()) write_file_atomic(o.roc, roc_to_csv(roc_curve(result.scores, result.labels)));
  const auto m = mean_summary(reps);
  out << "accuracy " << m.accuracy << " recall " << m.recall << " f1 " << m.f1 << " auc " << m.auc << " (mean of "
      << reps.size() << " selections)\n";
  return 0;
}

int run_roc(const Options& o, std::ostream& out, std::ostream& err) {
  log_config(err, "roc", {{"ckpt", o.ckpt}, {"data", o.data}, {"out", o.out}});
  auto loaded = load_model(o.ckpt);
  const auto data = load_dataset(o.data);
  const auto result = evaluate(loaded.model, data);
  const auto curve = roc_curve(result.scores, result.labels);
  write_file_atomic(o.out, roc_to_csv(curve));
  out << curve.size() << " ROC points, auc " << auc(curve) << "\n";
  return 0;
}

int run_simulate(const Options& o, std::ostream& out, std::ostream& err) {
  if (!std::filesystem::exists(o.scenario)) throw IoError("scenario file not found: " + o.scenario);
  nlohmann::json sj;
  try {
    sj = nlohmann::json::parse(read_file(o.scenario));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario JSON: ") + e.what());
  }
  sj["seed"] = o.seed;
  const auto cfg = ScenarioConfig::from_json(sj);
  if (o.ckpt.empty() && !o.oracle)
    throw ConfigError("simulate needs a detector checkpoint (--ckpt) or --oracle-detector");
  log_config(err, "simulate", {{"scenario", cfg.to_json()}, {"ckpt", o.ckpt}, {"oracle_detector", o.oracle},
                               {"out", o.out}, {"ledger", o.ledger_out}});
  std::unique_ptr<Detector> detector;
  nlohmann::json shipped;
  if (o.oracle) {
    detector = std::make_unique<StubDetector>(StubDetector::perfect());
  } else {
    if (!std::filesystem::exists(o.ckpt)) throw ConfigError("detector checkpoint not found: " + o.ckpt);
    auto loaded = load_model(o.ckpt);
    shipped = loaded.schema;
    detector = std::make_unique<ModelDetector>(std::move(loaded.model));
  }
  const auto schema = scenario_schema(shipped, cfg.seed);
  std::unique_ptr<Controller> controller;
  const auto report = run_scenario(cfg, *detector, schema, controller);
  write_file_atomic(o.out, report.to_json().dump(2) + "\n");
  if (!o.ledger_out.empty()) write_file_atomic(o.ledger_out, controller->ledger().export_ndjson());
  out << report.delivered << " delivered, " << report.dropped << " dropped, " << report.rejected << " rejected; chain "
      << report.chain_length << " blocks, " << (report.chain_valid ? "valid" : "INVALID") << "\n";
  return report.chain_valid && report.safety_violations == 0 ? 0 : 1;
}

int run_gradcheck(const Options& o, std::ostream& out, std::ostream& err) {
  log_config(err, "gradcheck", {{"tolerance", o.tolerance}, {"seed", o.seed}, {"out", o.out}});
  std::string table = "target,checked,max_rel_error,passed\n";
  bool ok = true;
  for (const auto& r : standard_grad_checks(o.tolerance, o.seed)) {
    table += r.name + "," + std::to_string(r.report.checked) + "," + format_number(r.report.max_rel_error) + "," +
             (r.report.passed ? "true" : "false") + "\n";
    ok = ok && r.report.passed;
  }
  if (o.out.empty()) out << table;
  else write_file_atomic(o.out, table);
  if (!ok) throw NumericError("gradient check exceeded tolerance " + format_number(o.tolerance));
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Anomaly traffic detection for UAV flows: CNN front-end + Transformer encoder", "ctranatd"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", o.seed, "Base seed for every random stream")->capture_default_str();
  app.add_flag("-v,--verbose", o.verbose, "More logging (repeat for debug)");

  auto* synth = app.add_subcommand("synth", "Write a synthetic flow CSV");
  synth->add_option("--records", o.records, "Number of records (one per second)")->capture_default_str();
  synth->add_option("--attack", o.attack, "dos|ddos|portscan")->capture_default_str();
  synth->add_option("--attack-fraction", o.attack_fraction, "Share of attacked minutes")->capture_default_str();
  synth->add_option("--attack-density", o.attack_density, "Share of abnormal records in attacked minutes")
      ->capture_default_str();
  synth->add_option("--shift-sigma", o.shift_sigma, "Mean shift of attacked features, in stds")->capture_default_str();
  synth->add_option("--shift-features", o.shift_features, "How many features an attack shifts")
      ->capture_default_str();
  synth->add_option("--out", o.out, "Output CSV")->required();

  auto* pre = app.add_subcommand("preprocess", "Parse, encode and window a flow CSV");
  pre->add_option("--input", o.input, "Flow CSV")->required();
  pre->add_option("--mode", o.mode, "cicids|synthetic")->required();
  pre->add_option("--out", o.out, "Windowed dataset (training part)")->required();
  pre->add_option("--test-out", o.test_out, "Held-out test windows");
  pre->add_option("--test-fraction", o.test_fraction, "Share held out when --test-out is given")
      ->capture_default_str();
  pre->add_option("--attack", o.attack_filter, "Keep normal traffic plus this attack only");

  auto* tr = app.add_subcommand("train", "Train a detector");
  tr->add_option("--data", o.data, "Windowed dataset")->required();
  tr->add_option("--preset", o.preset, "dos|ddos|portscan")->required();
  tr->add_option("--arch", o.arch, "ctranatd|cnn|transformer|lstm")->capture_default_str();
  tr->add_option("--epochs", o.epochs, "Maximum epochs")->capture_default_str();
  tr->add_option("--batch", o.batch, "Batch size")->capture_default_str();
  tr->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  tr->add_option("--patience", o.patience, "Early-stopping patience (epochs)")->capture_default_str();
  tr->add_option("--val-fraction", o.val_fraction, "Validation share")->capture_default_str();
  tr->add_option("--out", o.out, "Checkpoint")->required();
  tr->add_option("--report", o.report, "Per-epoch CSV report");

  auto* ev = app.add_subcommand("eval", "Score a dataset and write metrics");
  ev->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  ev->add_option("--data", o.data, "Windowed dataset")->required();
  ev->add_option("--reps", o.reps, "Repeated selections to average")->capture_default_str();
  ev->add_option("--threshold", o.threshold, "Decision threshold")->capture_default_str();
  ev->add_option("--out", o.out, "Metrics CSV")->required();
  ev->add_option("--roc", o.roc, "ROC CSV");

  auto* rc = app.add_subcommand("roc", "Write ROC points");
  rc->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  rc->add_option("--data", o.data, "Windowed dataset")->required();
  rc->add_option("--out", o.out, "ROC CSV")->required();

  auto* sim = app.add_subcommand("simulate", "Run a relay scenario");
  sim->add_option("--scenario", o.scenario, "Scenario JSON")->required();
  sim->add_option("--ckpt", o.ckpt, "Detector checkpoint");
  sim->add_flag("--oracle-detector", o.oracle, "Use the ground truth as the detector");
  sim->add_option("--out", o.out, "Report JSON")->required();
  sim->add_option("--ledger", o.ledger_out, "Ledger NDJSON export");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--tolerance", o.tolerance, "Max relative error")->capture_default_str();
  gc->add_option("--out", o.out, "CSV instead of stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    auto* active = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << active->help();
    err << "error: usage: " << e.what() << "\n";
    return 2;
  }

  const auto previous = log::level();
  log::set_level(o.verbose >= 2 ? log::Level::debug : o.verbose == 1 ? log::Level::info : log::Level::warn);
  int status = 1;
  try {
    if (synth->parsed()) status = run_synth(o, out, err);
    else if (pre->parsed()) status = run_preprocess(o, out, err);
    else if (tr->parsed()) status = run_train(o, out, err);
    else if (ev->parsed()) status = run_eval(o, out, err);
    else if (rc->parsed()) status = run_roc(o, out, err);
    else if (sim->parsed()) status = run_simulate(o, out, err);
    else if (gc->parsed()) status = run_gradcheck(o, out, err);
  } catch (const Error& e) {
    err << "error: " << e.category() << ": " << e.what() << "\n";
    status = 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    status = 1;
  }
  log::set_level(previous);
  return status;
}

}  // namespace ctranatd
