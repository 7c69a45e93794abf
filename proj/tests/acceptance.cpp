// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero if
// any criterion fails. Tolerances are fixed here, not read from flags.
#include <boost/rational.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ctranatd/cli.hpp"
#include "ctranatd/container.hpp"
#include "ctranatd/gradcheck.hpp"
#include "ctranatd/layers.hpp"
#include "ctranatd/metrics.hpp"
#include "ctranatd/model.hpp"
#include "ctranatd/relay.hpp"
#include "oracles.hpp"

using namespace ctranatd;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr double kRationalTol = 1e-15;
constexpr double kAucTol = 1e-9;
constexpr double kSpotTol = 1e-12;
constexpr double kMinAccuracy = 0.95;
constexpr double kMinAuc = 0.98;
constexpr std::size_t kMaxEpochs = 20;
constexpr double kTrainSeconds = 600.0;
constexpr std::uint64_t kSeed = 2024;

int failures = 0;

void verdict(bool ok, const std::string& id, const std::string& what, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << id << " " << what << ": " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// ------------------------------------------------------------------ 1
void gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = standard_grad_checks(kGradTol, 7);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name, failed;
  bool composed = false;
  for (const auto& c : checks) {
    std::cout << "  gradcheck " << c.name << ": " << c.report.checked << " entries, max rel err "
              << fmt(c.report.max_rel_error, 3) << "\n";
    if (c.report.max_rel_error >= worst) {
      worst = c.report.max_rel_error;
      worst_name = c.name;
    }
    if (!c.report.passed) failed += c.name + " ";
    composed |= c.name == "model_ctranatd";
  }
  verdict(failed.empty() && composed && secs < kGradSeconds, "C1", "gradient correctness",
          "max rel err " + fmt(worst, 3) + " (" + worst_name + ") < " + fmt(kGradTol) + " over " +
              std::to_string(checks.size()) + " targets in " + fmt(secs, 3) + " s" +
              (failed.empty() ? "" : "; failed: " + failed));
}

// ------------------------------------------------------------------ 2
void shapes() {
  bool ok = true;
  std::string detail;
  for (auto p : {AttackPreset::dos, AttackPreset::ddos, AttackPreset::portscan}) {
    Model m = build(ModelConfig::preset(p, Architecture::ctranatd, kSeed));
    Tensor3 x(1, 60, 71);
    m.forward(x, false);
    // activation(2) is the dropout output, which feeds the encoder block.
    const std::size_t t = m.network().activation(2).time();
    const std::size_t want = p == AttackPreset::dos ? 28 : 29;
    ok = ok && t == want && m.config().pooled_time() == want;
    detail += to_string(p) + " k=" + std::to_string(m.config().cnn_kernel) + " -> " + std::to_string(t) + " ";
  }
  verdict(ok, "C2", "shape pipeline", detail + "(expected 28, 29, 29)");
}

// ------------------------------------------------------------------ 3
void metric_oracles() {
  using Q = boost::rational<long long>;
  auto to_d = [](const Q& q) { return static_cast<double>(q.numerator()) / static_cast<double>(q.denominator()); };
  RngState rng(kSeed);
  double worst_scalar = 0.0;
  for (int i = 0; i < 1000; ++i) {
    ConfusionCounts c;
    c.tp = rng.below(500);
    c.fp = rng.below(500);
    c.tn = rng.below(500);
    c.fn = rng.below(500);
    const long long tp = c.tp, fp = c.fp, tn = c.tn, fn = c.fn;
    if (c.total() > 0) worst_scalar = std::max(worst_scalar, std::abs(accuracy(c) - to_d(Q(tp + tn, tp + tn + fp + fn))));
    if (tp + fn > 0) worst_scalar = std::max(worst_scalar, std::abs(recall(c) - to_d(Q(tp, tp + fn))));
    if (tp + fp > 0 && tp + fn > 0) {
      const auto pf = precision_f1(c);
      const Q p(tp, tp + fp), r(tp, tp + fn);
      const double f1 = tp == 0 ? 0.0 : to_d(Q(2) * p * r / (p + r));
      worst_scalar = std::max({worst_scalar, std::abs(*pf.precision - to_d(p)), std::abs(pf.f1 - f1)});
    }
  }
  double worst_auc = 0.0;
  bool roc_exact = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = static_cast<int>(rng.below(2));
      s[i] = trial % 3 == 0 ? std::round(rng.uniform() * 8.0) / 8.0 : rng.uniform();
    }
    l[0] = 1;
    l[1] = 0;
    const auto curve = roc_curve(s, l);
    worst_auc = std::max(worst_auc, std::abs(auc(curve) - oracle::pairwise_auc(s, l)));
    const auto sweep = oracle::threshold_sweep(s, l);
    roc_exact = roc_exact && sweep.size() == curve.size();
    for (std::size_t i = 0; roc_exact && i < curve.size(); ++i)
      roc_exact = curve[i].fpr == sweep[i].fpr && curve[i].tpr == sweep[i].tpr && curve[i].threshold == sweep[i].threshold;
  }
  verdict(worst_scalar <= kRationalTol && worst_auc <= kAucTol && roc_exact, "C3", "metric oracles",
          "scalar max dev " + fmt(worst_scalar, 3) + " (<= 1e-15), auc max dev " + fmt(worst_auc, 3) +
              " (<= 1e-9), roc sweep " + (roc_exact ? "exact" : "MISMATCH"));
}

// ------------------------------------------------------------------ 4
void spot_values() {
  RngState rng(kSeed);
  Tensor3 q(2, 6, 4), k(2, 6, 4), v(2, 6, 3);
  for (auto* t : {&q, &k, &v})
    for (auto& x : t->data()) x = rng.normal(0.0, 3.0);
  ScaledDotAttention att;
  att.forward(q, k, v, 4);
  double worst_row = 0.0;
  for (std::size_t r = 0; r < 12; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 6; ++j) sum += att.weights()[r * 6 + j];
    worst_row = std::max(worst_row, std::abs(sum - 1.0));
  }
  Tensor3 zero(2, 6, 4);
  const auto y = scaled_dot_attention(zero, k, v, 4);
  double worst_mean = 0.0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t e = 0; e < 3; ++e) {
      double mean = 0.0;
      for (std::size_t j = 0; j < 6; ++j) mean += v.at(b, j, e) / 6.0;
      for (std::size_t i = 0; i < 6; ++i) worst_mean = std::max(worst_mean, std::abs(y.at(b, i, e) - mean));
    }
  const std::vector<double> half{0.5};
  const double bce1 = bce_loss(half, std::vector<double>{1.0}).loss;
  const double bce0 = bce_loss(half, std::vector<double>{0.0}).loss;
  const double bce_dev = std::max(std::abs(bce1 - std::log(2.0)), std::abs(bce0 - std::log(2.0)));
  const bool ok = worst_row <= kSpotTol && worst_mean <= kSpotTol && sigmoid(0.0) == 0.5 && bce_dev <= kSpotTol;
  verdict(ok, "C4", "spot values",
          "softmax row-sum dev " + fmt(worst_row, 3) + ", zero-Q attention vs mean(V) dev " + fmt(worst_mean, 3) +
              ", sigmoid(0)=" + fmt(sigmoid(0.0)) + ", BCE(0.5) - ln2 dev " + fmt(bce_dev, 3));
}

// ------------------------------------------------------------------ 5 and 7
struct ArchResult {
  double accuracy = 0.0, auc = 0.0, mean_accuracy = 0.0, mean_auc = 0.0, train_seconds = 0.0;
  double first_loss = 0.0, last_loss = 0.0;
  std::size_t epochs = 0;
  bool ok = false;
  std::string metrics_csv, error;
};

int cli(std::vector<std::string> args, std::string* err_out = nullptr) {
  std::ostringstream out, err;
  const int s = dispatch(args, out, err);
  if (s != 0) {
    std::cout << "  command failed (" << s << "): " << args[0] << "\n" << err.str();
    if (err_out) *err_out = err.str();
  }
  return s;
}

std::vector<std::string> csv_row(const std::string& csv, const std::string& tag) {
  std::istringstream is(csv);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind(tag + ",", 0) == 0) {
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string c;
      while (std::getline(ls, c, ',')) cells.push_back(c);
      return cells;
    }
  }
  return {};
}

using KindResults = std::map<std::string, ArchResult>;

std::map<std::string, KindResults> benchmark(const fs::path& root) {
  std::map<std::string, KindResults> all;
  const std::string seed = std::to_string(kSeed);
  for (const std::string kind : {"dos", "ddos", "portscan"}) {
    const fs::path d = root / kind;
    fs::create_directories(d);
    const auto csv = (d / "flows.csv").string(), train = (d / "train.bin").string(),
               test = (d / "test.bin").string();
    if (cli({"synth", "--records", "12000", "--attack", kind, "--attack-fraction", "0.3", "--shift-sigma", "3",
             "--shift-features", "5", "--seed", seed, "--out", csv}) != 0 ||
        cli({"preprocess", "--input", csv, "--mode", "synthetic", "--seed", seed, "--out", train, "--test-out",
             test}) != 0) {
      all[kind]["ctranatd"].error = "data preparation failed";
      continue;
    }
    for (const std::string arch : {"ctranatd", "transformer", "cnn", "lstm"}) {
      ArchResult r;
      const auto ckpt = (d / (arch + ".ckpt")).string(), metrics = (d / (arch + "_metrics.csv")).string(),
                 report = (d / (arch + "_report.csv")).string();
      const auto t0 = std::chrono::steady_clock::now();
      const int ts = cli({"train", "--data", train, "--preset", kind, "--arch", arch, "--epochs",
                          std::to_string(kMaxEpochs), "--seed", seed, "--out", ckpt, "--report", report},
                         &r.error);
      r.train_seconds = seconds_since(t0);
      if (ts == 0 && cli({"eval", "--ckpt", ckpt, "--data", test, "--reps", "100", "--seed", seed, "--out", metrics},
                         &r.error) == 0) {
        r.metrics_csv = read_file(metrics);
        const auto first = csv_row(r.metrics_csv, "0"), mean = csv_row(r.metrics_csv, "mean");
        r.accuracy = std::stod(first.at(1));
        r.auc = std::stod(first.at(5));
        r.mean_accuracy = std::stod(mean.at(1));
        r.mean_auc = std::stod(mean.at(5));
        const auto rep = read_file(report);
        r.epochs = static_cast<std::size_t>(std::count(rep.begin(), rep.end(), '\n')) - 1;
        r.first_loss = std::stod(csv_row(rep, "1").at(1));
        r.last_loss = std::stod(csv_row(rep, std::to_string(r.epochs)).at(1));
        r.ok = true;
      }
      std::cout << "  " << kind << "/" << arch << ": acc " << fmt(r.accuracy) << " auc " << fmt(r.auc)
                << " (mean of 100 selections: acc " << fmt(r.mean_accuracy) << " auc " << fmt(r.mean_auc) << "), "
                << r.epochs << " epochs, train loss " << fmt(r.first_loss, 3) << " -> " << fmt(r.last_loss, 3) << ", " << fmt(r.train_seconds, 3) << " s\n";
      all[kind][arch] = r;
    }
  }
  return all;
}

void synthetic_benchmark(const std::map<std::string, KindResults>& all) {
  bool ok = true;
  std::string detail;
  for (const std::string kind : {"dos", "ddos", "portscan"}) {
    auto it = all.find(kind);
    if (it == all.end() || !it->second.count("ctranatd") || !it->second.at("ctranatd").ok) {
      ok = false;
      detail += kind + ": pipeline failed; ";
      continue;
    }
    const auto& res = it->second;
    const auto& c = res.at("ctranatd");
    const auto get = [&](const char* a) { return res.count(a) && res.at(a).ok ? res.at(a).auc : -1.0; };
    const bool kind_ok = c.last_loss < c.first_loss && c.accuracy >= kMinAccuracy && c.auc >= kMinAuc && c.epochs <= kMaxEpochs &&
                         c.train_seconds < kTrainSeconds && c.auc >= get("transformer") && c.auc >= get("cnn") &&
                         res.count("lstm") && res.at("lstm").ok;
    ok = ok && kind_ok;
    // LSTM rank among the four by test AUC, reported only.
    int rank = 1;
    for (const char* a : {"ctranatd", "transformer", "cnn"})
      if (get(a) > get("lstm")) ++rank;
    detail += kind + " acc " + fmt(c.accuracy) + " auc " + fmt(c.auc) + " (tr " + fmt(get("transformer")) + ", cnn " +
              fmt(get("cnn")) + ", lstm " + fmt(get("lstm")) + " rank " + std::to_string(rank) + ") " +
              fmt(c.train_seconds, 3) + " s; ";
  }
  verdict(ok, "C5", "synthetic benchmark", detail + "need acc >= 0.95, auc >= 0.98, ctranatd auc >= tr and cnn, final train loss < first");
}

void determinism(const std::map<std::string, KindResults>& a, const std::map<std::string, KindResults>& b) {
  std::size_t compared = 0, differing = 0;
  for (const auto& [kind, res] : a)
    for (const auto& [arch, r] : res) {
      ++compared;
      const auto& other = b.at(kind).at(arch);
      if (!r.ok || !other.ok || r.metrics_csv != other.metrics_csv) ++differing;
    }
  verdict(compared == 12 && differing == 0, "C7", "determinism",
          std::to_string(compared - differing) + "/" + std::to_string(compared) +
              " metrics CSVs byte-identical on rerun with seed " + std::to_string(kSeed));
}

// ------------------------------------------------------------------ 6
void relay() {
  ScenarioConfig cfg;
  cfg.uav_count = 10;
  cfg.packets_per_uav = 100;
  cfg.attack_probability = 0.3;
  cfg.seed = kSeed;
  auto perfect = StubDetector::perfect();
  std::unique_ptr<Controller> ctl;
  const auto rep = run_scenario(cfg, perfect, scenario_schema(nullptr, kSeed), ctl);
  const std::size_t abnormal = rep.overall.tp + rep.overall.fn;
  const std::size_t normal = rep.overall.tn + rep.overall.fp;
  const bool flow_ok = rep.packets == 1000 && rep.verdicts == 1000 && rep.delivered == normal &&
                       rep.dropped == abnormal && rep.quarantined == 0 && rep.safety_violations == 0 &&
                       rep.payload_mismatches == 0 && rep.ledger_entries == 3 * rep.verdicts;
  auto& ledger = ctl->ledger();
  const bool chain_ok = ledger.verify_chain().valid;
  // Flip every byte of every block (body, stored hash, prev_hash) and check
  // detection lands on that block. Scans start at the tampered block; the
  // untouched prefix was verified above.
  std::size_t flips = 0, missed = 0;
  for (std::size_t k = 0; k < ledger.blocks().size(); ++k) {
    auto& b = ledger.block(k);
    auto probe = [&](std::uint8_t& byte) {
      byte ^= 0x01;
      const auto r = ledger.verify_chain(k);
      if (r.valid || r.first_bad != k) ++missed;
      byte ^= 0x01;
      ++flips;
    };
    for (auto& c : b.body) probe(reinterpret_cast<std::uint8_t&>(c));
    for (auto& c : b.hash) probe(c);
    for (auto& c : b.prev_hash) probe(c);
  }
  // A sample of full-chain scans from genesis as well.
  RngState rng(kSeed);
  for (int i = 0; i < 50; ++i) {
    const auto k = rng.below(ledger.blocks().size());
    auto& body = ledger.block(k).body;
    auto& byte = body[rng.below(body.size())];
    byte ^= 0x20;
    const auto r = ledger.verify_chain();
    if (r.valid || r.first_bad != k) ++missed;
    byte ^= 0x20;
    ++flips;
  }
  const bool still_ok = ledger.verify_chain().valid;
  verdict(flow_ok && chain_ok && missed == 0 && still_ok, "C6", "relay safety and ledger integrity",
          std::to_string(normal) + " normal delivered " + std::to_string(rep.delivered) + ", " +
              std::to_string(abnormal) + " abnormal dropped " + std::to_string(rep.dropped) + ", violations " +
              std::to_string(rep.safety_violations) + ", entries " + std::to_string(rep.ledger_entries) + " = 3 x " +
              std::to_string(rep.verdicts) + ", chain " + std::to_string(ledger.blocks().size()) + " blocks " +
              (chain_ok ? "valid" : "INVALID") + ", " + std::to_string(flips - missed) + "/" +
              std::to_string(flips) + " single-byte tampers detected");
}

// ------------------------------------------------------------------ 8
void cicids(const fs::path& root) {
  const char* path = std::getenv("CTRANATD_CICIDS2017");
  if (!path || !*path) {
    std::cout << "SKIP C8 CICIDS2017 reproduction: set CTRANATD_CICIDS2017 to a flow CSV to run it\n";
    return;
  }
  bool ok = true;
  std::string detail;
  const std::string seed = std::to_string(kSeed);
  for (const std::string kind : {"dos", "ddos", "portscan"}) {
    const fs::path d = root / ("cicids_" + kind);
    fs::create_directories(d);
    const auto train = (d / "train.bin").string(), test = (d / "test.bin").string(), ckpt = (d / "m.ckpt").string(),
               metrics = (d / "metrics.csv").string();
    const bool ran =
        cli({"preprocess", "--input", path, "--mode", "cicids", "--attack", kind, "--seed", seed, "--out", train,
             "--test-out", test}) == 0 &&
        cli({"train", "--data", train, "--preset", kind, "--epochs", std::to_string(kMaxEpochs), "--seed", seed,
             "--out", ckpt}) == 0 &&
        cli({"eval", "--ckpt", ckpt, "--data", test, "--seed", seed, "--out", metrics}) == 0;
    ok = ok && ran;
    if (ran) {
      const auto m = csv_row(read_file(metrics), "mean");
      detail += kind + " acc " + m.at(1) + " recall " + m.at(2) + " f1 " + m.at(4) + " auc " + m.at(5) + "; ";
    } else {
      detail += kind + " failed; ";
    }
  }
  verdict(ok, "C8", "CICIDS2017 reproduction (informational figures)", detail);
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "ctranatd_acceptance";
  fs::remove_all(root);
  gradients();
  shapes();
  metric_oracles();
  spot_values();
  const auto t0 = std::chrono::steady_clock::now();
  const auto first = benchmark(root / "run1");
  std::cout << "  benchmark pass took " << fmt(seconds_since(t0), 4) << " s\n";
  synthetic_benchmark(first);
  relay();
  const auto second = benchmark(root / "run2");
  determinism(first, second);
  cicids(root);
  fs::remove_all(root);
  std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(failures) + " CRITERIA FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
