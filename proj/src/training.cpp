#include "ctranatd/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "ctranatd/errors.hpp"
#include "ctranatd/log.hpp"
#include "ctranatd/optim.hpp"

namespace ctranatd {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be a finite non-negative number");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must be in (0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"patience", patience},
          {"validation_fraction", validation_fraction},
          {"seed", seed}};
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& e : epochs)
    out += std::to_string(e.epoch) + "," + format_number(e.train_loss) + "," + format_number(e.val_loss) + "," +
           format_number(e.val_accuracy) + "\n";
  return out;
}

std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& dataset, double fraction,
                                                  std::uint64_t seed) {
  if (dataset.size() == 0) throw EmptyDataError("split: dataset is empty");
  RngState rng(derive_seed(seed, "validation"));
  auto [kept, held] = stratified_split(dataset.labels, fraction, rng);
  return {dataset.subset(kept), dataset.subset(held)};
}

namespace {

using Snapshot = std::vector<std::pair<std::vector<double>, std::vector<double>>>;

Snapshot snapshot(Model& m) {
  Snapshot s;
  for (auto* p : m.params()) s.emplace_back(p->weights, p->bias);
  return s;
}

void restore(Model& m, const Snapshot& s) {
  auto ps = m.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ps[i]->weights = s[i].first;
    ps[i]->bias = s[i].second;
  }
}

std::vector<double> as_double(std::span<const int> labels) { return {labels.begin(), labels.end()}; }

}  // namespace

double dataset_loss(Model& model, const WindowedDataset& dataset, std::size_t batch_size) {
  const auto r = evaluate(model, dataset, batch_size);
  return bce_loss(r.scores, as_double(r.labels)).loss;
}

TrainReport train(Model& model, const WindowedDataset& dataset, const TrainConfig& config) {
  config.validate();
  auto [train_set, val_set] = split(dataset, config.validation_fraction, config.seed);
  if (val_set.size() == 0)
    throw ConfigError("validation_fraction " + std::to_string(config.validation_fraction) + " leaves no validation window out of " +
                      std::to_string(dataset.size()));
  if (train_set.size() == 0) throw EmptyDataError("no training windows left after the validation split");
  log::info("training on ", train_set.size(), " windows, validating on ", val_set.size());

  Adam adam(AdamConfig{config.learning_rate});
  RngState shuffle_rng(derive_seed(config.seed, "shuffle"));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  Snapshot best = snapshot(model);
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0, step = 0;
  const auto params = model.params();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<double> y;
      for (auto i : idx) y.push_back(train_set.labels[i]);
      model.zero_grads();
      const auto scores = model.forward(train_set.batch(idx), true);
      const auto bce = bce_loss(scores, y);
      if (!std::isfinite(bce.loss)) {
        restore(model, best);
        report.aborted = true;
        report.diagnostic = "non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(start) + "; restored parameters from epoch " +
                            std::to_string(report.best_epoch);
        report.stopped_epoch = epoch;
        log::error(report.diagnostic);
        return report;
      }
      model.backward(bce.grad);
      try {
        adam.step(params, ++step);
      } catch (const NumericError& e) {
        restore(model, best);
        report.aborted = true;
        report.diagnostic = std::string(e.what()) + " at epoch " + std::to_string(epoch);
        report.stopped_epoch = epoch;
        log::error(report.diagnostic);
        return report;
      }
      loss_sum += bce.loss * static_cast<double>(idx.size());
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(order.size());
    const auto val = evaluate(model, val_set);
    st.val_loss = bce_loss(val.scores, as_double(val.labels)).loss;
    st.val_accuracy = accuracy(confusion(val.scores, val.labels));
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(st);
    report.stopped_epoch = epoch;
    log::info("epoch ", epoch, " train_loss=", st.train_loss, " val_loss=", st.val_loss, " val_acc=",
              st.val_accuracy, " (", st.seconds, " s)");

    if (!std::isfinite(st.val_loss)) {
      restore(model, best);
      report.aborted = true;
      report.diagnostic = "non-finite validation loss at epoch " + std::to_string(epoch);
      log::error(report.diagnostic);
      return report;
    }
    if (st.val_loss < best_loss) {
      best_loss = st.val_loss;
      best = snapshot(model);
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      log::info("early stop after epoch ", epoch, " (best epoch ", report.best_epoch, ")");
      break;
    }
  }
  restore(model, best);
  return report;
}

EvalResult evaluate(Model& model, const WindowedDataset& dataset, std::size_t batch_size) {
  if (dataset.size() == 0) throw EmptyDataError("evaluate: dataset is empty");
  if (batch_size == 0) throw InvalidArgument("evaluate: batch size must be >= 1");
  EvalResult r;
  r.labels = dataset.labels;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(dataset.size(), start + batch_size); ++i) idx.push_back(i);
    const auto s = model.forward(dataset.batch(idx), false);
    r.scores.insert(r.scores.end(), s.begin(), s.end());
  }
  return r;
}

std::vector<MetricSummary> repeated_selection(const EvalResult& result, std::size_t reps, std::uint64_t seed,
                                              double threshold) {
  if (reps == 0) throw InvalidArgument("repetitions must be >= 1");
  std::vector<MetricSummary> out;
  out.push_back(summarize(result.scores, result.labels, threshold));
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < result.labels.size(); ++i) (result.labels[i] == 1 ? pos : neg).push_back(i);
  RngState rng(derive_seed(seed, "selection"));
  std::vector<double> s;
  std::vector<int> l;
  for (std::size_t r = 1; r < reps; ++r) {
    s.clear();
    l.clear();
    for (const auto* cls : {&pos, &neg})
      for (std::size_t k = 0; k < cls->size(); ++k) {
        const auto i = (*cls)[rng.below(cls->size())];
        s.push_back(result.scores[i]);
        l.push_back(result.labels[i]);
      }
    out.push_back(summarize(s, l, threshold));
  }
  return out;
}

}  // namespace ctranatd
