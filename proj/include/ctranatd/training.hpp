#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ctranatd/metrics.hpp"
#include "ctranatd/model.hpp"
#include "ctranatd/preprocess.hpp"

namespace ctranatd {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t patience = 5;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  bool aborted = false;     // non-finite loss; the model holds the last good parameters
  std::string diagnostic;

  // epoch,train_loss,val_loss,val_acc (timings left out so reruns compare equal)
  std::string to_csv() const;
};

// Stratified (train, validation) split, deterministic under seed.
std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& dataset, double fraction,
                                                  std::uint64_t seed);

// Mini-batch Adam on binary cross-entropy with early stopping on validation
// loss. On return the model holds the best-validation parameters.
TrainReport train(Model& model, const WindowedDataset& dataset, const TrainConfig& config);

struct EvalResult {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Inference-mode scores for every window. Throws EmptyDataError on an empty set.
EvalResult evaluate(Model& model, const WindowedDataset& dataset, std::size_t batch_size = 64);

// Mean BCE over a dataset in inference mode.
double dataset_loss(Model& model, const WindowedDataset& dataset, std::size_t batch_size = 64);

// Repetition 0 scores the whole set; every further repetition draws a
// class-stratified bootstrap resample of the windows.
std::vector<MetricSummary> repeated_selection(const EvalResult& result, std::size_t reps, std::uint64_t seed,
                                              double threshold = 0.5);

}  // namespace ctranatd
