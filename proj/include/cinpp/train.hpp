#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cinpp/complex.hpp"
#include "cinpp/features.hpp"
#include "cinpp/model.hpp"

namespace cinpp {

enum class TaskType { Regression, Binary, Multilabel };

std::string to_string(TaskType t);
TaskType parse_task(const std::string& s);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t plateau_patience = 20;
  double lr_halve_factor = 0.5;
  double early_stop_lr = 1e-5;
  double plateau_rel = 1e-4;  // relative improvement that resets the plateau counter
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;
  TaskType task = TaskType::Regression;
};

void validate_train_config(const TrainConfig& config);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One Adam update from the accumulated gradients of `params`. Decoupled
// weight decay (theta -= lr * wd * theta) is applied first. Throws NonFinite
// before touching anything if a gradient is not finite.
void adam_step(AdamState& state, std::span<Parameter* const> params, const AdamOptions& options);

class PlateauScheduler {
 public:
  PlateauScheduler() = default;
  PlateauScheduler(double lr, std::size_t patience, double factor, double rel_threshold);

  // Feeds one epoch's validation loss and returns the learning rate for the
  // next epoch.
  double step(double val_loss);

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t bad_epochs() const { return bad_epochs_; }
  std::size_t patience() const { return patience_; }
  double factor() const { return factor_; }
  double rel_threshold() const { return rel_; }
  void restore(double lr, double best, std::size_t bad_epochs) {
    lr_ = lr;
    best_ = best;
    bad_epochs_ = bad_epochs;
  }

 private:
  double lr_ = 1e-3;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
  std::size_t patience_ = 20;
  double factor_ = 0.5;
  double rel_ = 1e-4;
};

// Learning rates in effect for each epoch when the scheduler is fed
// `val_losses`, stopping after the epoch whose update reaches early_stop_lr.
std::vector<double> replay_plateau(std::span<const double> val_losses, const TrainConfig& config);

struct TrainState {
  AdamState adam;
  PlateauScheduler scheduler;
  std::size_t epoch = 0;
  double best_val_metric = 0.0;
  std::size_t best_epoch = 0;
};

struct Sample {
  CellComplex complex;
  CochainFeatures features;
  std::vector<double> target;
};

// ---- metrics ---------------------------------------------------------------

double mae(std::span<const double> pred, std::span<const double> target);
// Step-interpolated area under the precision-recall curve; tied scores form a
// single threshold. 0 when there are no positives.
double average_precision(std::span<const double> scores, std::span<const double> labels);
// Mann-Whitney statistic with average ranks for ties; 0.5 when one class is
// absent.
double roc_auc(std::span<const double> scores, std::span<const double> labels);

struct Metrics {
  double loss = 0.0;
  double mae = 0.0;      // regression
  double ap = 0.0;       // classification; mean over label columns with positives
  double roc_auc = 0.0;  // binary only
  double primary = 0.0;  // MAE for regression, AP otherwise
};

bool higher_is_better(TaskType task);

// Training objective: L1 for regression, mean BCE on logits otherwise.
Tensor task_loss(const Tensor& pred, const Tensor& target, TaskType task);
Tensor batch_targets(const ComplexBatch& batch, std::size_t out_dim);

// Evaluation-mode predictions [samples.size(), out_dim].
Matrix predict_all(CinModel& model, std::span<const Sample> samples, std::size_t batch_size = 64);
Metrics evaluate(CinModel& model, std::span<const Sample> samples, TaskType task, std::size_t batch_size = 64);

// ---- loop --------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;  // rate used during this epoch
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
  double test_metric = std::numeric_limits<double>::quiet_NaN();  // scored on improving epochs only
  double seconds = 0.0;
};

struct ParameterSnapshot {
  std::vector<std::vector<double>> values;
  std::vector<BatchNormStats> stats;
};

ParameterSnapshot snapshot(CinModel& model);
void restore(CinModel& model, const ParameterSnapshot& snap);

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_metric = 0.0;
  double test_at_best = 0.0;
  double final_lr = 0.0;
  bool stopped_by_lr = false;
  ParameterSnapshot best;
};

struct TrainHooks {
  // Called after each epoch; returning false stops the loop.
  std::function<bool(const EpochRecord&)> on_epoch;
};

// Trains in place. At the end the model holds the parameters of the best
// validation epoch; `state` holds optimiser state of the last epoch.
TrainReport train_loop(CinModel& model, std::span<const Sample> train, std::span<const Sample> val,
                       std::span<const Sample> test, const TrainConfig& config, TrainState* state = nullptr,
                       const TrainHooks& hooks = {});

}  // namespace cinpp
