#include "cinpp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "cinpp/error.hpp"

namespace cinpp {

std::string to_string(TaskType t) {
  switch (t) {
    case TaskType::Regression: return "regression";
    case TaskType::Binary: return "binary";
    case TaskType::Multilabel: return "multilabel";
  }
  return "regression";
}

TaskType parse_task(const std::string& s) {
  if (s == "regression") return TaskType::Regression;
  if (s == "binary") return TaskType::Binary;
  if (s == "multilabel") return TaskType::Multilabel;
  throw Error(ErrorCode::BadParams, "unknown task '" + s + "' (expected regression, binary or multilabel)");
}

void validate_train_config(const TrainConfig& c) {
  if (!(c.early_stop_lr > 0.0) || !(c.lr > c.early_stop_lr)) {
    throw Error(ErrorCode::BadParams, "need lr > early_stop_lr > 0");
  }
  if (c.plateau_patience < 1) throw Error(ErrorCode::BadParams, "plateau patience must be at least 1");
  if (!(c.lr_halve_factor > 0.0 && c.lr_halve_factor < 1.0)) {
    throw Error(ErrorCode::BadParams, "lr factor must be in (0, 1)");
  }
  if (c.batch_size < 1) throw Error(ErrorCode::BadParams, "batch size must be positive");
  if (c.weight_decay < 0.0) throw Error(ErrorCode::BadParams, "weight decay must be non-negative");
  if (c.plateau_rel < 0.0) throw Error(ErrorCode::BadParams, "plateau threshold must be non-negative");
}

// ---- optimiser ---------------------------------------------------------------

void adam_step(AdamState& s, std::span<Parameter* const> params, const AdamOptions& o) {
  for (Parameter* p : params) {
    for (double g : p->tensor.grad()) {
      if (!std::isfinite(g)) throw Error(ErrorCode::NonFinite, "non-finite gradient for " + p->name);
    }
  }
  if (s.m.size() != params.size()) {
    s.m.assign(params.size(), {});
    s.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      s.m[i].assign(params[i]->tensor.numel(), 0.0);
      s.v[i].assign(params[i]->tensor.numel(), 0.0);
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i]->tensor.mutable_data();
    const auto g = params[i]->tensor.grad();
    auto& m = s.m[i];
    auto& v = s.v[i];
    if (m.size() != theta.size()) {
      throw Error(ErrorCode::ShapeMismatch, "optimiser state does not match " + params[i]->name);
    }
    for (std::size_t j = 0; j < theta.size(); ++j) {
      if (o.weight_decay != 0.0) theta[j] -= o.lr * o.weight_decay * theta[j];
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      theta[j] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

PlateauScheduler::PlateauScheduler(double lr, std::size_t patience, double factor, double rel_threshold)
    : lr_(lr), patience_(patience), factor_(factor), rel_(rel_threshold) {}

double PlateauScheduler::step(double val_loss) {
  const bool improved = std::isinf(best_) ? val_loss < best_ : val_loss < best_ - rel_ * std::fabs(best_);
  if (improved) {
    best_ = val_loss;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ >= patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
  }
  return lr_;
}

std::vector<double> replay_plateau(std::span<const double> val_losses, const TrainConfig& c) {
  PlateauScheduler s(c.lr, c.plateau_patience, c.lr_halve_factor, c.plateau_rel);
  std::vector<double> trace;
  for (double v : val_losses) {
    trace.push_back(s.lr());
    if (s.step(v) <= c.early_stop_lr) break;
  }
  return trace;
}

// ---- metrics -----------------------------------------------------------------

double mae(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw Error(ErrorCode::ShapeMismatch, "prediction/target sizes differ");
  if (pred.empty()) throw Error(ErrorCode::EmptyDataset, "MAE of nothing");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

namespace {

std::vector<std::size_t> order_by_score_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "score/label sizes differ");
  if (scores.empty()) throw Error(ErrorCode::EmptyDataset, "AP of nothing");
  const double positives = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](double y) {
    return y > 0.5;
  }));
  if (positives == 0.0) return 0.0;
  const auto idx = order_by_score_desc(scores);
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] > 0.5 ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "score/label sizes differ");
  if (scores.empty()) throw Error(ErrorCode::EmptyDataset, "ROC-AUC of nothing");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[idx[t]] > 0.5) {
        pos += 1.0;
        rank_sum += avg_rank;
      } else {
        neg += 1.0;
      }
    }
    i = j;
  }
  if (pos == 0.0 || neg == 0.0) return 0.5;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

bool higher_is_better(TaskType task) { return task != TaskType::Regression; }

Tensor task_loss(const Tensor& pred, const Tensor& target, TaskType task) {
  if (pred.shape() != target.shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                "prediction " + shape_string(pred.shape()) + " vs target " + shape_string(target.shape()));
  }
  if (task == TaskType::Regression) return mean(abs(sub(pred, target)));
  return mean(bce_with_logits(pred, target));
}

Tensor batch_targets(const ComplexBatch& batch, std::size_t out_dim) {
  std::vector<double> values;
  values.reserve(batch.num_complexes * out_dim);
  for (const auto& t : batch.targets) {
    if (t.size() != out_dim) {
      throw Error(ErrorCode::ShapeMismatch,
                  "target of width " + std::to_string(t.size()) + ", model outputs " + std::to_string(out_dim));
    }
    values.insert(values.end(), t.begin(), t.end());
  }
  return Tensor::from({batch.num_complexes, out_dim}, std::move(values));
}

namespace {

std::vector<ComplexRef> refs(std::span<const Sample> samples, std::span<const std::size_t> idx) {
  std::vector<ComplexRef> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back({&samples[i].complex, &samples[i].features, &samples[i].target});
  return out;
}

}  // namespace

Matrix predict_all(CinModel& model, std::span<const Sample> samples, std::size_t batch_size) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "nothing to predict");
  NoGradGuard no_grad;
  const std::size_t out_dim = model.config.out_dim;
  Matrix out(samples.size(), out_dim);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
    const auto r = refs(samples, idx);
    const ComplexBatch batch = make_batch(r);
    const Tensor pred = forward(model, batch, ForwardContext{});
    std::copy(pred.data().begin(), pred.data().end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * out_dim));
  }
  return out;
}

Metrics evaluate(CinModel& model, std::span<const Sample> samples, TaskType task, std::size_t batch_size) {
  const Matrix pred = predict_all(model, samples, batch_size);
  const std::size_t w = pred.cols;
  std::vector<double> target;
  target.reserve(pred.data.size());
  for (const Sample& s : samples) {
    if (s.target.size() != w) throw Error(ErrorCode::ShapeMismatch, "target width differs from model output");
    target.insert(target.end(), s.target.begin(), s.target.end());
  }
  Metrics m;
  {
    NoGradGuard no_grad;
    m.loss = task_loss(Tensor::from({pred.rows, w}, pred.data), Tensor::from({pred.rows, w}, target), task).item();
  }
  if (task == TaskType::Regression) {
    m.mae = mae(pred.data, target);
    m.primary = m.mae;
    return m;
  }
  double ap_sum = 0.0;
  std::size_t ap_cols = 0;
  std::vector<double> sc(pred.rows), lb(pred.rows);
  for (std::size_t c = 0; c < w; ++c) {
    bool any_pos = false;
    for (std::size_t r = 0; r < pred.rows; ++r) {
      sc[r] = pred(r, c);
      lb[r] = target[r * w + c];
      any_pos |= lb[r] > 0.5;
    }
    if (any_pos) {
      ap_sum += average_precision(sc, lb);
      ++ap_cols;
    }
    if (c == 0) m.roc_auc = roc_auc(sc, lb);
  }
  m.ap = ap_cols ? ap_sum / static_cast<double>(ap_cols) : 0.0;
  m.primary = m.ap;
  return m;
}

// ---- loop --------------------------------------------------------------------

ParameterSnapshot snapshot(CinModel& model) {
  ParameterSnapshot s;
  for (Parameter* p : model.parameters()) s.values.emplace_back(p->tensor.data().begin(), p->tensor.data().end());
  for (const NamedStats& n : model.norm_stats()) s.stats.push_back(*n.stats);
  return s;
}

void restore(CinModel& model, const ParameterSnapshot& snap) {
  const auto params = model.parameters();
  const auto stats = model.norm_stats();
  if (params.size() != snap.values.size() || stats.size() != snap.stats.size()) {
    throw Error(ErrorCode::ShapeMismatch, "snapshot does not match the model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto d = params[i]->tensor.mutable_data();
    if (d.size() != snap.values[i].size()) throw Error(ErrorCode::ShapeMismatch, "snapshot shape for " + params[i]->name);
    std::copy(snap.values[i].begin(), snap.values[i].end(), d.begin());
  }
  for (std::size_t i = 0; i < stats.size(); ++i) *stats[i].stats = snap.stats[i];
}

TrainReport train_loop(CinModel& model, std::span<const Sample> train, std::span<const Sample> val,
                       std::span<const Sample> test, const TrainConfig& config, TrainState* state_out,
                       const TrainHooks& hooks) {
  validate_train_config(config);
  if (train.empty()) throw Error(ErrorCode::EmptySplit, "training split is empty");
  if (val.empty()) throw Error(ErrorCode::EmptySplit, "validation split is empty");
  if (test.empty()) throw Error(ErrorCode::EmptySplit, "test split is empty");

  TrainState local;
  TrainState& st = state_out ? *state_out : local;
  if (st.epoch == 0) {
    st.scheduler = PlateauScheduler(config.lr, config.plateau_patience, config.lr_halve_factor, config.plateau_rel);
  }

  const auto params = model.parameters();
  const Rng root(config.seed);
  const Rng shuffle_rng = root.split("shuffle");
  const Rng dropout_rng = root.split("dropout");
  const bool maximise = higher_is_better(config.task);

  TrainReport report;
  report.best = snapshot(model);
  bool have_best = false;
  std::vector<std::size_t> order(train.size());

  for (std::size_t e = 0; e < config.max_epochs; ++e, ++st.epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = st.epoch;
    rec.lr = st.scheduler.lr();

    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng sh = shuffle_rng.split(static_cast<std::uint64_t>(st.epoch));
    std::shuffle(order.begin(), order.end(), sh);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const auto r = refs(train, std::span(order).subspan(start, end - start));
      const ComplexBatch batch = make_batch(r);
      Rng drop = dropout_rng.split(st.adam.step);
      const Tensor pred = forward(model, batch, ForwardContext{true, &drop});
      const Tensor loss = task_loss(pred, batch_targets(batch, model.config.out_dim), config.task);
      for (Parameter* p : params) p->tensor.zero_grad();
      loss.backward();
      adam_step(st.adam, params,
                AdamOptions{rec.lr, config.beta1, config.beta2, config.adam_eps, config.weight_decay});
      loss_sum += loss.item() * static_cast<double>(end - start);
    }
    rec.train_loss = loss_sum / static_cast<double>(train.size());

    const Metrics vm = evaluate(model, val, config.task, std::max<std::size_t>(config.batch_size, 64));
    rec.val_loss = vm.loss;
    rec.val_metric = vm.primary;

    const bool better = !have_best || (maximise ? vm.primary > st.best_val_metric : vm.primary < st.best_val_metric);
    if (better) {
      // The test split is only scored when it can become the reported value.
      const Metrics tm = evaluate(model, test, config.task, std::max<std::size_t>(config.batch_size, 64));
      rec.test_metric = tm.primary;
      have_best = true;
      st.best_val_metric = vm.primary;
      st.best_epoch = st.epoch;
      report.best = snapshot(model);
      report.test_at_best = tm.primary;
    }

    const double next_lr = st.scheduler.step(vm.loss);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    const bool keep_going = !hooks.on_epoch || hooks.on_epoch(rec);
    if (next_lr <= config.early_stop_lr) {
      report.stopped_by_lr = true;
      ++st.epoch;
      break;
    }
    if (!keep_going) {
      ++st.epoch;
      break;
    }
  }

  report.best_epoch = st.best_epoch;
  report.best_val_metric = st.best_val_metric;
  report.final_lr = st.scheduler.lr();
  restore(model, report.best);
  return report;
}

}  // namespace cinpp
