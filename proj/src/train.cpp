#include "rereadnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace rereadnet {

Tensor cross_entropy(const Tensor& probs, std::int64_t gold) {
  if (probs.rank() != 1)
    throw std::invalid_argument("cross_entropy: probabilities must be rank 1");
  if (gold < 0 || gold >= probs.dim(0))
    throw std::out_of_range("cross_entropy: gold index " + std::to_string(gold) +
                            " outside [0," + std::to_string(probs.dim(0)) + ")");
  return mul_scalar(log_clamped(slice(probs, 0, gold, 1)), -1.0);
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  if (step < 0 || total_steps < 1 || step > total_steps)
    throw std::invalid_argument("lr_schedule: need 0 <= step <= total_steps");
  const auto warmup = static_cast<std::int64_t>(
      std::llround(cfg.warmup_frac * static_cast<double>(total_steps)));
  if (step < warmup)
    return cfg.lr_init * static_cast<double>(step) / static_cast<double>(warmup);
  if (total_steps == warmup) return step == warmup ? cfg.lr_init : 0.0;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return cfg.lr_init * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(const std::vector<std::pair<std::string, Tensor>>& params, double beta1,
           double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, tensor] : params) {
    if (!tensor.requires_grad()) continue;  // frozen
    Slot s;
    s.tensor = tensor;
    s.m.assign(static_cast<std::size_t>(tensor.size()), 0.0);
    s.v.assign(static_cast<std::size_t>(tensor.size()), 0.0);
    slots_.push_back(std::move(s));
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.tensor.zero_grad();
}

double Adam::global_grad_norm() const {
  double sq = 0.0;
  for (const auto& s : slots_)
    for (double g : s.tensor.grad()) sq += g * g;
  return std::sqrt(sq);
}

void Adam::clip_global_norm(double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = global_grad_norm();
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& s : slots_)
    for (double& v : s.tensor.raw_grad()) v *= scale;
}

void Adam::step(double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (auto& s : slots_) {
    auto grad = s.tensor.grad();
    auto data = s.tensor.raw_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Snapshot {
  std::vector<std::vector<double>> values;
};

Snapshot take_snapshot(const std::vector<std::pair<std::string, Tensor>>& params) {
  Snapshot s;
  for (const auto& [name, tensor] : params)
    s.values.emplace_back(tensor.data().begin(), tensor.data().end());
  return s;
}

void restore_snapshot(std::vector<std::pair<std::string, Tensor>>& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].second.raw_data();
    std::copy(s.values[i].begin(), s.values[i].end(), dst.begin());
  }
}

double dataset_loss(PairModel& model, const std::vector<PairExample>& data, double* acc_out) {
  double loss = 0.0;
  std::int64_t correct = 0;
  for (const auto& ex : data) {
    Tensor probs = model.forward_probs(ex);
    loss += cross_entropy(probs, ex.label_index).item();
    std::int64_t argmax = 0;
    for (std::int64_t c = 1; c < probs.dim(0); ++c)
      if (probs.at(c) > probs.at(argmax)) argmax = c;
    correct += (argmax == ex.label_index) ? 1 : 0;
  }
  if (acc_out != nullptr)
    *acc_out = data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
  return data.empty() ? 0.0 : loss / static_cast<double>(data.size());
}

}  // namespace

TrainResult train_loop(PairModel& model, const std::vector<PairExample>& train_set,
                       const std::vector<PairExample>& val_set, const TrainConfig& cfg,
                       const Vocab& vocab) {
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train_loop: empty split");

  auto params = model.parameters();
  Adam opt(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  const std::int64_t batches_per_epoch = static_cast<std::int64_t>(
      (train_set.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size));
  const std::int64_t total_steps = std::max<std::int64_t>(1, batches_per_epoch * cfg.max_epochs);

  Rng data_rng(cfg.seed ^ 0x517cc1b727220a95ull);
  TrainResult result;
  Snapshot best;
  bool have_best = false;
  bool overfit_confirmed = false;
  std::int64_t last_improve_batch = 0;
  std::int64_t batch_idx = 0;
  bool stop = false;

  for (std::int64_t epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    Rng epoch_rng = data_rng.fork(static_cast<std::uint64_t>(epoch));
    const auto batches = batch_pad(train_set, cfg.batch_size, vocab, epoch_rng);
    std::int64_t epoch_correct = 0, epoch_seen = 0;

    for (const auto& batch : batches) {
      ++batch_idx;
      const double lr = lr_schedule(std::min(batch_idx, total_steps), total_steps, cfg);
      opt.zero_grad();

      Tensor loss_sum;
      for (std::size_t i = 0; i < batch.example_ids.size(); ++i) {
        const auto& ex = train_set[batch.example_ids[i]];
        Tensor probs = model.forward_probs(ex);
        std::int64_t argmax = 0;
        for (std::int64_t c = 1; c < probs.dim(0); ++c)
          if (probs.at(c) > probs.at(argmax)) argmax = c;
        epoch_correct += (argmax == ex.label_index) ? 1 : 0;
        ++epoch_seen;
        Tensor ce = cross_entropy(probs, ex.label_index);
        loss_sum = loss_sum.defined() ? add(loss_sum, ce) : ce;
      }
      Tensor loss =
          mul_scalar(loss_sum, 1.0 / static_cast<double>(batch.example_ids.size()));
      backward(loss);
      opt.clip_global_norm(cfg.clip_norm);
      opt.step(lr);

      std::string line = "{\"step\": " + std::to_string(batch_idx) +
                         ", \"lr\": " + fmt_double(lr) +
                         ", \"train_loss\": " + fmt_double(loss.item());
      if (batch_idx % cfg.val_every == 0) {
        double val_acc = 0.0;
        const double val_loss = dataset_loss(model, val_set, &val_acc);
        line += ", \"val_loss\": " + fmt_double(val_loss) +
                ", \"val_acc\": " + fmt_double(val_acc);
        if (val_loss < result.best_val_loss) {
          result.best_val_loss = val_loss;
          result.best_val_step = batch_idx;
          best = take_snapshot(params);
          have_best = true;
          last_improve_batch = batch_idx;
        } else if (batch_idx - last_improve_batch >= cfg.patience_batches) {
          result.stopped_early = true;
          stop = true;
        }
      }
      line += "}";
      result.metrics_lines.push_back(std::move(line));
      if (stop) break;
    }
    result.epochs_run = epoch;

    if (!stop && cfg.stop_at_train_acc > 0.0 && epoch_seen > 0 &&
        static_cast<double>(epoch_correct) / static_cast<double>(epoch_seen) >=
            cfg.stop_at_train_acc) {
      double acc = 0.0;
      dataset_loss(model, train_set, &acc);
      if (acc >= cfg.stop_at_train_acc) {
        result.final_train_acc = acc;
        overfit_confirmed = true;
        stop = true;
      }
    }
  }
  result.total_batches = batch_idx;
  if (have_best && !overfit_confirmed) restore_snapshot(params, best);
  return result;
}

Metrics evaluate(PairModel& model, const std::vector<PairExample>& data,
                 const std::vector<std::string>& labels) {
  const std::int64_t n_cls = static_cast<std::int64_t>(labels.size());
  Metrics m;
  m.total = static_cast<std::int64_t>(data.size());
  m.confusion.assign(static_cast<std::size_t>(n_cls),
                     std::vector<std::int64_t>(static_cast<std::size_t>(n_cls), 0));
  std::int64_t correct = 0;
  for (const auto& ex : data) {
    Tensor probs = model.forward_probs(ex);
    std::int64_t argmax = 0;
    for (std::int64_t c = 1; c < probs.dim(0); ++c)
      if (probs.at(c) > probs.at(argmax)) argmax = c;
    ++m.confusion[static_cast<std::size_t>(ex.label_index)][static_cast<std::size_t>(argmax)];
    correct += (argmax == ex.label_index) ? 1 : 0;
  }
  m.accuracy = data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(m.total);

  double f1_sum = 0.0;
  for (std::int64_t c = 0; c < n_cls; ++c) {
    ClassCount cc;
    cc.label = labels[static_cast<std::size_t>(c)];
    for (std::int64_t g = 0; g < n_cls; ++g) {
      for (std::int64_t p = 0; p < n_cls; ++p) {
        const auto count = m.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
        if (g == c && p == c) cc.tp += count;
        if (g != c && p == c) cc.fp += count;
        if (g == c && p != c) cc.fn += count;
      }
    }
    cc.support = cc.tp + cc.fn;
    const double denom = static_cast<double>(2 * cc.tp + cc.fp + cc.fn);
    cc.f1 = denom > 0.0 ? 2.0 * static_cast<double>(cc.tp) / denom : 0.0;
    f1_sum += cc.f1;
    m.per_class.push_back(std::move(cc));
  }
  m.macro_f1 = n_cls > 0 ? f1_sum / static_cast<double>(n_cls) : 0.0;
  if (n_cls == 2) m.positive_f1 = m.per_class[1].f1;  // "Yes" class
  return m;
}

}  // namespace rereadnet
