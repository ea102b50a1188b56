#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "rereadnet/data.hpp"
#include "rereadnet/heads.hpp"
#include "rereadnet/tensor.hpp"

namespace rereadnet {

struct TrainConfig {
  double lr_init = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t batch_size = 32;
  std::int64_t max_epochs = 200;
  double warmup_frac = 0.1;
  std::int64_t patience_batches = 1000;
  std::int64_t val_every = 100;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  // When positive: confirm train accuracy at epoch end and stop once reached
  // (used by the overfit harness; disabled for normal runs).
  double stop_at_train_acc = -1.0;
};

// -log(probs[gold]) with the argument floored at 1e-12.
Tensor cross_entropy(const Tensor& probs, std::int64_t gold);

// Linear warm-up to lr_init, then cosine decay to zero.
double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

// Bias-corrected Adam over the trainable subset of the parameter list;
// frozen tensors are never touched.
class Adam {
 public:
  Adam(const std::vector<std::pair<std::string, Tensor>>& params, double beta1, double beta2,
       double eps);

  void zero_grad();
  double global_grad_norm() const;
  void clip_global_norm(double max_norm);
  void step(double lr);
  std::int64_t step_count() const { return step_; }

 private:
  struct Slot {
    Tensor tensor;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double beta1_, beta2_, eps_;
  std::int64_t step_ = 0;
};

// Minimal interface the trainer needs from either architecture.
class PairModel {
 public:
  virtual ~PairModel() = default;
  virtual Tensor forward_probs(const PairExample& ex) = 0;
  virtual std::vector<std::pair<std::string, Tensor>> parameters() = 0;
  virtual std::int64_t n_classes() const = 0;
};

class DrrNetModel final : public PairModel {
 public:
  template <typename... Args>
  explicit DrrNetModel(Args&&... args) : net_(std::forward<Args>(args)...) {}
  Tensor forward_probs(const PairExample& ex) override { return net_.forward(ex).probs; }
  std::vector<std::pair<std::string, Tensor>> parameters() override {
    return net_.parameters();
  }
  std::int64_t n_classes() const override { return net_.config().n_classes; }
  DrrNet& net() { return net_; }

 private:
  DrrNet net_;
};

class LadraNetModel final : public PairModel {
 public:
  template <typename... Args>
  explicit LadraNetModel(Args&&... args) : net_(std::forward<Args>(args)...) {}
  Tensor forward_probs(const PairExample& ex) override { return net_.forward(ex).probs; }
  std::vector<std::pair<std::string, Tensor>> parameters() override {
    return net_.parameters();
  }
  std::int64_t n_classes() const override { return net_.config().n_classes; }
  LadraNet& net() { return net_; }

 private:
  LadraNet net_;
};

struct TrainResult {
  std::vector<std::string> metrics_lines;  // JSONL: {step, lr, train_loss, val_loss?, val_acc?}
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::int64_t best_val_step = 0;
  std::int64_t total_batches = 0;
  std::int64_t epochs_run = 0;
  bool stopped_early = false;
  double final_train_acc = -1.0;
};

// Adam + schedule + early stopping on validation loss; the model ends up
// holding the best-validation parameters (or the confirmed overfit ones when
// stop_at_train_acc fires).
TrainResult train_loop(PairModel& model, const std::vector<PairExample>& train_set,
                       const std::vector<PairExample>& val_set, const TrainConfig& cfg,
                       const Vocab& vocab);

struct ClassCount {
  std::string label;
  std::int64_t tp = 0, fp = 0, fn = 0, support = 0;
  double f1 = 0.0;
};

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double positive_f1 = -1.0;  // binary tasks only
  std::vector<ClassCount> per_class;
  std::vector<std::vector<std::int64_t>> confusion;  // [gold][pred]
  std::int64_t total = 0;
};

Metrics evaluate(PairModel& model, const std::vector<PairExample>& data,
                 const std::vector<std::string>& labels);

}  // namespace rereadnet
