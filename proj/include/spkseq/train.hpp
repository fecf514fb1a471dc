#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spkseq/config.hpp"
#include "spkseq/data.hpp"
#include "spkseq/network.hpp"
#include "spkseq/op_counter.hpp"

namespace spkseq::train {

/// Multiplier in [0, 1] for a cosine decay from 1 at step 0 to 0 at step `total`.
double cosine_factor(std::size_t step, std::size_t total);

/// Adam with decoupled weight decay. The SSM group trains at min(lr, ssm_lr)
/// and is never decayed.
class AdamW {
 public:
  struct Options {
    double lr = 0.01;
    double ssm_lr = 0.001;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamW(std::vector<net::NamedTensor> params, Options opts);

  /// One update at learning rate lr_group * lr_scale. Parameters without a grad are left alone.
  void step(double lr_scale = 1.0);
  void zero_grad();
  std::size_t steps() const { return t_; }
  double group_lr(net::ParamGroup g) const;

 private:
  struct Slot {
    net::NamedTensor p;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  Options opts_;
  std::size_t t_ = 0;
};

/// Arithmetic spent classifying one sequence.
struct OpReport {
  OpCounter total;
  OpCounter mixer;
  std::size_t mixer_positions = 0;  // sequence length x mixing layers

  double multiplies_per_mixer_position() const;
  double adds_per_mixer_position() const;
};

struct EvalResult {
  std::size_t samples = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  double spike_rate = 0.0;  // over binary activations; 0 when there are none
  bool mixer_inputs_binary = true;
  OpReport ops;
  std::vector<int> predictions;
};

/// Eval-mode pass over a dataset in fixed batch order.
EvalResult evaluate(net::Model& model, const data::SequenceDataset& ds, std::size_t batch_size = 100);

/// Audits the arithmetic of a forward pass over a single sequence.
OpReport audit_model_ops(net::Model& model, std::span<const double> sequence);

/// Stacks sequences [begin, end) of ds into a [B, L] tensor.
Tensor batch_tensor(const data::SequenceDataset& ds, std::span<const std::size_t> order, std::size_t begin,
                    std::size_t end);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double wall_time = 0.0;  // seconds since training started
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_test_acc = 0.0;
  std::size_t best_epoch = 0;  // 0: the initial model
};

struct FitOptions {
  bool write_files = true;  // init.ckpt, best.ckpt, metrics.csv, config.txt under cfg.out_dir
  std::function<void(const EpochRecord&)> on_epoch;
  /// Return true to stop after the current epoch.
  std::function<bool(const EpochRecord&)> stop_when;
};

/// Trains `model` in place. Throws Error on a non-finite loss.
TrainResult fit(net::Model& model, const TrainConfig& cfg, const data::SequenceDataset& train_set,
                const data::SequenceDataset& test_set, const FitOptions& opts = {});

/// Datasets for cfg.task, with train_limit/test_limit applied.
data::Splits load_task_data(const TrainConfig& cfg);

}  // namespace spkseq::train
