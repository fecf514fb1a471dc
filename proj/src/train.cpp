#include "spkseq/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "spkseq/checkpoint.hpp"
#include "spkseq/error.hpp"
#include "spkseq/ops.hpp"

namespace spkseq::train {

namespace fs = std::filesystem;

double cosine_factor(std::size_t step, std::size_t total) {
  if (total == 0) return 1.0;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return 0.5 * (1.0 + std::cos(M_PI * frac));
}

AdamW::AdamW(std::vector<net::NamedTensor> params, Options opts) : opts_(opts) {
  for (auto& p : params) {
    const auto n = p.tensor.numel();
    slots_.push_back({std::move(p), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
}

double AdamW::group_lr(net::ParamGroup g) const {
  return g == net::ParamGroup::ssm ? std::min(opts_.lr, opts_.ssm_lr) : opts_.lr;
}

void AdamW::step(double lr_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    Tensor& p = s.p.tensor;
    if (!p.has_grad()) continue;
    const double lr = group_lr(s.p.group) * lr_scale;
    const double wd = s.p.group == net::ParamGroup::ssm ? 0.0 : opts_.weight_decay;
    auto g = p.grad();
    auto x = p.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      s.m[i] = opts_.beta1 * s.m[i] + (1.0 - opts_.beta1) * g[i];
      s.v[i] = opts_.beta2 * s.v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      const double mh = s.m[i] / bc1;
      const double vh = s.v[i] / bc2;
      x[i] -= lr * (mh / (std::sqrt(vh) + opts_.eps) + wd * x[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.p.tensor.zero_grad();
}

double OpReport::multiplies_per_mixer_position() const {
  return mixer_positions ? static_cast<double>(mixer.multiplies) / static_cast<double>(mixer_positions) : 0.0;
}

double OpReport::adds_per_mixer_position() const {
  return mixer_positions ? static_cast<double>(mixer.adds) / static_cast<double>(mixer_positions) : 0.0;
}

Tensor batch_tensor(const data::SequenceDataset& ds, std::span<const std::size_t> order, std::size_t begin,
                    std::size_t end) {
  const std::size_t L = ds.length;
  std::vector<double> v;
  v.reserve((end - begin) * L);
  for (std::size_t i = begin; i < end; ++i) {
    auto s = ds.sequence(order[i]);
    v.insert(v.end(), s.begin(), s.end());
  }
  return Tensor(Shape{end - begin, L}, std::move(v));
}

OpReport audit_model_ops(net::Model& model, std::span<const double> sequence) {
  NoGradScope no_grad;
  OpReport r;
  r.total.label = "forward";
  r.mixer.label = "mixer";
  net::ForwardOptions fo;
  fo.mixer_ops = &r.mixer;
  {
    OpCountScope scope(r.total);
    model.forward(Tensor(Shape{1, sequence.size()}, std::vector<double>(sequence.begin(), sequence.end())), fo);
  }
  if (model.config().block.mixer != net::Mixer::identity) {
    r.mixer_positions = sequence.size() * model.config().n_layers;
  }
  return r;
}

EvalResult evaluate(net::Model& model, const data::SequenceDataset& ds, std::size_t batch_size) {
  if (ds.length != model.config().seq_len) throw ShapeError("evaluate: dataset length does not match the model");
  NoGradScope no_grad;
  EvalResult r;
  r.samples = ds.size();
  if (ds.size() == 0) return r;
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  net::ForwardStats stats;
  net::ForwardOptions fo;
  fo.stats = &stats;
  std::size_t correct = 0;
  double loss_sum = 0.0;
  const std::size_t C = model.config().n_classes;
  for (std::size_t b = 0; b < ds.size(); b += batch_size) {
    const std::size_t e = std::min(ds.size(), b + batch_size);
    Tensor logits = model.forward(batch_tensor(ds, order, b, e), fo);
    std::span<const int> labels(ds.labels.data() + b, e - b);
    loss_sum += ops::softmax_cross_entropy(logits, labels).item() * static_cast<double>(e - b);
    auto l = logits.data();
    for (std::size_t i = 0; i < e - b; ++i) {
      const auto row = l.subspan(i * C, C);
      const int pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      r.predictions.push_back(pred);
      correct += pred == labels[i] ? 1 : 0;
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  r.loss = loss_sum / static_cast<double>(ds.size());
  r.spike_rate = stats.spike_rate();
  r.mixer_inputs_binary = stats.mixer_inputs_binary;
  r.ops = audit_model_ops(model, ds.sequence(0));
  return r;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

}  // namespace

TrainResult fit(net::Model& model, const TrainConfig& cfg, const data::SequenceDataset& train_set,
                const data::SequenceDataset& test_set, const FitOptions& opts) {
  if (train_set.length != model.config().seq_len || test_set.length != model.config().seq_len) {
    throw ShapeError("fit: dataset length does not match the model");
  }
  if (train_set.size() == 0 && cfg.epochs > 0) throw Error("fit: empty training set");
  const fs::path out_dir = cfg.out_dir;
  std::ofstream metrics;
  if (opts.write_files) {
    fs::create_directories(out_dir);
    write_text(out_dir / "config.txt", cfg.to_text());
    ckpt::save((out_dir / "init.ckpt").string(), model);
    metrics.open(out_dir / "metrics.csv", std::ios::trunc);
    if (!metrics) throw Error("cannot write " + (out_dir / "metrics.csv").string());
    metrics << "epoch,train_loss,train_acc,test_acc,wall_time\n" << std::flush;
  }

  AdamW opt(model.parameters(), {cfg.lr, cfg.ssm_lr, cfg.weight_decay});
  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  const std::size_t C = model.config().n_classes;
  std::mt19937_64 dropout_rng(cfg.seed ^ 0xd50u);
  std::vector<std::size_t> order(n);

  TrainResult result;
  result.best_test_acc = -1.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(cfg.seed * 1000003u + epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < n; b += cfg.batch_size) {
      const std::size_t e = std::min(n, b + cfg.batch_size);
      std::vector<int> labels;
      for (std::size_t i = b; i < e; ++i) labels.push_back(train_set.labels[order[i]]);

      Tape tape;
      TapeScope scope(tape);
      net::ForwardOptions fo;
      fo.training = true;
      fo.rng = &dropout_rng;
      Tensor logits = model.forward(batch_tensor(train_set, order, b, e), fo);
      Tensor loss = ops::softmax_cross_entropy(logits, labels);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw Error("non-finite training loss (" + std::to_string(lv) + ") at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(b / cfg.batch_size) + "; try a smaller lr");
      }
      loss.backward();
      opt.step(cosine_factor(opt.steps(), total_steps));
      opt.zero_grad();

      loss_sum += lv * static_cast<double>(e - b);
      auto l = logits.data();
      for (std::size_t i = 0; i < e - b; ++i) {
        const auto row = l.subspan(i * C, C);
        correct += (std::max_element(row.begin(), row.end()) - row.begin()) == labels[i] ? 1 : 0;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    rec.test_acc = test_set.size() ? evaluate(model, test_set).accuracy : 0.0;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (rec.test_acc > result.best_test_acc) {
      result.best_test_acc = rec.test_acc;
      result.best_epoch = epoch;
      if (opts.write_files) ckpt::save((out_dir / "best.ckpt").string(), model);
    }
    if (opts.write_files) {
      metrics.precision(10);
      metrics << rec.epoch << ',' << rec.train_loss << ',' << rec.train_acc << ',' << rec.test_acc << ','
              << rec.wall_time << '\n'
              << std::flush;
    }
    if (opts.on_epoch) opts.on_epoch(rec);
    if (opts.stop_when && opts.stop_when(rec)) break;
  }
  if (result.best_test_acc < 0.0) result.best_test_acc = 0.0;
  return result;
}

data::Splits load_task_data(const TrainConfig& cfg) {
  data::Splits s;
  if (cfg.task == Task::synth) {
    s.train = data::synth_first_token_recall(cfg.model.seq_len, cfg.model.n_classes, cfg.synth_train,
                                             cfg.seed * 2 + 1);
    s.test = data::synth_first_token_recall(cfg.model.seq_len, cfg.model.n_classes, cfg.synth_test,
                                            cfg.seed * 2 + 2);
    s.train.split = "train";
    s.test.split = "test";
  } else {
    std::string root = cfg.data_dir;
    if (root.empty()) root = data::data_root_from_env().value_or("data");
    s = cfg.task == Task::smnist ? data::load_mnist_splits(root) : data::load_cifar_splits(root);
  }
  s.train = s.train.head(cfg.train_limit);
  s.test = s.test.head(cfg.test_limit);
  return s;
}

}  // namespace spkseq::train
