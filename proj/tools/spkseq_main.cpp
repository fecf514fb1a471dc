// spkseq: train, evaluate and stream spiking state-space classifiers.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "spkseq/checkpoint.hpp"
#include "spkseq/config.hpp"
#include "spkseq/data.hpp"
#include "spkseq/error.hpp"
#include "spkseq/streaming.hpp"
#include "spkseq/train.hpp"

using namespace spkseq;

namespace {

std::vector<std::pair<std::string, std::string>> split_overrides(const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : items) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + s + "' is not key=value");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

void print_ops(const train::OpReport& r) {
  std::printf("ops/sequence: %llu mul, %llu add\n", static_cast<unsigned long long>(r.total.multiplies),
              static_cast<unsigned long long>(r.total.adds));
  if (r.mixer_positions) {
    std::printf("mixer ops/position: %.2f mul, %.2f add\n", r.multiplies_per_mixer_position(),
                r.adds_per_mixer_position());
  }
}

int run_train(const std::string& config_path, const std::string& task, const std::optional<std::uint64_t>& seed,
              const std::string& out, const std::vector<std::string>& extra) {
  auto overrides = split_overrides(extra);
  if (!task.empty()) overrides.emplace_back("task", task);
  if (seed) overrides.emplace_back("seed", std::to_string(*seed));
  if (!out.empty()) overrides.emplace_back("out", out);
  const TrainConfig cfg = load_config(config_path, overrides);

  auto splits = train::load_task_data(cfg);
  net::Model model(cfg.model, cfg.seed);
  std::printf("task %s: %zu train / %zu test, L=%zu, %zu parameters\n", to_string(cfg.task).c_str(),
              splits.train.size(), splits.test.size(), cfg.model.seq_len, model.count_parameters());
  train::FitOptions fo;
  fo.on_epoch = [](const train::EpochRecord& r) {
    std::printf("epoch %3zu  loss %.4f  train %.4f  test %.4f  %.1fs\n", r.epoch, r.train_loss, r.train_acc,
                r.test_acc, r.wall_time);
    std::fflush(stdout);
  };
  const auto result = train::fit(model, cfg, splits.train, splits.test, fo);
  std::printf("best test accuracy %.4f (epoch %zu); outputs in %s\n", result.best_test_acc, result.best_epoch,
              cfg.out_dir.c_str());
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& task_name,
             std::uint64_t seed, std::size_t limit) {
  net::Model model = ckpt::load(checkpoint);
  const auto& mc = model.config();
  Task task;
  if (!task_name.empty()) {
    task = parse_task(task_name);
  } else if (mc.seq_len == 784 && mc.n_classes == 10) {
    task = Task::smnist;
  } else if (mc.seq_len == 1024 && mc.n_classes == 10) {
    task = Task::scifar;
  } else {
    task = Task::synth;
  }
  TrainConfig cfg;
  cfg.task = task;
  cfg.model = mc;
  cfg.seed = seed;
  cfg.data_dir = data_dir;
  cfg.test_limit = limit;
  cfg.synth_train = 0;
  const auto test = train::load_task_data(cfg).test;
  const auto r = train::evaluate(model, test);
  std::printf("samples %zu\naccuracy %.6f\nloss %.6f\nspike_rate %.6f\n", r.samples, r.accuracy, r.loss,
              r.spike_rate);
  print_ops(r.ops);
  return 0;
}

int run_infer(const std::string& checkpoint, const std::string& input, bool conv_mode) {
  net::Model model = ckpt::load(checkpoint);
  std::ifstream in(input);
  if (!in) throw Error("cannot read " + input);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> seq;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) seq.push_back(std::stod(cell));
    std::vector<double> logits;
    if (conv_mode) {
      NoGradScope ng;
      Tensor out = model.forward(Tensor(Shape{1, seq.size()}, seq));
      logits.assign(out.data().begin(), out.data().end());
    } else {
      logits = stream::infer_iterative(model, seq);
    }
    const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
    std::printf("%zu,%td", row++, best);
    for (double v : logits) std::printf(",%.9g", v);
    std::printf("\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spkseq: spiking state-space sequence classifiers"};
  app.require_subcommand(1);

  auto* tr = app.add_subcommand("train", "train a model from a key=value config");
  std::string config_path, task, out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  tr->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--task", task, "smnist, scifar or synth");
  tr->add_option("--seed", seed, "random seed");
  tr->add_option("--out", out, "output directory");
  tr->add_option("overrides", overrides, "key=value overrides");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a test split");
  std::string eval_ckpt, data_dir, eval_task;
  std::uint64_t eval_seed = 0;
  std::size_t limit = 0;
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_dir, "dataset directory (default: $SPKSEQ_DATA)");
  ev->add_option("--task", eval_task, "override the task inferred from the model shape");
  ev->add_option("--seed", eval_seed, "seed for synthetic test data");
  ev->add_option("--limit", limit, "evaluate only the first N samples");

  auto* inf = app.add_subcommand("infer", "classify sequences from a CSV file, one per line");
  std::string inf_ckpt, input;
  bool conv_mode = false;
  inf->add_option("--checkpoint", inf_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  inf->add_option("--input", input, "CSV input")->required()->check(CLI::ExistingFile);
  inf->add_flag("--conv", conv_mode, "use the convolutional path instead of step-by-step recurrence");

  CLI11_PARSE(app, argc, argv);
  try {
    if (tr->parsed()) return run_train(config_path, task, seed, out, overrides);
    if (ev->parsed()) return run_eval(eval_ckpt, data_dir, eval_task, eval_seed, limit);
    if (inf->parsed()) return run_infer(inf_ckpt, input, conv_mode);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
