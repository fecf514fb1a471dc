#pragma once

// Plain-text run configuration: one key=value per line, '#' starts a comment.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spkseq/network.hpp"

namespace spkseq {

enum class Task { smnist, scifar, synth };

std::string to_string(Task t);
Task parse_task(std::string_view s);

struct TrainConfig {
  Task task = Task::smnist;
  net::ModelConfig model{};
  double lr = 0.01;
  double ssm_lr = 0.001;  // cap for the SSM parameter group
  double weight_decay = 0.01;
  std::size_t batch_size = 50;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  std::string data_dir;          // empty: SPKSEQ_DATA, then ./data
  std::size_t train_limit = 0;   // 0 keeps the whole split
  std::size_t test_limit = 0;
  std::size_t synth_train = 2000;
  std::size_t synth_test = 500;

  void validate() const;
  /// Every key, sorted, in the file format accepted by parse_config.
  std::string to_text() const;
};

using KeyValues = std::map<std::string, std::string>;

/// Lines to a map. Later duplicates win. Throws ConfigError on a malformed line.
KeyValues parse_key_values(std::string_view text);

/// File text plus overrides ("key", "value"); overrides win. lr and epochs are required.
TrainConfig parse_config(std::string_view text, const std::vector<std::pair<std::string, std::string>>& overrides = {});
TrainConfig load_config(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Rebuilds a model configuration from ModelConfig::canonical() output.
net::ModelConfig parse_model_config(std::string_view canonical_text);

}  // namespace spkseq
