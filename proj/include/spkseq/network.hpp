#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spkseq/activations.hpp"
#include "spkseq/autodiff.hpp"
#include "spkseq/op_counter.hpp"
#include "spkseq/ops.hpp"
#include "spkseq/ssm.hpp"

namespace spkseq::net {

enum class Mixer { glu, gsu, identity };
enum class NormKind { batch, layer, none };
enum class Residual { after_mixing, none };

std::string to_string(Mixer m);
std::string to_string(NormKind n);
std::string to_string(Residual r);
Mixer parse_mixer(std::string_view s);
NormKind parse_norm(std::string_view s);
Residual parse_residual(std::string_view s);

struct LayerBlockConfig {
  std::size_t features = 128;
  int ssm_state = 2;
  ssm::InitScheme init = ssm::InitScheme::inv;
  ssm::DeltaRange delta{};
  ActivationSpec activation{};
  Mixer mixer = Mixer::glu;
  NormKind norm = NormKind::layer;
  bool pre_norm = false;
  double dropout = 0.0;
  bool bidirectional = false;
  Residual residual = Residual::after_mixing;
  double gsu_alpha = 0.15;

  void validate() const;
};

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t seq_len = 784;
  std::size_t n_classes = 10;
  LayerBlockConfig block{};

  void validate() const;
  /// Stable key=value rendering; the checkpoint digest is computed over it.
  std::string canonical() const;
};

enum class ParamGroup { ssm, dense };

struct NamedTensor {
  std::string name;
  Tensor tensor;
  ParamGroup group = ParamGroup::dense;
};

struct Norm {
  NormKind kind = NormKind::none;
  Tensor gamma, beta;
  ops::BatchNormState bn;

  Tensor apply(const Tensor& x, bool training);
};

struct Block {
  ssm::SSMLayerParams ssm;
  Tensor W, V, b, c;             // mixer weights (V only for GLU)
  Tensor mix_gamma, mix_beta;    // layer norm closing the GSU mixer
  Norm norm;
};

/// Firing statistics gathered from binary activations during a forward pass.
struct ForwardStats {
  std::uint64_t spikes = 0;
  std::uint64_t activations = 0;
  bool mixer_inputs_binary = true;

  double spike_rate() const {
    return activations ? static_cast<double>(spikes) / static_cast<double>(activations) : 0.0;
  }
};

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout
  ForwardStats* stats = nullptr;
  OpCounter* mixer_ops = nullptr;  // receives the mixers' arithmetic only
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// pixels [B, L] -> logits [B, n_classes].
  Tensor forward(const Tensor& pixels, const ForwardOptions& opts = {});

  /// Scalar pixel -> H features per step: [B, L] -> [B, L, H].
  Tensor encode(const Tensor& pixels) const;
  Tensor block_forward(std::size_t index, const Tensor& x, const ForwardOptions& opts);
  /// Mean over time of the last block's output: [B, L, H] -> [B, H].
  static Tensor pool(const Tensor& x);
  Tensor head(const Tensor& pooled) const;

  std::vector<NamedTensor> parameters() const;
  /// Non-trainable state saved with checkpoints (batch-norm running statistics).
  std::vector<NamedTensor> buffers() const;
  std::size_t count_parameters() const;

  std::vector<Block>& blocks() { return blocks_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Tensor& encoder_weight() const { return enc_w_; }
  const Tensor& encoder_bias() const { return enc_b_; }
  const Tensor& head_weight() const { return head_w_; }
  const Tensor& head_bias() const { return head_b_; }

 private:
  ModelConfig config_;
  Tensor enc_w_, enc_b_;
  std::vector<Block> blocks_;
  Tensor head_w_, head_b_;
};

/// Trainable scalar count. Conjugate SSM modes are stored, and counted, once.
std::size_t count_parameters(const Model& model);

}  // namespace spkseq::net
