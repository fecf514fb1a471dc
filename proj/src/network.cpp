#include "spkseq/network.hpp"

#include <cmath>
#include <optional>
#include <sstream>

#include "spkseq/error.hpp"
#include "spkseq/gsu.hpp"

namespace spkseq::net {

std::string to_string(Mixer m) {
  switch (m) {
    case Mixer::glu: return "glu";
    case Mixer::gsu: return "gsu";
    case Mixer::identity: return "identity";
  }
  return "?";
}

std::string to_string(NormKind n) {
  switch (n) {
    case NormKind::batch: return "batch";
    case NormKind::layer: return "layer";
    case NormKind::none: return "none";
  }
  return "?";
}

std::string to_string(Residual r) { return r == Residual::after_mixing ? "after_mixing" : "none"; }

Mixer parse_mixer(std::string_view s) {
  if (s == "glu") return Mixer::glu;
  if (s == "gsu") return Mixer::gsu;
  if (s == "identity") return Mixer::identity;
  throw ConfigError("unknown mixer '" + std::string(s) + "'");
}

NormKind parse_norm(std::string_view s) {
  if (s == "batch" || s == "bn") return NormKind::batch;
  if (s == "layer" || s == "ln") return NormKind::layer;
  if (s == "none") return NormKind::none;
  throw ConfigError("unknown norm '" + std::string(s) + "'");
}

Residual parse_residual(std::string_view s) {
  if (s == "after_mixing") return Residual::after_mixing;
  if (s == "none") return Residual::none;
  throw ConfigError("unknown residual '" + std::string(s) + "'");
}

void LayerBlockConfig::validate() const {
  if (features == 0) throw ConfigError("features must be positive");
  if (ssm_state < 2 || ssm_state % 2 != 0) {
    throw InvalidDimension("ssm_state must be even and >= 2, got " + std::to_string(ssm_state));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(delta.min > 0.0 && delta.max > delta.min)) throw ConfigError("require 0 < delta_min < delta_max");
  if (!(activation.alpha > 0.0)) throw ConfigError("surrogate alpha must be positive");
  if (!(gsu_alpha > 0.0 && gsu_alpha < 1.0)) throw ConfigError("gsu_alpha must lie in (0, 1)");
}

void ModelConfig::validate() const {
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (seq_len < 1) throw ConfigError("seq_len must be >= 1");
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
  block.validate();
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "activation=" << to_string(block.activation.kind) << '\n'
     << "alpha=" << block.activation.alpha << '\n'
     << "bidirectional=" << (block.bidirectional ? 1 : 0) << '\n'
     << "delta_max=" << block.delta.max << '\n'
     << "delta_min=" << block.delta.min << '\n'
     << "dropout=" << block.dropout << '\n'
     << "features=" << block.features << '\n'
     << "gsu_alpha=" << block.gsu_alpha << '\n'
     << "init=" << (block.init == ssm::InitScheme::inv ? "inv" : "lin") << '\n'
     << "layers=" << n_layers << '\n'
     << "mixer=" << to_string(block.mixer) << '\n'
     << "n_classes=" << n_classes << '\n'
     << "norm=" << to_string(block.norm) << '\n'
     << "pre_norm=" << (block.pre_norm ? 1 : 0) << '\n'
     << "residual=" << to_string(block.residual) << '\n'
     << "seq_len=" << seq_len << '\n'
     << "ssm_state=" << block.ssm_state << '\n'
     << "surrogate=" << to_string(block.activation.surrogate) << '\n'
     << "theta=" << block.activation.theta << '\n';
  return os.str();
}

Tensor Norm::apply(const Tensor& x, bool training) {
  switch (kind) {
    case NormKind::none: return x;
    case NormKind::layer: return ops::layer_norm(x, gamma, beta);
    case NormKind::batch: return ops::batch_norm(x, gamma, beta, bn, training);
  }
  return x;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) { return splitmix(seed ^ splitmix(tag)); }

Tensor uniform_param(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor constant_param(Shape shape, double value) {
  return Tensor::parameter(shape, std::vector<double>(shape_numel(shape), value));
}

Norm make_norm(NormKind kind, std::size_t h) {
  Norm n;
  n.kind = kind;
  if (kind != NormKind::none) {
    n.gamma = constant_param({h}, 1.0);
    n.beta = constant_param({h}, 0.0);
  }
  if (kind == NormKind::batch) {
    n.bn.running_mean = Tensor(Shape{h}, 0.0);
    n.bn.running_var = Tensor(Shape{h}, 1.0);
  }
  return n;
}

bool all_binary(const Tensor& t) {
  for (double v : t.data()) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const auto& bc = config_.block;
  const std::size_t h = bc.features;
  std::mt19937_64 rng(derive(seed, 1));
  enc_w_ = uniform_param({1, h}, 1.0, rng);
  enc_b_ = uniform_param({h}, 1.0, rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (std::size_t i = 0; i < config_.n_layers; ++i) {
    Block blk;
    blk.ssm.forward = ssm::SSMBank::init(h, bc.ssm_state, bc.init, bc.delta, derive(seed, 100 + 2 * i));
    if (bc.bidirectional) {
      blk.ssm.backward = ssm::SSMBank::init(h, bc.ssm_state, bc.init, bc.delta, derive(seed, 101 + 2 * i));
    }
    std::mt19937_64 mrng(derive(seed, 1000 + i));
    switch (bc.mixer) {
      case Mixer::glu:
        blk.W = uniform_param({h, h}, bound, mrng);
        blk.b = uniform_param({h}, bound, mrng);
        blk.V = uniform_param({h, h}, bound, mrng);
        blk.c = uniform_param({h}, bound, mrng);
        break;
      case Mixer::gsu:
        blk.W = uniform_param({h, h}, bound, mrng);
        blk.b = uniform_param({h}, bound, mrng);
        blk.c = uniform_param({h}, bound, mrng);
        blk.mix_gamma = constant_param({h}, 1.0);
        blk.mix_beta = constant_param({h}, 0.0);
        break;
      case Mixer::identity:
        break;
    }
    blk.norm = make_norm(bc.norm, h);
    blocks_.push_back(std::move(blk));
  }
  std::mt19937_64 hrng(derive(seed, 2));
  head_w_ = uniform_param({h, config_.n_classes}, bound, hrng);
  head_b_ = uniform_param({config_.n_classes}, bound, hrng);
}

Tensor Model::encode(const Tensor& pixels) const {
  if (pixels.rank() != 2) throw ShapeError("encode: expected [B, L] pixels, got " + shape_str(pixels.shape()));
  Tensor x = ops::reshape(pixels, {pixels.dim(0), pixels.dim(1), 1});
  return ops::add(ops::matmul(x, enc_w_), enc_b_);
}

Tensor Model::block_forward(std::size_t index, const Tensor& x, const ForwardOptions& opts) {
  Block& blk = blocks_.at(index);
  const auto& bc = config_.block;
  Tensor h = bc.pre_norm ? blk.norm.apply(x, opts.training) : x;
  h = ssm::ssm_layer_forward(blk.ssm, h, bc.bidirectional);
  h = apply_activation(h, bc.activation);
  if (opts.stats) {
    if (bc.activation.kind == ActivationKind::binary_spike) {
      for (double v : h.data()) opts.stats->spikes += v > 0.0 ? 1 : 0;
      opts.stats->activations += h.numel();
    }
    if (bc.mixer != Mixer::identity && !all_binary(h)) opts.stats->mixer_inputs_binary = false;
  }
  OpCounter mixer_local;
  std::optional<OpCountScope> mixer_scope;
  if (opts.mixer_ops) mixer_scope.emplace(mixer_local);
  switch (bc.mixer) {
    case Mixer::glu:
      h = gsu::glu_mix(h, blk.W, blk.V, blk.b, blk.c);
      break;
    case Mixer::gsu:
      h = ops::gelu(ops::layer_norm(gsu::gsu_mix(h, blk.W, blk.b, blk.c, bc.gsu_alpha), blk.mix_gamma,
                                    blk.mix_beta));
      break;
    case Mixer::identity:
      break;
  }
  if (mixer_scope) {
    mixer_scope.reset();
    *opts.mixer_ops += mixer_local;
    count_multiplies(mixer_local.multiplies);
    count_adds(mixer_local.adds);
  }
  if (opts.training && bc.dropout > 0.0) {
    if (!opts.rng) throw ConfigError("block_forward: dropout in training mode needs an rng");
    h = ops::dropout(h, bc.dropout, true, *opts.rng);
  }
  if (!bc.pre_norm) h = blk.norm.apply(h, opts.training);
  if (bc.residual == Residual::after_mixing) h = ops::add(h, x);
  return h;
}

Tensor Model::pool(const Tensor& x) { return ops::mean(x, 1); }

Tensor Model::head(const Tensor& pooled) const { return ops::add(ops::matmul(pooled, head_w_), head_b_); }

Tensor Model::forward(const Tensor& pixels, const ForwardOptions& opts) {
  if (pixels.rank() != 2 || pixels.dim(1) != config_.seq_len) {
    throw ShapeError("model_forward: expected [B, " + std::to_string(config_.seq_len) + "] input, got " +
                     shape_str(pixels.shape()));
  }
  Tensor x = encode(pixels);
  for (std::size_t i = 0; i < blocks_.size(); ++i) x = block_forward(i, x, opts);
  return head(pool(x));
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"encoder.weight", enc_w_, ParamGroup::dense});
  out.push_back({"encoder.bias", enc_b_, ParamGroup::dense});
  auto add_bank = [&](const std::string& prefix, const ssm::SSMBank& bank) {
    out.push_back({prefix + ".log_neg_real", bank.log_neg_real, ParamGroup::ssm});
    out.push_back({prefix + ".imag", bank.imag, ParamGroup::ssm});
    out.push_back({prefix + ".B", bank.B, ParamGroup::ssm});
    out.push_back({prefix + ".C", bank.C, ParamGroup::ssm});
    out.push_back({prefix + ".D", bank.D, ParamGroup::dense});
    out.push_back({prefix + ".log_delta", bank.log_delta, ParamGroup::ssm});
  };
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& blk = blocks_[i];
    const std::string p = "block" + std::to_string(i);
    add_bank(p + ".ssm_fwd", blk.ssm.forward);
    if (blk.ssm.backward) add_bank(p + ".ssm_bwd", *blk.ssm.backward);
    if (blk.W.defined()) out.push_back({p + ".mix.W", blk.W, ParamGroup::dense});
    if (blk.V.defined()) out.push_back({p + ".mix.V", blk.V, ParamGroup::dense});
    if (blk.b.defined()) out.push_back({p + ".mix.b", blk.b, ParamGroup::dense});
    if (blk.c.defined()) out.push_back({p + ".mix.c", blk.c, ParamGroup::dense});
    if (blk.mix_gamma.defined()) out.push_back({p + ".mix.ln_gamma", blk.mix_gamma, ParamGroup::dense});
    if (blk.mix_beta.defined()) out.push_back({p + ".mix.ln_beta", blk.mix_beta, ParamGroup::dense});
    if (blk.norm.gamma.defined()) out.push_back({p + ".norm.gamma", blk.norm.gamma, ParamGroup::dense});
    if (blk.norm.beta.defined()) out.push_back({p + ".norm.beta", blk.norm.beta, ParamGroup::dense});
  }
  out.push_back({"head.weight", head_w_, ParamGroup::dense});
  out.push_back({"head.bias", head_b_, ParamGroup::dense});
  return out;
}

std::vector<NamedTensor> Model::buffers() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& blk = blocks_[i];
    if (blk.norm.kind != NormKind::batch) continue;
    const std::string p = "block" + std::to_string(i) + ".norm.";
    out.push_back({p + "running_mean", blk.norm.bn.running_mean, ParamGroup::dense});
    out.push_back({p + "running_var", blk.norm.bn.running_var, ParamGroup::dense});
  }
  return out;
}

std::size_t Model::count_parameters() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

std::size_t count_parameters(const Model& model) { return model.count_parameters(); }

}  // namespace spkseq::net
