#include "spkseq/streaming.hpp"

#include <optional>

#include "spkseq/error.hpp"
#include "spkseq/gsu.hpp"
#include "spkseq/ops.hpp"

namespace spkseq::stream {

StreamingClassifier::StreamingClassifier(net::Model& model) : model_(model) {
  const auto& cfg = model.config();
  if (cfg.block.bidirectional) {
    throw UnsupportedMode("iterative inference needs a unidirectional model; bidirectional layers see the future");
  }
  for (const auto& blk : model.blocks()) {
    std::vector<ssm::ChannelScanner> layer;
    for (std::size_t h = 0; h < blk.ssm.forward.channels(); ++h) {
      layer.emplace_back(blk.ssm.forward.channel(h));
    }
    scanners_.push_back(std::move(layer));
  }
  pool_sum_.assign(cfg.block.features, 0.0);
}

void StreamingClassifier::reset() {
  for (auto& layer : scanners_) {
    for (auto& s : layer) s.reset();
  }
  std::fill(pool_sum_.begin(), pool_sum_.end(), 0.0);
  steps_ = 0;
}

void StreamingClassifier::push(double pixel) {
  NoGradScope no_grad;
  const auto& bc = model_.config().block;
  const std::size_t hdim = bc.features;
  Tensor x = model_.encode(Tensor(Shape{1, 1}, std::vector<double>{pixel}));  // [1,1,H]
  for (std::size_t i = 0; i < scanners_.size(); ++i) {
    auto& blk = model_.blocks()[i];
    Tensor h = bc.pre_norm ? blk.norm.apply(x, false) : x;
    Tensor y(Shape{1, 1, hdim});
    {
      auto in = h.data();
      auto out = y.data();
      for (std::size_t c = 0; c < hdim; ++c) out[c] = scanners_[i][c].step(in[c]);
    }
    h = apply_activation(y, bc.activation);
    switch (bc.mixer) {
      case net::Mixer::glu:
        h = gsu::glu_mix(h, blk.W, blk.V, blk.b, blk.c);
        break;
      case net::Mixer::gsu:
        h = ops::gelu(ops::layer_norm(gsu::gsu_mix(h, blk.W, blk.b, blk.c, bc.gsu_alpha), blk.mix_gamma,
                                      blk.mix_beta));
        break;
      case net::Mixer::identity:
        break;
    }
    if (!bc.pre_norm) h = blk.norm.apply(h, false);
    if (bc.residual == net::Residual::after_mixing) h = ops::add(h, x);
    x = h;
  }
  auto xs = x.data();
  for (std::size_t c = 0; c < hdim; ++c) pool_sum_[c] += xs[c];
  ++steps_;
}

std::vector<double> StreamingClassifier::logits() const {
  if (steps_ == 0) throw ShapeError("logits: no input pushed yet");
  NoGradScope no_grad;
  std::vector<double> pooled(pool_sum_);
  for (auto& v : pooled) v /= static_cast<double>(steps_);
  const std::size_t width = pooled.size();
  Tensor out = model_.head(Tensor(Shape{1, width}, std::move(pooled)));
  auto d = out.data();
  return {d.begin(), d.end()};
}

std::size_t StreamingClassifier::state_size() const {
  std::size_t n = pool_sum_.size();
  for (const auto& layer : scanners_) {
    for (const auto& s : layer) n += 2 * s.state().size();
  }
  return n;
}

std::vector<double> infer_iterative(net::Model& model, std::span<const double> sequence) {
  if (sequence.size() != model.config().seq_len) {
    throw ShapeError("infer_iterative: expected " + std::to_string(model.config().seq_len) + " steps, got " +
                     std::to_string(sequence.size()));
  }
  StreamingClassifier sc(model);
  for (double v : sequence) sc.push(v);
  return sc.logits();
}

}  // namespace spkseq::stream
