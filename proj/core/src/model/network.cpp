#include "layerens/model/network.hpp"

#include <cmath>
#include <random>
#include <string>

#include "layerens/error.hpp"

namespace layerens::model {

namespace {

// He-style fan-in uniform initialisation; every component draws from its own
// stream so heads are initialised independently of one another.
nn::Tensor he_uniform(nn::Shape shape, std::mt19937_64& rng) {
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  nn::Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

std::mt19937_64 component_stream(std::uint64_t seed, std::uint64_t component) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(component), 0x4c45u};
  return std::mt19937_64(seq);
}

}  // namespace

Network::Network(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t depth = config_.depth;
  encoders_.resize(depth);
  decoders_.resize(config_.num_decoder_blocks());
  heads_.resize(config_.num_heads());
  owned_by_head_.resize(config_.num_heads());
  const auto scales = config_.head_scales();

  std::size_t current_head = 0;
  auto make_conv = [&](const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                       std::size_t stride, std::mt19937_64& rng) {
    Conv conv;
    conv.weight = nn::parameter(he_uniform({cout, cin, k, k}, rng), name + ".weight");
    conv.bias = nn::parameter(nn::Tensor({cout}, 0.0), name + ".bias");
    conv.stride = stride;
    conv.padding = k / 2;
    for (const auto& p : {conv.weight, conv.bias}) {
      params_.push_back(p);
      owned_by_head_[current_head].push_back(p->name);
    }
    return conv;
  };
  auto make_bn = [&](const std::string& name, std::size_t channels) {
    BatchNorm bn;
    bn.gamma = nn::parameter(nn::Tensor({channels}, 1.0), name + ".gamma");
    bn.beta = nn::parameter(nn::Tensor({channels}, 0.0), name + ".beta");
    bn.running_mean = nn::Tensor({channels}, 0.0);
    bn.running_var = nn::Tensor({channels}, 1.0);
    bn.name = name;
    for (const auto& p : {bn.gamma, bn.beta}) {
      params_.push_back(p);
      owned_by_head_[current_head].push_back(p->name);
    }
    return bn;
  };
  auto make_head = [&](std::size_t index, std::size_t channels) {
    auto rng = component_stream(config_.seed, 1000 + index);
    Head head;
    head.conv = make_conv("head" + std::to_string(index) + ".conv", channels, config_.output_channels(), 1, 1, rng);
    head.upsample_factor = std::size_t{1} << scales[index];
    head.block = index;
    heads_[index] = std::move(head);
  };

  std::vector<std::size_t> enc_channels(depth);
  std::size_t in_channels = config_.in_channels;
  for (std::size_t e = 0; e < depth; ++e) {
    current_head = e;
    auto rng = component_stream(config_.seed, e);
    const std::string prefix = "enc" + std::to_string(e);
    const std::size_t out = config_.base_channels << e;
    const std::size_t stride = (e == 0 && !config_.stem_downsample) ? 1 : 2;
    EncoderBlock& block = encoders_[e];
    block.conv1 = make_conv(prefix + ".conv1", in_channels, out, 3, stride, rng);
    block.bn1 = make_bn(prefix + ".bn1", out);
    block.conv2 = make_conv(prefix + ".conv2", out, out, 3, 1, rng);
    block.bn2 = make_bn(prefix + ".bn2", out);
    block.shortcut = make_conv(prefix + ".shortcut", in_channels, out, 1, stride, rng);
    make_head(e, out);
    enc_channels[e] = out;
    in_channels = out;
  }
  for (std::size_t d = 0; d < decoders_.size(); ++d) {
    const std::size_t index = depth + d;
    current_head = index;
    auto rng = component_stream(config_.seed, index);
    const std::string prefix = "dec" + std::to_string(d);
    DecoderBlock& block = decoders_[d];
    const bool has_skip = d + 1 < depth;
    block.skip_from = has_skip ? static_cast<int>(depth - 2 - d) : -1;
    const std::size_t out = has_skip ? enc_channels[depth - 2 - d] : config_.base_channels;
    const std::size_t cin = in_channels + (has_skip ? out : 0);
    block.conv1 = make_conv(prefix + ".conv1", cin, out, 3, 1, rng);
    block.bn1 = make_bn(prefix + ".bn1", out);
    block.conv2 = make_conv(prefix + ".conv2", out, out, 3, 1, rng);
    block.bn2 = make_bn(prefix + ".bn2", out);
    make_head(index, out);
    in_channels = out;
  }
  for (auto& block : encoders_) {
    batch_norms_.push_back(&block.bn1);
    batch_norms_.push_back(&block.bn2);
  }
  for (auto& block : decoders_) {
    batch_norms_.push_back(&block.bn1);
    batch_norms_.push_back(&block.bn2);
  }
}

void Network::check_input(const nn::Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != config_.in_channels || batch.dim(2) != config_.height ||
      batch.dim(3) != config_.width) {
    throw ShapeError("network input must be [B," + std::to_string(config_.in_channels) + "," +
                     std::to_string(config_.height) + "," + std::to_string(config_.width) + "], got " +
                     nn::to_string(batch.shape()));
  }
  if (!batch.all_finite()) throw std::invalid_argument("network input contains non-finite values");
}

nn::Var Network::batch_norm(const nn::Var& x, const BatchNorm& bn, Mode mode, Pass& pass) const {
  if (mode == Mode::eval) {
    return nn::batch_norm(x, bn.gamma, bn.beta, bn.running_mean, bn.running_var, false, kBatchNormEpsilon);
  }
  nn::BatchStatistics stats;
  auto out = nn::batch_norm(x, bn.gamma, bn.beta, bn.running_mean, bn.running_var, true, kBatchNormEpsilon, &stats);
  pass.stats.push_back(std::move(stats));
  return out;
}

// The 1x1 convolution and the activation act per pixel, so applying them
// before the nearest-neighbour upsample gives the same maps at lower cost.
nn::Var Network::head_probabilities(const nn::Var& features, const Head& head) const {
  auto logits = nn::conv2d(features, head.conv.weight, head.conv.bias, 1, 0);
  auto probs = config_.output_channels() == 1 ? nn::sigmoid(logits) : nn::softmax_channels(logits);
  return nn::upsample(probs, head.upsample_factor);
}

Network::Pass Network::run(const nn::Var& input, Mode mode, std::size_t last_head, bool only_last) const {
  Pass pass;
  std::vector<nn::Var> enc_out;
  nn::Var current = input;
  auto emit = [&](std::size_t index, const nn::Var& features) {
    if (!only_last || index == last_head) pass.heads.push_back(head_probabilities(features, heads_[index]));
    return index == last_head;
  };
  auto conv = [](const nn::Var& x, const Conv& c) { return nn::conv2d(x, c.weight, c.bias, c.stride, c.padding); };

  for (std::size_t e = 0; e < encoders_.size(); ++e) {
    const EncoderBlock& block = encoders_[e];
    auto h = nn::relu(batch_norm(conv(current, block.conv1), block.bn1, mode, pass));
    h = batch_norm(conv(h, block.conv2), block.bn2, mode, pass);
    current = nn::relu(nn::add(h, conv(current, block.shortcut)));
    enc_out.push_back(current);
    if (emit(e, current)) return pass;
  }
  for (std::size_t d = 0; d < decoders_.size(); ++d) {
    const DecoderBlock& block = decoders_[d];
    auto up = nn::upsample(current, 2);
    if (block.skip_from >= 0) {
      const nn::Var parts[] = {up, enc_out[static_cast<std::size_t>(block.skip_from)]};
      up = nn::concat_channels(parts);
    }
    auto h = nn::relu(batch_norm(conv(up, block.conv1), block.bn1, mode, pass));
    current = nn::relu(batch_norm(conv(h, block.conv2), block.bn2, mode, pass));
    if (emit(encoders_.size() + d, current)) return pass;
  }
  return pass;
}

std::vector<nn::Var> Network::forward(const nn::Tensor& batch, Mode mode) {
  check_input(batch);
  Pass pass = run(nn::constant(batch), mode, heads_.size() - 1, false);
  if (mode == Mode::train) {
    for (std::size_t i = 0; i < batch_norms_.size(); ++i) {
      BatchNorm& bn = *batch_norms_[i];
      const auto& s = pass.stats[i];
      const double unbias = s.count > 1 ? static_cast<double>(s.count) / static_cast<double>(s.count - 1) : 1.0;
      for (std::size_t c = 0; c < s.mean.size(); ++c) {
        bn.running_mean[c] = kBatchNormMomentum * bn.running_mean[c] + (1.0 - kBatchNormMomentum) * s.mean[c];
        bn.running_var[c] =
            kBatchNormMomentum * bn.running_var[c] + (1.0 - kBatchNormMomentum) * s.variance[c] * unbias;
      }
    }
  }
  return std::move(pass.heads);
}

std::vector<HeadOutputs> Network::forward_all_heads_batch(const nn::Tensor& batch) const {
  check_input(batch);
  nn::NoGradGuard no_grad;
  Pass pass = run(nn::constant(batch), Mode::eval, heads_.size() - 1, false);
  std::vector<HeadOutputs> outputs(batch.dim(0));
  for (auto& head : pass.heads) {
    for (std::size_t b = 0; b < outputs.size(); ++b) outputs[b].probs.push_back(head->value.slice(b));
  }
  return outputs;
}

HeadOutputs Network::forward_all_heads(const nn::Tensor& image) const {
  if (image.rank() != 3) throw ShapeError("forward_all_heads expects [C,H,W], got " + nn::to_string(image.shape()));
  nn::Shape shape = image.shape();
  shape.insert(shape.begin(), 1);
  return std::move(forward_all_heads_batch(image.reshaped(shape)).front());
}

nn::Tensor Network::forward_single_head(const nn::Tensor& image, std::size_t head) const {
  if (head >= heads_.size()) throw std::out_of_range("head index " + std::to_string(head) + " out of range");
  if (image.rank() != 3) throw ShapeError("forward_single_head expects [C,H,W], got " + nn::to_string(image.shape()));
  nn::Shape shape = image.shape();
  shape.insert(shape.begin(), 1);
  nn::Tensor batch = image.reshaped(shape);
  check_input(batch);
  nn::NoGradGuard no_grad;
  Pass pass = run(nn::constant(std::move(batch)), Mode::eval, head, true);
  return pass.heads.front()->value.slice(0);
}

std::vector<nn::Var> Network::parameters() const { return params_; }

std::vector<std::string> Network::parameters_owned_by_head(std::size_t head) const {
  return owned_by_head_.at(head);
}

namespace {

template <typename Visit>
void visit_conv(const std::string& prefix, auto& conv, Visit&& visit) {
  visit(prefix + ".weight", conv.weight->value);
  visit(prefix + ".bias", conv.bias->value);
}

template <typename Visit>
void visit_bn(auto& bn, Visit&& visit) {
  visit(bn.name + ".gamma", bn.gamma->value);
  visit(bn.name + ".beta", bn.beta->value);
  visit(bn.name + ".running_mean", bn.running_mean);
  visit(bn.name + ".running_var", bn.running_var);
}

}  // namespace

std::vector<nn::NamedTensor> Network::state() const {
  std::vector<nn::NamedTensor> entries;
  auto collect = [&](const std::string& name, const nn::Tensor& value) { entries.push_back({name, value}); };
  auto add_head = [&](std::size_t index) {
    visit_conv("head" + std::to_string(index) + ".conv", heads_[index].conv, collect);
  };
  for (std::size_t e = 0; e < encoders_.size(); ++e) {
    const std::string prefix = "enc" + std::to_string(e);
    const auto& b = encoders_[e];
    visit_conv(prefix + ".conv1", b.conv1, collect);
    visit_bn(b.bn1, collect);
    visit_conv(prefix + ".conv2", b.conv2, collect);
    visit_bn(b.bn2, collect);
    visit_conv(prefix + ".shortcut", b.shortcut, collect);
    add_head(e);
  }
  for (std::size_t d = 0; d < decoders_.size(); ++d) {
    const std::string prefix = "dec" + std::to_string(d);
    const auto& b = decoders_[d];
    visit_conv(prefix + ".conv1", b.conv1, collect);
    visit_bn(b.bn1, collect);
    visit_conv(prefix + ".conv2", b.conv2, collect);
    visit_bn(b.bn2, collect);
    add_head(encoders_.size() + d);
  }
  return entries;
}

void Network::load_state(const std::vector<nn::NamedTensor>& state) {
  std::vector<std::pair<std::string, nn::Tensor*>> slots;
  auto collect = [&](const std::string& name, nn::Tensor& value) { slots.emplace_back(name, &value); };
  for (std::size_t e = 0; e < encoders_.size(); ++e) {
    const std::string prefix = "enc" + std::to_string(e);
    auto& b = encoders_[e];
    visit_conv(prefix + ".conv1", b.conv1, collect);
    visit_bn(b.bn1, collect);
    visit_conv(prefix + ".conv2", b.conv2, collect);
    visit_bn(b.bn2, collect);
    visit_conv(prefix + ".shortcut", b.shortcut, collect);
    visit_conv("head" + std::to_string(e) + ".conv", heads_[e].conv, collect);
  }
  for (std::size_t d = 0; d < decoders_.size(); ++d) {
    const std::string prefix = "dec" + std::to_string(d);
    auto& b = decoders_[d];
    visit_conv(prefix + ".conv1", b.conv1, collect);
    visit_bn(b.bn1, collect);
    visit_conv(prefix + ".conv2", b.conv2, collect);
    visit_bn(b.bn2, collect);
    visit_conv("head" + std::to_string(encoders_.size() + d) + ".conv", heads_[encoders_.size() + d].conv, collect);
  }
  if (state.size() != slots.size()) {
    throw ShapeError("checkpoint has " + std::to_string(state.size()) + " entries, model expects " +
                     std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (state[i].name != slots[i].first) {
      throw ShapeError("checkpoint entry " + std::to_string(i) + " is " + state[i].name + ", model expects " +
                       slots[i].first);
    }
    if (state[i].value.shape() != slots[i].second->shape()) {
      throw ShapeError("checkpoint entry " + state[i].name + " has shape " + nn::to_string(state[i].value.shape()) +
                       ", model expects " + nn::to_string(slots[i].second->shape()));
    }
    if (!state[i].value.all_finite()) throw std::invalid_argument("checkpoint entry " + state[i].name + " is not finite");
  }
  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i].second = state[i].value;
}

void Network::save(const std::filesystem::path& path) const { nn::write_checkpoint(path, state()); }

void Network::load(const std::filesystem::path& path) { load_state(nn::read_checkpoint(path)); }

}  // namespace layerens::model
