#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "deepnose/adam.hpp"
#include "deepnose/nn_ops.hpp"
#include "deepnose/voxelizer.hpp"

namespace deepnose {

// Network layout.  Convolutions come in pairs; a 2x2x2 max pool follows each
// of the first three pairs and a 2x2x2 average pool collapses the remaining
// spatial extent after the last pair, so the grid side must reduce to exactly
// 2 over the three halvings.
struct DeepNoseConfig {
  std::size_t side = 18;
  std::size_t in_channels = 6;
  std::vector<std::size_t> conv_channels = {12, 12, 24, 24, 48, 48, 96, 96};
  std::size_t hidden = 256;
  std::size_t outputs = 654;
  double dropout = 0.2;

  void validate() const;
  std::size_t feature_dim() const { return conv_channels.back(); }
  bool operator==(const DeepNoseConfig&) const = default;
};

template <typename T>
class DeepNoseModel {
 public:
  DeepNoseModel(DeepNoseConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    std::size_t cin = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
      const std::size_t cout = cfg_.conv_channels[i];
      conv_w_.push_back(make_param(init_uniform(rng, {cout, cin, 3, 3, 3}, cin * 27)));
      conv_b_.push_back(make_param(Tensor<T>({cout})));
      bn_.emplace_back(cout);
      cin = cout;
    }
    fc1_w_ = make_param(init_uniform(rng, {cfg_.hidden, cfg_.feature_dim()}, cfg_.feature_dim()));
    fc1_b_ = make_param(Tensor<T>({cfg_.hidden}));
    fc2_w_ = make_param(init_uniform(rng, {cfg_.outputs, cfg_.hidden}, cfg_.hidden));
    fc2_b_ = make_param(Tensor<T>({cfg_.outputs}));
  }

  const DeepNoseConfig& config() const { return cfg_; }

  std::vector<NodePtr<T>> parameters() {
    std::vector<NodePtr<T>> out;
    for (std::size_t i = 0; i < conv_w_.size(); ++i) {
      out.push_back(conv_w_[i]);
      out.push_back(conv_b_[i]);
      out.push_back(bn_[i].gamma);
      out.push_back(bn_[i].beta);
    }
    out.push_back(fc1_w_);
    out.push_back(fc1_b_);
    out.push_back(fc2_w_);
    out.push_back(fc2_b_);
    return out;
  }

  // x: [B*G][C][L][L][L]; returns consolidated features [B][F].  The shape
  // log, when given, receives every intermediate activation shape.
  NodePtr<T> features(const NodePtr<T>& x, std::size_t group, bool training,
                      std::vector<std::vector<std::size_t>>* shape_log = nullptr) {
    auto log_shape = [&](const NodePtr<T>& n) {
      if (shape_log) shape_log->push_back(n->value.shape);
    };
    NodePtr<T> h = x;
    log_shape(h);
    for (std::size_t i = 0; i < conv_w_.size(); ++i) {
      h = relu(bn_[i].forward(conv3d(h, conv_w_[i], conv_b_[i]), training));
      log_shape(h);
      if (i % 2 == 1 && i + 1 < conv_w_.size()) {
        h = maxpool3d(h);
        log_shape(h);
      }
    }
    h = avgpool3d(h);
    log_shape(h);
    h = flatten(h);
    log_shape(h);
    h = group_mean(h, group);
    log_shape(h);
    return h;
  }

  NodePtr<T> logits(const NodePtr<T>& feats, bool training, Rng& rng) {
    auto h = dropout(feats, cfg_.dropout, rng, training);
    h = relu(linear(h, fc1_w_, fc1_b_));
    return linear(h, fc2_w_, fc2_b_);
  }

  NodePtr<T> forward(const NodePtr<T>& x, std::size_t group, bool training, Rng& rng) {
    return logits(features(x, group, training), training, rng);
  }

  // Inference helper: consolidated feature vector for one voxelized molecule.
  std::vector<T> extract_features(const VoxelTensor& vox) {
    NoGradGuard guard;
    auto x = make_leaf(input_from_voxels<T>({&vox}));
    auto f = features(x, vox.n_orient, false);
    return f->value.v;
  }

  std::vector<NodePtr<T>>& conv_weights() { return conv_w_; }
  std::vector<NodePtr<T>>& conv_biases() { return conv_b_; }
  std::vector<BatchNorm3d<T>>& batch_norms() { return bn_; }
  NodePtr<T>& fc1_weight() { return fc1_w_; }
  NodePtr<T>& fc1_bias() { return fc1_b_; }
  NodePtr<T>& fc2_weight() { return fc2_w_; }
  NodePtr<T>& fc2_bias() { return fc2_b_; }

 private:
  static Tensor<T> init_uniform(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
    Tensor<T> t(std::move(shape));
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& x : t.v) x = static_cast<T>(rng.uniform(-a, a));
    return t;
  }

  DeepNoseConfig cfg_;
  std::vector<NodePtr<T>> conv_w_, conv_b_;
  std::vector<BatchNorm3d<T>> bn_;
  NodePtr<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

// Stacks voxel tensors into a [B*G][C][L][L][L] network input.  All molecules
// must share the orientation count and grid side.
template <typename T>
Tensor<T> input_from_voxels(const std::vector<const VoxelTensor*>& batch) {
  if (batch.empty()) raise(ErrorKind::InvalidConfig, "input_from_voxels: empty batch");
  const std::size_t g = batch[0]->n_orient, side = batch[0]->side;
  for (const auto* v : batch)
    if (v->n_orient != g || v->side != side)
      raise(ErrorKind::ShapeMismatch, "input_from_voxels: mixed voxel grid shapes");
  const std::size_t chan = kElementChannels, l3 = side * side * side;
  Tensor<T> out({batch.size() * g, chan, side, side, side});
  T* dst = out.data();
  for (const auto* v : batch) {
    const float* src = v->data.data();
    const std::size_t n = g * chan * l3;
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<T>(src[i]);
    dst += n;
  }
  return out;
}

// DNCKPT v1 checkpoint serialization (float models).
std::string checkpoint_to_bytes(DeepNoseModel<float>& model);
DeepNoseModel<float> checkpoint_from_bytes(const std::string& bytes);
void save_checkpoint(DeepNoseModel<float>& model, const std::filesystem::path& path);
DeepNoseModel<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace deepnose
