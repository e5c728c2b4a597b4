#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "capaa/autodiff.hpp"
#include "json.hpp"

namespace capaa::nn {

enum class LayerKind { kConv, kRelu, kMaxPool, kAvgPool, kGlobalAvgPool, kLinear, kSigmoid };

struct Layer {
  LayerKind kind;
  int in = 0;
  int out = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  static Layer conv(int in, int out, int kernel, int stride = 1, int pad = -1);
  static Layer linear(int in, int out) { return {LayerKind::kLinear, in, out}; }
  static Layer relu() { return {LayerKind::kRelu}; }
  static Layer max_pool() { return {LayerKind::kMaxPool}; }
  static Layer avg_pool() { return {LayerKind::kAvgPool}; }
  static Layer global_avg_pool() { return {LayerKind::kGlobalAvgPool}; }
  static Layer sigmoid() { return {LayerKind::kSigmoid}; }
  bool has_params() const { return kind == LayerKind::kConv || kind == LayerKind::kLinear; }
};

/// Sequential network. The output of layer `feature_layer` is exposed as the
/// feature map for class activation mapping.
class Network {
 public:
  struct Output {
    ad::Var out;
    ad::Var features;
  };

  Network() = default;
  explicit Network(std::vector<Layer> layers, int feature_layer = -1);

  /// He-normal weights, zero biases.
  void initialize(std::mt19937_64& rng);

  const std::vector<Layer>& layers() const { return layers_; }
  int feature_layer() const { return feature_layer_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::size_t parameter_count() const;

  /// Leaf variables for the parameters; trainable leaves accumulate gradients.
  std::vector<ad::Var> bind(bool trainable) const;
  Output forward(const ad::Var& x, std::span<const ad::Var> params) const;
  Output forward(const ad::Var& x) const { return forward(x, bind(false)); }

  nlohmann::json describe() const;
  static Network from_description(const nlohmann::json& j);

 private:
  std::vector<Layer> layers_;
  int feature_layer_ = -1;
  std::vector<Tensor> params_;  // weight, bias per parametric layer
};

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads);
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

/// Single-file binary checkpoint: magic, JSON metadata, raw tensors.
struct Checkpoint {
  nlohmann::json metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace capaa::nn
