#include "capaa/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "capaa/error.hpp"

namespace capaa::nn {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'P', 'A', 'A', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kAvgPool: return "avgpool";
    case LayerKind::kGlobalAvgPool: return "gap";
    case LayerKind::kLinear: return "linear";
    case LayerKind::kSigmoid: return "sigmoid";
  }
  return "?";
}

LayerKind kind_from(const std::string& s) {
  for (LayerKind k : {LayerKind::kConv, LayerKind::kRelu, LayerKind::kMaxPool, LayerKind::kAvgPool,
                      LayerKind::kGlobalAvgPool, LayerKind::kLinear, LayerKind::kSigmoid})
    if (s == kind_name(k)) return k;
  throw Error("bad_checkpoint", "unknown layer kind " + s);
}

}  // namespace

Layer Layer::conv(int in, int out, int kernel, int stride, int pad) {
  return {LayerKind::kConv, in, out, kernel, stride, pad < 0 ? kernel / 2 : pad};
}

Network::Network(std::vector<Layer> layers, int feature_layer)
    : layers_(std::move(layers)), feature_layer_(feature_layer) {
  for (const Layer& l : layers_) {
    if (l.kind == LayerKind::kConv) {
      params_.emplace_back(Shape{l.out, l.in * l.kernel * l.kernel, 1});
      params_.emplace_back(Shape{l.out, 1, 1});
    } else if (l.kind == LayerKind::kLinear) {
      params_.emplace_back(Shape{l.out, l.in, 1});
      params_.emplace_back(Shape{l.out, 1, 1});
    }
  }
}

void Network::initialize(std::mt19937_64& rng) {
  std::size_t p = 0;
  for (const Layer& l : layers_) {
    if (!l.has_params()) continue;
    Tensor& w = params_[p];
    const double fan_in = static_cast<double>(w.height());
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (double& v : w.values()) v = dist(rng);
    params_[p + 1].fill(0.0);
    p += 2;
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : params_) n += t.size();
  return n;
}

std::vector<ad::Var> Network::bind(bool trainable) const {
  std::vector<ad::Var> out;
  out.reserve(params_.size());
  for (const Tensor& t : params_) out.push_back(trainable ? ad::parameter(t) : ad::constant(t));
  return out;
}

Network::Output Network::forward(const ad::Var& x, std::span<const ad::Var> params) const {
  if (params.size() != params_.size()) throw Error("shape_mismatch", "network bound with wrong parameter count");
  Output result;
  ad::Var h = x;
  std::size_t p = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    switch (l.kind) {
      case LayerKind::kConv:
        h = ad::conv2d(h, params[p], params[p + 1], l.kernel, l.stride, l.pad);
        p += 2;
        break;
      case LayerKind::kLinear:
        h = ad::linear(h, params[p], params[p + 1]);
        p += 2;
        break;
      case LayerKind::kRelu: h = ad::relu(h); break;
      case LayerKind::kMaxPool: h = ad::max_pool2(h); break;
      case LayerKind::kAvgPool: h = ad::avg_pool2(h); break;
      case LayerKind::kGlobalAvgPool: h = ad::global_avg_pool(h); break;
      case LayerKind::kSigmoid: h = ad::sigmoid(h); break;
    }
    if (static_cast<int>(i) == feature_layer_) result.features = h;
  }
  result.out = h;
  return result;
}

nlohmann::json Network::describe() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : layers_) {
    layers.push_back({{"kind", kind_name(l.kind)}, {"in", l.in}, {"out", l.out}, {"kernel", l.kernel},
                      {"stride", l.stride}, {"pad", l.pad}});
  }
  return {{"layers", layers}, {"feature_layer", feature_layer_}};
}

Network Network::from_description(const nlohmann::json& j) {
  std::vector<Layer> layers;
  for (const auto& l : j.at("layers")) {
    layers.push_back({kind_from(l.at("kind").get<std::string>()), l.at("in").get<int>(), l.at("out").get<int>(),
                      l.at("kernel").get<int>(), l.at("stride").get<int>(), l.at("pad").get<int>()});
  }
  return Network(std::move(layers), j.at("feature_layer").get<int>());
}

void Adam::step(std::vector<Tensor*> params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) throw Error("shape_mismatch", "adam: params/grads count mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grads[i][k];
      m_[i][k] = beta1_ * m_[i][k] + (1 - beta1_) * g;
      v_[i][k] = beta2_ * v_[i][k] + (1 - beta2_) * g * g;
      p[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
    }
  }
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw Error("bad_checkpoint", "checkpoint has no tensor " + name);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json meta = ckpt.metadata;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) table.push_back({{"name", name}, {"shape", {t.channels(), t.height(), t.width()}}});
  meta["tensors"] = table;
  const std::string text = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write checkpoint " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw Error("io_error", "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_file", "cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error("bad_checkpoint", "not a checkpoint: " + path.string());
  if (version != kVersion) throw Error("bad_checkpoint", "unsupported checkpoint version " + std::to_string(version));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  Checkpoint ckpt;
  ckpt.metadata = nlohmann::json::parse(text);
  for (const auto& entry : ckpt.metadata.at("tensors")) {
    const auto s = entry.at("shape").get<std::array<int, 3>>();
    Tensor t(Shape{s[0], s[1], s[2]});
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  if (!in) throw Error("bad_checkpoint", "truncated checkpoint " + path.string());
  ckpt.metadata.erase("tensors");
  return ckpt;
}

}  // namespace capaa::nn
