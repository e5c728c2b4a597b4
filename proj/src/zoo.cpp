#include "capaa/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "capaa/error.hpp"

namespace capaa::zoo {

namespace {

using nn::Layer;

// Layer lists for every architecture, plus the index of the layer whose output
// feeds class activation maps (ReLU after the last convolution).
struct ArchSpec {
  std::vector<Layer> layers;
  int feature_layer;
};

ArchSpec arch_spec(const std::string& id, int n) {
  if (id == "convA") {
    return {{Layer::conv(3, 8, 3), Layer::relu(), Layer::max_pool(), Layer::conv(8, 16, 3), Layer::relu(),
             Layer::max_pool(), Layer::conv(16, 16, 3), Layer::relu(), Layer::global_avg_pool(), Layer::linear(16, n)},
            7};
  }
  if (id == "convB") {
    return {{Layer::conv(3, 12, 5), Layer::relu(), Layer::avg_pool(), Layer::conv(12, 24, 3), Layer::relu(),
             Layer::global_avg_pool(), Layer::linear(24, n)},
            4};
  }
  if (id == "convC") {
    return {{Layer::conv(3, 8, 3, 2), Layer::relu(), Layer::conv(8, 16, 3), Layer::relu(), Layer::conv(16, 16, 3, 2),
             Layer::relu(), Layer::conv(16, 24, 1), Layer::relu(), Layer::global_avg_pool(), Layer::linear(24, n)},
            7};
  }
  if (id == "heldout1") {
    return {{Layer::conv(3, 12, 3), Layer::relu(), Layer::max_pool(), Layer::conv(12, 12, 3), Layer::relu(),
             Layer::max_pool(), Layer::conv(12, 24, 3), Layer::relu(), Layer::global_avg_pool(), Layer::linear(24, n)},
            7};
  }
  if (id == "heldout2") {
    return {{Layer::conv(3, 8, 5, 2), Layer::relu(), Layer::conv(8, 16, 3), Layer::relu(), Layer::avg_pool(),
             Layer::conv(16, 16, 3), Layer::relu(), Layer::global_avg_pool(), Layer::linear(16, n)},
            6};
  }
  if (id == "heldout3") {
    return {{Layer::conv(3, 6, 3), Layer::relu(), Layer::conv(6, 12, 3), Layer::relu(), Layer::max_pool(),
             Layer::conv(12, 16, 3), Layer::relu(), Layer::max_pool(), Layer::global_avg_pool(), Layer::linear(16, n)},
            6};
  }
  if (id == "heldout4") {
    return {{Layer::conv(3, 16, 3, 2), Layer::relu(), Layer::conv(16, 16, 3, 2), Layer::relu(), Layer::conv(16, 32, 3),
             Layer::relu(), Layer::global_avg_pool(), Layer::linear(32, n)},
            5};
  }
  throw Error("unknown_arch", "unknown classifier architecture " + id);
}

}  // namespace

const std::vector<std::string>& ensemble_ids() {
  static const std::vector<std::string> ids{"convA", "convB", "convC"};
  return ids;
}

const std::vector<std::string>& heldout_ids() {
  static const std::vector<std::string> ids{"heldout1", "heldout2", "heldout3", "heldout4"};
  return ids;
}

bool is_known_arch(const std::string& arch_id) {
  const auto& e = ensemble_ids();
  const auto& h = heldout_ids();
  return std::find(e.begin(), e.end(), arch_id) != e.end() || std::find(h.begin(), h.end(), arch_id) != h.end();
}

nn::Network architecture(const std::string& arch_id, int num_classes) {
  if (num_classes < 5) throw Error("invalid_config", "classifiers need at least 5 classes");
  ArchSpec spec = arch_spec(arch_id, num_classes);
  return nn::Network(std::move(spec.layers), spec.feature_layer);
}

Classifier::Classifier(std::string arch_id, nn::Network net, int num_classes, int input_size)
    : arch_id_(std::move(arch_id)), net_(std::move(net)), num_classes_(num_classes), input_size_(input_size) {}

Classifier::Trace Classifier::trace(const ad::Var& image, std::span<const ad::Var> params) const {
  if (image.shape().c != 3) throw Error("shape_mismatch", "classifier input must have 3 channels");
  ad::Var x = image;
  if (image.shape().h != input_size_ || image.shape().w != input_size_) x = ad::resize(x, input_size_, input_size_);
  const auto out = net_.forward(ad::add_scalar(x, -0.5), params);
  return {out.out, out.features};
}

Classifier::Trace Classifier::trace(const ad::Var& image) const { return trace(image, net_.bind(false)); }

Prediction make_prediction(const Tensor& logits) {
  Prediction p;
  p.logits.assign(logits.values().begin(), logits.values().end());
  const double m = *std::max_element(p.logits.begin(), p.logits.end());
  double z = 0.0;
  for (double v : p.logits) z += std::exp(v - m);
  for (double v : p.logits) p.probs.push_back(std::exp(v - m) / z);
  p.top1 = static_cast<int>(std::max_element(p.logits.begin(), p.logits.end()) - p.logits.begin());
  return p;
}

Prediction Classifier::predict(const CapturedImage& image) const {
  return make_prediction(trace(ad::constant(image.tensor())).logits.value());
}

void Classifier::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  nn::Checkpoint ck;
  ck.metadata = extra.is_object() ? extra : nlohmann::json::object();
  ck.metadata["kind"] = "classifier";
  ck.metadata["arch_id"] = arch_id_;
  ck.metadata["num_classes"] = num_classes_;
  ck.metadata["input_size"] = input_size_;
  ck.metadata["network"] = net_.describe();
  for (std::size_t i = 0; i < net_.params().size(); ++i) ck.tensors.emplace_back("p" + std::to_string(i), net_.params()[i]);
  nn::save_checkpoint(path, ck);
}

Classifier Classifier::load(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  if (ck.metadata.value("kind", "") != "classifier") throw Error("bad_checkpoint", path.string() + " is not a classifier");
  nn::Network net = nn::Network::from_description(ck.metadata.at("network"));
  for (std::size_t i = 0; i < net.params().size(); ++i) net.params()[i] = ck.tensor("p" + std::to_string(i));
  return Classifier(ck.metadata.at("arch_id").get<std::string>(), std::move(net),
                    ck.metadata.at("num_classes").get<int>(), ck.metadata.at("input_size").get<int>());
}

void SceneDataset::add(Tensor image, int label, std::string scene_id, std::string pose_id) {
  images.push_back(std::move(image));
  labels.push_back(label);
  scene_ids.push_back(std::move(scene_id));
  pose_ids.push_back(std::move(pose_id));
}

std::vector<int> SceneDataset::class_counts() const {
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw Error("invalid_dataset", "label " + std::to_string(l) + " out of range");
    ++counts[static_cast<std::size_t>(l)];
  }
  return counts;
}

void DatasetSplit::validate(int min_per_class) const {
  if (train.num_classes < 10 || train.num_classes != test.num_classes) {
    throw Error("invalid_dataset", "dataset needs at least 10 classes in both splits");
  }
  const auto a = train.class_counts();
  const auto b = test.class_counts();
  for (std::size_t c = 0; c < a.size(); ++c) {
    if (a[c] + b[c] < min_per_class) {
      throw Error("invalid_dataset", "class " + std::to_string(c) + " has " + std::to_string(a[c] + b[c]) +
                                         " images, need " + std::to_string(min_per_class));
    }
    if (a[c] == 0 || b[c] == 0) throw Error("invalid_dataset", "class " + std::to_string(c) + " missing from a split");
  }
  const std::set<std::string> train_scenes(train.scene_ids.begin(), train.scene_ids.end());
  for (const auto& id : test.scene_ids) {
    if (train_scenes.count(id)) throw Error("invalid_dataset", "scene " + id + " appears in both splits");
  }
}

DatasetSplit make_dataset(const DatasetOptions& o, std::uint64_t seed) {
  if (o.train_scenes_per_class < 1 || o.test_scenes_per_class < 1 || o.renders_per_scene < 1) {
    throw Error("invalid_config", "dataset scene and render counts must be positive");
  }
  std::mt19937_64 rng(seed);
  const auto poses = scene::pose_set(o.image_size, o.image_size);
  std::uniform_real_distribution<double> level(o.min_gray, o.max_gray);
  std::uniform_int_distribution<std::size_t> pick_pose(0, poses.size() - 1);
  DatasetSplit split;
  split.train.num_classes = split.test.num_classes = scene::kNumClasses;
  std::uint64_t render_seed = seed * 7919 + 1;
  auto fill = [&](SceneDataset& ds, const std::string& prefix, int scenes_per_class) {
    for (int label = 0; label < scene::kNumClasses; ++label) {
      for (int k = 0; k < scenes_per_class; ++k) {
        const scene::Scene s = scene::make_scene(label, o.image_size, rng);
        const std::string id = prefix + "_c" + std::to_string(label) + "_" + std::to_string(k);
        for (int r = 0; r < o.renders_per_scene; ++r) {
          // The first render of each scene is the canonical gray capture at the original pose.
          const scene::Pose& g = r == 0 ? poses[0] : poses[pick_pose(rng)];
          const double gray = r == 0 ? 0.5 : level(rng);
          const CapturedImage img = scene::render(scene::gray_pattern(o.image_size, o.image_size, gray), s, g, render_seed++);
          ds.add(img.tensor(), label, id, g.id);
        }
      }
    }
  };
  fill(split.train, "train", o.train_scenes_per_class);
  fill(split.test, "test", o.test_scenes_per_class);
  return split;
}

void save_dataset(const SceneDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream csv(dir / "labels.csv");
  if (!csv) throw Error("io_error", "cannot write " + (dir / "labels.csv").string());
  csv << "file,label,scene_id,pose_id\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    write_png(dir / "images" / name, ds.images[i]);
    csv << "images/" << name << ',' << ds.labels[i] << ',' << ds.scene_ids[i] << ',' << ds.pose_ids[i] << '\n';
  }
}

SceneDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream csv(dir / "labels.csv");
  if (!csv) throw Error("missing_file", "missing dataset index " + (dir / "labels.csv").string());
  SceneDataset ds;
  std::string line;
  std::getline(csv, line);
  int max_label = -1;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string file, label, scene_id, pose_id;
    std::getline(ss, file, ',');
    std::getline(ss, label, ',');
    std::getline(ss, scene_id, ',');
    std::getline(ss, pose_id, ',');
    const auto path = dir / file;
    if (!std::filesystem::exists(path)) throw Error("missing_file", "missing dataset image " + path.string());
    ds.add(read_png(path), std::stoi(label), scene_id, pose_id);
    max_label = std::max(max_label, ds.labels.back());
  }
  ds.num_classes = std::max(max_label + 1, scene::kNumClasses);
  return ds;
}

double accuracy(const Classifier& f, const SceneDataset& ds, const std::string& pose_id) {
  int correct = 0;
  int total = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!pose_id.empty() && ds.pose_ids[i] != pose_id) continue;
    ++total;
    correct += make_prediction(f.trace(ad::constant(ds.images[i])).logits.value()).top1 == ds.labels[i];
  }
  if (total == 0) throw Error("invalid_dataset", "no images to score" + (pose_id.empty() ? "" : " at pose " + pose_id));
  return static_cast<double>(correct) / total;
}

Classifier train_classifier(const std::string& arch_id, const DatasetSplit& data, const TrainOptions& options,
                            std::uint64_t seed, TrainReport* report) {
  data.validate();
  if (options.epochs < 1 || options.batch_size < 1 || options.learning_rate <= 0.0) {
    throw Error("invalid_config", "classifier epochs, batch_size and learning_rate must be positive");
  }
  const int size = data.train.images.front().height();
  std::mt19937_64 rng(seed);
  nn::Network net = architecture(arch_id, data.train.num_classes);
  net.initialize(rng);
  Classifier f(arch_id, std::move(net), data.train.num_classes, size);

  TrainReport rep;
  nn::Adam adam(options.learning_rate);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      const std::vector<ad::Var> params = f.network().bind(true);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const auto t = f.trace(ad::constant(data.train.images[i]), params);
        const ad::Var loss = ad::scale(ad::select(ad::log_softmax(t.logits), data.train.labels[i]), -1.0);
        total += loss.item();
        ad::backward(loss);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      std::vector<Tensor*> ptrs;
      std::vector<Tensor> grads;
      for (std::size_t k = 0; k < params.size(); ++k) {
        ptrs.push_back(&f.network().params()[k]);
        grads.push_back(params[k].grad() * inv);
      }
      adam.step(ptrs, grads);
    }
    rep.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  rep.train_accuracy = accuracy(f, data.train);
  rep.test_accuracy = accuracy(f, data.test, "original");
  if (report) *report = rep;
  if (rep.test_accuracy < options.min_accuracy) {
    throw Error("accuracy_floor", arch_id + " reached " + std::to_string(rep.test_accuracy) +
                                      " test accuracy (floor " + std::to_string(options.min_accuracy) +
                                      "); add training scenes or epochs, or widen the architecture");
  }
  return f;
}

}  // namespace capaa::zoo
