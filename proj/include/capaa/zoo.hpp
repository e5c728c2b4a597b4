#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capaa/autodiff.hpp"
#include "capaa/nn.hpp"
#include "capaa/scene.hpp"

namespace capaa::zoo {

/// convA, convB, convC
const std::vector<std::string>& ensemble_ids();
/// heldout1 .. heldout4
const std::vector<std::string>& heldout_ids();
bool is_known_arch(const std::string& arch_id);

nn::Network architecture(const std::string& arch_id, int num_classes);

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probs;
  int top1 = -1;
};

class Classifier {
 public:
  struct Trace {
    ad::Var logits;    // (N,1,1)
    ad::Var features;  // last conv activations, for CAM
  };

  Classifier() = default;
  Classifier(std::string arch_id, nn::Network net, int num_classes, int input_size);

  const std::string& arch_id() const { return arch_id_; }
  int num_classes() const { return num_classes_; }
  int input_size() const { return input_size_; }
  nn::Network& network() { return net_; }
  const nn::Network& network() const { return net_; }

  /// Differentiable logits. Images of another size are resized bilinearly.
  Trace trace(const ad::Var& image) const;
  Trace trace(const ad::Var& image, std::span<const ad::Var> params) const;
  Prediction predict(const CapturedImage& image) const;

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
  static Classifier load(const std::filesystem::path& path);

 private:
  std::string arch_id_;
  nn::Network net_;
  int num_classes_ = 0;
  int input_size_ = 0;
};

Prediction make_prediction(const Tensor& logits);

struct SceneDataset {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<std::string> scene_ids;
  std::vector<std::string> pose_ids;
  int num_classes = 0;

  std::size_t size() const { return images.size(); }
  void add(Tensor image, int label, std::string scene_id, std::string pose_id);
  std::vector<int> class_counts() const;
};

struct DatasetSplit {
  SceneDataset train;
  SceneDataset test;

  /// Throws unless both splits are well formed and share no scene.
  void validate(int min_per_class = 200) const;
};

struct DatasetOptions {
  int image_size = 32;
  int train_scenes_per_class = 20;
  int test_scenes_per_class = 5;
  int renders_per_scene = 10;
  double min_gray = 0.3;
  double max_gray = 0.7;
};

/// Renders scenes of every class under random gray levels, poses and noise.
DatasetSplit make_dataset(const DatasetOptions& options, std::uint64_t seed);

void save_dataset(const SceneDataset& ds, const std::filesystem::path& dir);
SceneDataset load_dataset(const std::filesystem::path& dir);

struct TrainOptions {
  int epochs = 25;
  double learning_rate = 5e-3;
  int batch_size = 16;
  double min_accuracy = 0.9;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;  // original-pose test images
};

/// Trains one architecture. Throws "accuracy_floor" if the original-pose test
/// accuracy stays below options.min_accuracy.
Classifier train_classifier(const std::string& arch_id, const DatasetSplit& data, const TrainOptions& options,
                            std::uint64_t seed, TrainReport* report = nullptr);

/// Top-1 accuracy; restricted to one pose when pose_id is non-empty.
double accuracy(const Classifier& f, const SceneDataset& ds, const std::string& pose_id = "");

}  // namespace capaa::zoo
