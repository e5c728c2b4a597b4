#include "capaa/zoo.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "capaa/error.hpp"
#include "test_util.hpp"

namespace capaa::zoo {
namespace {

class ZooTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new DatasetSplit(make_dataset(DatasetOptions{}, 3));
    report_ = new TrainReport;
    model_ = new Classifier(train_classifier("convC", *data_, TrainOptions{}, 11, report_));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete report_;
    delete data_;
  }

  static DatasetSplit* data_;
  static TrainReport* report_;
  static Classifier* model_;
};

DatasetSplit* ZooTest::data_ = nullptr;
TrainReport* ZooTest::report_ = nullptr;
Classifier* ZooTest::model_ = nullptr;

TEST_F(ZooTest, DatasetShapeAndDisjointSplit) {
  EXPECT_NO_THROW(data_->validate());
  EXPECT_GE(data_->train.num_classes, 10);
  const auto train = data_->train.class_counts();
  const auto test = data_->test.class_counts();
  for (std::size_t c = 0; c < train.size(); ++c) EXPECT_GE(train[c] + test[c], 200);
  const std::set<std::string> a(data_->train.scene_ids.begin(), data_->train.scene_ids.end());
  for (const auto& id : data_->test.scene_ids) EXPECT_EQ(a.count(id), 0u);

  DatasetSplit leaky = *data_;
  leaky.test.scene_ids[0] = leaky.train.scene_ids[0];
  EXPECT_THROW(leaky.validate(), Error);
}

TEST_F(ZooTest, MeetsAccuracyFloor) {
  EXPECT_GE(report_->test_accuracy, 0.9);
  EXPECT_GE(report_->train_accuracy, 0.99);
  EXPECT_LT(report_->epoch_loss.back(), report_->epoch_loss.front());
}

TEST_F(ZooTest, PredictionConsistency) {
  for (std::size_t i = 0; i < 50; ++i) {
    const Prediction p = model_->predict(CapturedImage(data_->test.images[i]));
    double total = 0.0;
    for (double v : p.probs) total += v;
    EXPECT_NEAR(total, 1.0, 1e-5);
    EXPECT_EQ(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin(), p.top1);
    EXPECT_EQ(std::max_element(p.logits.begin(), p.logits.end()) - p.logits.begin(), p.top1);
  }
}

TEST(Prediction, TemperatureNeverChangesArgmax) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor z = testing::random_tensor({10, 1, 1}, rng, -8, 8);
    const int top = make_prediction(z).top1;
    for (double t : {0.5, 1.0, 2.0, 5.0, 50.0}) EXPECT_EQ(make_prediction(z * (1.0 / t)).top1, top);
  }
}

TEST_F(ZooTest, LogitGradientMatchesFiniteDifferences) {
  const Tensor img = data_->test.images[3];
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> pick(0, img.size() - 1);
  for (int cls : {0, 7}) {
    const ad::Var x = ad::parameter(img);
    ad::backward(ad::select(model_->trace(x).logits, cls));
    const Tensor g = x.grad();
    auto f = [&](const Tensor& t) { return model_->trace(ad::constant(t)).logits.value()[static_cast<std::size_t>(cls)]; };
    for (int k = 0; k < 20; ++k) {
      const std::size_t i = pick(rng);
      EXPECT_LT(testing::relative_error(g[i], testing::central_difference(f, img, i, 1e-6), 1e-6), 5e-3)
          << "class " << cls << " coord " << i;
    }
  }
}

TEST_F(ZooTest, ResizesOtherInputSizes) {
  const Tensor big = resize_bilinear(data_->test.images[0], 48, 48);
  const Prediction p = model_->predict(CapturedImage(big));
  EXPECT_EQ(p.probs.size(), 10u);
}

TEST_F(ZooTest, CheckpointRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "capaa_zoo_test.ckpt";
  model_->save(path, {{"test_accuracy", report_->test_accuracy}});
  const Classifier back = Classifier::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.arch_id(), "convC");
  const CapturedImage img(data_->test.images[5]);
  EXPECT_EQ(back.predict(img).logits, model_->predict(img).logits);
}

TEST_F(ZooTest, ArchitecturesAreHeterogeneous) {
  TrainOptions quick;
  quick.epochs = 1;
  quick.min_accuracy = 0.0;
  const Classifier a = train_classifier("convA", *data_, quick, 1);
  const Classifier b = train_classifier("convB", *data_, quick, 1);
  EXPECT_NE(a.network().parameter_count(), b.network().parameter_count());
  EXPECT_NE(a.network().parameter_count(), model_->network().parameter_count());
  const CapturedImage img(data_->test.images[0]);
  const auto pa = a.predict(img).probs;
  const auto pb = b.predict(img).probs;
  const auto pc = model_->predict(img).probs;
  EXPECT_NE(pa, pb);
  EXPECT_NE(pa, pc);
  EXPECT_NE(pb, pc);
}

TEST_F(ZooTest, TrainingIsDeterministicAndFloorIsEnforced) {
  TrainOptions quick;
  quick.epochs = 1;
  quick.min_accuracy = 0.0;
  TrainReport r1, r2;
  train_classifier("convC", *data_, quick, 5, &r1);
  train_classifier("convC", *data_, quick, 5, &r2);
  EXPECT_EQ(r1.test_accuracy, r2.test_accuracy);
  EXPECT_EQ(r1.epoch_loss, r2.epoch_loss);

  quick.min_accuracy = 1.01;
  try {
    train_classifier("convC", *data_, quick, 5);
    FAIL() << "expected accuracy floor error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "accuracy_floor");
  }
}

TEST(Zoo, KnownArchitectures) {
  EXPECT_EQ(ensemble_ids().size(), 3u);
  EXPECT_EQ(heldout_ids().size(), 4u);
  for (const auto& id : ensemble_ids()) {
    const nn::Network net = architecture(id, 10);
    EXPECT_GE(net.feature_layer(), 0);
  }
  for (const auto& id : heldout_ids()) EXPECT_TRUE(is_known_arch(id));
  EXPECT_THROW(architecture("resnet", 10), Error);
  EXPECT_THROW(architecture("convA", 3), Error);
}

TEST(Zoo, DatasetDirectoryRoundTrip) {
  SceneDataset ds;
  ds.num_classes = 10;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 4; ++i) ds.add(quantize8(testing::random_tensor({3, 32, 32}, rng)), i, "s" + std::to_string(i), "original");
  const auto dir = std::filesystem::temp_directory_path() / "capaa_dataset_test";
  std::filesystem::remove_all(dir);
  save_dataset(ds, dir);
  const SceneDataset back = load_dataset(dir);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.scene_ids, ds.scene_ids);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < ds.images[i].size(); ++k) ASSERT_NEAR(back.images[i][k], ds.images[i][k], 1e-12);
  std::filesystem::remove(dir / "images" / "000002.png");
  EXPECT_THROW(load_dataset(dir), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace capaa::zoo
