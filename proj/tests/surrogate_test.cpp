#include "capaa/surrogate.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "capaa/color.hpp"
#include "capaa/error.hpp"
#include "test_util.hpp"

namespace capaa::surrogate {
namespace {

constexpr int kSize = 32;

double mean_l1(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

class SurrogateTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    std::mt19937_64 rng(21);
    scene_ = new scene::Scene(scene::make_scene(3, kSize, rng));
    pose_ = new scene::Pose(scene::pose_set(kSize, kSize)[0]);
    samples_ = new std::vector<scene::CaptureSample>(scene::capture_dataset(*scene_, *pose_, 150, 4));
    TrainOptions opt;
    opt.epochs = 25;
    model_ = new SurrogateModel(train_surrogate(*samples_, opt, 8));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete samples_;
    delete pose_;
    delete scene_;
  }

  static scene::Scene* scene_;
  static scene::Pose* pose_;
  static std::vector<scene::CaptureSample>* samples_;
  static SurrogateModel* model_;
};

scene::Scene* SurrogateTest::scene_ = nullptr;
scene::Pose* SurrogateTest::pose_ = nullptr;
std::vector<scene::CaptureSample>* SurrogateTest::samples_ = nullptr;
SurrogateModel* SurrogateTest::model_ = nullptr;

TEST_F(SurrogateTest, TrainingReducesLoss) {
  const auto& log = model_->log();
  ASSERT_EQ(log.train_loss.size(), 25u);
  EXPECT_LT(log.train_loss.back(), 0.5 * log.train_loss.front());
  EXPECT_EQ(log.best_val_loss, log.val_loss[static_cast<std::size_t>(log.best_epoch)]);
  EXPECT_EQ(model_->pose_id(), "original");
}

TEST_F(SurrogateTest, HeldOutFidelity) {
  std::mt19937_64 rng(1234);
  double l1 = 0.0;
  for (int i = 0; i < 50; ++i) {
    const ProjectorImage x = scene::random_pattern(i % 4, kSize, kSize, rng);
    l1 += mean_l1(model_->infer(x).tensor(), scene::render(x, *scene_, *pose_, 5000 + i).tensor());
  }
  EXPECT_LT(l1 / 50.0, 0.03);
}

TEST_F(SurrogateTest, ReproducesTrainingPairs) {
  const double final_loss = model_->log().train_loss.back();
  double l1 = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto& s = (*samples_)[static_cast<std::size_t>(i)];
    l1 += mean_l1(model_->infer(s.projector_input).tensor(), s.captured.tensor());
  }
  EXPECT_LT(l1 / 20.0, 1.5 * final_loss);
}

TEST_F(SurrogateTest, OutputInUnitRangeAndShapeChecked) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const Tensor out = model_->infer(scene::random_pattern(i % 4, kSize, kSize, rng)).tensor();
    EXPECT_GE(out.min(), 0.0);
    EXPECT_LE(out.max(), 1.0);
  }
  EXPECT_THROW(model_->infer(scene::gray_pattern(16, 16)), Error);
}

TEST_F(SurrogateTest, BrighterProjectionBrightensPrediction) {
  const ad::Var x = ad::parameter(scene::gray_pattern(kSize, kSize).tensor());
  ad::backward(ad::mean(model_->infer(x)));
  EXPECT_GT(x.grad().sum(), 0.0);
}

TEST_F(SurrogateTest, DeltaEGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(77);
  const Tensor x0 = testing::random_tensor({3, kSize, kSize}, rng, 0.2, 0.8);
  const Tensor ref = model_->gray_capture();
  const ad::Var x = ad::parameter(x0);
  ad::backward(color::mean_delta_e(model_->infer(x), ref));
  const Tensor g = x.grad();
  auto f = [&](const Tensor& t) { return color::mean_delta_e(model_->infer(ad::constant(t)), ref).item(); };
  std::uniform_int_distribution<std::size_t> pick(0, x0.size() - 1);
  for (int k = 0; k < 20; ++k) {
    const std::size_t i = pick(rng);
    const double numeric = testing::central_difference(f, x0, i, 1e-6);
    EXPECT_LT(testing::relative_error(g[i], numeric, 1e-6), 5e-3) << "coord " << i;
  }
}

TEST_F(SurrogateTest, CheckpointRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "capaa_surrogate_test.ckpt";
  model_->save(path);
  const SurrogateModel back = SurrogateModel::load(path);
  std::filesystem::remove(path);
  const ProjectorImage x = scene::gray_pattern(kSize, kSize, 0.3);
  EXPECT_EQ(back.infer(x).tensor().storage(), model_->infer(x).tensor().storage());
  EXPECT_EQ(back.pose_id(), model_->pose_id());
  EXPECT_EQ(back.log().val_loss, model_->log().val_loss);
}

TEST_F(SurrogateTest, InverseWarpOfConstantMapIsConstant) {
  const Tensor ones(Shape{1, kSize, kSize}, 1.0);
  const Tensor mapped = model_->camera_to_projector(ones);
  for (double v : mapped.values()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(SurrogateTraining, DeterministicUnderSeed) {
  std::mt19937_64 rng(5);
  const scene::Scene s = scene::make_scene(0, kSize, rng);
  const auto samples = scene::capture_dataset(s, scene::pose_set(kSize, kSize)[0], 40, 2);
  TrainOptions opt;
  opt.epochs = 2;
  const SurrogateModel a = train_surrogate(samples, opt, 17);
  const SurrogateModel b = train_surrogate(samples, opt, 17);
  EXPECT_EQ(a.log().val_loss, b.log().val_loss);
  EXPECT_EQ(a.log().best_val_loss, b.log().best_val_loss);
}

TEST(SurrogateTraining, RejectsBadInputs) {
  std::mt19937_64 rng(5);
  const scene::Scene s = scene::make_scene(1, kSize, rng);
  const auto poses = scene::pose_set(kSize, kSize);
  TrainOptions opt;
  opt.epochs = 1;
  EXPECT_THROW(train_surrogate(scene::capture_dataset(s, poses[0], 31, 1), opt, 1), Error);

  auto mixed = scene::capture_dataset(s, poses[0], 40, 1);
  mixed.back().pose_id = poses[1].id;
  try {
    train_surrogate(mixed, opt, 1);
    FAIL() << "expected mixed-pose error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "mixed_poses");
  }

  auto no_gray = scene::capture_dataset(s, poses[0], 40, 1);
  no_gray.erase(no_gray.begin());
  EXPECT_THROW(train_surrogate(no_gray, opt, 1), Error);
}

}  // namespace
}  // namespace capaa::surrogate
