#include "capaa/experiment.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "capaa/error.hpp"

namespace capaa::experiment {
namespace {

using nlohmann::json;

json minimal() { return {{"seed", 3}, {"scenes", {{{"id", "a"}, {"label", 4}}}}}; }

std::string error_of(const json& j) {
  try {
    ExperimentConfig::from_json(j);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid_config");
    return e.what();
  }
  return "";
}

TEST(ExperimentConfig, DefaultsAndRoundTrip) {
  const ExperimentConfig c = ExperimentConfig::from_json(minimal());
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.variants.size(), 4u);
  EXPECT_EQ(c.d_thr, (std::vector<double>{2, 3, 4, 5}));
  EXPECT_EQ(c.ensemble, zoo::ensemble_ids());
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(ExperimentConfig, ErrorsNameTheField) {
  json j = minimal();
  j["attack"] = {{"d_thr", {2, 3, 9}}};
  EXPECT_NE(error_of(j).find("$.attack.d_thr[2]"), std::string::npos);

  j = minimal();
  j["surrogate"] = {{"epochs", 0}};
  EXPECT_NE(error_of(j).find("$.surrogate.epochs"), std::string::npos);

  j = minimal();
  j["classifiers"] = {{"ensemble", {"convA", "nope"}}};
  EXPECT_NE(error_of(j).find("$.classifiers.ensemble[1]"), std::string::npos);

  j = minimal();
  j["classifiers"] = {{"ensemble", {"convA"}}, {"heldout", {"convA"}}};
  EXPECT_NE(error_of(j).find("$.classifiers.heldout[0]"), std::string::npos);

  j = minimal();
  j["attack"] = {{"tempurature", 2}};
  EXPECT_NE(error_of(j).find("$.attack.tempurature: unknown field"), std::string::npos);

  j = minimal();
  j["scenes"][0]["path"] = "/definitely/not/here";
  EXPECT_NE(error_of(j).find("$.scenes[0].path"), std::string::npos);

  j = minimal();
  j["scenes"] = {{{"id", "a"}, {"path", "/definitely/not/here"}}};
  EXPECT_NE(error_of(j).find("/definitely/not/here"), std::string::npos);

  j = minimal();
  j["attack"] = {{"omega", {0.5, 0.6, 0.0}}};
  EXPECT_NE(error_of(j).find("$.attack.omega"), std::string::npos);

  j = minimal();
  j["poses"] = {"original", "rot+45"};
  EXPECT_NE(error_of(j).find("$.poses[1]"), std::string::npos);
}

TEST(ExperimentConfig, SeedIsOptionalInTheFileButRecorded) {
  json j = minimal();
  j.erase("seed");
  const ExperimentConfig c = ExperimentConfig::from_json(j);
  EXPECT_FALSE(c.has_seed);
  EXPECT_FALSE(c.to_json().contains("seed"));
}

TEST(AttackGrid, SizeIsVariantsTimesModesTimesThresholds) {
  ExperimentConfig c = ExperimentConfig::from_json(minimal());
  // Default grid: single-classifier variants expand once per ensemble member.
  const auto jobs = attack_grid(c, 4);
  const std::size_t variants = 1 + 1 + 3 + 3;
  const std::size_t modes = 1 + 9;
  EXPECT_EQ(jobs.size(), variants * modes * 4);
  std::set<std::string> ids;
  for (const auto& j : jobs) {
    EXPECT_TRUE(ids.insert(j.id).second) << j.id;
    EXPECT_NE(j.config.target, 4);
    EXPECT_EQ(attack::is_single_classifier(j.config.variant), !j.classifier.empty());
  }

  c.targeted = false;
  c.variants = {attack::Variant::kCapaa};
  c.d_thr = {3.0};
  const auto one = attack_grid(c, 4);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].id, "untargeted/d3/capaa");
  EXPECT_EQ(one[0].config.d_thr, 3.0);
}

TEST(DeriveSeed, StableAndLabelSensitive) {
  EXPECT_EQ(derive_seed(1, "scene/a"), derive_seed(1, "scene/a"));
  EXPECT_NE(derive_seed(1, "scene/a"), derive_seed(1, "scene/b"));
  EXPECT_NE(derive_seed(1, "scene/a"), derive_seed(2, "scene/a"));
  // Pinned against an independent transcription so artefacts stay reproducible across builds.
  EXPECT_EQ(derive_seed(0, ""), 8433979811052588371ULL);
  EXPECT_EQ(derive_seed(5, "scene/a"), 2235152126532250440ULL);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(derive_seed(7, std::to_string(i)));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(ParallelFor, VisitsEveryIndexOnceAndRethrows) {
  for (int jobs : {1, 3, 16}) {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(50, jobs, [&](int i) { ++hits[static_cast<std::size_t>(i)]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  EXPECT_THROW(parallel_for(10, 4, [](int i) {
                 if (i == 7) throw Error("boom", "boom");
               }),
               Error);
}

TEST(SceneContext, SyntheticScenesFollowTheSeed) {
  ExperimentConfig c = ExperimentConfig::from_json(minimal());
  const scene::Scene a = make_config_scene(c, 0);
  const scene::Scene b = make_config_scene(c, 0);
  EXPECT_EQ(a.id, "a");
  EXPECT_EQ(a.label, 4);
  EXPECT_EQ(a.albedo.tensor().values().size(), b.albedo.tensor().values().size());
  for (std::size_t i = 0; i < a.albedo.tensor().size(); ++i) ASSERT_EQ(a.albedo.tensor()[i], b.albedo.tensor()[i]);
  c.seed = 4;
  const scene::Scene d = make_config_scene(c, 0);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.albedo.tensor().size(); ++i) diff += std::abs(a.albedo.tensor()[i] - d.albedo.tensor()[i]);
  EXPECT_GT(diff, 0.0);
}

}  // namespace
}  // namespace capaa::experiment
